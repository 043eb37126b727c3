use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use reupload::comb::validate_comb;
use reupload::experiment::{self, emit_results, emit_stability, ExperimentConfig, OutputFormat, RunOptions};
use reupload::stability::{
    generalization_bound, noisy_generalization_bound, noisy_theoretical_beta, stable_training_margin, theoretical_beta,
    BoundInputs, DEFAULT_DELTA,
};
use reupload::train::LossKind;
use reupload::{Error, ErrorClass};

/// Simulation and stability experiments for data re-uploading classifiers.
#[derive(Parser)]
#[command(name = "qnn-stab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output file; defaults to `output.path` of the config, else stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format (csv or json); overrides the config.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train every sweep cell and write risk curves.
    Run(ConfigArg),
    /// Coupled-divergence traces and stability estimates.
    Stability(ConfigArg),
    /// Evaluate the closed-form stability and generalization bounds.
    Bound(BoundArgs),
    /// Check the comb conditions of a Choi matrix stored as JSON.
    ValidateComb(CombArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    layers: usize,
    #[arg(long)]
    data_dim: usize,
    /// Trainable parameter count K.
    #[arg(long)]
    params: usize,
    /// Training-set size.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    iterations: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    norm_m: f64,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    loss_bound: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
}

#[derive(Args)]
struct CombArgs {
    /// JSON file `{"re": [[…]], "im": [[…]]}`.
    #[arg(long)]
    matrix: PathBuf,
    /// Dimensions of P, I1, O1, …, F, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::class) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Data) => 3,
        Some(ErrorClass::Capacity) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    let format = cli.format.as_deref().map(str::parse::<OutputFormat>).transpose()?;
    match &cli.command {
        Command::Run(a) => {
            let (cfg, opts) = load(&a.config, cli.seed_offset)?;
            let table = experiment::run_experiment(&cfg, &opts)?;
            let format = format.unwrap_or(cfg.output.format);
            match out_path(cli, &cfg) {
                Some(p) => report(emit_results(&table, &p, format)?),
                None => print(&match format {
                    OutputFormat::Csv => table.rows_csv()?,
                    OutputFormat::Json => table.to_json()?,
                })?,
            }
            Ok(0)
        }
        Command::Stability(a) => {
            let (cfg, opts) = load(&a.config, cli.seed_offset)?;
            let table = experiment::run_stability(&cfg, &opts)?;
            let format = format.unwrap_or(cfg.output.format);
            match out_path(cli, &cfg) {
                Some(p) => report(emit_stability(&table, &p, format)?),
                None => print(&match format {
                    OutputFormat::Csv => table.beta_csv()?,
                    OutputFormat::Json => table.to_json()?,
                })?,
            }
            Ok(0)
        }
        Command::Bound(a) => {
            bound(a, format.unwrap_or_default())?;
            Ok(0)
        }
        Command::ValidateComb(a) => {
            let (op, layout) = experiment::read_comb_file(&a.matrix, &a.dims)?;
            let r = validate_comb(&op, &layout)?;
            let mut text = format!("is_comb = {}\n", r.is_comb);
            for v in &r.violations {
                text += &format!("violation level={} condition={} deviation={:e}\n", v.level, v.condition, v.deviation);
            }
            print(&text)?;
            Ok(if r.is_comb { 0 } else { 1 })
        }
    }
}

fn load(path: &Path, seed_offset: u64) -> anyhow::Result<(ExperimentConfig, RunOptions)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg = ExperimentConfig::load(path)?;
    Ok((
        cfg,
        RunOptions {
            seed_offset,
            config_text: Some(text),
        },
    ))
}

fn out_path(cli: &Cli, cfg: &ExperimentConfig) -> Option<PathBuf> {
    cli.out.clone().or_else(|| cfg.output.path.clone())
}

fn report(paths: Vec<PathBuf>) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn print(text: &str) -> anyhow::Result<()> {
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

fn bound(a: &BoundArgs, format: OutputFormat) -> anyhow::Result<()> {
    let loss = LossKind::ScaledSquared;
    let b = BoundInputs {
        layers: a.layers,
        data_dim: a.data_dim,
        n_params: a.params,
        m: a.m,
        iterations: a.iterations,
        eta: a.eta,
        norm_m: a.norm_m,
        c1: a.c1.unwrap_or(loss.lipschitz()),
        c2: a.c2.unwrap_or(loss.smoothness()),
        loss_bound: a.loss_bound.unwrap_or(loss.bound()),
        delta: a.delta,
        p: a.p,
    };
    let beta = theoretical_beta(&b)?;
    let values = [
        ("theoretical_beta", beta),
        ("generalization_bound", generalization_bound(beta, &b)?),
        ("noisy_theoretical_beta", noisy_theoretical_beta(&b)?),
        ("noisy_generalization_bound", noisy_generalization_bound(&b)?),
    ];
    let margin = stable_training_margin(&b);
    match format {
        OutputFormat::Csv => {
            let mut text = String::new();
            for (k, v) in values {
                text += &format!("{k} = {v:e}\n");
            }
            text += &format!("stable_training_margin = {}\nunstable = {}\n", margin.value, margin.unstable);
            print(&text)
        }
        OutputFormat::Json => {
            let mut obj = serde_json::Map::new();
            for (k, v) in values {
                obj.insert(k.into(), v.into());
            }
            obj.insert("stable_training_margin".into(), margin.value.into());
            obj.insert("unstable".into(), margin.unstable.into());
            print(&(serde_json::to_string_pretty(&obj)? + "\n"))
        }
    }
}

//! Datasets: WDBC CSV, IDX image pairs, subsampling and a synthetic toy task.
//!
//! Every emitted feature lies in `[0, 2π]` and every label is `±1`.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{keyed, Domain};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if y != 1.0 && y != -1.0 {
            return Err(Error::InvalidArgument(format!("label {y} is not ±1")));
        }
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0 && **v <= TAU)) {
            return Err(Error::InvalidArgument(format!("feature {v} outside [0, 2π]")));
        }
        Ok(Self { x, y })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
    pub provenance: Vec<FileDigest>,
}

impl Dataset {
    /// Non-empty dataset; the feature dimension is taken from the samples.
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let d = samples.first().ok_or(Error::EmptyDataset)?.x.len();
        Self::with_dim(name, d, samples)
    }

    pub fn with_dim(name: impl Into<String>, feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.x.len() != feature_dim) {
            return Err(Error::DimensionMismatch(format!(
                "sample with {} features in a {feature_dim}-feature dataset",
                s.x.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            feature_dim,
            samples,
            provenance: Vec::new(),
        })
    }

    pub fn empty(name: impl Into<String>, feature_dim: usize) -> Self {
        Self {
            name: name.into(),
            feature_dim,
            samples: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset by index, keeping name and provenance.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            feature_dim: self.feature_dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Copy with sample `i` replaced.
    pub fn replaced(&self, i: usize, sample: Sample) -> Result<Self> {
        if i >= self.len() {
            return Err(Error::InvalidArgument(format!("index {i} out of range for {} samples", self.len())));
        }
        if sample.x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch("replacement has the wrong feature count".into()));
        }
        let mut out = self.clone();
        out.samples[i] = sample;
        Ok(out)
    }

    /// SHA-256 over the exact bits of every feature and label.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.feature_dim as u64).to_le_bytes());
        for s in &self.samples {
            for v in &s.x {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(s.y.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = read_file(path)?;
    Ok(digest_of(path, &bytes))
}

fn digest_of(path: &Path, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

/// Unscaled rows of a labelled table.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub provenance: Vec<FileDigest>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Per-feature min-max map onto `[0, 2π]`, clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<Self> {
        let mut rows = rows.into_iter();
        let first = rows.next().ok_or(Error::EmptyDataset)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Constant features map to 0.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &v)| {
                let span = self.max[k] - self.min[k];
                if span > 0.0 {
                    ((v - self.min[k]) / span * TAU).clamp(0.0, TAU)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub const WDBC_FEATURES: usize = 30;

/// WDBC rows `id, diagnosis, 30 features`; `B → +1`, `M → −1`; unscaled.
pub fn load_wdbc_raw(path: &Path) -> Result<RawTable> {
    let bytes = read_file(path)?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        if rec.len() != WDBC_FEATURES + 2 {
            return Err(parse_err(row, format!("expected {} columns, found {}", WDBC_FEATURES + 2, rec.len())));
        }
        let y = match rec[1].trim() {
            "B" => 1.0,
            "M" => -1.0,
            other => return Err(parse_err(row, format!("unknown diagnosis `{other}`"))),
        };
        let x = rec
            .iter()
            .skip(2)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(row, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(x);
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(parse_err(0, "file contains no rows".into()));
    }
    Ok(RawTable {
        name: "wdbc".into(),
        features,
        labels,
        provenance: vec![digest_of(path, &bytes)],
    })
}

/// Rows `rows` of `table` mapped through `scaler`.
pub fn scale_table(table: &RawTable, rows: &[usize], scaler: &MinMaxScaler) -> Result<Dataset> {
    let samples = rows
        .iter()
        .map(|&i| Sample::new(scaler.transform(&table.features[i]), table.labels[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::with_dim(table.name.clone(), table.feature_dim(), samples)?;
    ds.provenance = table.provenance.clone();
    Ok(ds)
}

/// The whole WDBC file, scaled with its own per-feature statistics.
pub fn load_wdbc(path: &Path) -> Result<Dataset> {
    let raw = load_wdbc_raw(path)?;
    let scaler = MinMaxScaler::fit(&raw.features)?;
    let all: Vec<usize> = (0..raw.len()).collect();
    scale_table(&raw, &all, &scaler)
}

/// Disjoint train/test subsets of a raw table, both scaled with statistics
/// of the training subset only.
pub fn split_and_scale(table: &RawTable, m_train: usize, m_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(table.len(), m_train, m_test, seed)?;
    let scaler = MinMaxScaler::fit(tr.iter().map(|&i| &table.features[i]))?;
    Ok((scale_table(table, &tr, &scaler)?, scale_table(table, &te, &scaler)?))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const POOL: usize = 7;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "truncated header".into(),
        })
}

/// 28×28 image → 16 features by 7×7 mean pooling, scaled from `[0, 255]` to `[0, 2π]`.
pub fn pool_image(pixels: &[u8]) -> Vec<f64> {
    let cells = IMAGE_SIDE / POOL;
    let mut out = Vec::with_capacity(cells * cells);
    for br in 0..cells {
        for bc in 0..cells {
            let mut sum = 0u32;
            for r in 0..POOL {
                for c in 0..POOL {
                    sum += u32::from(pixels[(br * POOL + r) * IMAGE_SIDE + bc * POOL + c]);
                }
            }
            let mean = f64::from(sum) / (POOL * POOL) as f64;
            out.push((mean / 255.0 * TAU).clamp(0.0, TAU));
        }
    }
    out
}

/// IDX image/label pair filtered to two classes; the first → `+1`, the second → `−1`.
pub fn load_idx_pair(images_path: &Path, labels_path: &Path, keep_classes: (u8, u8)) -> Result<Dataset> {
    if keep_classes.0 == keep_classes.1 {
        return Err(Error::InvalidArgument("the two kept classes must differ".into()));
    }
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    let fmt = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(fmt(images_path, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(fmt(images_path, format!("images are {rows}x{cols}, expected 28x28")));
    }
    let px = rows * cols;
    if images.len() != 16 + count * px {
        return Err(fmt(
            images_path,
            format!("expected {} bytes for {count} images, found {}", 16 + count * px, images.len()),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(fmt(labels_path, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n_labels = be_u32(&labels, 4, labels_path)? as usize;
    if labels.len() != 8 + n_labels {
        return Err(fmt(labels_path, format!("expected {} bytes, found {}", 8 + n_labels, labels.len())));
    }
    if n_labels != count {
        return Err(fmt(labels_path, format!("{n_labels} labels for {count} images")));
    }

    let mut samples = Vec::new();
    for (k, &lab) in labels[8..].iter().enumerate() {
        let y = if lab == keep_classes.0 {
            1.0
        } else if lab == keep_classes.1 {
            -1.0
        } else {
            continue;
        };
        let pixels = &images[16 + k * px..16 + (k + 1) * px];
        samples.push(Sample::new(pool_image(pixels), y)?);
    }
    let mut ds = Dataset::with_dim(
        format!("idx-{}-{}", keep_classes.0, keep_classes.1),
        (IMAGE_SIDE / POOL).pow(2),
        samples,
    )?;
    ds.provenance = vec![digest_of(images_path, &images), digest_of(labels_path, &labels)];
    Ok(ds)
}

/// Seeded disjoint index sets of sizes `m_train` and `m_test` from `0..n`.
pub fn split_indices(n: usize, m_train: usize, m_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m_train == 0 {
        return Err(Error::InsufficientData {
            requested: 0,
            available: n,
        });
    }
    let requested = m_train + m_test;
    if requested > n {
        return Err(Error::InsufficientData { requested, available: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed(seed, Domain::Split, 0));
    let test = idx[m_train..requested].to_vec();
    idx.truncate(m_train);
    Ok((idx, test))
}

/// Disjoint uniform train/test subsets.
pub fn subsample_split(dataset: &Dataset, m_train: usize, m_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(dataset.len(), m_train, m_test, seed)?;
    Ok((dataset.select(&tr), dataset.select(&te)))
}

/// Margin around the decision boundary of the toy task.
pub const TOY_MARGIN: f64 = 0.05;

/// One toy example: `x ~ U[0, 2π)` redrawn while `|cos x| < 0.05`, `y = sign(cos x)`.
pub fn toy_sample(rng: &mut ChaCha8Rng) -> Sample {
    loop {
        let x: f64 = rng.random_range(0.0..TAU);
        let c = x.cos();
        if c.abs() >= TOY_MARGIN {
            return Sample {
                x: vec![x],
                y: toy_label(x),
            };
        }
    }
}

pub fn toy_label(x: f64) -> f64 {
    if x.cos() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `m` toy examples keyed by `seed`.
pub fn synthetic_toy(m: usize, seed: u64) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("toy dataset needs at least 2 samples, got {m}")));
    }
    let samples = (0..m)
        .map(|i| toy_sample(&mut keyed(seed, Domain::Toy, i as u64)))
        .collect();
    Dataset::with_dim("toy", 1, samples)
}

/// Locations of the canonical MNIST files under `dir`.
pub fn mnist_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let stem = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{stem}-images-idx3-ubyte")),
        dir.join(format!("{stem}-labels-idx1-ubyte")),
    )
}

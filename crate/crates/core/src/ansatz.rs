//! The data re-uploading circuit: trainable blocks interleaved with angle
//! encoding blocks, closed by a final trainable block.
//!
//! A trainable block is `R` sublayers, each an `Ry` on every qubit followed by
//! a CX chain `0→1→…→N−1`. An encoding block places feature `i` on qubit
//! `i mod N` of column `i / N`; slots past the last feature hold `Ry(0)`.

use std::ops::{Deref, Range};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::qcore::gates::{cx, rotation_gate, Pauli};
use crate::qcore::matrix::CMatrix;
use crate::qcore::observable::Observable;
use crate::qcore::state::{apply_cx_vec, apply_ry_vec, expectation_vec};
use crate::scalar::{Real, C};

pub const MAX_CIRCUIT_QUBITS: usize = 14;
pub const MAX_UNITARY_QUBITS: usize = 8;
pub const DEFAULT_SUBLAYERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    /// Trainable block index, `0..=L`.
    pub layer: usize,
    pub sublayer: usize,
    pub qubit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodeSlot {
    /// Encoding block index, `0..L`.
    pub layer: usize,
    pub column: usize,
    pub qubit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Angle {
    Param(usize),
    Feature(usize),
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Ry { qubit: usize, angle: Angle },
    Cx { control: usize, target: usize },
}

impl Op {
    /// Qubits the gate acts on.
    pub fn qubits(&self) -> Qubits {
        match *self {
            Op::Ry { qubit, .. } => Qubits::One(qubit),
            Op::Cx { control, target } => Qubits::Two(control, target),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Qubits {
    One(usize),
    Two(usize, usize),
}

impl Qubits {
    pub fn as_array(&self) -> ([usize; 2], usize) {
        match *self {
            Qubits::One(q) => ([q, q], 1),
            Qubits::Two(a, b) => ([a, b], 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Trainable,
    Encoding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub layer: usize,
    pub ops: Vec<Op>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReuploadCircuit {
    n_qubits: usize,
    layers: usize,
    data_dim: usize,
    sublayers: usize,
    param_layout: Vec<ParamSlot>,
    encode_layout: Vec<EncodeSlot>,
    blocks: Vec<Block>,
}

/// See [`ReuploadCircuit::new`].
pub fn build_circuit(n_qubits: usize, layers: usize, data_dim: usize, sublayers: usize) -> Result<ReuploadCircuit> {
    ReuploadCircuit::new(n_qubits, layers, data_dim, sublayers)
}

impl ReuploadCircuit {
    pub fn new(n_qubits: usize, layers: usize, data_dim: usize, sublayers: usize) -> Result<Self> {
        for (name, v) in [
            ("n_qubits", n_qubits),
            ("layers", layers),
            ("data_dim", data_dim),
            ("sublayers", sublayers),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if n_qubits > MAX_CIRCUIT_QUBITS {
            return Err(Error::Capacity(format!(
                "{n_qubits} qubits exceeds the {MAX_CIRCUIT_QUBITS}-qubit circuit limit"
            )));
        }
        let n = n_qubits;
        let columns = data_dim.div_ceil(n);

        let mut param_layout = Vec::with_capacity((layers + 1) * sublayers * n);
        for layer in 0..=layers {
            for sublayer in 0..sublayers {
                for qubit in 0..n {
                    param_layout.push(ParamSlot { layer, sublayer, qubit });
                }
            }
        }
        let encode_layout = (0..data_dim)
            .map(|i| EncodeSlot {
                layer: 0,
                column: i / n,
                qubit: i % n,
            })
            .collect();

        let trainable = |layer: usize| {
            let mut ops = Vec::with_capacity(sublayers * (2 * n - 1));
            for sublayer in 0..sublayers {
                for qubit in 0..n {
                    let j = (layer * sublayers + sublayer) * n + qubit;
                    ops.push(Op::Ry {
                        qubit,
                        angle: Angle::Param(j),
                    });
                }
                for control in 0..n - 1 {
                    ops.push(Op::Cx {
                        control,
                        target: control + 1,
                    });
                }
            }
            Block {
                kind: BlockKind::Trainable,
                layer,
                ops,
            }
        };
        let encoding = |layer: usize| {
            let ops = (0..columns * n)
                .map(|i| Op::Ry {
                    qubit: i % n,
                    angle: if i < data_dim { Angle::Feature(i) } else { Angle::Zero },
                })
                .collect();
            Block {
                kind: BlockKind::Encoding,
                layer,
                ops,
            }
        };
        let mut blocks = Vec::with_capacity(2 * layers + 1);
        for layer in 0..layers {
            blocks.push(trainable(layer));
            blocks.push(encoding(layer));
        }
        blocks.push(trainable(layers));

        Ok(Self {
            n_qubits,
            layers,
            data_dim,
            sublayers,
            param_layout,
            encode_layout,
            blocks,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn sublayers(&self) -> usize {
        self.sublayers
    }

    /// `K = (L+1)·R·N`.
    pub fn n_params(&self) -> usize {
        self.param_layout.len()
    }

    /// `⌈D/N⌉`.
    pub fn encode_columns(&self) -> usize {
        self.data_dim.div_ceil(self.n_qubits)
    }

    /// Number of data uploads, `L·D`.
    pub fn data_slots(&self) -> usize {
        self.layers * self.data_dim
    }

    pub fn param_layout(&self) -> &[ParamSlot] {
        &self.param_layout
    }

    /// Placement of each feature within every encoding block; `layer` is 0
    /// since the placement repeats identically in each block.
    pub fn encode_layout(&self) -> &[EncodeSlot] {
        &self.encode_layout
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn ops(&self) -> impl Iterator<Item = &Op> + Clone {
        self.blocks.iter().flat_map(|b| b.ops.iter())
    }

    /// Total gate count, padding slots included.
    pub fn gate_count(&self) -> usize {
        self.blocks.iter().map(|b| b.ops.len()).sum()
    }

    /// Parameter indices of trainable block `layer` (`0..=L`).
    pub fn layer_params(&self, layer: usize) -> Range<usize> {
        let per = self.sublayers * self.n_qubits;
        layer * per..(layer + 1) * per
    }

    pub fn check_inputs<T: Real>(&self, theta: &[T], x: &[T]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                theta.len()
            )));
        }
        if x.len() != self.data_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} features, got {}",
                self.data_dim,
                x.len()
            )));
        }
        if theta.iter().chain(x).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite angle".into()));
        }
        Ok(())
    }

    pub fn check_observable<T: Real>(&self, obs: &Observable<T>) -> Result<()> {
        if obs.dim() != 1 << self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "observable of dimension {} on a {}-qubit circuit",
                obs.dim(),
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Final state vector `U(θ,x)|0…0⟩`. Inputs are assumed checked.
    pub(crate) fn evolve<T: Real>(&self, theta: &[T], x: &[T]) -> Vec<C<T>> {
        let mut v = vec![C::zero(); 1 << self.n_qubits];
        v[0] = C::one();
        self.apply_ops(&mut v, self.ops(), theta, x);
        v
    }

    pub(crate) fn apply_ops<'a, T: Real>(
        &self,
        v: &mut [C<T>],
        ops: impl Iterator<Item = &'a Op>,
        theta: &[T],
        x: &[T],
    ) {
        let n = self.n_qubits;
        for op in ops {
            match *op {
                Op::Ry { qubit, angle } => {
                    let a = resolve(angle, theta, x);
                    if a.is_zero() {
                        continue;
                    }
                    let (s, c) = (a / T::lit(2.0)).sin_cos();
                    apply_ry_vec(v, n, qubit, c, s);
                }
                Op::Cx { control, target } => apply_cx_vec(v, n, control, target),
            }
        }
    }

    /// Dense unitary of one block.
    pub fn block_unitary<T: Real>(&self, block: &Block, theta: &[T], x: &[T]) -> Result<CMatrix<T>> {
        self.check_inputs(theta, x)?;
        self.dense(block.ops.iter(), theta, x)
    }

    fn dense<'a, T: Real>(&self, ops: impl Iterator<Item = &'a Op> + Clone, theta: &[T], x: &[T]) -> Result<CMatrix<T>> {
        if self.n_qubits > MAX_UNITARY_QUBITS {
            return Err(Error::Capacity(format!(
                "dense unitary limited to {MAX_UNITARY_QUBITS} qubits, circuit has {}",
                self.n_qubits
            )));
        }
        let d = 1 << self.n_qubits;
        let mut u = CMatrix::zeros(d, d);
        let mut col = vec![C::zero(); d];
        for j in 0..d {
            col.iter_mut().for_each(|z| *z = C::zero());
            col[j] = C::one();
            self.apply_ops(&mut col, ops.clone(), theta, x);
            for (i, &z) in col.iter().enumerate() {
                u[(i, j)] = z;
            }
        }
        Ok(u)
    }
}

pub(crate) fn resolve<T: Real>(angle: Angle, theta: &[T], x: &[T]) -> T {
    match angle {
        Angle::Param(j) => theta[j],
        Angle::Feature(i) => x[i],
        Angle::Zero => T::zero(),
    }
}

/// Dense 2x2 or 4x4 matrix of a resolved gate.
pub(crate) fn op_matrix<T: Real>(op: &Op, theta: &[T], x: &[T]) -> Result<CMatrix<T>> {
    match *op {
        Op::Ry { angle, .. } => rotation_gate(Pauli::Y, resolve(angle, theta, x)),
        Op::Cx { .. } => Ok(cx()),
    }
}

/// `f(θ, x) = ⟨0…0| U† M U |0…0⟩`.
pub fn forward<T: Real>(circuit: &ReuploadCircuit, theta: &[T], x: &[T], obs: &Observable<T>) -> Result<T> {
    circuit.check_inputs(theta, x)?;
    circuit.check_observable(obs)?;
    expectation_vec(&circuit.evolve(theta, x), obs)
}

/// `U(θ^{(L+1)}) · ∏_l U(x) U(θ^{(l)})` as a dense matrix.
pub fn circuit_unitary<T: Real>(circuit: &ReuploadCircuit, theta: &[T], x: &[T]) -> Result<CMatrix<T>> {
    circuit.check_inputs(theta, x)?;
    circuit.dense(circuit.ops(), theta, x)
}

/// Trainable angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T: Real>(Vec<T>);

impl<T: Real> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self(values))
    }

    pub fn for_circuit(circuit: &ReuploadCircuit, values: Vec<T>) -> Result<Self> {
        if values.len() != circuit.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                circuit.n_params(),
                values.len()
            )));
        }
        Self::new(values)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T: Real> Deref for ParamVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Features in `[0, 2π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataVector<T: Real>(Vec<T>);

impl<T: Real> DataVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        let hi = T::TAU();
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero() && **v <= hi)) {
            return Err(Error::InvalidArgument(format!("feature {v} outside [0, 2π]")));
        }
        Ok(Self(values))
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

impl<T: Real> Deref for DataVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

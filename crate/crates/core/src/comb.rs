//! Choi operators on labelled tensor-product systems, the link product, and
//! quantum-comb evaluation of the re-uploading circuit.
//!
//! Conventions: a channel from `in` to `out` has Choi matrix
//! `J = Σ_ij |i⟩⟨j| ⊗ N(|i⟩⟨j|)` on systems `[in, out]`, and the link product
//! contracts shared systems as
//! `(A⋆B)[(α,β),(α',β')] = Σ_{σ,σ'} A[(α,σ),(α',σ')] · B[(σ,β),(σ',β')]`,
//! so linking an operator `X` over every system of `C` gives `tr[C·Xᵀ]`.

use std::collections::HashSet;

use num_traits::{One, Zero};

use crate::ansatz::{BlockKind, ReuploadCircuit};
use crate::error::{Error, Result};
use crate::qcore::linalg::min_eigenvalue;
use crate::qcore::matrix::CMatrix;
use crate::qcore::observable::Observable;
use crate::qcore::state::{real_part_checked, QuantumState, UNITARY_TOL};
use crate::scalar::{cr, Real, C};

pub const PSD_FLOOR: f64 = 1e-8;
pub const COMB_TOL: f64 = 1e-8;
/// Largest total qubit count `N·(2L+2)` accepted by [`reuploading_comb_output`].
pub const MAX_COMB_QUBITS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SystemLabel {
    pub name: String,
    pub dim: usize,
}

impl SystemLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("system dimension {dim} is below 2")));
        }
        Ok(Self { name: name.into(), dim })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator<T: Real> {
    systems: Vec<SystemLabel>,
    matrix: CMatrix<T>,
}

fn total_dim(systems: &[SystemLabel]) -> Result<usize> {
    systems.iter().try_fold(1usize, |acc, s| {
        acc.checked_mul(s.dim)
            .ok_or_else(|| Error::Capacity("tensor dimension overflows usize".into()))
    })
}

/// Big-endian strides of `systems`.
fn strides(systems: &[SystemLabel]) -> Vec<usize> {
    let mut out = vec![1; systems.len()];
    for k in (0..systems.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] * systems[k + 1].dim;
    }
    out
}

/// Flat offsets of every multi-index over `(dim, stride)` pairs, the first
/// pair most significant.
fn offsets(parts: &[(usize, usize)]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &(dim, stride) in parts {
        out = out
            .iter()
            .flat_map(|&base| (0..dim).map(move |i| base + i * stride))
            .collect();
    }
    out
}

impl<T: Real> ChoiOperator<T> {
    pub fn new(systems: Vec<SystemLabel>, matrix: CMatrix<T>) -> Result<Self> {
        let mut names = HashSet::new();
        for s in &systems {
            if s.dim < 2 {
                return Err(Error::InvalidArgument(format!("system {} has dimension {}", s.name, s.dim)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate system name {}", s.name)));
            }
        }
        let d = total_dim(&systems)?;
        if matrix.rows() != d || matrix.cols() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for systems of total dimension {d}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self { systems, matrix })
    }

    /// The number 1 as an operator on no systems.
    pub fn scalar(value: C<T>) -> Self {
        Self {
            systems: Vec::new(),
            matrix: CMatrix::diag(&[value]),
        }
    }

    /// Density matrix (a channel with trivial input) on `label`.
    pub fn from_state(state: &QuantumState<T>, label: SystemLabel) -> Result<Self> {
        Self::new(vec![label], state.density_matrix())
    }

    /// `Mᵀ` on `label`, the form in which a measured observable enters a link.
    pub fn from_observable(obs: &Observable<T>, label: SystemLabel) -> Result<Self> {
        Self::new(vec![label], obs.matrix().transpose())
    }

    /// Identity matrix on `label`.
    pub fn identity_on(label: SystemLabel) -> Self {
        let d = label.dim;
        Self {
            systems: vec![label],
            matrix: CMatrix::identity(d),
        }
    }

    pub fn systems(&self) -> &[SystemLabel] {
        &self.systems
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.systems.iter().position(|s| s.name == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.position(name)
            .ok_or_else(|| Error::InvalidArgument(format!("system {name} not present")))
    }

    /// Value of an operator on no systems.
    pub fn as_scalar(&self) -> Option<C<T>> {
        self.systems.is_empty().then(|| self.matrix[(0, 0)])
    }

    /// Renames system `from` to `to`.
    pub fn relabel(mut self, from: &str, to: &str) -> Result<Self> {
        let k = self.require(from)?;
        if from != to && self.position(to).is_some() {
            return Err(Error::InvalidArgument(format!("system {to} already present")));
        }
        self.systems[k].name = to.to_string();
        Ok(self)
    }

    /// Reorders the tensor factors to `order`, given by name.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.systems.len() {
            return Err(Error::InvalidArgument("permutation must name every system".into()));
        }
        let st = strides(&self.systems);
        let mut parts = Vec::with_capacity(order.len());
        let mut systems = Vec::with_capacity(order.len());
        for name in order {
            let k = self.require(name)?;
            if systems.iter().any(|s: &SystemLabel| s.name == *name) {
                return Err(Error::InvalidArgument(format!("system {name} named twice")));
            }
            parts.push((self.systems[k].dim, st[k]));
            systems.push(self.systems[k].clone());
        }
        let map = offsets(&parts);
        let d = map.len();
        let mut m = CMatrix::zeros(d, d);
        for (r, &or) in map.iter().enumerate() {
            for (c, &oc) in map.iter().enumerate() {
                m[(r, c)] = self.matrix[(or, oc)];
            }
        }
        Ok(Self { systems, matrix: m })
    }

    /// Traces out the named systems.
    pub fn partial_trace(&self, names: &[&str]) -> Result<Self> {
        let st = strides(&self.systems);
        let mut traced = Vec::new();
        for name in names {
            let k = self.require(name)?;
            if traced.contains(&k) {
                return Err(Error::InvalidArgument(format!("system {name} traced twice")));
            }
            traced.push(k);
        }
        let keep: Vec<usize> = (0..self.systems.len()).filter(|k| !traced.contains(k)).collect();
        let keep_off = offsets(&keep.iter().map(|&k| (self.systems[k].dim, st[k])).collect::<Vec<_>>());
        let tr_off = offsets(&traced.iter().map(|&k| (self.systems[k].dim, st[k])).collect::<Vec<_>>());
        let d = keep_off.len();
        let mut m = CMatrix::zeros(d, d);
        for (r, &or) in keep_off.iter().enumerate() {
            for (c, &oc) in keep_off.iter().enumerate() {
                m[(r, c)] = tr_off.iter().map(|&t| self.matrix[(or + t, oc + t)]).sum();
            }
        }
        Ok(Self {
            systems: keep.iter().map(|&k| self.systems[k].clone()).collect(),
            matrix: m,
        })
    }

    /// Tensor product, `self` first.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        link_product(self, other, &[])
    }
}

/// Choi matrix of `ρ ↦ UρU†` on systems `[input, output]`.
pub fn choi_of_unitary_on<T: Real>(u: &CMatrix<T>, input: &str, output: &str) -> Result<ChoiOperator<T>> {
    if !u.is_square() {
        return Err(Error::DimensionMismatch("unitary must be square".into()));
    }
    let dev = u.unitarity_deviation();
    if dev > T::tol(UNITARY_TOL) {
        return Err(Error::NonUnitary {
            deviation: dev.to_f64_lossy(),
        });
    }
    let d = u.rows();
    let dd = d
        .checked_mul(d)
        .ok_or_else(|| Error::Capacity("Choi dimension overflows usize".into()))?;
    let mut m = CMatrix::zeros(dd, dd);
    for i in 0..d {
        for a in 0..d {
            let left = u[(a, i)];
            for j in 0..d {
                for b in 0..d {
                    m[(i * d + a, j * d + b)] = left * u[(b, j)].conj();
                }
            }
        }
    }
    ChoiOperator::new(
        vec![SystemLabel::new(input, d)?, SystemLabel::new(output, d)?],
        m,
    )
}

/// Choi matrix of `ρ ↦ UρU†` on systems `["in", "out"]`.
pub fn choi_of_unitary<T: Real>(u: &CMatrix<T>) -> Result<ChoiOperator<T>> {
    choi_of_unitary_on(u, "in", "out")
}

/// `A ⋆ B` over `shared`. Result systems: those of `a` not shared, then those
/// of `b` not shared. With `shared` empty this is the tensor product.
pub fn link_product<T: Real>(a: &ChoiOperator<T>, b: &ChoiOperator<T>, shared: &[SystemLabel]) -> Result<ChoiOperator<T>> {
    let (sa, sb) = (strides(&a.systems), strides(&b.systems));
    let mut a_sh = Vec::with_capacity(shared.len());
    let mut b_sh = Vec::with_capacity(shared.len());
    for s in shared {
        let ka = a.require(&s.name)?;
        let kb = b.require(&s.name)?;
        if a.systems[ka].dim != s.dim || b.systems[kb].dim != s.dim {
            return Err(Error::DimensionMismatch(format!(
                "shared system {} has dimensions {} and {}, label says {}",
                s.name, a.systems[ka].dim, b.systems[kb].dim, s.dim
            )));
        }
        if a_sh.contains(&ka) {
            return Err(Error::InvalidArgument(format!("system {} shared twice", s.name)));
        }
        a_sh.push(ka);
        b_sh.push(kb);
    }
    let a_free: Vec<usize> = (0..a.systems.len()).filter(|k| !a_sh.contains(k)).collect();
    let b_free: Vec<usize> = (0..b.systems.len()).filter(|k| !b_sh.contains(k)).collect();
    let mut systems: Vec<SystemLabel> = a_free.iter().map(|&k| a.systems[k].clone()).collect();
    systems.extend(b_free.iter().map(|&k| b.systems[k].clone()));
    let d = total_dim(&systems)?;
    d.checked_mul(d)
        .ok_or_else(|| Error::Capacity("link product result too large".into()))?;

    let part = |ks: &[usize], sys: &[SystemLabel], st: &[usize]| {
        offsets(&ks.iter().map(|&k| (sys[k].dim, st[k])).collect::<Vec<_>>())
    };
    let af = part(&a_free, &a.systems, &sa);
    let as_ = part(&a_sh, &a.systems, &sa);
    let bf = part(&b_free, &b.systems, &sb);
    let bs = part(&b_sh, &b.systems, &sb);
    let (am, bm) = (a.matrix.as_slice(), b.matrix.as_slice());
    let (da, db) = (a.dim(), b.dim());
    let nb = bf.len();

    let mut out = vec![C::<T>::zero(); d * d];
    for (ia, &ra) in af.iter().enumerate() {
        for (ja, &ca) in af.iter().enumerate() {
            for (k1, &rs) in as_.iter().enumerate() {
                for (k2, &cs) in as_.iter().enumerate() {
                    let av = am[(ra + rs) * da + ca + cs];
                    if av.is_zero() {
                        continue;
                    }
                    let (brs, bcs) = (bs[k1], bs[k2]);
                    for (ib, &rb) in bf.iter().enumerate() {
                        let row = (ia * nb + ib) * d + ja * nb;
                        let brow = &bm[(brs + rb) * db..(brs + rb + 1) * db];
                        for (jb, &cb) in bf.iter().enumerate() {
                            out[row + jb] += av * brow[bcs + cb];
                        }
                    }
                }
            }
        }
    }
    ChoiOperator::new(systems, CMatrix::from_vec(d, d, out)?)
}

/// Standard system names for an `n`-slot comb.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombLayout {
    pub past: SystemLabel,
    /// `(I_i, O_i)`: comb output feeding slot `i`, and slot output returning to the comb.
    pub teeth: Vec<(SystemLabel, SystemLabel)>,
    pub future: SystemLabel,
}

impl CombLayout {
    /// Systems `P, I1, O1, …, In, On, F`, each of dimension `dim`.
    pub fn uniform(slots: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            past: SystemLabel::new("P", dim)?,
            teeth: (1..=slots)
                .map(|i| Ok((SystemLabel::new(format!("I{i}"), dim)?, SystemLabel::new(format!("O{i}"), dim)?)))
                .collect::<Result<_>>()?,
            future: SystemLabel::new("F", dim)?,
        })
    }

    /// Systems in comb order.
    pub fn systems(&self) -> Vec<SystemLabel> {
        let mut out = vec![self.past.clone()];
        for (i, o) in &self.teeth {
            out.push(i.clone());
            out.push(o.clone());
        }
        out.push(self.future.clone());
        out
    }

    /// Layout with named systems `P, I1, O1, …, F` of the given dimensions,
    /// listed in comb order.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || !dims.len().is_multiple_of(2) {
            return Err(Error::MalformedComb(format!(
                "{} system dimensions; need P, pairs of slot systems and F",
                dims.len()
            )));
        }
        let slots = (dims.len() - 2) / 2;
        Ok(Self {
            past: SystemLabel::new("P", dims[0])?,
            teeth: (1..=slots)
                .map(|i| {
                    Ok((
                        SystemLabel::new(format!("I{i}"), dims[2 * i - 1])?,
                        SystemLabel::new(format!("O{i}"), dims[2 * i])?,
                    ))
                })
                .collect::<Result<_>>()?,
            future: SystemLabel::new("F", dims[dims.len() - 1])?,
        })
    }

    pub fn slots(&self) -> usize {
        self.teeth.len()
    }
}

fn check_layout<T: Real>(c: &ChoiOperator<T>, layout: &CombLayout) -> Result<()> {
    let expected = layout.systems();
    if c.systems() != expected.as_slice() {
        let got: Vec<_> = c.systems().iter().map(|s| format!("{}:{}", s.name, s.dim)).collect();
        let want: Vec<_> = expected.iter().map(|s| format!("{}:{}", s.name, s.dim)).collect();
        return Err(Error::MalformedComb(format!(
            "comb systems [{}] do not match layout [{}]",
            got.join(", "),
            want.join(", ")
        )));
    }
    Ok(())
}

/// Sequential comb `J_1(P,I1) ⊗ J_2(O1,I2) ⊗ … ⊗ J_{n+1}(On,F)` from the
/// `n+1` unitaries between slots.
pub fn sequential_comb<T: Real>(unitaries: &[CMatrix<T>], layout: &CombLayout) -> Result<ChoiOperator<T>> {
    if unitaries.len() != layout.slots() + 1 {
        return Err(Error::MalformedComb(format!(
            "{} unitaries for a {}-slot comb",
            unitaries.len(),
            layout.slots()
        )));
    }
    let mut wires_in = vec![&layout.past];
    wires_in.extend(layout.teeth.iter().map(|(_, o)| o));
    let mut wires_out: Vec<&SystemLabel> = layout.teeth.iter().map(|(i, _)| i).collect();
    wires_out.push(&layout.future);
    let mut acc = ChoiOperator::scalar(C::one());
    for ((u, i), o) in unitaries.iter().zip(wires_in).zip(wires_out) {
        if u.rows() != i.dim || u.rows() != o.dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} unitary between {} and {}",
                u.rows(),
                u.cols(),
                i.name,
                o.name
            )));
        }
        acc = acc.tensor(&choi_of_unitary_on(u, &i.name, &o.name)?)?;
    }
    Ok(acc)
}

/// `tr[C · (ρᵀ ⊗ J_1ᵀ ⊗ … ⊗ J_nᵀ ⊗ M)]` with `C` on `(P, I1, O1, …, F)` and
/// slot `i` Choi `J_i` on `(I_i, O_i)`.
pub fn comb_output<T: Real>(
    comb: &ChoiOperator<T>,
    slots: &[ChoiOperator<T>],
    obs: &Observable<T>,
    rho_in: &QuantumState<T>,
) -> Result<T> {
    let sys = comb.systems();
    if sys.len() != 2 * slots.len() + 2 {
        return Err(Error::MalformedComb(format!(
            "comb with {} systems cannot host {} slots",
            sys.len(),
            slots.len()
        )));
    }
    if rho_in.dim() != sys[0].dim {
        return Err(Error::DimensionMismatch(format!(
            "input state of dimension {} for past system of dimension {}",
            rho_in.dim(),
            sys[0].dim
        )));
    }
    if obs.dim() != sys[sys.len() - 1].dim {
        return Err(Error::DimensionMismatch(format!(
            "observable of dimension {} for future system of dimension {}",
            obs.dim(),
            sys[sys.len() - 1].dim
        )));
    }
    for (l, slot) in slots.iter().enumerate() {
        let want = [sys[2 * l + 1].clone(), sys[2 * l + 2].clone()];
        if slot.systems() != want.as_slice() {
            return Err(Error::MalformedComb(format!(
                "slot {} systems do not match comb systems {} and {}",
                l + 1,
                want[0].name,
                want[1].name
            )));
        }
    }

    // Factor list of Y = ρᵀ ⊗ J_1ᵀ ⊗ … ⊗ M, evaluated entrywise.
    let rho = rho_in.density_matrix();
    let mut factors: Vec<CMatrix<T>> = vec![rho.transpose()];
    factors.extend(slots.iter().map(|s| s.matrix().transpose()));
    factors.push(obs.matrix().clone());
    let dims: Vec<usize> = factors.iter().map(|f| f.rows()).collect();
    let d = comb.dim();
    let split = |mut idx: usize, out: &mut [usize]| {
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
    };
    let mut ri = vec![0; dims.len()];
    let mut ci = vec![0; dims.len()];
    let mut acc = C::<T>::zero();
    for r in 0..d {
        split(r, &mut ri);
        for c in 0..d {
            let cv = comb.matrix()[(r, c)];
            if cv.is_zero() {
                continue;
            }
            split(c, &mut ci);
            // tr[C·Y] = Σ C[r,c] · Y[c,r]
            let y = factors
                .iter()
                .zip(ci.iter().zip(&ri))
                .fold(C::one(), |p, (f, (&a, &b))| p * f[(a, b)]);
            acc += cv * y;
        }
    }
    real_part_checked(acc)
}

/// Circuit output of the re-uploading circuit evaluated by contracting
/// trainable-block Chois with encoding-block Chois, input state `|0…0⟩`.
pub fn reuploading_comb_output<T: Real>(
    circuit: &ReuploadCircuit,
    theta: &[T],
    x: &[T],
    obs: &Observable<T>,
) -> Result<T> {
    let rho = QuantumState::zero_density(circuit.n_qubits())?;
    reuploading_comb_output_from(circuit, theta, x, obs, &rho)
}

/// As [`reuploading_comb_output`] with an explicit input state.
pub fn reuploading_comb_output_from<T: Real>(
    circuit: &ReuploadCircuit,
    theta: &[T],
    x: &[T],
    obs: &Observable<T>,
    rho_in: &QuantumState<T>,
) -> Result<T> {
    let n = circuit.n_qubits();
    let l = circuit.layers();
    let qubits = n * (2 * l + 2);
    if qubits > MAX_COMB_QUBITS {
        return Err(Error::Capacity(format!(
            "comb over {qubits} qubits exceeds the {MAX_COMB_QUBITS}-qubit limit"
        )));
    }
    circuit.check_inputs(theta, x)?;
    circuit.check_observable(obs)?;
    if rho_in.n_qubits() != n {
        return Err(Error::DimensionMismatch("input state size differs from circuit".into()));
    }
    let layout = CombLayout::uniform(l, 1 << n)?;
    let mut wire = layout.past.clone();
    let mut acc = ChoiOperator::from_state(rho_in, wire.clone())?;
    let mut tooth = 0;
    for block in circuit.blocks() {
        let u = circuit.block_unitary(block, theta, x)?;
        let next = match block.kind {
            BlockKind::Trainable if block.layer == l => layout.future.clone(),
            BlockKind::Trainable => layout.teeth[tooth].0.clone(),
            BlockKind::Encoding => {
                tooth += 1;
                layout.teeth[tooth - 1].1.clone()
            }
        };
        let j = choi_of_unitary_on(&u, &wire.name, &next.name)?;
        acc = link_product(&acc, &j, std::slice::from_ref(&wire))?;
        wire = next;
    }
    let m = ChoiOperator::from_observable(obs, wire.clone())?;
    let out = link_product(&acc, &m, &[wire])?;
    real_part_checked(out.as_scalar().expect("fully contracted"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombViolation {
    /// Recursion level `i` (`n+1` down to `1`); `0` for whole-matrix checks.
    pub level: usize,
    pub condition: String,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombReport {
    pub is_comb: bool,
    pub violations: Vec<CombViolation>,
}

impl CombReport {
    /// Highest recursion level whose causality condition fails.
    pub fn first_violated_level(&self) -> Option<usize> {
        self.violations.iter().filter(|v| v.level > 0).map(|v| v.level).max()
    }
}

/// Checks positivity and the causal trace conditions
/// `tr_{I_i} C⁽ⁱ⁾ = C⁽ⁱ⁻¹⁾ ⊗ 1_{O_{i−1}}` for `i = n+1, …, 1`, with
/// `I_{n+1} = F`, `O_0 = P` and `C⁽⁰⁾ = 1`.
pub fn validate_comb<T: Real>(c: &ChoiOperator<T>, layout: &CombLayout) -> Result<CombReport> {
    check_layout(c, layout)?;
    let tol = T::tol(COMB_TOL);
    let mut violations = Vec::new();

    let herm = c.matrix().hermiticity_deviation();
    if herm > tol {
        violations.push(CombViolation {
            level: 0,
            condition: "hermitian".into(),
            deviation: herm.to_f64_lossy(),
        });
    }
    let lowest = min_eigenvalue(c.matrix())?;
    if lowest < -T::tol(PSD_FLOOR) {
        violations.push(CombViolation {
            level: 0,
            condition: "positive semidefinite".into(),
            deviation: (-lowest).to_f64_lossy(),
        });
    }

    let n = layout.slots();
    let outs: Vec<&SystemLabel> = layout
        .teeth
        .iter()
        .map(|(i, _)| i)
        .chain(std::iter::once(&layout.future))
        .collect();
    let ins: Vec<&SystemLabel> = std::iter::once(&layout.past)
        .chain(layout.teeth.iter().map(|(_, o)| o))
        .collect();
    let mut current = c.clone();
    for level in (1..=n + 1).rev() {
        let out_sys = outs[level - 1];
        let in_sys = ins[level - 1];
        let reduced = current.partial_trace(&[&out_sys.name])?;
        let lower = reduced
            .partial_trace(&[&in_sys.name])?
            .matrix()
            .scale_real(T::one() / T::lit(in_sys.dim as f64));
        let lower_sys: Vec<SystemLabel> = reduced.systems()[..reduced.systems().len() - 1].to_vec();
        let lower = ChoiOperator::new(lower_sys, lower)?;
        let rebuilt = lower.tensor(&ChoiOperator::identity_on(in_sys.clone()))?;
        let dev = (reduced.matrix() - rebuilt.matrix()).frobenius_norm();
        if dev > tol {
            violations.push(CombViolation {
                level,
                condition: format!("tr_{} C({level}) = C({}) ⊗ 1_{}", out_sys.name, level - 1, in_sys.name),
                deviation: dev.to_f64_lossy(),
            });
        }
        current = lower;
    }
    let base = current.as_scalar().expect("all systems traced");
    let dev = (base - C::one()).norm();
    if dev > tol {
        violations.push(CombViolation {
            level: 0,
            condition: "C(0) = 1".into(),
            deviation: dev.to_f64_lossy(),
        });
    }
    Ok(CombReport {
        is_comb: violations.is_empty(),
        violations,
    })
}

/// Unnormalized maximally entangled operator `Ω = Σ_ij |ii⟩⟨jj|`.
pub fn omega<T: Real>(d: usize) -> CMatrix<T> {
    let mut m = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = cr(T::one());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_circuit, forward};
    use crate::qcore::gates::{pauli_x, pauli_z, rotation_gate, Pauli};
    use crate::qcore::linalg::hermitian_eigenvalues;
    use crate::random::{random_angles, random_density, random_unitary};
    use crate::scalar::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn lbl(name: &str) -> SystemLabel {
        SystemLabel::new(name, 2).unwrap()
    }

    /// Choi matrix by the defining double sum, written independently of the
    /// index formula used in `choi_of_unitary_on`.
    fn choi_oracle(u: &CMatrix<f64>) -> CMatrix<f64> {
        let d = u.rows();
        let mut acc = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut eij = CMatrix::zeros(d, d);
                eij[(i, j)] = cr(1.0);
                let image = &(u * &eij) * &u.adjoint();
                acc = &acc + &eij.kron(&image).unwrap();
            }
        }
        acc
    }

    #[test]
    fn identity_choi_is_omega() {
        let j = choi_of_unitary(&CMatrix::<f64>::identity(2)).unwrap();
        assert_eq!(j.matrix(), &omega(2));
        assert_eq!(j.matrix().trace(), cr(2.0));
    }

    #[test]
    fn choi_matches_defining_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for u in [pauli_x::<f64>(), random_unitary(&mut rng, 2), random_unitary(&mut rng, 4)] {
            let j = choi_of_unitary(&u).unwrap();
            assert!(j.matrix().max_abs_diff(&choi_oracle(&u)) < 1e-12);
        }
    }

    #[test]
    fn unitary_choi_is_rank_one_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary::<f64, _>(&mut rng, 2);
        let e = hermitian_eigenvalues(choi_of_unitary(&u).unwrap().matrix()).unwrap();
        assert!(e[0] > -1e-10);
        assert!(e[2].abs() < 1e-9);
        assert!((e[3] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn non_unitary_rejected() {
        assert!(matches!(
            choi_of_unitary(&pauli_x::<f64>().scale_real(0.5)),
            Err(Error::NonUnitary { .. })
        ));
    }

    #[test]
    fn identity_channel_is_absorbed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary::<f64, _>(&mut rng, 2);
        let ju = choi_of_unitary_on(&u, "a", "b").unwrap();
        let id = choi_of_unitary_on(&CMatrix::identity(2), "b", "c").unwrap();
        let linked = link_product(&ju, &id, &[lbl("b")]).unwrap();
        assert_eq!(linked.systems(), &[lbl("a"), lbl("c")]);
        assert!(linked.matrix().max_abs_diff(ju.matrix()) < 1e-12);
    }

    #[test]
    fn composition_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let u = random_unitary::<f64, _>(&mut rng, 2);
            let v = random_unitary::<f64, _>(&mut rng, 2);
            let ju = choi_of_unitary_on(&u, "a", "b").unwrap();
            let jv = choi_of_unitary_on(&v, "b", "c").unwrap();
            let linked = link_product(&ju, &jv, &[lbl("b")]).unwrap();
            let want = choi_of_unitary_on(&(&v * &u), "a", "c").unwrap();
            assert!(linked.matrix().max_abs_diff(want.matrix()) < 1e-10);
        }
    }

    #[test]
    fn state_through_channel_is_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density::<f64, _>(&mut rng, 2);
        let u = random_unitary::<f64, _>(&mut rng, 2);
        let state = QuantumState::from_density(rho.clone()).unwrap();
        let r = ChoiOperator::from_state(&state, lbl("a")).unwrap();
        let j = choi_of_unitary_on(&u, "a", "b").unwrap();
        let out = link_product(&r, &j, &[lbl("a")]).unwrap();
        let want = &(&u * &rho) * &u.adjoint();
        assert!(out.matrix().max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn link_errors() {
        let j = choi_of_unitary_on(&pauli_x::<f64>(), "a", "b").unwrap();
        let k = choi_of_unitary_on(&pauli_x::<f64>(), "c", "d").unwrap();
        assert!(link_product(&j, &k, &[lbl("b")]).is_err());
        let wide = SystemLabel::new("b", 3).unwrap();
        let j3 = choi_of_unitary_on(&CMatrix::<f64>::identity(3), "b", "e").unwrap();
        assert!(matches!(link_product(&j, &j3, &[wide]), Err(Error::DimensionMismatch(_))));
        // free systems with equal names would collide
        assert!(link_product(&j, &j, &[]).is_err());
    }

    #[test]
    fn full_contraction_is_trace_against_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = choi_of_unitary_on(&random_unitary::<f64, _>(&mut rng, 2), "a", "b").unwrap();
        let x = ChoiOperator::new(vec![lbl("a"), lbl("b")], random_density(&mut rng, 4)).unwrap();
        let s = link_product(&a, &x, &[lbl("a"), lbl("b")]).unwrap().as_scalar().unwrap();
        let want = (a.matrix() * &x.matrix().transpose()).trace();
        assert!((s - want).norm() < 1e-12);
    }

    #[test]
    fn permute_and_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r1 = random_density::<f64, _>(&mut rng, 2);
        let r2 = random_density::<f64, _>(&mut rng, 2);
        let prod = ChoiOperator::new(vec![lbl("a"), lbl("b")], r1.kron(&r2).unwrap()).unwrap();
        let swapped = prod.permute(&["b", "a"]).unwrap();
        assert!(swapped.matrix().max_abs_diff(&r2.kron(&r1).unwrap()) < 1e-15);
        let ta = prod.partial_trace(&["a"]).unwrap();
        assert!(ta.matrix().max_abs_diff(&r2) < 1e-12);
        let tb = prod.partial_trace(&["b"]).unwrap();
        assert!(tb.matrix().max_abs_diff(&r1) < 1e-12);
    }

    #[test]
    fn pass_through_comb() {
        let layout = CombLayout::uniform(0, 2).unwrap();
        let comb = sequential_comb(&[CMatrix::identity(2)], &layout).unwrap();
        let z = Observable::new(pauli_z::<f64>()).unwrap();
        let rho = QuantumState::zero(1).unwrap();
        assert!((comb_output(&comb, &[], &z, &rho).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_bit_flip_comb() {
        let layout = CombLayout::uniform(1, 2).unwrap();
        let comb = sequential_comb(&[CMatrix::identity(2), CMatrix::identity(2)], &layout).unwrap();
        let flip = choi_of_unitary_on(&rotation_gate(Pauli::Y, PI).unwrap(), "I1", "O1").unwrap();
        let z = Observable::new(pauli_z::<f64>()).unwrap();
        let rho = QuantumState::zero(1).unwrap();
        assert!((comb_output(&comb, &[flip], &z, &rho).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn comb_output_matches_stepwise_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = CombLayout::uniform(2, 2).unwrap();
        for _ in 0..5 {
            let us: Vec<_> = (0..3).map(|_| random_unitary::<f64, _>(&mut rng, 2)).collect();
            let vs: Vec<_> = (0..2).map(|_| random_unitary::<f64, _>(&mut rng, 2)).collect();
            let comb = sequential_comb(&us, &layout).unwrap();
            let slots: Vec<_> = vs
                .iter()
                .enumerate()
                .map(|(i, v)| choi_of_unitary_on(v, &format!("I{}", i + 1), &format!("O{}", i + 1)).unwrap())
                .collect();
            let obs = Observable::new(crate::random::random_hermitian(&mut rng, 2)).unwrap();
            let rho = QuantumState::from_density(random_density(&mut rng, 2)).unwrap();
            let got = comb_output(&comb, &slots, &obs, &rho).unwrap();
            // apply each channel to the state in turn
            let mut state = rho.density_matrix();
            for (k, u) in us.iter().enumerate() {
                state = &(u * &state) * &u.adjoint();
                if k < vs.len() {
                    state = &(&vs[k] * &state) * &vs[k].adjoint();
                }
            }
            let want = (&state * obs.matrix()).trace().re;
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn comb_output_rejects_wrong_slots() {
        let layout = CombLayout::uniform(1, 2).unwrap();
        let comb = sequential_comb(&[CMatrix::identity(2), CMatrix::identity(2)], &layout).unwrap();
        let z = Observable::new(pauli_z::<f64>()).unwrap();
        let rho = QuantumState::zero(1).unwrap();
        let misnamed = choi_of_unitary_on(&CMatrix::identity(2), "O1", "I1").unwrap();
        assert!(matches!(comb_output(&comb, &[misnamed], &z, &rho), Err(Error::MalformedComb(_))));
        assert!(comb_output(&comb, &[], &z, &rho).is_err());
    }

    #[test]
    fn reuploading_comb_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, l, d) in [(1, 1, 1), (1, 2, 1), (2, 2, 2), (2, 1, 3)] {
            let c = build_circuit(n, l, d, 2).unwrap();
            let obs = Observable::z0(n).unwrap();
            let theta = random_angles(&mut rng, c.n_params(), 0.0, TAU);
            let x = random_angles(&mut rng, d, 0.0, TAU);
            let a = reuploading_comb_output(&c, &theta, &x, &obs).unwrap();
            let b = forward(&c, &theta, &x, &obs).unwrap();
            assert!((a - b).abs() < 1e-9, "{n} {l}: {a} vs {b}");
        }
        let c = build_circuit(1, 1, 1, 1).unwrap();
        let f: f64 = reuploading_comb_output(&c, &[0.0, 0.0], &[0.0], &Observable::z0(1).unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reuploading_comb_capacity_guard() {
        let c = build_circuit(2, 4, 2, 1).unwrap();
        let theta = vec![0.0; c.n_params()];
        assert!(matches!(
            reuploading_comb_output(&c, &theta, &[0.0, 0.0], &Observable::z0(2).unwrap()),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn sequential_comb_validates_and_perturbation_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let layout = CombLayout::uniform(1, 2).unwrap();
        let us: Vec<_> = (0..2).map(|_| random_unitary::<f64, _>(&mut rng, 2)).collect();
        let comb = sequential_comb(&us, &layout).unwrap();
        let report = validate_comb(&comb, &layout).unwrap();
        assert!(report.is_comb, "{:?}", report.violations);

        let mut m = comb.matrix().clone();
        m[(0, 0)] += c(0.1, 0.0);
        let bad = ChoiOperator::new(comb.systems().to_vec(), m).unwrap();
        let report = validate_comb(&bad, &layout).unwrap();
        assert!(!report.is_comb);
        assert!(report.first_violated_level().is_some() || !report.violations.is_empty());
    }

    #[test]
    fn validate_rejects_mismatched_layout() {
        let layout = CombLayout::uniform(1, 2).unwrap();
        let j = choi_of_unitary(&CMatrix::<f64>::identity(2)).unwrap();
        assert!(matches!(validate_comb(&j, &layout), Err(Error::MalformedComb(_))));
    }

    #[test]
    fn layout_from_dims() {
        let l = CombLayout::from_dims(&[2, 2, 2, 2]).unwrap();
        assert_eq!(l, CombLayout::uniform(1, 2).unwrap());
        let names: Vec<_> = CombLayout::from_dims(&[2, 3, 4, 5]).unwrap().systems().into_iter().map(|s| (s.name, s.dim)).collect();
        assert_eq!(names, vec![("P".into(), 2), ("I1".into(), 3), ("O1".into(), 4), ("F".into(), 5)]);
        assert!(CombLayout::from_dims(&[2, 2, 2]).is_err());
        assert!(CombLayout::from_dims(&[]).is_err());
    }
}

//! Dense complex linear algebra for a handful of qubits.
//!
//! Basis labels are most-significant-qubit first: in an `n`-qubit register
//! slot `0` is the leftmost bit of the label, so `|01⟩` is index 1 and slot
//! `q` corresponds to the bit `1 << (n - 1 - q)`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Tolerance for algebraic identities (norms, unitarity, traces).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance for comparing states modulo a global phase.
pub const PHASE_TOL: f64 = 1e-9;
/// Outcomes below this probability have no defined post-measurement state.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-14;
/// Density matrices may have eigenvalues down to `-PSD_TOL`.
pub const PSD_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
fn slot_mask(n_qubits: usize, slot: usize) -> usize {
    1 << (n_qubits - 1 - slot)
}

/// A normalized pure state of `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// Wraps `amps` after checking its length is `2^n_qubits` and its norm is 1.
    pub fn new(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_len(n_qubits, amps.len())?;
        let norm = norm(&amps);
        if (norm - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::Contract(format!("state norm {norm} differs from 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(n_qubits: usize, mut amps: Vec<C64>) -> Result<Self> {
        check_len(n_qubits, amps.len())?;
        let norm = norm(&amps);
        if norm < 1e-300 || !norm.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amps })
    }

    pub(crate) fn from_raw(n_qubits: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    /// `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
    pub fn from_bloch_angles(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self::from_raw(1, vec![C64::new(c, 0.0), C64::from_polar(s, phi)])
    }

    /// Pure qubit state with the given Bloch vector (must have unit length).
    pub fn from_bloch_vector(r: [f64; 3]) -> Result<Self> {
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if (len - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!("Bloch vector length {len} is not 1")));
        }
        let theta = (r[2] / len).clamp(-1.0, 1.0).acos();
        let phi = r[1].atan2(r[0]);
        Ok(Self::from_bloch_angles(theta, phi))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Equality modulo global phase: `|⟨x|y⟩| = 1` within [`PHASE_TOL`].
    pub fn same_up_to_phase(&self, other: &StateVector) -> bool {
        self.dim() == other.dim() && (1.0 - self.inner(other).norm()).abs() < PHASE_TOL
    }

    /// Euclidean distance `‖self − other‖`, phase-sensitive.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Bloch vector of a single-qubit state.
    pub fn bloch_vector(&self) -> Option<[f64; 3]> {
        if self.n_qubits != 1 {
            return None;
        }
        let (a, b) = (self.amps[0], self.amps[1]);
        let off = a.conj() * b;
        Some([2.0 * off.re, 2.0 * off.im, a.norm_sqr() - b.norm_sqr()])
    }
}

fn check_len(n_qubits: usize, len: usize) -> Result<()> {
    if n_qubits >= usize::BITS as usize - 1 || len != 1 << n_qubits {
        return Err(Error::Domain(format!(
            "amplitude vector of length {len} does not match {n_qubits} qubits"
        )));
    }
    Ok(())
}

fn norm(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Two bits `(a, b)` naming the Bell state `|(ab)⟩`; `a` flips, `b` phases.
///
/// Also used as the label of a Bell-measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u8; 2]", into = "[u8; 2]")]
pub struct BellIndex {
    a: u8,
    b: u8,
}

impl BellIndex {
    /// All four indices in label order `00, 01, 10, 11`.
    pub const ALL: [BellIndex; 4] = [
        BellIndex { a: 0, b: 0 },
        BellIndex { a: 0, b: 1 },
        BellIndex { a: 1, b: 0 },
        BellIndex { a: 1, b: 1 },
    ];
    pub const SINGLET: BellIndex = BellIndex { a: 1, b: 1 };

    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a > 1 || b > 1 {
            return Err(Error::Domain(format!("Bell index bits ({a},{b}) must be 0 or 1")));
        }
        Ok(Self { a, b })
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Domain(format!("Bell index {i} out of range")))
    }

    pub fn a(self) -> u8 {
        self.a
    }

    pub fn b(self) -> u8 {
        self.b
    }

    /// Position in [`BellIndex::ALL`].
    pub fn index(self) -> usize {
        (2 * self.a + self.b) as usize
    }

    pub fn bits(self) -> [u8; 2] {
        [self.a, self.b]
    }
}

impl TryFrom<[u8; 2]> for BellIndex {
    type Error = Error;

    fn try_from(bits: [u8; 2]) -> Result<Self> {
        Self::new(bits[0], bits[1])
    }
}

impl From<BellIndex> for [u8; 2] {
    fn from(idx: BellIndex) -> Self {
        idx.bits()
    }
}

impl fmt::Display for BellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{})", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn operator(self) -> QubitOperator {
        let i = C64::new(0.0, 1.0);
        let m = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -i, i, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        QubitOperator::from_raw(1, CMatrix::from_row_slice(2, 2, &m))
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        };
        f.write_str(s)
    }
}

/// Square complex matrix acting on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitOperator {
    n_qubits: usize,
    matrix: CMatrix,
}

impl QubitOperator {
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Domain("operators act on at least one qubit".into()));
        }
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Domain(format!(
                "{}x{} matrix does not act on {n_qubits} qubits",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { n_qubits, matrix })
    }

    pub(crate) fn from_raw(n_qubits: usize, matrix: CMatrix) -> Self {
        Self { n_qubits, matrix }
    }

    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self::from_raw(n_qubits, CMatrix::identity(dim, dim))
    }

    /// `exp(-i θ σ_z / 2)`.
    pub fn z_rotation(theta: f64) -> Self {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::from_polar(1.0, -theta / 2.0),
                ZERO,
                ZERO,
                C64::from_polar(1.0, theta / 2.0),
            ],
        );
        Self::from_raw(1, m)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self::from_raw(self.n_qubits, self.matrix.adjoint())
    }

    /// Kronecker product; `self` occupies the more significant slots.
    pub fn kron(&self, other: &QubitOperator) -> Self {
        Self::from_raw(self.n_qubits + other.n_qubits, self.matrix.kronecker(&other.matrix))
    }

    pub fn compose(&self, other: &QubitOperator) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Domain("cannot compose operators of different size".into()));
        }
        Ok(Self::from_raw(self.n_qubits, &self.matrix * &other.matrix))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::from_raw(self.n_qubits, self.matrix.map(|x| x * c))
    }

    /// Largest elementwise deviation of `U†U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = self.matrix.adjoint() * &self.matrix;
        max_abs_diff(&prod, &CMatrix::identity(prod.nrows(), prod.ncols()))
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_deviation() < ALGEBRA_TOL
    }

    fn require_unitary(&self) -> Result<()> {
        let dev = self.unitarity_deviation();
        if dev >= ALGEBRA_TOL {
            return Err(Error::Contract(format!("operator is not unitary (deviation {dev:e})")));
        }
        Ok(())
    }

    /// If `self` is a Pauli times a unit phase, returns both.
    pub fn as_phased_pauli(&self) -> Option<(Pauli, C64)> {
        if self.n_qubits != 1 {
            return None;
        }
        Pauli::ALL.into_iter().find_map(|p| {
            let pm = p.operator().matrix;
            // tr(P† U)/2 is the phase when U = phase·P.
            let phase = (pm.adjoint() * &self.matrix).trace() / 2.0;
            let diff = max_abs_diff(&self.matrix, &pm.map(|x| x * phase));
            ((phase.norm() - 1.0).abs() < ALGEBRA_TOL && diff < ALGEBRA_TOL).then_some((p, phase))
        })
    }

    /// Embeds `self` acting on `targets` into an `n_qubits` register.
    pub fn embed(&self, n_qubits: usize, targets: &[usize]) -> Result<QubitOperator> {
        check_targets(n_qubits, targets, self.n_qubits)?;
        let dim = 1 << n_qubits;
        let mut full = CMatrix::zeros(dim, dim);
        let mut column = vec![ZERO; dim];
        for c in 0..dim {
            column.iter_mut().for_each(|x| *x = ZERO);
            column[c] = ONE;
            let image = apply_raw(&column, n_qubits, &self.matrix, targets);
            for (r, v) in image.into_iter().enumerate() {
                full[(r, c)] = v;
            }
        }
        Ok(QubitOperator::from_raw(n_qubits, full))
    }
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Hermitian, unit-trace, positive semidefinite matrix over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Domain(format!("density matrix is not {dim}x{dim}")));
        }
        let herm = max_abs_diff(&matrix, &matrix.adjoint());
        if herm > ALGEBRA_TOL {
            return Err(Error::Contract(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > ALGEBRA_TOL {
            return Err(Error::Contract(format!("density matrix trace {tr} is not 1")));
        }
        let rho = Self { n_qubits, matrix };
        let min = rho.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -PSD_TOL {
            return Err(Error::Contract(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_raw(n_qubits: usize, matrix: CMatrix) -> Self {
        Self { n_qubits, matrix }
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self::from_raw(n_qubits, CMatrix::identity(dim, dim).map(|x| x / dim as f64))
    }

    /// Mixture `Σ wᵢ |ψᵢ⟩⟨ψᵢ|`; weights must sum to 1.
    pub fn mixture(components: &[(f64, &StateVector)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Domain("empty mixture".into()))?;
        let n = first.1.n_qubits();
        let dim = 1 << n;
        let mut m = CMatrix::zeros(dim, dim);
        for (w, s) in components {
            if s.n_qubits() != n {
                return Err(Error::Domain("mixture components differ in size".into()));
            }
            m += density_of(s).matrix.map(|x| x * *w);
        }
        Self::new(n, m)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// `½ ‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Domain("trace distance between different sizes".into()));
        }
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|e| e.abs()).sum::<f64>())
    }

    /// Largest elementwise difference to `other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// `U ρ U†` with `op` acting on `targets`.
    pub fn evolve(&self, op: &QubitOperator, targets: &[usize]) -> Result<DensityMatrix> {
        op.require_unitary()?;
        let full = op.embed(self.n_qubits, targets)?;
        let m = &full.matrix * &self.matrix * full.matrix.adjoint();
        Ok(Self::from_raw(self.n_qubits, m))
    }
}

fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Computational basis state `|index⟩` of `n` qubits.
pub fn basis_ket(n: usize, index: usize) -> Result<StateVector> {
    if n >= usize::BITS as usize - 1 {
        return Err(Error::Domain(format!("{n} qubits is too many")));
    }
    let dim = 1usize << n;
    if index >= dim {
        return Err(Error::Domain(format!(
            "basis index {index} out of range for {n} qubits"
        )));
    }
    let mut amps = vec![ZERO; dim];
    amps[index] = ONE;
    Ok(StateVector::from_raw(n, amps))
}

/// `|(ab)⟩ = (1/√2) Σ_{k∈{0,1}} (−1)^{kb} |k, k⊕a⟩`.
pub fn bell_state(idx: BellIndex) -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![ZERO; 4];
    for k in 0..2usize {
        let sign = if k * idx.b() as usize % 2 == 1 { -1.0 } else { 1.0 };
        let second = k ^ idx.a() as usize;
        amps[(k << 1) | second] = C64::new(sign * h, 0.0);
    }
    StateVector::from_raw(2, amps)
}

/// Kronecker product; `left` occupies the more significant slots.
pub fn tensor(left: &StateVector, right: &StateVector) -> StateVector {
    let amps = left
        .amps
        .iter()
        .flat_map(|l| right.amps.iter().map(move |r| l * r))
        .collect();
    StateVector::from_raw(left.n_qubits + right.n_qubits, amps)
}

/// Moves the qubit in slot `q` to slot `perm[q]`.
pub fn permute_qubits(s: &StateVector, perm: &[usize]) -> Result<StateVector> {
    let n = s.n_qubits;
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Domain(format!(
            "permutation of length {} for {n} qubits",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Domain(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    let mut out = vec![ZERO; s.dim()];
    for (idx, amp) in s.amps.iter().enumerate() {
        let moved = (0..n)
            .filter(|&q| idx & slot_mask(n, q) != 0)
            .fold(0, |acc, q| acc | slot_mask(n, perm[q]));
        out[moved] = *amp;
    }
    Ok(StateVector::from_raw(n, out))
}

fn check_targets(n: usize, targets: &[usize], k: usize) -> Result<()> {
    if targets.len() != k {
        return Err(Error::Domain(format!(
            "{k}-qubit operator given {} target slots",
            targets.len()
        )));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::Domain(format!("target slot {t} out of range for {n} qubits")));
        }
        if targets[..i].contains(&t) {
            return Err(Error::Domain(format!("target slot {t} repeated")));
        }
    }
    Ok(())
}

/// Offsets of the `2^k` sub-basis states on `targets`, first target most significant.
fn target_offsets(n: usize, targets: &[usize]) -> Vec<usize> {
    let k = targets.len();
    (0..1usize << k)
        .map(|j| {
            targets
                .iter()
                .enumerate()
                .filter(|(p, _)| (j >> (k - 1 - p)) & 1 == 1)
                .map(|(_, &t)| slot_mask(n, t))
                .sum()
        })
        .collect()
}

pub(crate) fn apply_raw(amps: &[C64], n: usize, m: &CMatrix, targets: &[usize]) -> Vec<C64> {
    let offsets = target_offsets(n, targets);
    let all: usize = targets.iter().map(|&t| slot_mask(n, t)).sum();
    let mut out = vec![ZERO; amps.len()];
    let mut local = vec![ZERO; offsets.len()];
    for base in (0..amps.len()).filter(|b| b & all == 0) {
        for (slot, off) in local.iter_mut().zip(&offsets) {
            *slot = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            out[base | off] = (0..local.len()).map(|c| m[(r, c)] * local[c]).sum();
        }
    }
    out
}

/// Applies `op` to the ordered `targets` of `s`, identity elsewhere.
pub fn apply_on_qubits(s: &StateVector, op: &QubitOperator, targets: &[usize]) -> Result<StateVector> {
    check_targets(s.n_qubits, targets, op.n_qubits)?;
    op.require_unitary()?;
    Ok(StateVector::from_raw(
        s.n_qubits,
        apply_raw(&s.amps, s.n_qubits, &op.matrix, targets),
    ))
}

/// `|s⟩⟨s|`.
pub fn density_of(s: &StateVector) -> DensityMatrix {
    let v = nalgebra::DVector::from_column_slice(&s.amps);
    DensityMatrix::from_raw(s.n_qubits, &v * v.adjoint())
}

/// Reduced state on the slots in `keep`, listed in ascending slot order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    if keep.is_empty() {
        return Err(Error::Domain("partial trace must keep at least one qubit".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&q| q >= n) {
        return Err(Error::Domain(format!("slot {bad} out of range for {n} qubits")));
    }
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    let kept_off = target_offsets(n, &kept);
    let traced_off = target_offsets(n, &traced);
    let dim = kept_off.len();
    let mut m = CMatrix::zeros(dim, dim);
    for (i, ki) in kept_off.iter().enumerate() {
        for (j, kj) in kept_off.iter().enumerate() {
            m[(i, j)] = traced_off.iter().map(|r| rho.matrix[(ki | r, kj | r)]).sum();
        }
    }
    Ok(DensityMatrix::from_raw(kept.len(), m))
}

/// `⟨target|ρ|target⟩`.
pub fn fidelity_with_pure(rho: &DensityMatrix, target: &StateVector) -> Result<f64> {
    if rho.n_qubits != target.n_qubits {
        return Err(Error::Domain(format!(
            "{}-qubit density matrix against {}-qubit target",
            rho.n_qubits, target.n_qubits
        )));
    }
    let v = nalgebra::DVector::from_column_slice(&target.amps);
    Ok((v.adjoint() * &rho.matrix * &v)[(0, 0)].re)
}

/// How a projective measurement picks its outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode<L> {
    /// Draw an outcome with a generator seeded from the value.
    Sample(u64),
    /// Post-select the given outcome.
    Forced(L),
    /// Return every outcome with its probability.
    EnumerateAll,
}

pub type MeasureMode = Mode<BellIndex>;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<L> {
    pub outcome: L,
    pub probability: f64,
    /// `None` when the outcome is negligible and the projection is undefined.
    pub post_state: Option<StateVector>,
}

pub type MeasurementResult = Outcome<BellIndex>;

impl<L> Outcome<L> {
    /// Post-measurement state of a non-negligible outcome.
    pub fn state(&self) -> &StateVector {
        self.post_state
            .as_ref()
            .expect("post state is defined for non-negligible outcomes")
    }
}

/// Unnormalized projection onto `|v⟩` on `slots` (identity elsewhere).
fn project_raw(s: &StateVector, slots: &[usize], v: &StateVector) -> Vec<C64> {
    let n = s.n_qubits;
    let offsets = target_offsets(n, slots);
    let all: usize = slots.iter().map(|&t| slot_mask(n, t)).sum();
    let mut out = vec![ZERO; s.dim()];
    for base in (0..s.dim()).filter(|b| b & all == 0) {
        let c: C64 = offsets
            .iter()
            .zip(&v.amps)
            .map(|(off, vj)| vj.conj() * s.amps[base | off])
            .sum();
        for (off, vj) in offsets.iter().zip(&v.amps) {
            out[base | off] = vj * c;
        }
    }
    out
}

/// Projective measurement of `slots` in the orthonormal `basis`.
pub fn measure_in_basis<L: Copy + fmt::Display + PartialEq>(
    s: &StateVector,
    slots: &[usize],
    basis: &[(L, StateVector)],
    mode: Mode<L>,
) -> Result<Vec<Outcome<L>>> {
    check_targets(s.n_qubits, slots, basis.first().map_or(0, |b| b.1.n_qubits))?;
    let branches: Vec<(L, f64, Vec<C64>)> = basis
        .iter()
        .map(|(label, v)| {
            let proj = project_raw(s, slots, v);
            let p = proj.iter().map(|a| a.norm_sqr()).sum::<f64>();
            (*label, p, proj)
        })
        .collect();
    let finish = |(label, p, proj): (L, f64, Vec<C64>)| {
        let post = (p >= NEGLIGIBLE_PROBABILITY).then(|| {
            let scale = p.sqrt();
            StateVector::from_raw(s.n_qubits, proj.into_iter().map(|a| a / scale).collect())
        });
        Outcome {
            outcome: label,
            probability: p,
            post_state: post,
        }
    };
    match mode {
        Mode::EnumerateAll => Ok(branches.into_iter().map(finish).collect()),
        Mode::Forced(want) => {
            let branch = branches
                .into_iter()
                .find(|b| b.0 == want)
                .ok_or_else(|| Error::Domain(format!("outcome {want} not in basis")))?;
            if branch.1 < NEGLIGIBLE_PROBABILITY {
                return Err(Error::ImpossibleOutcome {
                    outcome: want.to_string(),
                    probability: branch.1,
                });
            }
            Ok(vec![finish(branch)])
        }
        Mode::Sample(seed) => {
            let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
            let total: f64 = branches.iter().map(|b| b.1).sum();
            let mut acc = 0.0;
            let last_live = branches
                .iter()
                .rposition(|b| b.1 >= NEGLIGIBLE_PROBABILITY)
                .ok_or_else(|| Error::Contract("no outcome has positive probability".into()))?;
            let pick = branches
                .iter()
                .position(|b| {
                    acc += b.1 / total;
                    b.1 >= NEGLIGIBLE_PROBABILITY && u < acc
                })
                .unwrap_or(last_live);
            Ok(vec![finish(branches.into_iter().nth(pick).expect("index in range"))])
        }
    }
}

/// Bell-basis measurement of the ordered pair `(first, second)`.
///
/// The post-measurement state keeps all qubits; the measured pair is left in
/// the Bell state of the outcome.
pub fn measure_bell(s: &StateVector, pair: (usize, usize), mode: MeasureMode) -> Result<Vec<MeasurementResult>> {
    if pair.0 == pair.1 {
        return Err(Error::Domain(format!("Bell measurement on repeated slot {}", pair.0)));
    }
    let basis: Vec<(BellIndex, StateVector)> = BellIndex::ALL.iter().map(|&i| (i, bell_state(i))).collect();
    measure_in_basis(s, &[pair.0, pair.1], &basis, mode)
}

/// Outcome label of a single-qubit measurement in the `|±⟩` basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn bit(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Measurement of one slot in the basis `(|0⟩ ± |1⟩)/√2`.
pub fn measure_plus_minus(s: &StateVector, slot: usize, mode: Mode<Sign>) -> Result<Vec<Outcome<Sign>>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let basis = [
        (
            Sign::Plus,
            StateVector::from_raw(1, vec![C64::new(h, 0.0), C64::new(h, 0.0)]),
        ),
        (
            Sign::Minus,
            StateVector::from_raw(1, vec![C64::new(h, 0.0), C64::new(-h, 0.0)]),
        ),
    ];
    measure_in_basis(s, &[slot], &basis, mode)
}

/// `u ⊗ u ⊗ … ⊗ u` with `n` factors.
pub fn collective_unitary(u: &QubitOperator, n: usize) -> Result<QubitOperator> {
    if u.n_qubits != 1 {
        return Err(Error::Domain("collective unitary needs a single-qubit factor".into()));
    }
    if n == 0 {
        return Err(Error::Domain("collective unitary over zero qubits".into()));
    }
    u.require_unitary()?;
    Ok((1..n).fold(u.clone(), |acc, _| acc.kron(u)))
}

/// Haar-random pure qubit from two complex standard normals.
pub fn random_pure_qubit_from<R: Rng + ?Sized>(rng: &mut R) -> StateVector {
    let mut draw = || rng.sample::<f64, _>(StandardNormal);
    let amps = vec![C64::new(draw(), draw()), C64::new(draw(), draw())];
    StateVector::normalized(1, amps).expect("Gaussian draw is nonzero almost surely")
}

/// Haar-random pure qubit, deterministic per seed.
pub fn random_pure_qubit(seed: u64) -> StateVector {
    random_pure_qubit_from(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Haar-random pure state on `n` qubits, deterministic per seed.
pub fn random_state(n: usize, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..1usize << n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    StateVector::normalized(n, amps).expect("Gaussian draw is nonzero almost surely")
}

/// Haar-random element of SU(2) from a uniformly random unit quaternion.
pub fn random_su2_from<R: Rng + ?Sized>(rng: &mut R) -> QubitOperator {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
    let len = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [a, b, c, d] = q.map(|x| x / len);
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(a, b), C64::new(c, d), C64::new(-c, d), C64::new(a, -b)],
    );
    QubitOperator::from_raw(1, m)
}

/// Derives an independent 64-bit seed for stream `index` of `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

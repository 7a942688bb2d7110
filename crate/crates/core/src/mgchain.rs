//! Majumdar-Ghosh ring: `H = J Σ_i (2 S_i·S_{i+1} + α S_i·S_{i+2})`, periodic.
//!
//! The Hamiltonian conserves total `S_z`, so diagonalization runs one dense
//! block per magnetization sector. Spin operators are `σ/2`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::qcore::{bell_state, permute_qubits, tensor, BellIndex, CMatrix, QubitOperator, StateVector, C64};
use crate::switchboard::build_switchboard;

/// Largest ring handled by [`diagonalize`].
pub const MAX_DIAG_SITES: usize = 14;
/// Largest ring for which [`build_hamiltonian`] returns a dense `2^N` matrix.
pub const MAX_DENSE_SITES: usize = 12;
/// Largest ring accepted by [`gap_scan`].
pub const MAX_SCAN_SITES: usize = 12;
pub const DEGENERACY_REL_TOL: f64 = 1e-9;
pub const DEGENERACY_ABS_FLOOR: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinChainSpec {
    n_sites: usize,
    coupling: f64,
    alpha: f64,
}

impl SpinChainSpec {
    pub fn new(n_sites: usize, coupling: f64, alpha: f64) -> Result<Self> {
        if n_sites < 4 || !n_sites.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "ring needs an even site count >= 4, got {n_sites}"
            )));
        }
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(Error::Domain(format!("coupling J must be positive, got {coupling}")));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self {
            n_sites,
            coupling,
            alpha,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// One `weight · S_i·S_j` term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Terms of the periodic sum, one nearest and one next-nearest per site.
///
/// On four sites the next-nearest pairs (1,3) and (2,4) each appear twice.
pub fn bonds(spec: &SpinChainSpec) -> Vec<Bond> {
    let n = spec.n_sites;
    (0..n)
        .flat_map(|i| {
            [
                Bond {
                    i,
                    j: (i + 1) % n,
                    weight: 2.0 * spec.coupling,
                },
                Bond {
                    i,
                    j: (i + 2) % n,
                    weight: spec.alpha * spec.coupling,
                },
            ]
        })
        .collect()
}

#[inline]
fn site_mask(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

/// Visits the nonzero elements `(row, value)` of column `state` of `Σ bonds`.
fn for_each_element(n: usize, bonds: &[Bond], state: usize, mut visit: impl FnMut(usize, f64)) {
    let mut diag = 0.0;
    for b in bonds {
        let (mi, mj) = (site_mask(n, b.i), site_mask(n, b.j));
        let aligned = (state & mi != 0) == (state & mj != 0);
        if aligned {
            diag += 0.25 * b.weight;
        } else {
            diag -= 0.25 * b.weight;
            visit(state ^ mi ^ mj, 0.5 * b.weight);
        }
    }
    visit(state, diag);
}

pub(crate) fn hamiltonian_from_bonds(n: usize, bonds: &[Bond]) -> QubitOperator {
    let dim = 1 << n;
    let mut m = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        for_each_element(n, bonds, col, |row, v| m[(row, col)] += C64::new(v, 0.0));
    }
    QubitOperator::new(n, m).expect("dimension matches site count")
}

/// Dense `2^N × 2^N` Hamiltonian.
pub fn build_hamiltonian(spec: &SpinChainSpec) -> Result<QubitOperator> {
    if spec.n_sites > MAX_DENSE_SITES {
        return Err(Error::Resource(format!(
            "dense Hamiltonian limited to {MAX_DENSE_SITES} sites, asked for {}",
            spec.n_sites
        )));
    }
    Ok(hamiltonian_from_bonds(spec.n_sites, &bonds(spec)))
}

/// Basis labels with `ups` set bits and the real symmetric block on them.
fn sector_block(n: usize, bonds: &[Bond], ups: u32) -> (Vec<usize>, DMatrix<f64>) {
    let basis: Vec<usize> = (0..1usize << n).filter(|s| s.count_ones() == ups).collect();
    let mut position = vec![usize::MAX; 1 << n];
    for (p, &s) in basis.iter().enumerate() {
        position[s] = p;
    }
    let mut block = DMatrix::zeros(basis.len(), basis.len());
    for (col, &s) in basis.iter().enumerate() {
        for_each_element(n, bonds, s, |row, v| block[(position[row], col)] += v);
    }
    (basis, block)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// Full spectrum, ascending.
    pub eigenvalues: Vec<f64>,
    pub ground_energy: f64,
    pub degeneracy: usize,
    /// Orthonormal basis of the ground space.
    pub ground_basis: Vec<StateVector>,
}

impl SpectrumReport {
    /// Distance from the ground energy to the next distinct level.
    pub fn gap(&self) -> f64 {
        self.eigenvalues
            .get(self.degeneracy)
            .map_or(0.0, |e| e - self.ground_energy)
    }

    /// `1 − ‖P_ground v‖²`.
    pub fn ground_deficit(&self, v: &StateVector) -> f64 {
        1.0 - self.ground_basis.iter().map(|g| g.inner(v).norm_sqr()).sum::<f64>()
    }

    /// Projector onto the ground space.
    pub fn ground_projector(&self) -> CMatrix {
        projector(&self.ground_basis)
    }
}

fn projector(orthonormal: &[StateVector]) -> CMatrix {
    let dim = orthonormal.first().map_or(0, |v| v.dim());
    let mut p = CMatrix::zeros(dim, dim);
    for v in orthonormal {
        let col = nalgebra::DVector::from_column_slice(v.amplitudes());
        p += &col * col.adjoint();
    }
    p
}

fn in_cluster(e: f64, ground: f64) -> bool {
    (e - ground).abs() <= (DEGENERACY_REL_TOL * ground.abs()).max(DEGENERACY_ABS_FLOOR)
}

pub(crate) fn diagonalize_bonds(n: usize, bonds: &[Bond]) -> SpectrumReport {
    let sectors: Vec<u32> = (0..=n as u32).collect();
    let per_sector: Vec<Vec<f64>> = sectors
        .par_iter()
        .map(|&ups| {
            sector_block(n, bonds, ups)
                .1
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let mut eigenvalues: Vec<f64> = per_sector.iter().flatten().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let ground_energy = eigenvalues[0];
    let degeneracy = eigenvalues
        .iter()
        .take_while(|&&e| in_cluster(e, ground_energy))
        .count();

    let mut ground_basis = Vec::with_capacity(degeneracy);
    for (ups, values) in sectors.iter().zip(&per_sector) {
        if !values.iter().any(|&e| in_cluster(e, ground_energy)) {
            continue;
        }
        let (basis, block) = sector_block(n, bonds, *ups);
        let eig = block.symmetric_eigen();
        for (k, &e) in eig.eigenvalues.iter().enumerate() {
            if !in_cluster(e, ground_energy) {
                continue;
            }
            let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
            for (p, &s) in basis.iter().enumerate() {
                amps[s] = C64::new(eig.eigenvectors[(p, k)], 0.0);
            }
            ground_basis.push(StateVector::normalized(n, amps).expect("eigenvector is nonzero"));
        }
    }
    SpectrumReport {
        eigenvalues,
        ground_energy,
        degeneracy,
        ground_basis,
    }
}

/// Full spectrum and ground space, by dense diagonalization of each `S_z` block.
pub fn diagonalize(spec: &SpinChainSpec) -> Result<SpectrumReport> {
    if spec.n_sites > MAX_DIAG_SITES {
        return Err(Error::Resource(format!(
            "diagonalization limited to {MAX_DIAG_SITES} sites, asked for {}",
            spec.n_sites
        )));
    }
    Ok(diagonalize_bonds(spec.n_sites, &bonds(spec)))
}

/// Product of singlets on neighbouring sites.
///
/// `offset = 0` pairs `(1,2), (3,4), …`; `offset = 1` pairs `(2,3), …, (N,1)`,
/// each singlet ordered as written.
pub fn dimer_state(n_sites: usize, offset: usize) -> Result<StateVector> {
    if n_sites < 2 || !n_sites.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "dimer covering needs an even site count, got {n_sites}"
        )));
    }
    if offset > 1 {
        return Err(Error::Domain(format!("dimer offset must be 0 or 1, got {offset}")));
    }
    let singlet = bell_state(BellIndex::SINGLET);
    let product = (1..n_sites / 2).fold(singlet.clone(), |acc, _| tensor(&acc, &singlet));
    let perm: Vec<usize> = (0..n_sites).map(|q| (q + offset) % n_sites).collect();
    permute_qubits(&product, &perm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundMembership {
    pub n_sites: usize,
    pub degeneracy: usize,
    /// `(label, 1 − ‖P_ground v‖²)` for each checked state.
    pub deficits: Vec<(String, f64)>,
    /// On four sites, the largest elementwise difference between the ground
    /// projector and the projector onto the two dimer coverings.
    pub span_deviation: Option<f64>,
}

impl GroundMembership {
    pub fn max_deficit(&self) -> f64 {
        self.deficits.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks both dimer coverings (and on four sites the switchboard state) lie
/// in the twofold ground space at `α = 1`.
pub fn verify_ground_membership(spec: &SpinChainSpec) -> Result<GroundMembership> {
    if spec.alpha != 1.0 {
        return Err(Error::Domain(format!(
            "ground membership is checked at alpha = 1, got {}",
            spec.alpha
        )));
    }
    let report = diagonalize(spec)?;
    if report.degeneracy != 2 {
        return Err(Error::Structural(format!(
            "expected a twofold ground space, found degeneracy {}",
            report.degeneracy
        )));
    }
    let n = spec.n_sites;
    let d0 = dimer_state(n, 0)?;
    let d1 = dimer_state(n, 1)?;
    let mut deficits = vec![
        ("dimer_0".to_string(), report.ground_deficit(&d0)),
        ("dimer_1".to_string(), report.ground_deficit(&d1)),
    ];
    let mut span_deviation = None;
    if n == 4 {
        deficits.push((
            "switchboard".to_string(),
            report.ground_deficit(build_switchboard().state()),
        ));
        // Gram-Schmidt on the two coverings.
        let overlap = d0.inner(&d1);
        let rest: Vec<C64> = d1
            .amplitudes()
            .iter()
            .zip(d0.amplitudes())
            .map(|(b, a)| b - a * overlap)
            .collect();
        let e1 = StateVector::normalized(n, rest)?;
        let span = projector(&[d0, e1]);
        span_deviation = Some(crate::qcore::max_abs_diff(&span, &report.ground_projector()));
    }
    Ok(GroundMembership {
        n_sites: n,
        degeneracy: report.degeneracy,
        deficits,
        span_deviation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub alpha: f64,
    pub ground_energy: f64,
    pub gap: f64,
    pub degeneracy: usize,
}

/// Ground energy, gap and degeneracy across a grid of `α`.
pub fn gap_scan(n_sites: usize, coupling: f64, alphas: &[f64]) -> Result<Vec<ScanRow>> {
    if n_sites > MAX_SCAN_SITES {
        return Err(Error::Resource(format!(
            "gap scan limited to {MAX_SCAN_SITES} sites, asked for {n_sites}"
        )));
    }
    let specs = alphas
        .iter()
        .map(|&a| SpinChainSpec::new(n_sites, coupling, a))
        .collect::<Result<Vec<_>>>()?;
    specs
        .par_iter()
        .map(|spec| {
            let r = diagonalize(spec)?;
            Ok(ScanRow {
                alpha: spec.alpha,
                ground_energy: r.ground_energy,
                gap: r.gap(),
                degeneracy: r.degeneracy,
            })
        })
        .collect()
}

/// Columnar text: `alpha E0 gap degeneracy`, 12 significant digits.
pub fn scan_table(rows: &[ScanRow]) -> String {
    let mut out = format!("{:>18} {:>18} {:>18} {:>10}\n", "alpha", "E0", "gap", "degeneracy");
    for r in rows {
        out.push_str(&format!(
            "{:>18} {:>18} {:>18} {:>10}\n",
            sig12(r.alpha),
            sig12(r.ground_energy),
            sig12(r.gap),
            r.degeneracy
        ));
    }
    out
}

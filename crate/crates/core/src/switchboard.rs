//! The four-qubit switchboard state and the fidelities it delivers.
//!
//! Shared-state slots are `0..4` for Alice, Bob, Charlene and Dick. When the
//! auxiliary qubit `|α⟩` is attached, the five-qubit register puts it in slot
//! `0` and shifts every party up by one.

use std::fmt;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    apply_on_qubits, bell_state, collective_unitary, density_of, derive_seed, fidelity_with_pure, measure_bell,
    measure_plus_minus, partial_trace, permute_qubits, random_pure_qubit, random_su2_from, tensor, BellIndex,
    DensityMatrix, MeasureMode, MeasurementResult, Mode, Pauli, QubitOperator, StateVector, ALGEBRA_TOL, C64,
};

/// Register slot of the auxiliary qubit.
pub const AUX_SLOT: usize = 0;

/// Largest allowed distance between a reduced state and its Werner fit.
pub const WERNER_FIT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
    Charlene,
    Dick,
}

impl Party {
    pub const ALL: [Party; 4] = [Party::Alice, Party::Bob, Party::Charlene, Party::Dick];

    /// Slot in the four-qubit shared state.
    pub fn shared_slot(self) -> usize {
        self as usize
    }

    /// Slot in the five-qubit register `|α⟩ ⊗ |ψ⟩`.
    pub fn register_slot(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which receiver ends up holding `|α⟩` in the demultiplexer run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    #[serde(rename = "to_Bob")]
    ToBob,
    #[serde(rename = "to_Charlene")]
    ToCharlene,
}

impl Route {
    pub fn target(self) -> Party {
        match self {
            Route::ToBob => Party::Bob,
            Route::ToCharlene => Party::Charlene,
        }
    }

    /// The receiver that gets Dick's qubit and performs the second Bell measurement.
    pub fn idle(self) -> Party {
        match self {
            Route::ToBob => Party::Charlene,
            Route::ToCharlene => Party::Bob,
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::ToBob => "to_Bob",
            Route::ToCharlene => "to_Charlene",
        })
    }
}

/// `(1/√3)(|(11)_{12}⟩|(11)_{34}⟩ + |(11)_{13}⟩|(11)_{24}⟩)`: the total
/// singlet in which Alice and Dick couple to a triplet.
///
/// The other common way to write it, `(1/√3)(|(11)_{12}⟩|(11)_{34}⟩ −
/// |(11)_{14}⟩|(11)_{23}⟩)`, is the same state with Charlene's and Dick's
/// qubits exchanged (and a global sign); it favours Dick over Charlene.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchboardState {
    state: StateVector,
}

impl SwitchboardState {
    pub fn state(&self) -> &StateVector {
        &self.state
    }
}

/// Two singlets: one on shared slots `(p, q)` and one on `(r, s)`, each
/// ordered as given.
fn singlet_pair(first: (usize, usize), second: (usize, usize)) -> StateVector {
    let s = bell_state(BellIndex::SINGLET);
    let mut perm = [0; 4];
    perm[0] = first.0;
    perm[1] = first.1;
    perm[2] = second.0;
    perm[3] = second.1;
    permute_qubits(&tensor(&s, &s), &perm).expect("fixed slot permutation")
}

pub fn build_switchboard() -> SwitchboardState {
    let direct = singlet_pair((0, 1), (2, 3));
    let crossed = singlet_pair((0, 2), (1, 3));
    let k = 1.0 / 3f64.sqrt();
    let amps = direct
        .amplitudes()
        .iter()
        .zip(crossed.amplitudes())
        .map(|(a, b)| (a + b) * k)
        .collect();
    let state = StateVector::new(4, amps).expect("switchboard state is normalized");
    SwitchboardState { state }
}

/// Expansion coefficients of the shared state in paired Bell products.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambda {
    values: [f64; 4],
}

impl Lambda {
    /// Common prefactor `1/(2√3)` of the paired-Bell expansion.
    pub fn normalizer() -> f64 {
        1.0 / (2.0 * 3f64.sqrt())
    }

    /// Coefficients of the switchboard state, indexed in [`BellIndex::ALL`]
    /// order: `λ₁₁ = 3`, `λ₀₁ = λ₁₀ = −1`, `λ₀₀ = 1`.
    pub fn switchboard() -> Self {
        Self {
            values: [1.0, -1.0, -1.0, 3.0],
        }
    }

    /// Keeps the singlet coefficient and negates the other three.
    pub fn with_partners_negated(mut self) -> Self {
        for v in &mut self.values[..3] {
            *v = -*v;
        }
        self
    }

    pub fn value(&self, idx: BellIndex) -> f64 {
        self.values[idx.index()]
    }

    /// Same coefficients with the sign of `idx` reversed.
    pub fn with_flipped(mut self, idx: BellIndex) -> Self {
        self.values[idx.index()] = -self.values[idx.index()];
        self
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// How Alice's qubit is grouped in a paired-Bell expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    /// Alice with Bob, Charlene with Dick (`12|34`).
    AliceBob,
    /// Alice with Charlene, Bob with Dick (`13|24`).
    AliceCharlene,
}

impl Pairing {
    fn slot_order(self) -> [usize; 4] {
        match self {
            Pairing::AliceBob => [0, 1, 2, 3],
            Pairing::AliceCharlene => [0, 2, 1, 3],
        }
    }
}

/// `(1/(2√3)) Σ λ_kl |(kl)⟩|(kl)⟩` over the given pairing.
pub fn expansion_state(pairing: Pairing, lambda: &Lambda) -> Result<StateVector> {
    let mut amps = vec![C64::new(0.0, 0.0); 16];
    for kl in BellIndex::ALL {
        let b = bell_state(kl);
        let term = permute_qubits(&tensor(&b, &b), &pairing.slot_order())?;
        let w = lambda.value(kl) * Lambda::normalizer();
        for (acc, a) in amps.iter_mut().zip(term.amplitudes()) {
            *acc += a * w;
        }
    }
    StateVector::normalized(4, amps)
}

/// `‖ψ − expansion‖` for the unflipped coefficients.
pub fn verify_decomposition(pairing: Pairing) -> f64 {
    decomposition_residual(pairing, &Lambda::switchboard())
}

pub fn decomposition_residual(pairing: Pairing, lambda: &Lambda) -> f64 {
    let expansion = expansion_state(pairing, lambda).expect("expansion has unit norm");
    build_switchboard().state.distance(&expansion)
}

/// Reduced state written as `p·P_singlet + (1−p)·I/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WernerParams {
    pub singlet_weight: f64,
    pub noise_fraction: f64,
    /// Largest elementwise deviation between the reduced state and the fit.
    pub fit_distance: f64,
}

impl WernerParams {
    /// Teleportation fidelity `(p + 1)/2` through this channel.
    pub fn predicted_fidelity(&self) -> f64 {
        (self.singlet_weight + 1.0) / 2.0
    }
}

pub fn werner_matrix(singlet_weight: f64) -> DensityMatrix {
    let singlet = bell_state(BellIndex::SINGLET);
    let p = singlet_weight;
    let m = density_of(&singlet).matrix().map(|x| x * p)
        + DensityMatrix::maximally_mixed(2).matrix().map(|x| x * (1.0 - p));
    DensityMatrix::new(2, m).expect("Werner matrix is a valid state for p in [-1/3, 1]")
}

/// Fits a two-qubit state to Werner form by its singlet population.
pub fn werner_fit(rho: &DensityMatrix) -> Result<WernerParams> {
    if rho.n_qubits() != 2 {
        return Err(Error::Domain("Werner fit needs a two-qubit state".into()));
    }
    let singlet_pop = fidelity_with_pure(rho, &bell_state(BellIndex::SINGLET))?;
    let p = (4.0 * singlet_pop - 1.0) / 3.0;
    let fit_distance = rho.max_abs_diff(&werner_matrix(p));
    if fit_distance > WERNER_FIT_TOL {
        return Err(Error::Structural(format!(
            "reduced state is {fit_distance:e} away from Werner form"
        )));
    }
    Ok(WernerParams {
        singlet_weight: p,
        noise_fraction: 1.0 - p,
        fit_distance,
    })
}

/// Werner parameters of the Alice–`party` reduced state of the shared state.
pub fn reduced_channel(party: Party) -> Result<WernerParams> {
    if party == Party::Alice {
        return Err(Error::Domain("Alice has no channel to herself".into()));
    }
    let rho = density_of(build_switchboard().state());
    werner_fit(&partial_trace(
        &rho,
        &[Party::Alice.shared_slot(), party.shared_slot()],
    )?)
}

/// A derived correction: `phase · pauli`.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub pauli: Pauli,
    pub phase: C64,
    pub operator: QubitOperator,
}

/// `U_{mn,kl}`: what a Bell outcome `(mn)` leaves on the far end of the
/// channel `|(kl)⟩`, as a single-qubit unitary on `|α⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionTable {
    entries: Vec<Correction>,
}

impl CorrectionTable {
    pub fn get(&self, mn: BellIndex, kl: BellIndex) -> &Correction {
        &self.entries[mn.index() * 4 + kl.index()]
    }

    pub fn unitary(&self, mn: BellIndex, kl: BellIndex) -> &QubitOperator {
        &self.get(mn, kl).operator
    }

    /// `‖|α⟩|ψ⟩ − (1/(4√3)) Σ λ_kl |(mn)⟩ U_{mn,kl}|α⟩ |(kl)⟩‖` in the
    /// five-qubit register.
    pub fn reconstruction_residual(&self, alpha: &StateVector) -> Result<f64> {
        let lambda = Lambda::switchboard();
        let mut amps = vec![C64::new(0.0, 0.0); 32];
        for mn in BellIndex::ALL {
            for kl in BellIndex::ALL {
                let moved = apply_on_qubits(alpha, self.unitary(mn, kl), &[0])?;
                let term = tensor(&tensor(&bell_state(mn), &moved), &bell_state(kl));
                let w = lambda.value(kl) * Lambda::normalizer() / 2.0;
                for (acc, a) in amps.iter_mut().zip(term.amplitudes()) {
                    *acc += a * w;
                }
            }
        }
        let direct = tensor(alpha, build_switchboard().state());
        Ok(direct
            .amplitudes()
            .iter()
            .zip(&amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

/// What the far qubit holds after projecting `|α⟩ ⊗ |(kl)⟩` onto `|(mn)⟩` on
/// the first two slots, rescaled by the outcome probability.
fn teleported(alpha: &StateVector, mn: BellIndex, kl: BellIndex) -> Result<StateVector> {
    let joint = tensor(alpha, &bell_state(kl));
    let branch = measure_bell(&joint, (0, 1), Mode::Forced(mn))?;
    let post = branch[0].state();
    // post = |(mn)⟩ ⊗ φ; contract the Bell factor away.
    let bell = bell_state(mn);
    let far: Vec<C64> = (0..2)
        .map(|j| {
            (0..4)
                .map(|i| bell.amplitudes()[i].conj() * post.amplitudes()[2 * i + j])
                .sum()
        })
        .collect();
    StateVector::new(1, far)
}

/// Finds each `U_{mn,kl}` by Pauli search and checks the table against the
/// full five-qubit expansion.
pub fn derive_corrections() -> Result<CorrectionTable> {
    let probes = [random_pure_qubit(0x5eed), random_pure_qubit(0xa1fa)];
    let mut entries = Vec::with_capacity(16);
    for mn in BellIndex::ALL {
        for kl in BellIndex::ALL {
            let outputs = probes
                .iter()
                .map(|a| teleported(a, mn, kl))
                .collect::<Result<Vec<_>>>()?;
            let found = Pauli::ALL.into_iter().find_map(|p| {
                let op = p.operator();
                let phases: Vec<C64> = probes
                    .iter()
                    .zip(&outputs)
                    .map(|(a, out)| {
                        let moved = apply_on_qubits(a, &op, &[0]).expect("Pauli is unitary");
                        moved.inner(out)
                    })
                    .collect();
                let consistent = phases.iter().all(|c| (c.norm() - 1.0).abs() < ALGEBRA_TOL)
                    && (phases[0] - phases[1]).norm() < ALGEBRA_TOL;
                consistent.then(|| (p, phases[0] / phases[0].norm()))
            });
            let (pauli, phase) =
                found.ok_or_else(|| Error::Derivation(format!("no Pauli matches outcome {mn} on channel {kl}")))?;
            let operator = pauli.operator().scaled(phase);
            entries.push(Correction { pauli, phase, operator });
        }
    }
    let table = CorrectionTable { entries };
    for seed in 0..8 {
        let residual = table.reconstruction_residual(&random_pure_qubit(derive_seed(0xc0de, seed)))?;
        if residual > ALGEBRA_TOL {
            return Err(Error::Derivation(format!(
                "correction table misses the expansion by {residual:e}"
            )));
        }
    }
    Ok(table)
}

/// The derived table, computed once per process.
pub fn correction_table() -> Result<&'static CorrectionTable> {
    static TABLE: OnceLock<Result<CorrectionTable>> = OnceLock::new();
    TABLE.get_or_init(derive_corrections).as_ref().map_err(Clone::clone)
}

/// The five-qubit register `|α⟩ ⊗ |ψ⟩`.
pub fn register(alpha: &StateVector, shared: &StateVector) -> Result<StateVector> {
    if alpha.n_qubits() != 1 || shared.n_qubits() != 4 {
        return Err(Error::Domain(
            "expected a one-qubit input and a four-qubit shared state".into(),
        ));
    }
    Ok(tensor(alpha, shared))
}

/// Alice's Bell measurement on (auxiliary, Alice) of `|α⟩ ⊗ |ψ⟩`.
pub fn alice_step(alpha: &StateVector, mode: MeasureMode) -> Result<Vec<MeasurementResult>> {
    alice_step_on(build_switchboard().state(), alpha, mode)
}

/// Alice's Bell measurement with an arbitrary four-qubit shared state.
pub fn alice_step_on(shared: &StateVector, alpha: &StateVector, mode: MeasureMode) -> Result<Vec<MeasurementResult>> {
    let reg = register(alpha, shared)?;
    measure_bell(&reg, (AUX_SLOT, Party::Alice.register_slot()), mode)
}

/// Collapsed Bob–Charlene–Dick state after Alice sees `(mn)`, assembled
/// from the coefficients and the correction table rather than by measuring:
/// `Σ λ_kl/(2√3) U_{mn,kl}|α⟩ |(kl)⟩`.
pub fn collapsed_prediction(table: &CorrectionTable, alpha: &StateVector, mn: BellIndex) -> Result<StateVector> {
    let lambda = Lambda::switchboard();
    let mut amps = vec![C64::new(0.0, 0.0); 8];
    for kl in BellIndex::ALL {
        let moved = apply_on_qubits(alpha, table.unitary(mn, kl), &[0])?;
        let term = tensor(&moved, &bell_state(kl));
        let w = lambda.value(kl) * Lambda::normalizer();
        for (acc, a) in amps.iter_mut().zip(term.amplitudes()) {
            *acc += a * w;
        }
    }
    StateVector::new(3, amps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFidelity {
    pub outcome: BellIndex,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub party: Party,
    pub per_outcome: Vec<OutcomeFidelity>,
    /// Probability-weighted mean of the per-outcome fidelities.
    pub average_fidelity: f64,
}

/// Corrected clone fidelity for `party` after Alice broadcasts `(mn)`.
///
/// Every receiver applies `U_{mn,11}†`, the correction for the singlet
/// component that dominates its channel.
pub fn clone_fidelity(party: Party, alpha: &StateVector) -> Result<CloneReport> {
    clone_fidelity_on(build_switchboard().state(), correction_table()?, party, alpha)
}

pub fn clone_fidelity_on(
    shared: &StateVector,
    table: &CorrectionTable,
    party: Party,
    alpha: &StateVector,
) -> Result<CloneReport> {
    if party == Party::Alice {
        return Err(Error::Domain("Alice does not receive a clone".into()));
    }
    let slot = party.register_slot();
    let mut per_outcome = Vec::with_capacity(4);
    for branch in alice_step_on(shared, alpha, Mode::EnumerateAll)? {
        let Some(post) = &branch.post_state else {
            continue;
        };
        let fix = table.unitary(branch.outcome, BellIndex::SINGLET).adjoint();
        let corrected = apply_on_qubits(post, &fix, &[slot])?;
        let rho = partial_trace(&density_of(&corrected), &[slot])?;
        per_outcome.push(OutcomeFidelity {
            outcome: branch.outcome,
            probability: branch.probability,
            fidelity: fidelity_with_pure(&rho, alpha)?,
        });
    }
    let average_fidelity = per_outcome.iter().map(|o| o.probability * o.fidelity).sum();
    Ok(CloneReport {
        party,
        per_outcome,
        average_fidelity,
    })
}

/// How one measurement in a demultiplexer run is resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Forced(BellIndex),
    Sampled(u64),
}

impl From<Choice> for MeasureMode {
    fn from(c: Choice) -> Self {
        match c {
            Choice::Forced(o) => Mode::Forced(o),
            Choice::Sampled(seed) => Mode::Sample(seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemuxOutcome {
    pub route: Route,
    pub mn: BellIndex,
    pub kl: BellIndex,
    pub alice_probability: f64,
    pub idle_probability: f64,
    /// Five-qubit register after the target's correction.
    pub register: StateVector,
    pub fidelity: f64,
}

/// Slots the idle party measures: its own qubit first, then Dick's.
pub fn idle_pair(route: Route) -> (usize, usize) {
    (route.idle().register_slot(), Party::Dick.register_slot())
}

/// Runs Alice's measurement, the idle party's measurement of its qubit with
/// Dick's, and the target's `U_{mn,kl}†` correction.
pub fn demux(route: Route, alpha: &StateVector, mn: Choice, kl: Choice) -> Result<DemuxOutcome> {
    demux_on(build_switchboard().state(), correction_table()?, route, alpha, mn, kl)
}

pub fn demux_on(
    shared: &StateVector,
    table: &CorrectionTable,
    route: Route,
    alpha: &StateVector,
    mn: Choice,
    kl: Choice,
) -> Result<DemuxOutcome> {
    let first = alice_step_on(shared, alpha, mn.into())?.remove(0);
    let second = measure_bell(first.state(), idle_pair(route), kl.into())?.remove(0);
    let (register, fidelity) = correct_target(table, route, alpha, first.outcome, &second)?;
    Ok(DemuxOutcome {
        route,
        mn: first.outcome,
        kl: second.outcome,
        alice_probability: first.probability,
        idle_probability: second.probability,
        register,
        fidelity,
    })
}

fn correct_target(
    table: &CorrectionTable,
    route: Route,
    alpha: &StateVector,
    mn: BellIndex,
    second: &MeasurementResult,
) -> Result<(StateVector, f64)> {
    let slot = route.target().register_slot();
    let fix = table.unitary(mn, second.outcome).adjoint();
    let register = apply_on_qubits(second.state(), &fix, &[slot])?;
    let rho = partial_trace(&density_of(&register), &[slot])?;
    let fidelity = fidelity_with_pure(&rho, alpha)?;
    Ok((register, fidelity))
}

/// Probability-weighted demultiplexer fidelity over all sixteen branches.
pub fn demux_average_on(
    shared: &StateVector,
    table: &CorrectionTable,
    route: Route,
    alpha: &StateVector,
) -> Result<f64> {
    let mut total = 0.0;
    for first in alice_step_on(shared, alpha, Mode::EnumerateAll)? {
        let Some(post) = &first.post_state else { continue };
        for second in measure_bell(post, idle_pair(route), Mode::EnumerateAll)? {
            if second.post_state.is_none() {
                continue;
            }
            let (_, f) = correct_target(table, route, alpha, first.outcome, &second)?;
            total += first.probability * second.probability * f;
        }
    }
    Ok(total)
}

/// `(|0…0⟩ + |1…1⟩)/√2`.
pub fn ghz_state(n: usize) -> Result<StateVector> {
    if n == 0 {
        return Err(Error::Domain("GHZ state needs at least one qubit".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    amps[0] = C64::new(h, 0.0);
    amps[(1 << n) - 1] = C64::new(h, 0.0);
    StateVector::new(n, amps)
}

/// The six Pauli eigenstates; averaging a quadratic function of `|α⟩⟨α|`
/// over them equals its Haar average.
pub fn octahedron_design() -> Vec<StateVector> {
    let axes = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    axes.iter()
        .map(|r| StateVector::from_bloch_vector(*r).expect("unit axis"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhzReport {
    /// Outcome-averaged corrected clone fidelity for the given `|α⟩`.
    pub bob_clone: f64,
    pub charlene_clone: f64,
    /// The same quantities averaged over Haar-random inputs.
    pub bob_clone_haar: f64,
    pub charlene_clone_haar: f64,
    /// Target fidelity after the idle party's `|±⟩` measurement and broadcast.
    pub teleport_to_bob: f64,
    pub teleport_to_charlene: f64,
}

// GHZ baseline register: auxiliary 0, Alice 1, Bob 2, Charlene 3.
const GHZ_ALICE: usize = 1;

fn ghz_slot(party: Party) -> usize {
    match party {
        Party::Bob => 2,
        Party::Charlene => 3,
        _ => unreachable!("only Bob and Charlene hold GHZ qubits besides Alice"),
    }
}

/// Branch states `(key, probability, post_state)` of the GHZ protocol for one
/// input. `idle` adds a `|±⟩` measurement of that party after Alice's.
fn ghz_branches(alpha: &StateVector, idle: Option<Party>) -> Result<Vec<(usize, f64, StateVector)>> {
    let reg = tensor(alpha, &ghz_state(3)?);
    let mut out = Vec::new();
    for first in measure_bell(&reg, (AUX_SLOT, GHZ_ALICE), Mode::EnumerateAll)? {
        let Some(post) = first.post_state else { continue };
        let key = first.outcome.index();
        match idle {
            None => out.push((key, first.probability, post)),
            Some(party) => {
                for second in measure_plus_minus(&post, ghz_slot(party), Mode::EnumerateAll)? {
                    if let Some(s) = second.post_state {
                        let k = key * 2 + second.outcome.bit() as usize;
                        out.push((k, first.probability * second.probability, s));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn pauli_fidelity(state: &StateVector, slot: usize, p: Pauli, alpha: &StateVector) -> Result<f64> {
    let corrected = apply_on_qubits(state, &p.operator(), &[slot])?;
    fidelity_with_pure(&partial_trace(&density_of(&corrected), &[slot])?, alpha)
}

/// Outcome-averaged fidelity at `receiver` for each input, using per-branch
/// Paulis chosen to maximize the Haar-averaged fidelity.
fn ghz_protocol(receiver: Party, idle: Option<Party>, inputs: &[StateVector]) -> Result<Vec<f64>> {
    let slot = ghz_slot(receiver);
    let design = octahedron_design();
    let design_branches = design
        .iter()
        .map(|d| ghz_branches(d, idle))
        .collect::<Result<Vec<_>>>()?;
    let n_keys = if idle.is_some() { 8 } else { 4 };
    let mut best = vec![Pauli::I; n_keys];
    for (key, choice) in best.iter_mut().enumerate() {
        let mut best_score = f64::NEG_INFINITY;
        for p in Pauli::ALL {
            let mut score = 0.0;
            for (d, branches) in design.iter().zip(&design_branches) {
                for (_, prob, s) in branches.iter().filter(|b| b.0 == key) {
                    score += prob * pauli_fidelity(s, slot, p, d)?;
                }
            }
            if score > best_score + ALGEBRA_TOL {
                best_score = score;
                *choice = p;
            }
        }
    }
    inputs
        .iter()
        .map(|alpha| {
            ghz_branches(alpha, idle)?
                .iter()
                .map(|(key, prob, s)| Ok(prob * pauli_fidelity(s, slot, best[*key], alpha)?))
                .sum()
        })
        .collect()
}

/// Telecloning and conditional teleportation through a three-qubit GHZ state
/// shared by Alice, Bob and Charlene.
pub fn ghz_baseline(alpha: &StateVector) -> Result<GhzReport> {
    if alpha.n_qubits() != 1 {
        return Err(Error::Domain("GHZ baseline takes a single-qubit input".into()));
    }
    let design = octahedron_design();
    let haar = |party: Party| -> Result<f64> {
        let v = ghz_protocol(party, None, &design)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    };
    let single = std::slice::from_ref(alpha);
    Ok(GhzReport {
        bob_clone: ghz_protocol(Party::Bob, None, single)?[0],
        charlene_clone: ghz_protocol(Party::Charlene, None, single)?[0],
        bob_clone_haar: haar(Party::Bob)?,
        charlene_clone_haar: haar(Party::Charlene)?,
        teleport_to_bob: ghz_protocol(Party::Bob, Some(Party::Charlene), single)?[0],
        teleport_to_charlene: ghz_protocol(Party::Charlene, Some(Party::Bob), single)?[0],
    })
}

/// Collective noise applied identically to every qubit of the shared state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseChannel {
    /// `exp(-iθσ_z/2)` on every qubit with a fixed angle.
    ZRotation { angle: f64 },
    /// As above with θ uniform in `[0, 2π)` per sample.
    RandomZRotation,
    /// A Haar-random SU(2) element per sample.
    RandomUnitary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub samples: usize,
    pub switchboard_fidelity: f64,
    pub ghz_fidelity: f64,
}

/// Mean `|⟨orig|noisy⟩|²` for the switchboard and four-qubit GHZ states.
pub fn noise_robustness(channel: NoiseChannel, samples: usize, seed: u64) -> Result<NoiseReport> {
    use rand::Rng;

    if samples == 0 {
        return Err(Error::Domain("noise robustness needs at least one sample".into()));
    }
    let psi = build_switchboard().state;
    let ghz = ghz_state(4)?;
    let targets = [0, 1, 2, 3];
    let (mut sw, mut gz) = (0.0, 0.0);
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let u = match channel {
            NoiseChannel::ZRotation { angle } => QubitOperator::z_rotation(angle),
            NoiseChannel::RandomZRotation => QubitOperator::z_rotation(rng.random_range(0.0..std::f64::consts::TAU)),
            NoiseChannel::RandomUnitary => random_su2_from(&mut rng),
        };
        let all = collective_unitary(&u, 4)?;
        sw += psi.inner(&apply_on_qubits(&psi, &all, &targets)?).norm_sqr();
        gz += ghz.inner(&apply_on_qubits(&ghz, &all, &targets)?).norm_sqr();
    }
    Ok(NoiseReport {
        samples,
        switchboard_fidelity: sw / samples as f64,
        ghz_fidelity: gz / samples as f64,
    })
}

//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails if a criterion outside `KNOWN_RED` fails, or if one inside
//! it unexpectedly passes.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};

use qswitch::mgchain::{diagonalize, dimer_state, gap_scan, verify_ground_membership, SpinChainSpec};
use qswitch::parties::{no_signaling_check, run_session, run_telecloning_session};
use qswitch::qcore::{
    bell_state, density_of, derive_seed, measure_bell, partial_trace, permute_qubits, random_pure_qubit, tensor,
    BellIndex, Mode, Pauli, StateVector, C64,
};
use qswitch::switchboard::{
    alice_step, build_switchboard, clone_fidelity, clone_fidelity_on, correction_table, decomposition_residual, demux,
    demux_average_on, expansion_state, ghz_baseline, idle_pair, noise_robustness, reduced_channel, werner_fit, Choice,
    Lambda, NoiseChannel, Pairing, Party, Route,
};

/// Criteria that cannot hold as stated; each is analysed in the project notes.
const KNOWN_RED: &[&str] = &["3", "8b", "10"];

const SEED: u64 = 2024;

struct Gate {
    results: Vec<(&'static str, bool)>,
}

impl Gate {
    fn record(&mut self, id: &'static str, title: &str, pass: bool, detail: String) {
        println!("{} [{id:>3}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass));
    }

    fn note(&self, text: String) {
        println!("           note: {text}");
    }
}

fn inputs(n: u64, stream: u64) -> Vec<StateVector> {
    (0..n)
        .map(|i| random_pure_qubit(derive_seed(SEED + stream, i)))
        .collect()
}

fn max_dev(values: impl IntoIterator<Item = f64>, target: f64) -> f64 {
    values.into_iter().map(|v| (v - target).abs()).fold(0.0, f64::max)
}

fn c1(g: &mut Gate) {
    let mut worst = [0.0f64; 3];
    for a in inputs(100, 1) {
        for (i, (party, target)) in [
            (Party::Bob, 5.0 / 6.0),
            (Party::Charlene, 5.0 / 6.0),
            (Party::Dick, 1.0 / 3.0),
        ]
        .into_iter()
        .enumerate()
        {
            let r = clone_fidelity(party, &a).unwrap();
            assert_eq!(r.per_outcome.len(), 4);
            worst[i] = worst[i].max(max_dev(r.per_outcome.iter().map(|o| o.fidelity), target));
        }
    }
    let pass = worst.iter().all(|&w| w < 1e-10);
    g.record(
        "1",
        "telecloning fidelities 5/6, 5/6, 1/3",
        pass,
        format!(
            "max deviation Bob {:.1e}, Charlene {:.1e}, Dick {:.1e} over 100 inputs x 4 outcomes",
            worst[0], worst[1], worst[2]
        ),
    );
}

fn c2(g: &mut Gate) {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for a in inputs(20, 2) {
        for route in [Route::ToBob, Route::ToCharlene] {
            for mn in BellIndex::ALL {
                for kl in BellIndex::ALL {
                    let out = demux(route, &a, Choice::Forced(mn), Choice::Forced(kl)).unwrap();
                    worst = worst.max((1.0 - out.fidelity).abs());
                    runs += 1;
                }
            }
        }
    }
    g.record(
        "2",
        "demultiplexer perfection",
        worst < 1e-9,
        format!("{runs} branches, max |1 - F| = {worst:.1e}"),
    );
}

fn singlet_pair(first: (usize, usize), second: (usize, usize)) -> StateVector {
    let s = bell_state(BellIndex::SINGLET);
    permute_qubits(&tensor(&s, &s), &[first.0, first.1, second.0, second.1]).unwrap()
}

fn phase_blind_distance(a: &StateVector, b: &StateVector) -> f64 {
    let minus: Vec<C64> = b.amplitudes().iter().map(|x| -x).collect();
    let minus = StateVector::new(b.n_qubits(), minus).unwrap();
    a.distance(b).min(a.distance(&minus))
}

fn c3(g: &mut Gate) {
    // (s12 s34 − s14 s23)/√3 and both expansions with coefficients (−1, +1, +1, 3).
    let k = 1.0 / 3f64.sqrt();
    let direct = singlet_pair((0, 1), (2, 3));
    let crossed = singlet_pair((0, 3), (1, 2));
    let amps = direct
        .amplitudes()
        .iter()
        .zip(crossed.amplitudes())
        .map(|(a, b)| (a - b) * k)
        .collect();
    let alt = StateVector::new(4, amps).unwrap();
    let alt_lambda = Lambda::switchboard().with_partners_negated();
    let r2 = phase_blind_distance(&alt, &expansion_state(Pairing::AliceBob, &alt_lambda).unwrap());
    let r3 = phase_blind_distance(&alt, &expansion_state(Pairing::AliceCharlene, &alt_lambda).unwrap());
    g.record(
        "3",
        "decomposition identities, (s12 s34 − s14 s23) form",
        r2 < 1e-12 && r3 < 1e-12,
        format!("12|34 residual {r2:.3e}, 13|24 residual {r3:.3e}"),
    );
    let e2 = expansion_state(Pairing::AliceBob, &alt_lambda).unwrap();
    let e3 = expansion_state(Pairing::AliceCharlene, &alt_lambda).unwrap();
    g.note(format!(
        "the two expansions with these coefficients are distinct vectors (distance {:.6}, {:.6} up to sign); no state matches both",
        e2.distance(&e3),
        phase_blind_distance(&e2, &e3)
    ));
    let lam = Lambda::switchboard();
    g.note(format!(
        "implemented state with coefficients (00:+1, 01:-1, 10:-1, 11:3): residuals {:.1e} and {:.1e}",
        decomposition_residual(Pairing::AliceBob, &lam),
        decomposition_residual(Pairing::AliceCharlene, &lam)
    ));
}

fn c4(g: &mut Gate) {
    let bob = reduced_channel(Party::Bob).unwrap();
    let direct = clone_fidelity(Party::Bob, &random_pure_qubit(SEED))
        .unwrap()
        .average_fidelity;
    let pass = (bob.noise_fraction - 1.0 / 3.0).abs() < 1e-10
        && bob.fit_distance < 1e-10
        && (bob.predicted_fidelity() - direct).abs() < 1e-10;
    g.record(
        "4",
        "Werner channel with noise 1/3",
        pass,
        format!(
            "noise {:.12}, fit distance {:.1e}, (p+1)/2 = {:.12} vs direct {:.12}",
            bob.noise_fraction,
            bob.fit_distance,
            bob.predicted_fidelity(),
            direct
        ),
    );
    let charlene = werner_fit(
        &partial_trace(
            &density_of(build_switchboard().state()),
            &[0, Party::Charlene.shared_slot()],
        )
        .unwrap(),
    )
    .unwrap();
    g.note(format!("Alice-Charlene noise fraction {:.12}", charlene.noise_fraction));
}

fn c5(g: &mut Gate) {
    let a = random_pure_qubit(SEED + 5);
    let mut alice_dev: f64 = 0.0;
    let mut idle_dev: f64 = 0.0;
    let idle_expected = [1.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0, 0.75];
    for first in alice_step(&a, Mode::EnumerateAll).unwrap() {
        alice_dev = alice_dev.max((first.probability - 0.25).abs());
        for route in [Route::ToBob, Route::ToCharlene] {
            for second in measure_bell(first.state(), idle_pair(route), Mode::EnumerateAll).unwrap() {
                idle_dev = idle_dev.max((second.probability - idle_expected[second.outcome.index()]).abs());
            }
        }
    }
    let n = 100_000u64;
    let mut counts = [[0u64; 4]; 2];
    for s in 0..n {
        let route = if s % 2 == 0 { Route::ToBob } else { Route::ToCharlene };
        let t = run_session(route, &a, derive_seed(SEED, s)).unwrap();
        counts[0][t.outcome_of(Party::Alice).unwrap().index()] += 1;
        counts[1][t.outcome_of(route.idle()).unwrap().index()] += 1;
    }
    let mut worst_z: f64 = 0.0;
    for (row, probs) in counts.iter().zip([[0.25; 4], idle_expected]) {
        for (&c, p) in row.iter().zip(probs) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            worst_z = worst_z.max((c as f64 / n as f64 - p).abs() / sigma);
        }
    }
    let pass = alice_dev < 1e-12 && idle_dev < 1e-12 && worst_z < 3.0;
    g.record(
        "5",
        "outcome statistics",
        pass,
        format!("exact deviations Alice {alice_dev:.1e}, idle {idle_dev:.1e}; 1e5 sessions, worst |z| = {worst_z:.2}"),
    );
}

fn c6(g: &mut Gate) {
    let t = correction_table().unwrap();
    let u = t.get(BellIndex::new(0, 1).unwrap(), BellIndex::SINGLET);
    let worst = inputs(20, 6)
        .iter()
        .map(|a| t.reconstruction_residual(a).unwrap())
        .fold(0.0, f64::max);
    let pass = u.pauli == Pauli::X && worst < 1e-12;
    g.record(
        "6",
        "correction table",
        pass,
        format!(
            "U(01,11) = {} with phase {:.3}{:+.3}i; reconstruction residual {worst:.1e}",
            u.pauli, u.phase.re, u.phase.im
        ),
    );
}

fn c7(g: &mut Gate) {
    let mut haar: f64 = 0.0;
    let mut tele: f64 = 0.0;
    for a in inputs(20, 7) {
        let r = ghz_baseline(&a).unwrap();
        haar = haar.max(max_dev([r.bob_clone_haar, r.charlene_clone_haar], 2.0 / 3.0));
        tele = tele.max(max_dev([r.teleport_to_bob, r.teleport_to_charlene], 1.0));
    }
    g.record(
        "7",
        "GHZ baseline",
        haar < 1e-10 && tele < 1e-10,
        format!("Haar-averaged clone deviation from 2/3 {haar:.1e}; conditional teleport deviation {tele:.1e}"),
    );
}

fn c8(g: &mut Gate) {
    let sw = noise_robustness(NoiseChannel::RandomUnitary, 100, SEED).unwrap();
    g.record(
        "8a",
        "switchboard invariant under collective unitaries",
        (1.0 - sw.switchboard_fidelity).abs() < 1e-12,
        format!("mean fidelity over 100 random SU(2): {:.15}", sw.switchboard_fidelity),
    );

    let theta = PI / 2.0;
    let ghz = noise_robustness(NoiseChannel::ZRotation { angle: theta }, 1, SEED)
        .unwrap()
        .ghz_fidelity;
    // Brute force: |0000> and |1111> pick up phases e^{∓2iθ}.
    let oracle = ((C64::from_polar(1.0, -2.0 * theta) + C64::from_polar(1.0, 2.0 * theta)) / 2.0).norm_sqr();
    g.record(
        "8b",
        "GHZ degraded by collective z-rotation of π/2",
        ghz < 0.99,
        format!("fidelity {ghz:.12}, brute-force oracle {oracle:.12}"),
    );
    let quarter = noise_robustness(NoiseChannel::ZRotation { angle: PI / 4.0 }, 1, SEED)
        .unwrap()
        .ghz_fidelity;
    g.note(format!("overlap is cos^2(2θ): 1 at π/2, {quarter:.3e} at π/4"));
}

fn c9(g: &mut Gate) {
    let four = SpinChainSpec::new(4, 1.0, 1.0).unwrap();
    let six = SpinChainSpec::new(6, 1.0, 1.0).unwrap();
    let s4 = diagonalize(&four).unwrap();
    let m4 = verify_ground_membership(&four).unwrap();
    let s6 = diagonalize(&six).unwrap();
    let d6 = [dimer_state(6, 0).unwrap(), dimer_state(6, 1).unwrap()].map(|d| s6.ground_deficit(&d));
    let pass = (s4.ground_energy + 3.0).abs() < 1e-9
        && s4.degeneracy == 2
        && m4.deficits.iter().find(|d| d.0 == "switchboard").unwrap().1 < 1e-10
        && s6.degeneracy == 2
        && d6.iter().all(|&d| d < 1e-10);
    g.record(
        "9",
        "Majumdar-Ghosh ground space",
        pass,
        format!(
        "N=4: E0 {:.12}, degeneracy {}, switchboard deficit {:.1e}; N=6: degeneracy {}, dimer deficits {:.1e}, {:.1e}",
        s4.ground_energy, s4.degeneracy, m4.max_deficit(), s6.degeneracy, d6[0], d6[1]
    ),
    );
}

fn c10(g: &mut Gate) {
    let t = correction_table().unwrap();
    let flipped = Lambda::switchboard().with_flipped(BellIndex::new(0, 0).unwrap());
    let altered = expansion_state(Pairing::AliceBob, &flipped).unwrap();
    let a = random_pure_qubit(SEED + 10);
    let bob = demux_average_on(&altered, t, Route::ToBob, &a).unwrap();
    let charlene = demux_average_on(&altered, t, Route::ToCharlene, &a).unwrap();
    g.record(
        "10",
        "sign flip of (00) degrades demux",
        bob.min(charlene) < 0.999,
        format!("altered-state demux fidelity to_Bob {bob:.12}, to_Charlene {charlene:.12}"),
    );
    let clone = clone_fidelity_on(&altered, t, Party::Charlene, &a)
        .unwrap()
        .average_fidelity;
    g.note(format!(
        "the flip does change telecloning: Charlene's clone fidelity {clone:.6} (was 5/6)"
    ));
}

fn c11(g: &mut Gate) {
    let d = no_signaling_check(20, SEED).unwrap();
    g.record(
        "11",
        "no-signaling",
        d < 1e-10,
        format!("max pairwise trace distance {d:.1e} over 20 inputs"),
    );
}

fn c12(g: &mut Gate) {
    let mut found = Vec::new();
    let mut pass = true;
    for n in [4, 6, 8] {
        let rows = gap_scan(n, 1.0, &[0.0, 1.0]).unwrap();
        pass &= rows[0].degeneracy == 1 && rows[1].degeneracy == 2;
        found.push(format!("N={n}: {}/{}", rows[0].degeneracy, rows[1].degeneracy));
    }
    g.record("12", "degeneracy 1 at α=0 and 2 at α=1", pass, found.join(", "));
}

fn c13(g: &mut Gate) {
    let a = random_pure_qubit(SEED + 13);
    let same = (0..20).all(|s| {
        run_session(Route::ToCharlene, &a, s).unwrap().to_json_lines()
            == run_session(Route::ToCharlene, &a, s).unwrap().to_json_lines()
            && run_telecloning_session(&a, s).unwrap().to_json_lines()
                == run_telecloning_session(&a, s).unwrap().to_json_lines()
    });
    let cli = || {
        Command::new(env!("CARGO_BIN_EXE_qswitch"))
            .args([
                "demux", "--route", "bob", "--shots", "25", "--seed", "9", "--output", "records",
            ])
            .output()
            .unwrap()
            .stdout
    };
    let (x, y) = (cli(), cli());
    let cli_same = x == y && !x.is_empty();
    g.record(
        "13",
        "determinism",
        same && cli_same,
        format!(
            "transcripts identical: {same}; CLI output identical: {cli_same} ({} bytes)",
            x.len()
        ),
    );
}

fn main() -> ExitCode {
    let mut g = Gate { results: Vec::new() };
    c1(&mut g);
    c2(&mut g);
    c3(&mut g);
    c4(&mut g);
    c5(&mut g);
    c6(&mut g);
    c7(&mut g);
    c8(&mut g);
    c9(&mut g);
    c10(&mut g);
    c11(&mut g);
    c12(&mut g);
    c13(&mut g);
    let passed = g.results.iter().filter(|r| r.1).count();
    println!(
        "{passed}/{} criteria pass; known red: {}",
        g.results.len(),
        KNOWN_RED.join(", ")
    );

    let unexpected: Vec<String> = g
        .results
        .iter()
        .filter(|(id, pass)| *pass == KNOWN_RED.contains(id))
        .map(|(id, pass)| format!("{id} ({})", if *pass { "now passes" } else { "fails" }))
        .collect();
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}

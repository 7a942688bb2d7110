//! The `qswitch` command-line front end.
//!
//! Exit status is 0 when every executed check passes, 1 when a check fails or
//! a computation errors, and 2 for usage errors.

use std::f64::consts::PI;
use std::fmt as stdfmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use crate::error::Result;
use crate::fmt::{round12, sig12};
use crate::mgchain::{diagonalize, gap_scan, verify_ground_membership, SpinChainSpec};
use crate::parties::{no_signaling_check, run_session_with, run_telecloning_session, SessionOptions, SCHEMA};
use crate::qcore::{derive_seed, random_pure_qubit, BellIndex, Pauli, StateVector};
use crate::switchboard::{
    clone_fidelity, correction_table, demux, ghz_baseline, noise_robustness, reduced_channel, verify_decomposition,
    Choice, NoiseChannel, Pairing, Party, Route,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Run every built-in check and report pass/fail.
    Verify,
    /// Telecloning sessions: clone fidelities for Bob, Charlene and Dick.
    Clone,
    /// Demultiplexer sessions along one route.
    Demux,
    /// The GHZ-state baseline.
    Ghz,
    /// Fidelity under collective noise.
    Noise,
    /// Spectrum of one Majumdar-Ghosh ring.
    Mg,
    /// Ground energy, gap and degeneracy across a grid of alpha.
    Scan,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Clone => "clone",
            Command::Demux => "demux",
            Command::Ghz => "ghz",
            Command::Noise => "noise",
            Command::Mg => "mg",
            Command::Scan => "scan",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Table,
    Records,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RouteArg {
    Bob,
    Charlene,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ChannelArg {
    ZRotation,
    RandomZ,
    RandomUnitary,
}

#[derive(Parser, Debug)]
#[command(name = "qswitch", version, about = "Four-qubit quantum switchboard simulator")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Receiver for `demux`.
    #[arg(long, value_enum)]
    route: Option<RouteArg>,
    /// Number of independent runs (noise: number of samples).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input state as `THETA,PHI` Bloch angles or `random`; for `mg`, the
    /// next-nearest coupling ratio.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Ring size for `mg` and `scan`.
    #[arg(long)]
    n: Option<usize>,
    /// Exchange coupling for `mg` and `scan`.
    #[arg(long, allow_hyphen_values = true)]
    j: Option<f64>,
    /// Inclusive `START:STOP:STEP` grid for `scan`.
    #[arg(long = "alpha-grid")]
    alpha_grid: Option<String>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// Rotation angle for `--channel z-rotation` (default π/2).
    #[arg(long, allow_hyphen_values = true)]
    angle: Option<f64>,
    /// Idle ticks between Alice's broadcast and her route decision.
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    output: OutputFormat,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How the input qubit is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSpec {
    Angles {
        theta: f64,
        phi: f64,
    },
    /// A fresh Haar-random state per shot, derived from the seed.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub route: Option<Route>,
    pub shots: u64,
    pub seed: u64,
    pub alpha: AlphaSpec,
    pub n_sites: Option<usize>,
    pub coupling: f64,
    pub alpha_mg: f64,
    pub alpha_grid: Vec<f64>,
    pub channel: NoiseChannel,
    pub route_delay: usize,
    pub output: OutputFormat,
    pub out_path: Option<PathBuf>,
}

#[derive(Debug)]
pub enum UsageError {
    /// Rejected by the argument parser; the message names the flag.
    Parse(clap::Error),
    Invalid {
        flag: &'static str,
        message: String,
    },
}

impl stdfmt::Display for UsageError {
    fn fmt(&self, f: &mut stdfmt::Formatter<'_>) -> stdfmt::Result {
        match self {
            UsageError::Parse(e) => write!(f, "{e}"),
            UsageError::Invalid { flag, message } => write!(f, "{flag}: {message}"),
        }
    }
}

fn usage(flag: &'static str, message: impl Into<String>) -> UsageError {
    UsageError::Invalid {
        flag,
        message: message.into(),
    }
}

fn parse_angles(text: &str) -> Result<AlphaSpec, UsageError> {
    if text == "random" {
        return Ok(AlphaSpec::Random);
    }
    let parts: Vec<&str> = text.split(',').collect();
    let [theta, phi] = parts[..] else {
        return Err(usage("--alpha", "expected THETA,PHI or random"));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage("--alpha", format!("'{s}' is not a number")))
    };
    let (theta, phi) = (num(theta)?, num(phi)?);
    if !(0.0..=PI).contains(&theta) {
        return Err(usage("--alpha", format!("theta {theta} outside [0, π]")));
    }
    if !(0.0..2.0 * PI).contains(&phi) {
        return Err(usage("--alpha", format!("phi {phi} outside [0, 2π)")));
    }
    Ok(AlphaSpec::Angles { theta, phi })
}

/// Inclusive grid `start, start + step, …, stop`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, UsageError> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage("--alpha-grid", "expected START:STOP:STEP"))?;
    let [start, stop, step] = parts[..] else {
        return Err(usage("--alpha-grid", "expected START:STOP:STEP"));
    };
    if !(step > 0.0 && step.is_finite()) || !start.is_finite() || !stop.is_finite() {
        return Err(usage("--alpha-grid", "step must be positive and bounds finite"));
    }
    if stop < start {
        return Err(usage("--alpha-grid", "STOP is below START"));
    }
    let intervals = ((stop - start) / step + 1e-9).floor();
    if intervals > 1e6 {
        return Err(usage("--alpha-grid", "grid has more than a million points"));
    }
    Ok((0..=intervals as usize).map(|i| start + i as f64 * step).collect())
}

/// Parses `argv` (without the program name).
pub fn parse_args<S: AsRef<str>>(argv: &[S]) -> Result<RunConfig, UsageError> {
    let tokens = std::iter::once("qswitch").chain(argv.iter().map(|s| s.as_ref()));
    let a = Args::try_parse_from(tokens).map_err(UsageError::Parse)?;
    use Command::*;
    let allowed: &[&str] = match a.command {
        Verify => &[],
        Clone | Ghz => &["--shots", "--alpha"],
        Demux => &["--route", "--shots", "--alpha", "--delay"],
        Noise => &["--shots", "--channel", "--angle"],
        Mg => &["--n", "--j", "--alpha"],
        Scan => &["--n", "--j", "--alpha-grid"],
    };
    let given = [
        ("--route", a.route.is_some()),
        ("--shots", a.shots.is_some()),
        ("--alpha", a.alpha.is_some()),
        ("--n", a.n.is_some()),
        ("--j", a.j.is_some()),
        ("--alpha-grid", a.alpha_grid.is_some()),
        ("--channel", a.channel.is_some()),
        ("--angle", a.angle.is_some()),
        ("--delay", a.delay.is_some()),
    ];
    if let Some((flag, _)) = given.iter().find(|(f, set)| *set && !allowed.contains(f)) {
        return Err(usage(flag, format!("not accepted by '{}'", a.command.name())));
    }

    let route = a.route.map(|r| match r {
        RouteArg::Bob => Route::ToBob,
        RouteArg::Charlene => Route::ToCharlene,
    });
    if a.command == Demux && route.is_none() {
        return Err(usage("--route", "required by 'demux'"));
    }

    let mut alpha = AlphaSpec::Random;
    let mut alpha_mg = 1.0;
    match (a.command, &a.alpha) {
        (Mg, Some(text)) => {
            alpha_mg = text
                .trim()
                .parse()
                .map_err(|_| usage("--alpha", format!("'{text}' is not a number")))?;
            if !f64::is_finite(alpha_mg) {
                return Err(usage("--alpha", "must be finite"));
            }
        }
        (_, Some(text)) => alpha = parse_angles(text)?,
        _ => {}
    }

    let coupling = a.j.unwrap_or(1.0);
    if !(coupling > 0.0 && coupling.is_finite()) {
        return Err(usage("--j", "must be positive"));
    }
    let n_sites = match (a.command, a.n) {
        (Mg | Scan, None) => return Err(usage("--n", format!("required by '{}'", a.command.name()))),
        (_, Some(n)) if n < 4 || n % 2 == 1 => return Err(usage("--n", "must be even and at least 4")),
        (_, n) => n,
    };
    let alpha_grid = match (a.command, &a.alpha_grid) {
        (Scan, None) => return Err(usage("--alpha-grid", "required by 'scan'")),
        (_, Some(g)) => parse_grid(g)?,
        _ => Vec::new(),
    };

    if a.angle.is_some() && a.channel != Some(ChannelArg::ZRotation) {
        return Err(usage("--angle", "only used with --channel z-rotation"));
    }
    let angle = a.angle.unwrap_or(PI / 2.0);
    if !angle.is_finite() {
        return Err(usage("--angle", "must be finite"));
    }
    let channel = match a.channel.unwrap_or(ChannelArg::RandomUnitary) {
        ChannelArg::ZRotation => NoiseChannel::ZRotation { angle },
        ChannelArg::RandomZ => NoiseChannel::RandomZRotation,
        ChannelArg::RandomUnitary => NoiseChannel::RandomUnitary,
    };

    Ok(RunConfig {
        command: a.command,
        route,
        shots: a.shots.unwrap_or(1),
        seed: a.seed,
        alpha,
        n_sites,
        coupling,
        alpha_mg,
        alpha_grid,
        channel,
        route_delay: a.delay.unwrap_or(0),
        output: a.output,
        out_path: a.out,
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn table(&self) -> String {
        match self {
            Cell::Num(x) => sig12(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Num(x) => serde_json::to_string(&round12(*x)).expect("number serializes"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Clone, Debug)]
struct Row {
    record: &'static str,
    fields: Vec<(&'static str, Cell)>,
}

macro_rules! row {
    ($record:expr; $($key:literal => $val:expr),* $(,)?) => {
        Row { record: $record, fields: vec![$(($key, Cell::from($val))),*] }
    };
}

#[derive(Clone, Debug)]
enum Item {
    Row(Row),
    /// Pre-serialized record lines (transcripts); omitted from tables.
    Lines(String),
}

#[derive(Clone, Debug)]
struct Check {
    name: &'static str,
    value: f64,
    expected: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        (self.value - self.expected).abs() <= self.tolerance
    }

    fn row(&self) -> Row {
        row!("check";
            "name" => self.name,
            "value" => self.value,
            "expected" => self.expected,
            "tolerance" => self.tolerance,
            "status" => if self.passed() { "pass" } else { "FAIL" },
        )
    }
}

#[derive(Default)]
struct Report {
    items: Vec<Item>,
    checks: Vec<Check>,
}

impl Report {
    fn push(&mut self, row: Row) {
        self.items.push(Item::Row(row));
    }

    fn check(&mut self, name: &'static str, value: f64, expected: f64, tolerance: f64) {
        self.checks.push(Check {
            name,
            value,
            expected,
            tolerance,
        });
    }

    fn render(&self, format: OutputFormat) -> String {
        let rows = self
            .items
            .iter()
            .cloned()
            .chain(self.checks.iter().map(|c| Item::Row(c.row())));
        match format {
            OutputFormat::Records => {
                let mut out = String::new();
                for item in rows {
                    match item {
                        Item::Lines(text) => out.push_str(&text),
                        Item::Row(r) => {
                            out.push_str(&format!("{{\"schema\":\"{SCHEMA}\",\"record\":\"{}\"", r.record));
                            for (k, v) in &r.fields {
                                out.push_str(&format!(",\"{k}\":{}", v.json()));
                            }
                            out.push_str("}\n");
                        }
                    }
                }
                out
            }
            OutputFormat::Table => {
                let rows: Vec<Row> = rows
                    .filter_map(|i| match i {
                        Item::Row(r) => Some(r),
                        Item::Lines(_) => None,
                    })
                    .collect();
                let mut out = String::new();
                let mut start = 0;
                while start < rows.len() {
                    let keys: Vec<&str> = rows[start].fields.iter().map(|f| f.0).collect();
                    let same = |r: &Row| {
                        r.record == rows[start].record && r.fields.iter().map(|f| f.0).eq(keys.iter().copied())
                    };
                    let end = start + rows[start..].iter().take_while(|r| same(r)).count();
                    out.push_str(&table_block(&keys, &rows[start..end]));
                    if end < rows.len() {
                        out.push('\n');
                    }
                    start = end;
                }
                out
            }
        }
    }

    fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed())
    }
}

fn table_block(keys: &[&str], rows: &[Row]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.fields.iter().map(|f| f.1.table()).collect())
        .collect();
    let widths: Vec<usize> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| cells.iter().map(|c| c[i].len()).chain([k.len()]).max().unwrap_or(0))
        .collect();
    let line = |items: Vec<&str>| {
        let padded: Vec<String> = items.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(keys.to_vec());
    for c in &cells {
        out.push_str(&line(c.iter().map(String::as_str).collect()));
    }
    out
}

fn input_for(cfg: &RunConfig, shot: u64) -> StateVector {
    match cfg.alpha {
        AlphaSpec::Angles { theta, phi } => StateVector::from_bloch_angles(theta, phi),
        AlphaSpec::Random => random_pure_qubit(derive_seed(cfg.seed, 2 * shot + 1)),
    }
}

fn session_seed(cfg: &RunConfig, shot: u64) -> u64 {
    derive_seed(cfg.seed, 2 * shot)
}

fn bloch_fields(a: &StateVector) -> [f64; 3] {
    a.bloch_vector().expect("one-qubit input")
}

fn max_deviation(values: impl IntoIterator<Item = f64>, target: f64) -> f64 {
    values.into_iter().map(|v| (v - target).abs()).fold(0.0, f64::max)
}

fn run_verify(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    r.check(
        "decomposition_12_34",
        verify_decomposition(Pairing::AliceBob),
        0.0,
        1e-12,
    );
    r.check(
        "decomposition_13_24",
        verify_decomposition(Pairing::AliceCharlene),
        0.0,
        1e-12,
    );

    let table = correction_table()?;
    let x = table.get(BellIndex::from_index(1)?, BellIndex::SINGLET).pauli == Pauli::X;
    r.check("correction_u01_11_is_x", f64::from(u8::from(x)), 1.0, 0.0);
    let inputs: Vec<StateVector> = (0..8).map(|i| random_pure_qubit(derive_seed(cfg.seed, i))).collect();
    let worst = inputs
        .iter()
        .map(|a| table.reconstruction_residual(a))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    r.check("correction_reconstruction", worst, 0.0, 1e-12);

    r.check(
        "werner_bob_noise",
        reduced_channel(Party::Bob)?.noise_fraction,
        1.0 / 3.0,
        1e-10,
    );
    r.check(
        "werner_charlene_noise",
        reduced_channel(Party::Charlene)?.noise_fraction,
        1.0 / 3.0,
        1e-10,
    );
    r.check(
        "werner_dick_singlet_weight",
        reduced_channel(Party::Dick)?.singlet_weight,
        -1.0 / 3.0,
        1e-10,
    );

    for (name, party, target) in [
        ("clone_bob", Party::Bob, 5.0 / 6.0),
        ("clone_charlene", Party::Charlene, 5.0 / 6.0),
        ("clone_dick", Party::Dick, 1.0 / 3.0),
    ] {
        let mut worst = 0.0f64;
        let mut mean = 0.0;
        for a in &inputs {
            let rep = clone_fidelity(party, a)?;
            worst = worst.max(max_deviation(rep.per_outcome.iter().map(|o| o.fidelity), target));
            mean += rep.average_fidelity / inputs.len() as f64;
        }
        r.check(name, if worst > 1e-10 { target + worst } else { mean }, target, 1e-10);
    }

    for (name, route) in [("demux_to_bob", Route::ToBob), ("demux_to_charlene", Route::ToCharlene)] {
        let mut min = f64::INFINITY;
        for a in &inputs[..2] {
            for mn in BellIndex::ALL {
                for kl in BellIndex::ALL {
                    min = min.min(demux(route, a, Choice::Forced(mn), Choice::Forced(kl))?.fidelity);
                }
            }
        }
        r.check(name, min, 1.0, 1e-9);
    }

    r.check("no_signaling", no_signaling_check(20, cfg.seed)?, 0.0, 1e-10);

    let four = SpinChainSpec::new(4, 1.0, 1.0)?;
    let spectrum = diagonalize(&four)?;
    r.check("mg_n4_ground_energy", spectrum.ground_energy, -3.0, 1e-9);
    r.check("mg_n4_degeneracy", spectrum.degeneracy as f64, 2.0, 0.0);
    let m4 = verify_ground_membership(&four)?;
    r.check("mg_n4_switchboard_deficit", m4.max_deficit(), 0.0, 1e-10);
    let six = SpinChainSpec::new(6, 1.0, 1.0)?;
    r.check("mg_n6_degeneracy", diagonalize(&six)?.degeneracy as f64, 2.0, 0.0);
    r.check(
        "mg_n6_dimer_deficit",
        verify_ground_membership(&six)?.max_deficit(),
        0.0,
        1e-10,
    );
    Ok(())
}

fn run_clone(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let rows = (0..cfg.shots)
        .into_par_iter()
        .map(|shot| {
            let a = input_for(cfg, shot);
            let seed = session_seed(cfg, shot);
            let t = run_telecloning_session(&a, seed)?;
            let fid = |p: Party| t.corrections().find(|c| c.0 == p).map_or(f64::NAN, |c| c.1.fidelity);
            let [x, y, z] = bloch_fields(&a);
            let mn = t.outcome_of(Party::Alice).map_or(String::new(), |o| o.to_string());
            Ok((
                row!("clone";
                    "shot" => shot, "seed" => seed, "x" => x, "y" => y, "z" => z, "mn" => mn,
                    "bob" => fid(Party::Bob), "charlene" => fid(Party::Charlene), "dick" => fid(Party::Dick),
                ),
                [fid(Party::Bob), fid(Party::Charlene), fid(Party::Dick)],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let receivers = max_deviation(rows.iter().flat_map(|x| [x.1[0], x.1[1]]), 5.0 / 6.0);
    let dick = max_deviation(rows.iter().map(|x| x.1[2]), 1.0 / 3.0);
    for (row, _) in rows {
        r.push(row);
    }
    r.check("clone_receivers_max_deviation", receivers, 0.0, 1e-10);
    r.check("clone_dick_max_deviation", dick, 0.0, 1e-10);
    Ok(())
}

fn run_demux(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let route = cfg.route.expect("validated");
    let opts = SessionOptions {
        route_delay: cfg.route_delay,
    };
    let runs = (0..cfg.shots)
        .into_par_iter()
        .map(|shot| {
            let a = input_for(cfg, shot);
            let seed = session_seed(cfg, shot);
            let t = run_session_with(route, &a, seed, opts)?;
            let text = |p: Party| t.outcome_of(p).map_or(String::new(), |o| o.to_string());
            let row = row!("demux";
                "shot" => shot, "seed" => seed, "route" => route.to_string(),
                "mn" => text(Party::Alice), "kl" => text(route.idle()), "final_fidelity" => t.final_fidelity,
            );
            let lines = (cfg.output == OutputFormat::Records).then(|| t.to_json_lines());
            Ok((row, lines, t.final_fidelity))
        })
        .collect::<Result<Vec<_>>>()?;
    let min = runs.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    for (row, lines, _) in runs {
        match lines {
            Some(text) => r.items.push(Item::Lines(text)),
            None => r.push(row),
        }
    }
    r.check("demux_min_fidelity", min, 1.0, 1e-9);
    Ok(())
}

fn run_ghz(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let reports = (0..cfg.shots)
        .into_par_iter()
        .map(|shot| {
            let a = input_for(cfg, shot);
            Ok((bloch_fields(&a), ghz_baseline(&a)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for (shot, ([x, y, z], g)) in reports.iter().enumerate() {
        r.push(row!("ghz";
            "shot" => shot, "x" => *x, "y" => *y, "z" => *z,
            "bob_clone" => g.bob_clone, "charlene_clone" => g.charlene_clone,
            "haar_clone" => g.bob_clone_haar, "teleport_bob" => g.teleport_to_bob,
            "teleport_charlene" => g.teleport_to_charlene,
        ));
    }
    let haar = max_deviation(
        reports
            .iter()
            .flat_map(|g| [g.1.bob_clone_haar, g.1.charlene_clone_haar]),
        2.0 / 3.0,
    );
    let tele = max_deviation(
        reports
            .iter()
            .flat_map(|g| [g.1.teleport_to_bob, g.1.teleport_to_charlene]),
        1.0,
    );
    r.check("ghz_haar_clone_deviation", haar, 0.0, 1e-10);
    r.check("ghz_teleport_deviation", tele, 0.0, 1e-10);
    Ok(())
}

fn run_noise(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let rep = noise_robustness(cfg.channel, cfg.shots as usize, cfg.seed)?;
    let (channel, angle) = match cfg.channel {
        NoiseChannel::ZRotation { angle } => ("z-rotation", angle),
        NoiseChannel::RandomZRotation => ("random-z", f64::NAN),
        NoiseChannel::RandomUnitary => ("random-unitary", f64::NAN),
    };
    let mut row = row!("noise"; "channel" => channel, "samples" => rep.samples);
    if angle.is_finite() {
        row.fields.push(("angle", angle.into()));
    }
    row.fields
        .push(("switchboard_fidelity", rep.switchboard_fidelity.into()));
    row.fields.push(("ghz_fidelity", rep.ghz_fidelity.into()));
    r.push(row);
    r.check("switchboard_invariance", rep.switchboard_fidelity, 1.0, 1e-12);
    Ok(())
}

fn run_mg(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    let spec = SpinChainSpec::new(cfg.n_sites.expect("validated"), cfg.coupling, cfg.alpha_mg)?;
    let s = diagonalize(&spec)?;
    r.push(row!("spectrum";
        "n" => spec.n_sites(), "j" => spec.coupling(), "alpha" => spec.alpha(),
        "ground_energy" => s.ground_energy, "gap" => s.gap(), "degeneracy" => s.degeneracy,
    ));
    for (i, e) in s.eigenvalues.iter().enumerate() {
        r.push(row!("level"; "index" => i, "energy" => *e));
    }
    Ok(())
}

fn run_scan(cfg: &RunConfig, r: &mut Report) -> Result<()> {
    for row in gap_scan(cfg.n_sites.expect("validated"), cfg.coupling, &cfg.alpha_grid)? {
        r.push(row!("scan";
            "alpha" => row.alpha, "E0" => row.ground_energy, "gap" => row.gap, "degeneracy" => row.degeneracy,
        ));
    }
    Ok(())
}

/// Outcome of [`execute`]: the rendered report and the first failing check.
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub output: String,
    pub failed_check: Option<String>,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed_check.is_some())
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Execution> {
    let mut report = Report::default();
    match cfg.command {
        Command::Verify => run_verify(cfg, &mut report)?,
        Command::Clone => run_clone(cfg, &mut report)?,
        Command::Demux => run_demux(cfg, &mut report)?,
        Command::Ghz => run_ghz(cfg, &mut report)?,
        Command::Noise => run_noise(cfg, &mut report)?,
        Command::Mg => run_mg(cfg, &mut report)?,
        Command::Scan => run_scan(cfg, &mut report)?,
    }
    Ok(Execution {
        output: report.render(cfg.output),
        failed_check: report.first_failure().map(|c| c.name.to_string()),
    })
}

/// Entry point shared by the binary and tests; `argv` includes the program name.
pub fn main_with_args<S: AsRef<str>>(argv: &[S]) -> i32 {
    let args = argv.get(1..).unwrap_or(&[]);
    let cfg = match parse_args(args) {
        Ok(cfg) => cfg,
        Err(UsageError::Parse(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let run = match execute(&cfg) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let written = match &cfg.out_path {
        Some(path) => std::fs::write(path, &run.output),
        None => std::io::stdout().lock().write_all(run.output.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return 1;
    }
    if let Some(name) = &run.failed_check {
        eprintln!("check failed: {name}");
    }
    run.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, UsageError> {
        parse_args(args)
    }

    fn flag_of(e: UsageError) -> String {
        match e {
            UsageError::Invalid { flag, .. } => flag.to_string(),
            UsageError::Parse(e) => e.to_string(),
        }
    }

    #[test]
    fn parses_examples() {
        let c = parse(&["demux", "--route", "bob", "--seed", "7"]).unwrap();
        assert_eq!(
            (c.command, c.route, c.seed, c.shots),
            (Command::Demux, Some(Route::ToBob), 7, 1)
        );
        let c = parse(&["mg", "--n", "4", "--alpha", "1.0"]).unwrap();
        assert_eq!((c.command, c.n_sites, c.alpha_mg), (Command::Mg, Some(4), 1.0));
        let c = parse(&["clone", "--alpha", "1.5,0.25"]).unwrap();
        assert_eq!(c.alpha, AlphaSpec::Angles { theta: 1.5, phi: 0.25 });
    }

    #[test]
    fn usage_errors_name_the_flag() {
        assert!(flag_of(parse(&["clone", "--shots", "0"]).unwrap_err()).contains("--shots"));
        assert!(flag_of(parse(&["clone", "--bogus"]).unwrap_err()).contains("--bogus"));
        assert_eq!(flag_of(parse(&["demux"]).unwrap_err()), "--route");
        assert_eq!(flag_of(parse(&["mg"]).unwrap_err()), "--n");
        assert_eq!(flag_of(parse(&["mg", "--n", "5"]).unwrap_err()), "--n");
        assert_eq!(flag_of(parse(&["scan", "--n", "4"]).unwrap_err()), "--alpha-grid");
        assert_eq!(flag_of(parse(&["clone", "--alpha", "4,0"]).unwrap_err()), "--alpha");
        assert_eq!(flag_of(parse(&["clone", "--alpha", "1,6.3"]).unwrap_err()), "--alpha");
        assert_eq!(flag_of(parse(&["clone", "--route", "bob"]).unwrap_err()), "--route");
        assert_eq!(flag_of(parse(&["mg", "--n", "4", "--j", "-1"]).unwrap_err()), "--j");
        assert_eq!(flag_of(parse(&["noise", "--angle", "1"]).unwrap_err()), "--angle");
    }

    #[test]
    fn grids_are_inclusive() {
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_grid("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0:1:0.3").unwrap().len(), 4);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn scan_emits_one_row_per_grid_point() {
        let run = execute(&parse(&["scan", "--n", "8", "--alpha-grid", "0:1:0.1"]).unwrap()).unwrap();
        assert_eq!(run.output.lines().count(), 12);
        assert!(run.output.starts_with("alpha"));
        assert_eq!(run.exit_code(), 0);
    }

    #[test]
    fn records_are_self_describing() {
        let run = execute(&parse(&["ghz", "--shots", "3", "--output", "records"]).unwrap()).unwrap();
        for line in run.output.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["schema"], SCHEMA);
            assert!(v["record"].is_string());
        }
        assert_eq!(
            run.output.lines().filter(|l| l.contains("\"record\":\"ghz\"")).count(),
            3
        );
    }

    #[test]
    fn output_is_deterministic() {
        let argv = ["demux", "--route", "charlene", "--shots", "50", "--seed", "3"];
        let a = execute(&parse(&argv).unwrap()).unwrap();
        let b = execute(&parse(&argv).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.exit_code(), 0);
    }

    #[test]
    fn noise_check_reports_switchboard_invariance() {
        let run = execute(&parse(&["noise", "--channel", "z-rotation", "--angle", "0.3"]).unwrap()).unwrap();
        assert_eq!(run.exit_code(), 0);
        assert!(run.output.contains("z-rotation"));
    }

    #[test]
    fn resource_limits_surface_as_errors() {
        assert!(execute(&parse(&["mg", "--n", "16"]).unwrap()).is_err());
    }
}

//! Event-driven protocol harness.
//!
//! Alice, Bob, Charlene and Dick are small state machines. Each reacts to
//! messages taken from one FIFO queue and answers with actions; the session
//! executes those actions on a register it owns and logs each one as a
//! [`ProtocolEvent`] with a logical sequence number. Parties only ever know
//! slot indices, never amplitudes.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::rounded;
use crate::qcore::{
    apply_on_qubits, density_of, derive_seed, fidelity_with_pure, measure_bell, partial_trace, BellIndex,
    DensityMatrix, Mode, Pauli, StateVector,
};
use crate::switchboard::{build_switchboard, correction_table, register, CorrectionTable, Party, Route, AUX_SLOT};

pub type PartyId = Party;

/// Version tag carried by every serialized record.
pub const SCHEMA: &str = "qswitch/1";

/// Largest accepted distance between a stored and a replayed fidelity.
pub const REPLAY_TOL: f64 = 1e-12;

const ALICE_STREAM: u64 = 0;
const IDLE_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    BellMeasure,
    ClassicalBroadcast,
    ClassicalSend,
    QubitTransfer,
    Correction,
    RouteDecision,
    /// A logical tick in which nothing happens; used to delay the route decision.
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Measurement { slots: [usize; 2], outcome: BellIndex },
    Bits { bits: Vec<u8>, recipients: Vec<PartyId> },
    Transfer { slot: usize, recipient: PartyId },
    Correction(CorrectionRecord),
    Route { route: Route },
    Idle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    /// The correction is `U_{mn,kl}†`.
    pub mn: BellIndex,
    pub kl: BellIndex,
    pub pauli: Pauli,
    /// False when the party received no bits and leaves its qubit alone.
    pub applied: bool,
    pub bits_received: u8,
    /// Sequence numbers of the events this correction (or its fidelity) relies on.
    pub depends_on: Vec<u64>,
    #[serde(serialize_with = "rounded::serialize")]
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub actor: PartyId,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    Demux,
    Telecloning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTranscript {
    pub session: SessionKind,
    /// `None` for telecloning sessions, which never decide a route.
    pub route: Option<Route>,
    pub seed: u64,
    pub alpha_bloch: [f64; 3],
    pub events: Vec<ProtocolEvent>,
    /// Target fidelity for a demux session; Bob's clone fidelity for telecloning.
    pub final_fidelity: f64,
}

impl ProtocolTranscript {
    /// Classical bits sent by `party`, broadcasts and point-to-point alike.
    pub fn bits_sent_by(&self, party: PartyId) -> usize {
        self.events
            .iter()
            .filter(|e| e.actor == party)
            .map(|e| match &e.payload {
                Payload::Bits { bits, .. } => bits.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn corrections(&self) -> impl Iterator<Item = (PartyId, &CorrectionRecord)> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Correction(c) => Some((e.actor, c)),
            _ => None,
        })
    }

    /// Outcome of the first Bell measurement made by `party`.
    pub fn outcome_of(&self, party: PartyId) -> Option<BellIndex> {
        self.events.iter().find_map(|e| match (&e.payload, e.actor == party) {
            (Payload::Measurement { outcome, .. }, true) => Some(*outcome),
            _ => None,
        })
    }

    /// Header, one line per event, footer.
    pub fn to_json_lines(&self) -> String {
        let mut lines = vec![Line::Header {
            schema: SCHEMA.into(),
            session: self.session,
            route: self.route,
            seed: self.seed,
            alpha_bloch: self.alpha_bloch,
        }];
        lines.extend(self.events.iter().map(|e| Line::Event {
            schema: SCHEMA.into(),
            event: e.clone(),
        }));
        lines.push(Line::Footer {
            schema: SCHEMA.into(),
            final_fidelity: self.final_fidelity,
        });
        let mut out = String::new();
        for line in &lines {
            out.push_str(&serde_json::to_string(line).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).enumerate();
        let parse = |(i, l): (usize, &str)| -> Result<Line> {
            let line: Line =
                serde_json::from_str(l).map_err(|e| Error::Domain(format!("transcript line {}: {e}", i + 1)))?;
            if line.schema() != SCHEMA {
                return Err(Error::Domain(format!(
                    "transcript line {}: unknown schema {}",
                    i + 1,
                    line.schema()
                )));
            }
            Ok(line)
        };
        let Some(Line::Header {
            session,
            route,
            seed,
            alpha_bloch,
            ..
        }) = lines.next().map(parse).transpose()?
        else {
            return Err(Error::Domain("transcript must start with a header".into()));
        };
        let mut events = Vec::new();
        let mut final_fidelity = None;
        for item in lines {
            match parse(item)? {
                Line::Event { event, .. } if final_fidelity.is_none() => events.push(event),
                Line::Footer { final_fidelity: f, .. } if final_fidelity.is_none() => final_fidelity = Some(f),
                _ => return Err(Error::Domain(format!("unexpected record on line {}", item.0 + 1))),
            }
        }
        let final_fidelity = final_fidelity.ok_or_else(|| Error::Domain("transcript has no footer".into()))?;
        Ok(Self {
            session,
            route,
            seed,
            alpha_bloch,
            events,
            final_fidelity,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header {
        schema: String,
        session: SessionKind,
        route: Option<Route>,
        seed: u64,
        #[serde(serialize_with = "rounded::serialize_slice")]
        alpha_bloch: [f64; 3],
    },
    Event {
        schema: String,
        #[serde(flatten)]
        event: ProtocolEvent,
    },
    Footer {
        schema: String,
        #[serde(serialize_with = "rounded::serialize")]
        final_fidelity: f64,
    },
}

impl Line {
    fn schema(&self) -> &str {
        match self {
            Line::Header { schema, .. } | Line::Event { schema, .. } | Line::Footer { schema, .. } => schema,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionOptions {
    /// Idle ticks Alice waits between her broadcast and the route decision.
    pub route_delay: usize,
}

#[derive(Clone, Copy, Debug)]
enum Msg {
    Start,
    Wait(usize),
    Measured(BellIndex),
    Bits {
        kind: EventKind,
        outcome: BellIndex,
        seq: u64,
        measured: u64,
    },
    Route(Route),
    Qubit(usize),
    /// The session is draining; parties with nothing to wait for act now.
    Close,
}

#[derive(Clone, Debug)]
enum Action {
    Measure {
        slots: [usize; 2],
        stream: u64,
    },
    Broadcast {
        outcome: BellIndex,
        to: Vec<PartyId>,
    },
    Send {
        outcome: BellIndex,
        to: PartyId,
    },
    Later(Msg),
    Idle,
    Decide(Route),
    Transfer {
        slot: usize,
        to: PartyId,
    },
    Correct {
        mn: BellIndex,
        kl: BellIndex,
        applied: bool,
        bits: u8,
        depends_on: Vec<u64>,
    },
}

/// What one party knows and holds.
#[derive(Clone, Debug)]
struct Machine {
    id: PartyId,
    holds: Vec<usize>,
    /// `(outcome, broadcast seq, measurement seq)` heard from Alice.
    heard: Option<(BellIndex, u64, u64)>,
    /// Same, relayed by the idle receiver.
    relayed: Option<(BellIndex, u64, u64)>,
    route: Option<Route>,
    done: bool,
}

impl Machine {
    fn new(id: PartyId) -> Self {
        let mut holds = vec![id.register_slot()];
        if id == Party::Alice {
            holds.insert(0, AUX_SLOT);
        }
        Self {
            id,
            holds,
            heard: None,
            relayed: None,
            route: None,
            done: false,
        }
    }

    fn react(&mut self, kind: SessionKind, plan: Option<(Route, usize)>, msg: Msg) -> Vec<Action> {
        use Party::*;
        match (self.id, msg) {
            (Alice, Msg::Start) => vec![Action::Measure {
                slots: [self.holds[0], self.holds[1]],
                stream: ALICE_STREAM,
            }],
            (Alice, Msg::Measured(outcome)) => {
                let mut out = vec![Action::Broadcast {
                    outcome,
                    to: vec![Bob, Charlene],
                }];
                if let Some((_, delay)) = plan {
                    out.push(Action::Later(Msg::Wait(delay)));
                }
                out
            }
            (Alice, Msg::Wait(0)) => plan.map(|(r, _)| vec![Action::Decide(r)]).unwrap_or_default(),
            (Alice, Msg::Wait(k)) => vec![Action::Idle, Action::Later(Msg::Wait(k - 1))],
            (Dick, Msg::Route(r)) => {
                self.route = Some(r);
                vec![Action::Transfer {
                    slot: self.holds.remove(0),
                    to: r.idle(),
                }]
            }
            (Dick, Msg::Close) if kind == SessionKind::Telecloning && !self.done => {
                self.done = true;
                vec![Action::Correct {
                    mn: BellIndex::SINGLET,
                    kl: BellIndex::SINGLET,
                    applied: false,
                    bits: 0,
                    depends_on: Vec::new(),
                }]
            }
            (
                Bob | Charlene,
                Msg::Bits {
                    kind: EventKind::ClassicalBroadcast,
                    outcome,
                    seq,
                    measured,
                },
            ) => {
                self.heard = Some((outcome, seq, measured));
                match kind {
                    SessionKind::Telecloning => {
                        self.done = true;
                        vec![Action::Correct {
                            mn: outcome,
                            kl: BellIndex::SINGLET,
                            applied: true,
                            bits: 2,
                            depends_on: vec![measured, seq],
                        }]
                    }
                    SessionKind::Demux => self.try_finish(),
                }
            }
            (
                Bob | Charlene,
                Msg::Bits {
                    kind: EventKind::ClassicalSend,
                    outcome,
                    seq,
                    measured,
                },
            ) => {
                self.relayed = Some((outcome, seq, measured));
                self.try_finish()
            }
            (Bob | Charlene, Msg::Route(r)) => {
                self.route = Some(r);
                Vec::new()
            }
            (Bob | Charlene, Msg::Qubit(slot)) => {
                self.holds.push(slot);
                vec![Action::Measure {
                    slots: [self.holds[0], slot],
                    stream: IDLE_STREAM,
                }]
            }
            (Bob | Charlene, Msg::Measured(outcome)) => match self.route {
                Some(r) => vec![Action::Send {
                    outcome,
                    to: r.target(),
                }],
                None => Vec::new(),
            },
            _ => Vec::new(),
        }
    }

    fn try_finish(&mut self) -> Vec<Action> {
        match (self.heard, self.relayed, self.done) {
            (Some((mn, b_seq, a_seq)), Some((kl, s_seq, i_seq)), false) => {
                self.done = true;
                vec![Action::Correct {
                    mn,
                    kl,
                    applied: true,
                    bits: 4,
                    depends_on: vec![a_seq, b_seq, i_seq, s_seq],
                }]
            }
            _ => Vec::new(),
        }
    }
}

fn reduced_fidelity(reg: &StateVector, slot: usize, alpha: &StateVector) -> Result<f64> {
    fidelity_with_pure(&partial_trace(&density_of(reg), &[slot])?, alpha)
}

struct Session<'a> {
    kind: SessionKind,
    plan: Option<(Route, usize)>,
    seed: u64,
    alpha: StateVector,
    table: &'a CorrectionTable,
    register: StateVector,
    machines: Vec<Machine>,
    queue: VecDeque<(PartyId, Msg)>,
    events: Vec<ProtocolEvent>,
    alice_measure: Option<(BellIndex, u64)>,
    last_measure: Option<(BellIndex, u64)>,
    fidelities: Vec<(PartyId, f64)>,
}

impl Session<'_> {
    fn log(&mut self, kind: EventKind, actor: PartyId, payload: Payload) -> u64 {
        let seq = self.events.len() as u64;
        self.events.push(ProtocolEvent {
            seq,
            kind,
            actor,
            payload,
        });
        seq
    }

    fn run(mut self) -> Result<ProtocolTranscript> {
        self.queue.push_back((Party::Alice, Msg::Start));
        let mut closed = false;
        loop {
            while let Some((to, msg)) = self.queue.pop_front() {
                let actions = self.machines[to as usize].react(self.kind, self.plan, msg);
                for action in actions {
                    self.execute(to, action)?;
                }
            }
            if closed {
                break;
            }
            closed = true;
            for p in Party::ALL {
                self.queue.push_back((p, Msg::Close));
            }
        }
        let final_fidelity = match self.kind {
            SessionKind::Demux => {
                let target = self.plan.expect("demux has a route").0.target();
                self.fidelities.iter().find(|f| f.0 == target)
            }
            SessionKind::Telecloning => self.fidelities.iter().find(|f| f.0 == Party::Bob),
        }
        .map(|f| f.1)
        .ok_or_else(|| Error::Contract("session ended without the final correction".into()))?;
        Ok(ProtocolTranscript {
            session: self.kind,
            route: self.plan.map(|p| p.0),
            seed: self.seed,
            alpha_bloch: self.alpha.bloch_vector().expect("one-qubit input"),
            events: self.events,
            final_fidelity,
        })
    }

    fn execute(&mut self, actor: PartyId, action: Action) -> Result<()> {
        match action {
            Action::Measure { slots, stream } => {
                let mode = Mode::Sample(derive_seed(self.seed, stream));
                let result = measure_bell(&self.register, (slots[0], slots[1]), mode)?.remove(0);
                self.register = result.state().clone();
                let outcome = result.outcome;
                let seq = self.log(EventKind::BellMeasure, actor, Payload::Measurement { slots, outcome });
                if actor == Party::Alice {
                    self.alice_measure = Some((outcome, seq));
                }
                self.last_measure = Some((outcome, seq));
                self.queue.push_front((actor, Msg::Measured(outcome)));
            }
            Action::Broadcast { outcome, to } => {
                let measured = self.alice_measure.expect("broadcast follows measurement").1;
                let seq = self.log(
                    EventKind::ClassicalBroadcast,
                    actor,
                    Payload::Bits {
                        bits: outcome.bits().to_vec(),
                        recipients: to.clone(),
                    },
                );
                for p in to {
                    self.queue.push_back((
                        p,
                        Msg::Bits {
                            kind: EventKind::ClassicalBroadcast,
                            outcome,
                            seq,
                            measured,
                        },
                    ));
                }
            }
            Action::Send { outcome, to } => {
                let measured = self.last_measure.expect("send follows measurement").1;
                let seq = self.log(
                    EventKind::ClassicalSend,
                    actor,
                    Payload::Bits {
                        bits: outcome.bits().to_vec(),
                        recipients: vec![to],
                    },
                );
                self.queue.push_back((
                    to,
                    Msg::Bits {
                        kind: EventKind::ClassicalSend,
                        outcome,
                        seq,
                        measured,
                    },
                ));
            }
            Action::Later(msg) => self.queue.push_back((actor, msg)),
            Action::Idle => {
                self.log(EventKind::Idle, actor, Payload::Idle);
            }
            Action::Decide(route) => {
                self.log(EventKind::RouteDecision, actor, Payload::Route { route });
                for p in [Party::Dick, Party::Bob, Party::Charlene] {
                    self.queue.push_back((p, Msg::Route(route)));
                }
            }
            Action::Transfer { slot, to } => {
                self.log(
                    EventKind::QubitTransfer,
                    actor,
                    Payload::Transfer { slot, recipient: to },
                );
                self.queue.push_back((to, Msg::Qubit(slot)));
            }
            Action::Correct {
                mn,
                kl,
                applied,
                bits,
                depends_on,
            } => {
                let slot = actor.register_slot();
                let (mn, depends_on) = if applied {
                    (mn, depends_on)
                } else {
                    // The party knows nothing; its fidelity is scored against
                    // the outcome-indexed rule, which depends on Alice's result.
                    let (m, s) = self.alice_measure.expect("Alice measured");
                    (m, vec![s])
                };
                let entry = self.table.get(mn, kl);
                let fix = entry.operator.adjoint();
                let corrected = apply_on_qubits(&self.register, &fix, &[slot])?;
                let fidelity = reduced_fidelity(&corrected, slot, &self.alpha)?;
                if applied {
                    self.register = corrected;
                }
                self.fidelities.push((actor, fidelity));
                let record = CorrectionRecord {
                    mn,
                    kl,
                    pauli: entry.pauli,
                    applied,
                    bits_received: bits,
                    depends_on,
                    fidelity,
                };
                self.log(EventKind::Correction, actor, Payload::Correction(record));
            }
        }
        Ok(())
    }
}

fn start(
    kind: SessionKind,
    plan: Option<(Route, usize)>,
    alpha: &StateVector,
    seed: u64,
) -> Result<ProtocolTranscript> {
    if alpha.n_qubits() != 1 {
        return Err(Error::Domain("the input must be a single qubit".into()));
    }
    let session = Session {
        kind,
        plan,
        seed,
        alpha: alpha.clone(),
        table: correction_table()?,
        register: register(alpha, build_switchboard().state())?,
        machines: Party::ALL.iter().map(|&p| Machine::new(p)).collect(),
        queue: VecDeque::new(),
        events: Vec::new(),
        alice_measure: None,
        last_measure: None,
        fidelities: Vec::new(),
    };
    session.run()
}

/// Full demultiplexer run with sampled measurements.
pub fn run_session(route: Route, alpha: &StateVector, seed: u64) -> Result<ProtocolTranscript> {
    run_session_with(route, alpha, seed, SessionOptions::default())
}

pub fn run_session_with(
    route: Route,
    alpha: &StateVector,
    seed: u64,
    opts: SessionOptions,
) -> Result<ProtocolTranscript> {
    start(SessionKind::Demux, Some((route, opts.route_delay)), alpha, seed)
}

/// Alice measures and broadcasts; Bob and Charlene correct with `U_{mn,11}†`;
/// Dick receives nothing. No route is ever decided.
pub fn run_telecloning_session(alpha: &StateVector, seed: u64) -> Result<ProtocolTranscript> {
    start(SessionKind::Telecloning, None, alpha, seed)
}

/// Bob's reduced state after Alice's measurement, averaged over her outcomes.
pub fn bob_marginal_after_alice(alpha: &StateVector) -> Result<DensityMatrix> {
    let reg = register(alpha, build_switchboard().state())?;
    let slot = Party::Bob.register_slot();
    let mut acc = None::<crate::qcore::CMatrix>;
    for branch in measure_bell(&reg, (AUX_SLOT, Party::Alice.register_slot()), Mode::EnumerateAll)? {
        let Some(post) = &branch.post_state else { continue };
        let m = partial_trace(&density_of(post), &[slot])?.matrix() * crate::qcore::C64::new(branch.probability, 0.0);
        acc = Some(match acc {
            Some(a) => a + m,
            None => m,
        });
    }
    DensityMatrix::new(1, acc.expect("some outcome is possible"))
}

/// Largest pairwise trace distance between Bob's outcome-averaged marginals
/// over `samples` random inputs.
pub fn no_signaling_check(samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("no-signaling check needs at least one sample".into()));
    }
    let marginals = (0..samples as u64)
        .map(|i| bob_marginal_after_alice(&crate::qcore::random_pure_qubit(derive_seed(seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (i, a) in marginals.iter().enumerate() {
        for b in &marginals[i + 1..] {
            worst = worst.max(a.trace_distance(b)?);
        }
    }
    Ok(worst)
}

fn invalid(seq: u64, reason: impl Into<String>) -> Error {
    Error::Validation {
        seq,
        reason: reason.into(),
    }
}

fn two_bits(seq: u64, bits: &[u8]) -> Result<BellIndex> {
    match bits {
        [a, b] if *a <= 1 && *b <= 1 => Ok(BellIndex::new(*a, *b).expect("bits are 0 or 1")),
        [_, _] => Err(invalid(seq, "classical payload holds a non-binary value")),
        _ => Err(invalid(
            seq,
            format!("classical payload must be exactly 2 bits, got {}", bits.len()),
        )),
    }
}

/// Checks causality and re-executes the transcript with forced outcomes,
/// returning the recomputed final fidelity.
pub fn replay(t: &ProtocolTranscript) -> Result<f64> {
    let alpha = StateVector::from_bloch_vector(t.alpha_bloch)?;
    let table = correction_table()?;
    let mut reg = register(&alpha, build_switchboard().state())?;
    let mut holds: Vec<Vec<usize>> = Party::ALL.iter().map(|&p| Machine::new(p).holds).collect();
    let mut measured: [Option<(BellIndex, u64)>; 4] = [None; 4];
    let mut heard: [Option<BellIndex>; 4] = [None; 4];
    let mut relayed: [Option<BellIndex>; 4] = [None; 4];
    let mut route = None;
    let mut broadcast_seen = false;
    let mut seen = BTreeSet::new();
    let mut last_seq = None;
    let mut fidelities = Vec::new();

    for e in &t.events {
        let seq = e.seq;
        if last_seq.is_some_and(|p| seq <= p) {
            return Err(invalid(seq, "sequence numbers must strictly increase"));
        }
        last_seq = Some(seq);
        let who = e.actor as usize;
        match (e.kind, &e.payload) {
            (EventKind::BellMeasure, Payload::Measurement { slots, outcome }) => {
                if let Some(s) = slots.iter().find(|s| !holds[who].contains(s)) {
                    return Err(invalid(seq, format!("{} measures slot {s} it does not hold", e.actor)));
                }
                if measured[who].is_some() {
                    return Err(invalid(seq, format!("{} measures twice", e.actor)));
                }
                let r = measure_bell(&reg, (slots[0], slots[1]), Mode::Forced(*outcome))
                    .map_err(|err| invalid(seq, err.to_string()))?
                    .remove(0);
                reg = r.state().clone();
                measured[who] = Some((*outcome, seq));
            }
            (EventKind::ClassicalBroadcast, Payload::Bits { bits, recipients }) => {
                let value = two_bits(seq, bits)?;
                if e.actor != Party::Alice || broadcast_seen {
                    return Err(invalid(seq, "only Alice broadcasts, once"));
                }
                match measured[who] {
                    Some((o, _)) if o == value => {}
                    Some(_) => return Err(invalid(seq, "broadcast bits differ from Alice's outcome")),
                    None => return Err(invalid(seq, "broadcast precedes Alice's measurement")),
                }
                broadcast_seen = true;
                for r in recipients {
                    heard[*r as usize] = Some(value);
                }
            }
            (EventKind::ClassicalSend, Payload::Bits { bits, recipients }) => {
                let value = two_bits(seq, bits)?;
                match measured[who] {
                    Some((o, _)) if o == value => {}
                    Some(_) => return Err(invalid(seq, "sent bits differ from the sender's outcome")),
                    None => return Err(invalid(seq, "send precedes the sender's measurement")),
                }
                for r in recipients {
                    relayed[*r as usize] = Some(value);
                }
            }
            (EventKind::RouteDecision, Payload::Route { route: r }) => {
                if t.session != SessionKind::Demux || t.route != Some(*r) || e.actor != Party::Alice {
                    return Err(invalid(seq, "route decision does not match the session"));
                }
                if !broadcast_seen {
                    return Err(invalid(seq, "route decided before the broadcast"));
                }
                route = Some(*r);
            }
            (EventKind::QubitTransfer, Payload::Transfer { slot, recipient }) => {
                if route.map(|r| r.idle()) != Some(*recipient) {
                    return Err(invalid(seq, "qubit transfer without a matching route decision"));
                }
                let Some(pos) = holds[who].iter().position(|s| s == slot) else {
                    return Err(invalid(
                        seq,
                        format!("{} transfers slot {slot} it does not hold", e.actor),
                    ));
                };
                holds[who].remove(pos);
                holds[*recipient as usize].push(*slot);
            }
            (EventKind::Correction, Payload::Correction(c)) => {
                if let Some(d) = c.depends_on.iter().find(|d| !seen.contains(*d)) {
                    return Err(invalid(
                        seq,
                        format!("correction depends on event {d}, which has not happened"),
                    ));
                }
                let slot = e.actor.register_slot();
                if !holds[who].contains(&slot) {
                    return Err(invalid(seq, "correction on a qubit the party does not hold"));
                }
                let expected = match (t.session, c.applied) {
                    (SessionKind::Demux, true) => heard[who].zip(relayed[who]).map(|(m, k)| (m, k, 4)),
                    (SessionKind::Telecloning, true) => heard[who].map(|m| (m, BellIndex::SINGLET, 2)),
                    (_, false) => measured[0].map(|(m, _)| (m, c.kl, 0)),
                };
                match expected {
                    Some(x) if x == (c.mn, c.kl, c.bits_received) => {}
                    Some(_) => return Err(invalid(seq, "correction label does not match the bits received")),
                    None => return Err(invalid(seq, "correction before the outcomes it needs were delivered")),
                }
                let fix = table.unitary(c.mn, c.kl).adjoint();
                let corrected = apply_on_qubits(&reg, &fix, &[slot])?;
                fidelities.push((e.actor, reduced_fidelity(&corrected, slot, &alpha)?));
                if c.applied {
                    reg = corrected;
                }
            }
            (EventKind::Idle, Payload::Idle) => {}
            _ => return Err(invalid(seq, "event kind and payload disagree")),
        }
        seen.insert(seq);
    }

    let last = last_seq.unwrap_or(0);
    let owner = match t.session {
        SessionKind::Demux => t
            .route
            .ok_or_else(|| invalid(last, "demux session without a route"))?
            .target(),
        SessionKind::Telecloning => Party::Bob,
    };
    fidelities
        .iter()
        .find(|f| f.0 == owner)
        .map(|f| f.1)
        .ok_or_else(|| invalid(last, format!("no correction by {owner}")))
}

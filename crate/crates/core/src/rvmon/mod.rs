//! Runtime-verification monitor: property automata folded over an ordered
//! stream of boundary events.
//!
//! The monitor is a deterministic fold. For each event every automaton takes
//! the first transition (in declaration order) whose guard matches, or
//! self-loops when none does. A verdict is emitted when an automaton crosses
//! into a violation state (`Violation`) or back out of one (`Recovered`);
//! heartbeats are emitted on an explicit cadence chosen by the caller, not
//! per event. Every verdict is serialized as one text line
//! `property_id<TAB>event_seq<TAB>kind` and sealed through the store's
//! verdict log *before* `process` returns, so the monitor's own output is as
//! tamper-evident as the history it judges.
//!
//! Ordering discipline: events must arrive with strictly increasing sequence
//! numbers. Out-of-order events are rejected and counted, never buffered —
//! the bridge owns ordering, the monitor stays a pure fold. A sealing failure
//! (keystream exhaustion above all) halts the monitor for good: a monitor
//! that cannot persist its verdicts must not keep judging (fail-closed).

pub mod parser;

use serde::{Deserialize, Serialize};

use crate::seallog::{SealLogError, SealLogStore};

/// Which trust boundary an event crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    RaTee,
    RaRee,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::RaTee => "ra_tee",
            Boundary::RaRee => "ra_ree",
        }
    }
}

/// Direction of the observed interaction, relative to the monitored party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

/// One boundary observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub timestamp_ns: u64,
    pub boundary: Boundary,
    pub channel: String,
    pub direction: Direction,
    pub payload: Vec<u8>,
}

/// Transition guard: a predicate over (boundary, channel, direction) with an
/// optional payload regex. `None` components are wildcards.
#[derive(Debug, Clone)]
pub struct Guard {
    pub boundary: Option<Boundary>,
    pub channel: Option<String>,
    pub direction: Option<Direction>,
    pub payload: Option<regex::bytes::Regex>,
}

impl Guard {
    pub fn matches(&self, event: &Event) -> bool {
        if let Some(b) = self.boundary {
            if b != event.boundary {
                return false;
            }
        }
        if let Some(c) = &self.channel {
            if c != &event.channel {
                return false;
            }
        }
        if let Some(d) = self.direction {
            if d != event.direction {
                return false;
            }
        }
        if let Some(re) = &self.payload {
            if !re.is_match(&event.payload) {
                return false;
            }
        }
        true
    }
}

/// Index into an automaton's state table.
pub type StateId = usize;

#[derive(Debug, Clone)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub guard: Guard,
}

/// A finite-state control-flow property with designated violation states.
#[derive(Debug, Clone)]
pub struct PropertyAutomaton {
    pub id: String,
    pub states: Vec<String>,
    pub initial: StateId,
    /// `violation[s]` is true iff state `s` is a violation state.
    pub violation: Vec<bool>,
    /// Declaration order is the tie-break order.
    pub transitions: Vec<Transition>,
}

impl PropertyAutomaton {
    /// Applies the first matching transition from `current`, or self-loops.
    /// Total function: never fails. The verdict reports entering a violation
    /// state (`Violation`) or leaving one (`Recovered`).
    pub fn step(&self, current: StateId, event: &Event) -> (StateId, Option<VerdictKind>) {
        let next = self
            .transitions
            .iter()
            .find(|t| t.from == current && t.guard.matches(event))
            .map(|t| t.to)
            .unwrap_or(current);
        let verdict = match (self.violation[current], self.violation[next]) {
            (false, true) => Some(VerdictKind::Violation),
            (true, false) => Some(VerdictKind::Recovered),
            _ => None,
        };
        (next, verdict)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Violation,
    Recovered,
    Heartbeat,
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::Violation => "violation",
            VerdictKind::Recovered => "recovered",
            VerdictKind::Heartbeat => "heartbeat",
        }
    }
}

/// A monitor judgment at a specific event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property_id: String,
    pub event_seq: u64,
    pub kind: VerdictKind,
}

impl Verdict {
    /// The sealed wire form: `property_id<TAB>event_seq<TAB>kind\n`.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\n", self.property_id, self.event_seq, self.kind.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error("event seq {seq} is not greater than the last processed seq {last}")]
    OutOfOrderEvent { seq: u64, last: u64 },
    #[error("monitoring halted by an earlier sealing failure")]
    Halted,
    #[error(transparent)]
    Seal(#[from] SealLogError),
}

impl MonitorError {
    /// True when the monitor can keep running after this error (the event was
    /// rejected but nothing is broken).
    pub fn is_rejection(&self) -> bool {
        matches!(self, MonitorError::OutOfOrderEvent { .. })
    }
}

/// The monitor: a set of automata with their current states, bound to a
/// verdict log. Single-threaded fold over one ordered event stream.
#[derive(Debug)]
pub struct Monitor {
    automata: Vec<PropertyAutomaton>,
    current: Vec<StateId>,
    verdict_log_id: u64,
    last_seq: Option<u64>,
    rejected: u64,
    halted: bool,
}

impl Monitor {
    pub fn new(automata: Vec<PropertyAutomaton>, verdict_log_id: u64) -> Monitor {
        let current = automata.iter().map(|a| a.initial).collect();
        Monitor {
            automata,
            current,
            verdict_log_id,
            last_seq: None,
            rejected: 0,
            halted: false,
        }
    }

    /// Steps every automaton on `event` and seals each resulting verdict into
    /// the verdict log before returning.
    ///
    /// Rejects (without state change) events whose seq is not strictly
    /// greater than the last processed one. Sealing failures halt the monitor
    /// permanently.
    pub fn process(
        &mut self,
        store: &mut SealLogStore,
        event: &Event,
    ) -> Result<Vec<Verdict>, MonitorError> {
        if self.halted {
            return Err(MonitorError::Halted);
        }
        if let Some(last) = self.last_seq {
            if event.seq <= last {
                self.rejected += 1;
                return Err(MonitorError::OutOfOrderEvent {
                    seq: event.seq,
                    last,
                });
            }
        }
        self.last_seq = Some(event.seq);
        let mut verdicts = Vec::new();
        for (i, automaton) in self.automata.iter().enumerate() {
            let (next, kind) = automaton.step(self.current[i], event);
            self.current[i] = next;
            if let Some(kind) = kind {
                verdicts.push(Verdict {
                    property_id: automaton.id.clone(),
                    event_seq: event.seq,
                    kind,
                });
            }
        }
        self.seal_verdicts(store, &verdicts)?;
        Ok(verdicts)
    }

    /// Emits one `Heartbeat` verdict per automaton at the last processed seq
    /// (0 before any event) and seals them. Callers choose the cadence.
    pub fn heartbeat(&mut self, store: &mut SealLogStore) -> Result<Vec<Verdict>, MonitorError> {
        if self.halted {
            return Err(MonitorError::Halted);
        }
        let seq = self.last_seq.unwrap_or(0);
        let verdicts: Vec<Verdict> = self
            .automata
            .iter()
            .map(|a| Verdict {
                property_id: a.id.clone(),
                event_seq: seq,
                kind: VerdictKind::Heartbeat,
            })
            .collect();
        self.seal_verdicts(store, &verdicts)?;
        Ok(verdicts)
    }

    fn seal_verdicts(
        &mut self,
        store: &mut SealLogStore,
        verdicts: &[Verdict],
    ) -> Result<(), MonitorError> {
        for v in verdicts {
            if let Err(e) = store.append_sealed(self.verdict_log_id, v.to_line().as_bytes()) {
                self.halted = true;
                return Err(e.into());
            }
        }
        Ok(())
    }

    pub fn automata(&self) -> &[PropertyAutomaton] {
        &self.automata
    }

    /// Current state name of each automaton, for status displays.
    pub fn current_states(&self) -> Vec<(&str, &str)> {
        self.automata
            .iter()
            .zip(&self.current)
            .map(|(a, &s)| (a.id.as_str(), a.states[s].as_str()))
            .collect()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Count of rejected (out-of-order) events.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn verdict_log_id(&self) -> u64 {
        self.verdict_log_id
    }
}

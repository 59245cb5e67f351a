//! Core execution engine for asynchronous shared-memory protocols.
//!
//! A protocol instance is a set of *step machines*, one per process. Each
//! machine alternates between two kinds of steps, always starting with a
//! coin step:
//!
//! - a **coin step** consumes one fresh 64-bit uniform word, and
//! - a **shared-memory step** performs one atomic read or write on a
//!   register bank.
//!
//! Deterministic protocol steps simply ignore the coin word of their step;
//! this uniform shape keeps every execution decomposable into a schedule
//! (the sequence of scheduled process ids) and per-process coin vectors,
//! which together replay the execution exactly.
//!
//! The engine asks an [`crate::adversary::Adversary`] which process moves
//! next, hands it only the view its class is allowed to see, applies the
//! chosen process's pending step, and appends an [`Event`] to the log.
//! Scheduling an already-finished process appends a noop marker event that
//! consumes the schedule slot but has no other effect.

use serde::Serialize;
use thiserror::Error;

use crate::adversary::{Adversary, Pending, ViewState};
use crate::coins::CoinSource;

/// Value stored in a shared register.
///
/// The protocols in this crate store process ids, small flags, and bounded
/// counters; a signed 64-bit integer is far wider than anything reachable
/// within the per-trial step limit.
pub type Value = i64;

/// Identifier of a simulated process. Process ids are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(pub u32);

impl ProcessId {
    /// Index of this process into 0-based per-process arrays.
    #[inline]
    pub fn idx(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl std::fmt::Display for ProcessId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a register in the shared register bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegisterId(pub u32);

/// One atomic shared-memory operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedOp {
    /// Atomic read of a register.
    Read(RegisterId),
    /// Atomic write of a value to a register.
    Write(RegisterId, Value),
}

impl SharedOp {
    /// Register this operation touches.
    pub fn register(self) -> RegisterId {
        match self {
            SharedOp::Read(r) | SharedOp::Write(r, _) => r,
        }
    }
}

/// The pending step of a running machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendingAction {
    /// The machine's next step consumes a coin word.
    Coin,
    /// The machine's next step performs this shared-memory operation.
    Shared(SharedOp),
}

/// Final result of a process's top-level operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Test-and-set result; `won` means the caller returned 0.
    Tas {
        /// Whether this caller won the test-and-set.
        won: bool,
    },
    /// Group-election result; `won` means the caller was elected.
    Elect {
        /// Whether this caller was elected.
        won: bool,
    },
}

impl Outcome {
    /// Whether the outcome is a win (TAS returned 0 / elected).
    pub fn won(self) -> bool {
        match self {
            Outcome::Tas { won } | Outcome::Elect { won } => won,
        }
    }
}

/// Machine lifecycle status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The machine has pending steps.
    Running,
    /// The machine finished with the given outcome and takes no more steps.
    Finished(Outcome),
}

/// A process-local protocol state machine driven by the engine.
///
/// Contract: while [`StepMachine::status`] is [`Status::Running`],
/// [`StepMachine::peek`] is pure and stable, and pending actions alternate
/// coin / shared / coin / shared, starting with a coin step. `apply_coin`
/// must only be called when the pending action is [`PendingAction::Coin`],
/// and `apply_shared` only when it is a shared operation, with `Some(value)`
/// for reads and `None` (the write acknowledgment) for writes.
pub trait StepMachine {
    /// Current lifecycle status.
    fn status(&self) -> Status;
    /// The next step this machine will take. Must not be called when
    /// finished.
    fn peek(&self) -> PendingAction;
    /// Deliver a fresh coin word for a pending coin step.
    fn apply_coin(&mut self, word: u64);
    /// Deliver the result of the pending shared-memory operation.
    fn apply_shared(&mut self, read: Option<Value>);
}

/// What happened at one step of an execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Coin-flip step with the consumed word.
    Coin {
        /// The 64-bit uniform word consumed by the step.
        word: u64,
    },
    /// Atomic read observing `val` in `reg`.
    Read {
        /// Register read.
        reg: RegisterId,
        /// Value observed.
        val: Value,
    },
    /// Atomic write of `val` to `reg`.
    Write {
        /// Register written.
        reg: RegisterId,
        /// Value written.
        val: Value,
    },
    /// A finished process was scheduled; nothing happened.
    Noop,
}

/// One step of an execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// 1-based position in the execution.
    pub index: u64,
    /// Scheduled process.
    pub pid: ProcessId,
    /// What the step did.
    pub kind: EventKind,
}

impl Event {
    /// Whether this is a noop marker for a finished process.
    pub fn is_noop(&self) -> bool {
        matches!(self.kind, EventKind::Noop)
    }

    /// Whether this is a shared-memory (read or write) step.
    pub fn is_shared(&self) -> bool {
        matches!(self.kind, EventKind::Read { .. } | EventKind::Write { .. })
    }
}

/// JSON-lines projection of an [`Event`] with a fixed field order.
#[derive(Serialize)]
struct EventLine<'a> {
    i: u64,
    p: u32,
    op: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reg: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    val: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coin: Option<String>,
}

impl Event {
    /// Serialize to one JSON-lines object with keys `i`, `p`, `op`, and the
    /// applicable subset of `reg`, `val`, `coin` (coin words in hex).
    pub fn to_json(&self) -> String {
        let line = match self.kind {
            EventKind::Coin { word } => EventLine {
                i: self.index,
                p: self.pid.0,
                op: "c",
                reg: None,
                val: None,
                coin: Some(format!("{word:016x}")),
            },
            EventKind::Read { reg, val } => EventLine {
                i: self.index,
                p: self.pid.0,
                op: "r",
                reg: Some(reg.0),
                val: Some(val),
                coin: None,
            },
            EventKind::Write { reg, val } => EventLine {
                i: self.index,
                p: self.pid.0,
                op: "w",
                reg: Some(reg.0),
                val: Some(val),
                coin: None,
            },
            EventKind::Noop => EventLine {
                i: self.index,
                p: self.pid.0,
                op: "n",
                reg: None,
                val: None,
                coin: None,
            },
        };
        serde_json::to_string(&line).expect("event serialization cannot fail")
    }
}

/// Bank of atomic registers, all initialized to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterBank {
    cells: Vec<Value>,
}

impl RegisterBank {
    /// Create a bank of `len` zero-initialized registers.
    pub fn new(len: u32) -> Self {
        Self {
            cells: vec![0; len as usize],
        }
    }

    /// Number of registers.
    pub fn len(&self) -> u32 {
        self.cells.len() as u32
    }

    /// Whether the bank has no registers.
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Atomic read.
    #[inline]
    pub fn read(&self, reg: RegisterId) -> Value {
        self.cells[reg.0 as usize]
    }

    /// Atomic write.
    #[inline]
    pub fn write(&mut self, reg: RegisterId, val: Value) {
        self.cells[reg.0 as usize] = val;
    }
}

/// Errors surfaced by the engine and by exact replay.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    /// Replay ran out of recorded coin words for a process.
    #[error("replay coin vector exhausted for process {pid}")]
    CoinExhausted {
        /// Process whose coin vector ran dry.
        pid: ProcessId,
    },
    /// Replay scheduled a process that had already finished. Schedules for
    /// replay are noop-free by construction, so this indicates a schedule
    /// that does not belong to the supplied machines and coins.
    #[error("replay scheduled finished process {pid} at step {index}")]
    ScheduledFinished {
        /// Offending process.
        pid: ProcessId,
        /// 1-based step index at which the divergence was detected.
        index: u64,
    },
}

/// A complete (or step-limited) execution log.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// All steps, in order, 1-indexed.
    pub events: Vec<Event>,
    /// Final machine statuses, indexed by process.
    pub statuses: Vec<Status>,
    /// For each process, the event index at which it finished, if it did.
    pub responses: Vec<Option<u64>>,
    /// Whether the run stopped because it reached the step limit.
    pub hit_step_limit: bool,
}

impl Execution {
    /// The schedule: scheduled process ids of all non-noop events.
    pub fn schedule(&self) -> Vec<ProcessId> {
        self.events
            .iter()
            .filter(|e| !e.is_noop())
            .map(|e| e.pid)
            .collect()
    }

    /// Per-process coin vectors, in flip order.
    pub fn coin_vectors(&self) -> Vec<Vec<u64>> {
        let mut out = vec![Vec::new(); self.statuses.len()];
        for e in &self.events {
            if let EventKind::Coin { word } = e.kind {
                out[e.pid.idx()].push(word);
            }
        }
        out
    }

    /// Number of shared-memory steps each process performed.
    pub fn shared_step_counts(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.statuses.len()];
        for e in &self.events {
            if e.is_shared() {
                out[e.pid.idx()] += 1;
            }
        }
        out
    }

    /// Largest per-process shared-memory step count (0 if no steps).
    pub fn max_step(&self) -> u64 {
        self.shared_step_counts().into_iter().max().unwrap_or(0)
    }

    /// Event index of the process's first event (its invocation), if any.
    pub fn invocation(&self, pid: ProcessId) -> Option<u64> {
        self.events.iter().find(|e| e.pid == pid).map(|e| e.index)
    }

    /// The execution with noop markers dropped and events reindexed from 1.
    ///
    /// A schedule by definition excludes noop slots, so replaying
    /// `(schedule, coins)` reproduces exactly this projection.
    pub fn project_non_noop(&self) -> Execution {
        let mut events = Vec::with_capacity(self.events.len());
        let mut remap = vec![None; self.events.len() + 1];
        for e in self.events.iter().filter(|e| !e.is_noop()) {
            let index = events.len() as u64 + 1;
            remap[e.index as usize] = Some(index);
            events.push(Event { index, ..*e });
        }
        let responses = self
            .responses
            .iter()
            .map(|r| r.and_then(|i| remap[i as usize]))
            .collect();
        Execution {
            events,
            statuses: self.statuses.clone(),
            responses,
            hit_step_limit: self.hit_step_limit,
        }
    }

    /// Serialize all events as JSON lines (one object per event).
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&e.to_json());
            s.push('\n');
        }
        s
    }
}

/// Run machines to completion (or to `step_limit` events) under the given
/// adversary and coin source.
///
/// Every scheduled step appends exactly one event; noop markers for finished
/// processes count toward the step limit so that no run is endless.
pub fn run(
    machines: &mut [Box<dyn StepMachine>],
    bank: &mut RegisterBank,
    adversary: &mut dyn Adversary,
    coins: &mut dyn CoinSource,
    step_limit: u64,
) -> Execution {
    let k = machines.len();
    let mut state = ViewState::new(k);
    for (i, m) in machines.iter().enumerate() {
        state.pendings[i] = pending_of(m.as_ref());
    }
    let mut events: Vec<Event> = Vec::new();
    let mut responses: Vec<Option<u64>> = vec![None; k];
    let mut hit_step_limit = false;

    loop {
        if machines
            .iter()
            .all(|m| matches!(m.status(), Status::Finished(_)))
        {
            break;
        }
        if events.len() as u64 >= step_limit {
            hit_step_limit = true;
            break;
        }
        let view = state.view(adversary.class());
        let pid = adversary.next(&view);
        debug_assert!(pid.0 >= 1 && pid.idx() < k, "adversary pid out of range");
        let index = events.len() as u64 + 1;
        let m = &mut machines[pid.idx()];
        let kind = match m.status() {
            Status::Finished(_) => EventKind::Noop,
            Status::Running => match m.peek() {
                PendingAction::Coin => {
                    let word = coins.next(pid);
                    m.apply_coin(word);
                    state.coins[pid.idx()].push(word);
                    EventKind::Coin { word }
                }
                PendingAction::Shared(op) => {
                    let kind = match op {
                        SharedOp::Read(reg) => {
                            let val = bank.read(reg);
                            m.apply_shared(Some(val));
                            EventKind::Read { reg, val }
                        }
                        SharedOp::Write(reg, val) => {
                            bank.write(reg, val);
                            m.apply_shared(None);
                            EventKind::Write { reg, val }
                        }
                    };
                    // Coins flipped before this shared step become visible
                    // to location- and read/write-oblivious schedulers.
                    state.coins_visible[pid.idx()] = state.coins[pid.idx()].len();
                    kind
                }
            },
        };
        if !matches!(kind, EventKind::Noop) {
            state.pendings[pid.idx()] = pending_of(m.as_ref());
            if let Status::Finished(_) = m.status() {
                responses[pid.idx()] = Some(index);
            }
        }
        state.schedule.push(pid);
        events.push(Event { index, pid, kind });
    }

    Execution {
        events,
        statuses: machines.iter().map(|m| m.status()).collect(),
        responses,
        hit_step_limit,
    }
}

fn pending_of(m: &dyn StepMachine) -> Pending {
    match m.status() {
        Status::Finished(_) => Pending::Finished,
        Status::Running => match m.peek() {
            PendingAction::Coin => Pending::AtCoin,
            PendingAction::Shared(op) => Pending::AtShared(op),
        },
    }
}

/// Replay an execution from its schedule and coin vectors.
///
/// The schedule must be noop-free (as produced by [`Execution::schedule`]).
/// Replay stops when the schedule is exhausted, so replaying a prefix of a
/// schedule is allowed; machines may then still be running.
pub fn replay(
    machines: &mut [Box<dyn StepMachine>],
    bank: &mut RegisterBank,
    schedule: &[ProcessId],
    coin_vectors: &[Vec<u64>],
) -> Result<Execution, SimError> {
    let k = machines.len();
    let mut cursors = vec![0usize; k];
    let mut events: Vec<Event> = Vec::with_capacity(schedule.len());
    let mut responses: Vec<Option<u64>> = vec![None; k];

    for (step, &pid) in schedule.iter().enumerate() {
        let index = step as u64 + 1;
        let m = &mut machines[pid.idx()];
        if matches!(m.status(), Status::Finished(_)) {
            return Err(SimError::ScheduledFinished { pid, index });
        }
        let kind = match m.peek() {
            PendingAction::Coin => {
                let cursor = &mut cursors[pid.idx()];
                let word = *coin_vectors[pid.idx()]
                    .get(*cursor)
                    .ok_or(SimError::CoinExhausted { pid })?;
                *cursor += 1;
                m.apply_coin(word);
                EventKind::Coin { word }
            }
            PendingAction::Shared(op) => match op {
                SharedOp::Read(reg) => {
                    let val = bank.read(reg);
                    m.apply_shared(Some(val));
                    EventKind::Read { reg, val }
                }
                SharedOp::Write(reg, val) => {
                    bank.write(reg, val);
                    m.apply_shared(None);
                    EventKind::Write { reg, val }
                }
            },
        };
        if let Status::Finished(_) = m.status() {
            responses[pid.idx()] = Some(index);
        }
        events.push(Event { index, pid, kind });
    }

    Ok(Execution {
        events,
        statuses: machines.iter().map(|m| m.status()).collect(),
        responses,
        hit_step_limit: false,
    })
}

//! Schedulers and the information masks that define their power.
//!
//! The engine decides nothing about ordering: after every step it asks an
//! [`Adversary`] which process moves next. What the adversary may base that
//! choice on is its *class*; the engine enforces the class by handing it a
//! [`View`] whose accessors mask the underlying [`ViewState`]:
//!
//! - [`AdversaryClass::Oblivious`] sees only the global step count and which
//!   processes have finished.
//! - [`AdversaryClass::LocationOblivious`] additionally sees the schedule so
//!   far, each process's coins up to its latest shared step, and the *kind*
//!   (and value) of each pending operation — but not which register.
//! - [`AdversaryClass::ReadWriteOblivious`] sees the same history but the
//!   opposite mask on pending operations: the register, not the kind or
//!   value.
//! - [`AdversaryClass::Strong`] sees everything except coins that have not
//!   been flipped yet.
//!
//! Finished flags are visible at every level: schedulers must be able to
//! stop wasting slots on finished processes, and a finished process takes
//! no further steps anyway.

use thiserror::Error;

use crate::coins::SplitMix64;
use crate::sim::{ProcessId, RegisterId, SharedOp, Value};

/// The four scheduler information classes, weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryClass {
    /// Step count and finished flags only.
    Oblivious,
    /// History and pending kind/value visible; pending register masked.
    LocationOblivious,
    /// History and pending register visible; pending kind/value masked.
    ReadWriteOblivious,
    /// Full state (past coins, schedule, exact pending operations).
    Strong,
}

/// A machine's next step as tracked by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pending {
    /// Next step flips a coin.
    AtCoin,
    /// Next step performs this shared operation.
    AtShared(SharedOp),
    /// No next step.
    Finished,
}

/// Unmasked scheduler-relevant state, maintained incrementally by the
/// engine. Adversaries never touch this directly; they get a [`View`].
#[derive(Debug, Clone)]
pub struct ViewState {
    /// Pending step of each process.
    pub pendings: Vec<Pending>,
    /// All coin words flipped so far, per process.
    pub coins: Vec<Vec<u64>>,
    /// How many of each process's coins precede its latest shared step
    /// (the prefix visible below the strong class).
    pub coins_visible: Vec<usize>,
    /// Every scheduled process so far, including slots spent on finished
    /// processes.
    pub schedule: Vec<ProcessId>,
}

impl ViewState {
    /// State for `k` processes before any step (all at their first coin).
    pub fn new(k: usize) -> Self {
        Self {
            pendings: vec![Pending::AtCoin; k],
            coins: vec![Vec::new(); k],
            coins_visible: vec![0; k],
            schedule: Vec::new(),
        }
    }

    /// The state as visible to `class`.
    pub fn view(&self, class: AdversaryClass) -> View<'_> {
        View { class, state: self }
    }
}

/// A pending operation as visible through a class mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskedPending {
    /// Next step flips a coin (visible to all classes above oblivious).
    Coin,
    /// A read of some register (location-oblivious view).
    ReadSomewhere,
    /// A write of this value to some register (location-oblivious view).
    WriteSomewhere(Value),
    /// Some operation on this register (read/write-oblivious view).
    Touch(RegisterId),
    /// A read of this register (strong view).
    Read(RegisterId),
    /// A write of this value to this register (strong view).
    Write(RegisterId, Value),
}

/// Class-masked window onto a [`ViewState`].
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    class: AdversaryClass,
    state: &'a ViewState,
}

impl<'a> View<'a> {
    /// The class this view is masked for.
    pub fn class(&self) -> AdversaryClass {
        self.class
    }

    /// Number of processes.
    pub fn num_processes(&self) -> usize {
        self.state.pendings.len()
    }

    /// Total steps taken so far (including slots spent on finished
    /// processes). Visible to every class.
    pub fn steps(&self) -> u64 {
        self.state.schedule.len() as u64
    }

    /// Whether `pid` has finished. Visible to every class.
    pub fn finished(&self, pid: ProcessId) -> bool {
        matches!(self.state.pendings[pid.idx()], Pending::Finished)
    }

    /// The schedule so far, if the class may see it.
    pub fn schedule(&self) -> Option<&'a [ProcessId]> {
        match self.class {
            AdversaryClass::Oblivious => None,
            _ => Some(&self.state.schedule),
        }
    }

    /// Coins of `pid` visible to this class: nothing when oblivious, the
    /// prefix up to `pid`'s latest shared step for the two middle classes,
    /// everything flipped so far when strong.
    pub fn coins(&self, pid: ProcessId) -> Option<&'a [u64]> {
        let flipped = &self.state.coins[pid.idx()];
        match self.class {
            AdversaryClass::Oblivious => None,
            AdversaryClass::LocationOblivious | AdversaryClass::ReadWriteOblivious => {
                Some(&flipped[..self.state.coins_visible[pid.idx()]])
            }
            AdversaryClass::Strong => Some(flipped),
        }
    }

    /// `pid`'s pending step through the class mask; `None` when the class
    /// sees no pendings (oblivious) or when `pid` has finished.
    pub fn pending(&self, pid: ProcessId) -> Option<MaskedPending> {
        let pending = self.state.pendings[pid.idx()];
        if self.class == AdversaryClass::Oblivious {
            return None;
        }
        match pending {
            Pending::Finished => None,
            Pending::AtCoin => Some(MaskedPending::Coin),
            Pending::AtShared(op) => Some(match (self.class, op) {
                (AdversaryClass::LocationOblivious, SharedOp::Read(_)) => {
                    MaskedPending::ReadSomewhere
                }
                (AdversaryClass::LocationOblivious, SharedOp::Write(_, v)) => {
                    MaskedPending::WriteSomewhere(v)
                }
                (AdversaryClass::ReadWriteOblivious, op) => MaskedPending::Touch(op.register()),
                (AdversaryClass::Strong, SharedOp::Read(r)) => MaskedPending::Read(r),
                (AdversaryClass::Strong, SharedOp::Write(r, v)) => MaskedPending::Write(r, v),
                (AdversaryClass::Oblivious, _) => unreachable!("handled above"),
            }),
        }
    }
}

/// A scheduler: picks the next process to step, seeing only what its class
/// allows.
pub trait Adversary {
    /// Information class; determines the mask on the views it receives.
    fn class(&self) -> AdversaryClass;
    /// The process to step next. Only called while some process is
    /// unfinished.
    fn next(&mut self, view: &View<'_>) -> ProcessId;
}

fn lowest_unfinished(view: &View<'_>) -> ProcessId {
    (1..=view.num_processes() as u32)
        .map(ProcessId)
        .find(|&p| !view.finished(p))
        .unwrap_or(ProcessId(1))
}

/// Cycles over processes, skipping finished ones.
#[derive(Debug, Clone)]
pub struct RoundRobin {
    class: AdversaryClass,
    cursor: usize,
}

impl RoundRobin {
    /// Round-robin tagged with the given class (it only uses finished
    /// flags, so it is legal at every class).
    pub fn new(class: AdversaryClass) -> Self {
        Self { class, cursor: 0 }
    }
}

impl Adversary for RoundRobin {
    fn class(&self) -> AdversaryClass {
        self.class
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        let k = view.num_processes();
        for offset in 0..k {
            let idx = (self.cursor + offset) % k;
            let pid = ProcessId(idx as u32 + 1);
            if !view.finished(pid) {
                self.cursor = idx + 1;
                return pid;
            }
        }
        ProcessId(1)
    }
}

/// Runs the lowest-numbered unfinished process to completion, then the
/// next: the fully sequential (solo) schedule.
#[derive(Debug, Clone)]
pub struct Sequential {
    class: AdversaryClass,
}

impl Sequential {
    /// Sequential scheduler tagged with the given class.
    pub fn new(class: AdversaryClass) -> Self {
        Self { class }
    }
}

impl Adversary for Sequential {
    fn class(&self) -> AdversaryClass {
        self.class
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        lowest_unfinished(view)
    }
}

/// Schedules a uniformly random process each step, finished or not; slots
/// landing on finished processes are spent as noops. As a pure function of
/// its own stream this is the canonical oblivious randomized scheduler.
#[derive(Debug, Clone)]
pub struct RandomSchedule {
    class: AdversaryClass,
    rng: SplitMix64,
}

impl RandomSchedule {
    /// Uniform scheduler with its own deterministic stream.
    pub fn new(class: AdversaryClass, seed: u64) -> Self {
        Self {
            class,
            rng: SplitMix64::new(seed),
        }
    }
}

impl Adversary for RandomSchedule {
    fn class(&self) -> AdversaryClass {
        self.class
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        ProcessId(self.rng.below(view.num_processes() as u64) as u32 + 1)
    }
}

/// Plays back a fixed schedule. Used by schedule-enumeration runs, which
/// set the step limit to the schedule length.
#[derive(Debug, Clone)]
pub struct FromSchedule {
    seq: Vec<ProcessId>,
    cursor: usize,
}

impl FromSchedule {
    /// Scheduler that replays `seq` verbatim.
    pub fn new(seq: Vec<ProcessId>) -> Self {
        Self { seq, cursor: 0 }
    }
}

impl Adversary for FromSchedule {
    fn class(&self) -> AdversaryClass {
        AdversaryClass::Oblivious
    }

    fn next(&mut self, _view: &View<'_>) -> ProcessId {
        let pid = self.seq[self.cursor];
        self.cursor += 1;
        pid
    }
}

/// Location-oblivious scheduler that prioritizes pending operations by
/// kind: the preferred kind first, then coin steps (to force machines to
/// reveal their next kind), then the other kind; lowest process id breaks
/// ties.
#[derive(Debug, Clone)]
pub struct KindPreference {
    prefer_writes: bool,
}

impl KindPreference {
    /// Prefer pending reads.
    pub fn readers_first() -> Self {
        Self {
            prefer_writes: false,
        }
    }

    /// Prefer pending writes.
    pub fn writers_first() -> Self {
        Self {
            prefer_writes: true,
        }
    }
}

impl Adversary for KindPreference {
    fn class(&self) -> AdversaryClass {
        AdversaryClass::LocationOblivious
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        let rank = |pid: ProcessId| -> Option<u8> {
            match view.pending(pid)? {
                MaskedPending::ReadSomewhere => Some(if self.prefer_writes { 2 } else { 0 }),
                MaskedPending::WriteSomewhere(_) => Some(if self.prefer_writes { 0 } else { 2 }),
                MaskedPending::Coin => Some(1),
                // Unreachable at this class, but harmless to rank.
                _ => Some(2),
            }
        };
        (1..=view.num_processes() as u32)
            .map(ProcessId)
            .filter_map(|p| rank(p).map(|r| (r, p)))
            .min()
            .map(|(_, p)| p)
            .unwrap_or(ProcessId(1))
    }
}

/// Read/write-oblivious scheduler that always steps the pending operation
/// on the lowest (or highest) register; processes at a coin step run only
/// when no shared operation is pending.
#[derive(Debug, Clone)]
pub struct RegisterOrder {
    take_max: bool,
}

impl RegisterOrder {
    /// Always step the pending operation with the minimum register id.
    pub fn min_register() -> Self {
        Self { take_max: false }
    }

    /// Always step the pending operation with the maximum register id.
    pub fn max_register() -> Self {
        Self { take_max: true }
    }
}

impl Adversary for RegisterOrder {
    fn class(&self) -> AdversaryClass {
        AdversaryClass::ReadWriteOblivious
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        let mut best: Option<(u32, ProcessId)> = None;
        for pid in (1..=view.num_processes() as u32).map(ProcessId) {
            if let Some(MaskedPending::Touch(reg)) = view.pending(pid) {
                let better = match best {
                    None => true,
                    Some((r, _)) => {
                        if self.take_max {
                            reg.0 > r
                        } else {
                            reg.0 < r
                        }
                    }
                };
                if better {
                    best = Some((reg.0, pid));
                }
            }
        }
        best.map(|(_, p)| p).unwrap_or_else(|| lowest_unfinished(view))
    }
}

/// Strong scheduler that picks uniformly among unfinished processes.
#[derive(Debug, Clone)]
pub struct StrongRandom {
    rng: SplitMix64,
}

impl StrongRandom {
    /// Uniform-over-unfinished scheduler with its own stream.
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
        }
    }
}

impl Adversary for StrongRandom {
    fn class(&self) -> AdversaryClass {
        AdversaryClass::Strong
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        let alive: Vec<ProcessId> = (1..=view.num_processes() as u32)
            .map(ProcessId)
            .filter(|&p| !view.finished(p))
            .collect();
        if alive.is_empty() {
            return ProcessId(1);
        }
        alive[self.rng.below(alive.len() as u64) as usize]
    }
}

/// Strong attack on the two-step election protocol: completes processes
/// one at a time in ascending order of the level they drew, so every read
/// of a level-occupancy register happens before anything is written there
/// and *every* participant gets elected.
///
/// Three rules, first match wins (ties to the lowest process id):
/// 1. a process that already took a shared step is run until it finishes;
/// 2. otherwise a process that has not flipped its coin yet takes one step,
///    revealing its level as the register of its now-pending write;
/// 3. otherwise the process whose pending write has the lowest register id
///    takes a step.
///
/// Only meaningful against that protocol; run configuration rejects other
/// pairings.
#[derive(Debug, Clone, Default)]
pub struct AscendingAttack {
    scheduled: Vec<u64>,
}

impl AscendingAttack {
    /// Fresh attack state.
    pub fn new() -> Self {
        Self::default()
    }
}

impl Adversary for AscendingAttack {
    fn class(&self) -> AdversaryClass {
        AdversaryClass::Strong
    }

    fn next(&mut self, view: &View<'_>) -> ProcessId {
        let k = view.num_processes();
        if self.scheduled.len() != k {
            self.scheduled = vec![0; k];
        }
        let pids = (1..=k as u32).map(ProcessId);
        // Machines alternate coin/shared starting with a coin, and this
        // attack never schedules finished processes, so two slots spent on
        // a process mean it has taken at least one shared step.
        let pick = pids
            .clone()
            .find(|&p| !view.finished(p) && self.scheduled[p.idx()] >= 2)
            .or_else(|| {
                pids.clone()
                    .find(|&p| !view.finished(p) && self.scheduled[p.idx()] == 0)
            })
            .or_else(|| {
                pids.filter(|&p| !view.finished(p))
                    .min_by_key(|&p| match view.pending(p) {
                        Some(MaskedPending::Write(reg, _)) => reg.0,
                        Some(MaskedPending::Read(reg)) => reg.0,
                        // A pending coin reveals no target; run it last.
                        _ => u32::MAX,
                    })
            })
            .unwrap_or(ProcessId(1));
        self.scheduled[pick.idx()] += 1;
        pick
    }
}

/// Parsed scheduler identifier, the `<class>:<strategy>` strings accepted
/// on the command line and reported in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryId {
    /// `oblivious:roundrobin`
    ObliviousRoundRobin,
    /// `oblivious:sequential`
    ObliviousSequential,
    /// `oblivious:random`
    ObliviousRandom,
    /// `locobl:roundrobin`
    LocOblRoundRobin,
    /// `locobl:random`
    LocOblRandom,
    /// `locobl:sequential`
    LocOblSequential,
    /// `locobl:readerfirst`
    LocOblReaderFirst,
    /// `locobl:writerfirst`
    LocOblWriterFirst,
    /// `rwobl:roundrobin`
    RwOblRoundRobin,
    /// `rwobl:random`
    RwOblRandom,
    /// `rwobl:sequential`
    RwOblSequential,
    /// `rwobl:minreg`
    RwOblMinReg,
    /// `rwobl:maxreg`
    RwOblMaxReg,
    /// `strong:ascending`
    StrongAscending,
    /// `strong:full:random`
    StrongFullRandom,
}

/// Error for an adversary id that matches no known scheduler.
#[derive(Debug, Error, PartialEq, Eq)]
#[error(
    "unknown adversary id `{0}`; expected one of \
     oblivious:{{roundrobin|sequential|random}}, \
     locobl:{{roundrobin|random|sequential|readerfirst|writerfirst}}, \
     rwobl:{{roundrobin|random|sequential|minreg|maxreg}}, \
     strong:ascending, strong:full:random"
)]
pub struct ParseAdversaryError(pub String);

impl AdversaryId {
    /// Every recognized scheduler id.
    pub const ALL: [AdversaryId; 15] = [
        AdversaryId::ObliviousRoundRobin,
        AdversaryId::ObliviousSequential,
        AdversaryId::ObliviousRandom,
        AdversaryId::LocOblRoundRobin,
        AdversaryId::LocOblRandom,
        AdversaryId::LocOblSequential,
        AdversaryId::LocOblReaderFirst,
        AdversaryId::LocOblWriterFirst,
        AdversaryId::RwOblRoundRobin,
        AdversaryId::RwOblRandom,
        AdversaryId::RwOblSequential,
        AdversaryId::RwOblMinReg,
        AdversaryId::RwOblMaxReg,
        AdversaryId::StrongAscending,
        AdversaryId::StrongFullRandom,
    ];

    /// The scheduler's information class.
    pub fn class(self) -> AdversaryClass {
        use AdversaryId::*;
        match self {
            ObliviousRoundRobin | ObliviousSequential | ObliviousRandom => {
                AdversaryClass::Oblivious
            }
            LocOblRoundRobin | LocOblRandom | LocOblSequential | LocOblReaderFirst
            | LocOblWriterFirst => AdversaryClass::LocationOblivious,
            RwOblRoundRobin | RwOblRandom | RwOblSequential | RwOblMinReg | RwOblMaxReg => {
                AdversaryClass::ReadWriteOblivious
            }
            StrongAscending | StrongFullRandom => AdversaryClass::Strong,
        }
    }

    /// Whether this scheduler is an attack crafted for one specific
    /// protocol (run configuration restricts its pairing).
    pub fn is_targeted_attack(self) -> bool {
        self == AdversaryId::StrongAscending
    }

    /// Instantiate the scheduler. `seed` feeds the stream of randomized
    /// strategies and is ignored by deterministic ones.
    pub fn build(self, seed: u64) -> Box<dyn Adversary> {
        use AdversaryId::*;
        match self {
            ObliviousRoundRobin => Box::new(RoundRobin::new(AdversaryClass::Oblivious)),
            ObliviousSequential => Box::new(Sequential::new(AdversaryClass::Oblivious)),
            ObliviousRandom => Box::new(RandomSchedule::new(AdversaryClass::Oblivious, seed)),
            LocOblRoundRobin => Box::new(RoundRobin::new(AdversaryClass::LocationOblivious)),
            LocOblRandom => Box::new(RandomSchedule::new(
                AdversaryClass::LocationOblivious,
                seed,
            )),
            LocOblSequential => Box::new(Sequential::new(AdversaryClass::LocationOblivious)),
            LocOblReaderFirst => Box::new(KindPreference::readers_first()),
            LocOblWriterFirst => Box::new(KindPreference::writers_first()),
            RwOblRoundRobin => Box::new(RoundRobin::new(AdversaryClass::ReadWriteOblivious)),
            RwOblRandom => Box::new(RandomSchedule::new(
                AdversaryClass::ReadWriteOblivious,
                seed,
            )),
            RwOblSequential => Box::new(Sequential::new(AdversaryClass::ReadWriteOblivious)),
            RwOblMinReg => Box::new(RegisterOrder::min_register()),
            RwOblMaxReg => Box::new(RegisterOrder::max_register()),
            StrongAscending => Box::new(AscendingAttack::new()),
            StrongFullRandom => Box::new(StrongRandom::new(seed)),
        }
    }
}

impl std::fmt::Display for AdversaryId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use AdversaryId::*;
        let s = match self {
            ObliviousRoundRobin => "oblivious:roundrobin",
            ObliviousSequential => "oblivious:sequential",
            ObliviousRandom => "oblivious:random",
            LocOblRoundRobin => "locobl:roundrobin",
            LocOblRandom => "locobl:random",
            LocOblSequential => "locobl:sequential",
            LocOblReaderFirst => "locobl:readerfirst",
            LocOblWriterFirst => "locobl:writerfirst",
            RwOblRoundRobin => "rwobl:roundrobin",
            RwOblRandom => "rwobl:random",
            RwOblSequential => "rwobl:sequential",
            RwOblMinReg => "rwobl:minreg",
            RwOblMaxReg => "rwobl:maxreg",
            StrongAscending => "strong:ascending",
            StrongFullRandom => "strong:full:random",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AdversaryId {
    type Err = ParseAdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use AdversaryId::*;
        Ok(match s {
            "oblivious:roundrobin" => ObliviousRoundRobin,
            "oblivious:sequential" => ObliviousSequential,
            "oblivious:random" => ObliviousRandom,
            "locobl:roundrobin" => LocOblRoundRobin,
            "locobl:random" => LocOblRandom,
            "locobl:sequential" => LocOblSequential,
            "locobl:readerfirst" => LocOblReaderFirst,
            "locobl:writerfirst" => LocOblWriterFirst,
            "rwobl:roundrobin" => RwOblRoundRobin,
            "rwobl:random" => RwOblRandom,
            "rwobl:sequential" => RwOblSequential,
            "rwobl:minreg" => RwOblMinReg,
            "rwobl:maxreg" => RwOblMaxReg,
            "strong:ascending" => StrongAscending,
            // `full-random` is accepted as a spelling of the same strategy.
            "strong:full:random" | "strong:full-random" => StrongFullRandom,
            other => return Err(ParseAdversaryError(other.to_string())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with(pendings: Vec<Pending>) -> ViewState {
        let k = pendings.len();
        let mut st = ViewState::new(k);
        st.pendings = pendings;
        st
    }

    #[test]
    fn ids_round_trip_and_reject_junk() {
        for id in AdversaryId::ALL {
            let s = id.to_string();
            assert_eq!(s.parse::<AdversaryId>().unwrap(), id, "{s}");
        }
        assert_eq!(
            "strong:full-random".parse::<AdversaryId>().unwrap(),
            AdversaryId::StrongFullRandom
        );
        assert!("oblivious:minreg".parse::<AdversaryId>().is_err());
        assert!("strong".parse::<AdversaryId>().is_err());
        assert!("".parse::<AdversaryId>().is_err());
    }

    #[test]
    fn masks_expose_exactly_the_class_information() {
        let reg = RegisterId(7);
        let mut st = state_with(vec![
            Pending::AtShared(SharedOp::Write(reg, 5)),
            Pending::AtShared(SharedOp::Read(reg)),
            Pending::AtCoin,
            Pending::Finished,
        ]);
        st.coins[0] = vec![1, 2, 3];
        st.coins_visible[0] = 2;
        st.schedule = vec![ProcessId(1), ProcessId(1)];
        let p1 = ProcessId(1);
        let p4 = ProcessId(4);

        let obl = st.view(AdversaryClass::Oblivious);
        assert_eq!(obl.steps(), 2);
        assert!(obl.finished(p4) && !obl.finished(p1));
        assert_eq!(obl.schedule(), None);
        assert_eq!(obl.coins(p1), None);
        assert_eq!(obl.pending(p1), None);

        let loc = st.view(AdversaryClass::LocationOblivious);
        assert_eq!(loc.schedule().unwrap().len(), 2);
        assert_eq!(loc.coins(p1).unwrap(), &[1, 2]);
        assert_eq!(loc.pending(p1), Some(MaskedPending::WriteSomewhere(5)));
        assert_eq!(loc.pending(ProcessId(2)), Some(MaskedPending::ReadSomewhere));
        assert_eq!(loc.pending(ProcessId(3)), Some(MaskedPending::Coin));
        assert_eq!(loc.pending(p4), None);

        let rw = st.view(AdversaryClass::ReadWriteOblivious);
        assert_eq!(rw.coins(p1).unwrap(), &[1, 2]);
        assert_eq!(rw.pending(p1), Some(MaskedPending::Touch(reg)));
        assert_eq!(rw.pending(ProcessId(2)), Some(MaskedPending::Touch(reg)));

        let strong = st.view(AdversaryClass::Strong);
        assert_eq!(strong.coins(p1).unwrap(), &[1, 2, 3]);
        assert_eq!(strong.pending(p1), Some(MaskedPending::Write(reg, 5)));
        assert_eq!(strong.pending(ProcessId(2)), Some(MaskedPending::Read(reg)));
    }

    #[test]
    fn round_robin_cycles_and_skips_finished() {
        let st = state_with(vec![Pending::AtCoin, Pending::Finished, Pending::AtCoin]);
        let view = st.view(AdversaryClass::Oblivious);
        let mut rr = RoundRobin::new(AdversaryClass::Oblivious);
        let picks: Vec<u32> = (0..4).map(|_| rr.next(&view).0).collect();
        assert_eq!(picks, vec![1, 3, 1, 3]);
    }

    #[test]
    fn sequential_always_takes_the_lowest_unfinished() {
        let st = state_with(vec![Pending::Finished, Pending::AtCoin, Pending::AtCoin]);
        let view = st.view(AdversaryClass::Oblivious);
        let mut seq = Sequential::new(AdversaryClass::Oblivious);
        assert_eq!(seq.next(&view).0, 2);
        assert_eq!(seq.next(&view).0, 2);
    }

    #[test]
    fn from_schedule_replays_verbatim() {
        let mut fs = FromSchedule::new(vec![ProcessId(2), ProcessId(2), ProcessId(1)]);
        let st = ViewState::new(2);
        let view = st.view(AdversaryClass::Oblivious);
        assert_eq!(fs.next(&view).0, 2);
        assert_eq!(fs.next(&view).0, 2);
        assert_eq!(fs.next(&view).0, 1);
    }

    #[test]
    fn kind_preference_ranks_preferred_kind_then_coins() {
        let reg = RegisterId(0);
        let st = state_with(vec![
            Pending::AtShared(SharedOp::Write(reg, 1)),
            Pending::AtCoin,
            Pending::AtShared(SharedOp::Read(reg)),
        ]);
        let view = st.view(AdversaryClass::LocationOblivious);
        assert_eq!(KindPreference::readers_first().next(&view).0, 3);
        assert_eq!(KindPreference::writers_first().next(&view).0, 1);

        // With no pending op of either kind, coins run.
        let st = state_with(vec![Pending::Finished, Pending::AtCoin]);
        let view = st.view(AdversaryClass::LocationOblivious);
        assert_eq!(KindPreference::readers_first().next(&view).0, 2);
    }

    #[test]
    fn register_order_picks_extremal_registers() {
        let st = state_with(vec![
            Pending::AtShared(SharedOp::Read(RegisterId(9))),
            Pending::AtShared(SharedOp::Write(RegisterId(3), 1)),
            Pending::AtCoin,
        ]);
        let view = st.view(AdversaryClass::ReadWriteOblivious);
        assert_eq!(RegisterOrder::min_register().next(&view).0, 2);
        assert_eq!(RegisterOrder::max_register().next(&view).0, 1);

        // Only coins pending: fall back to the lowest unfinished process.
        let st = state_with(vec![Pending::Finished, Pending::AtCoin]);
        let view = st.view(AdversaryClass::ReadWriteOblivious);
        assert_eq!(RegisterOrder::min_register().next(&view).0, 2);
    }

    #[test]
    fn ascending_attack_flushes_coins_then_ascends_registers() {
        // Two processes, both at their first coin.
        let mut attack = AscendingAttack::new();
        let st = state_with(vec![Pending::AtCoin, Pending::AtCoin]);
        let view = st.view(AdversaryClass::Strong);
        // Rule 2 twice: give each process its coin flip.
        assert_eq!(attack.next(&view).0, 1);
        assert_eq!(attack.next(&view).0, 2);

        // Both now hold pending writes; rule 3 picks the lower register.
        let st = state_with(vec![
            Pending::AtShared(SharedOp::Write(RegisterId(4), 1)),
            Pending::AtShared(SharedOp::Write(RegisterId(2), 1)),
        ]);
        let view = st.view(AdversaryClass::Strong);
        assert_eq!(attack.next(&view).0, 2);

        // Process 2 took a shared step; rule 1 keeps driving it.
        let st = state_with(vec![
            Pending::AtShared(SharedOp::Write(RegisterId(4), 1)),
            Pending::AtCoin,
        ]);
        let view = st.view(AdversaryClass::Strong);
        assert_eq!(attack.next(&view).0, 2);
        assert_eq!(attack.next(&view).0, 2);

        // Once it finishes, the remaining process is driven to completion.
        let st = state_with(vec![
            Pending::AtShared(SharedOp::Write(RegisterId(4), 1)),
            Pending::Finished,
        ]);
        let view = st.view(AdversaryClass::Strong);
        assert_eq!(attack.next(&view).0, 1);
    }

    #[test]
    fn strong_random_only_picks_unfinished() {
        let st = state_with(vec![
            Pending::Finished,
            Pending::AtCoin,
            Pending::Finished,
            Pending::AtCoin,
        ]);
        let view = st.view(AdversaryClass::Strong);
        let mut adv = StrongRandom::new(11);
        for _ in 0..50 {
            let p = adv.next(&view);
            assert!(p.0 == 2 || p.0 == 4);
        }
    }
}

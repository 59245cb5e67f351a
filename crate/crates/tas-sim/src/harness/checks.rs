//! Per-trial invariant checks and metrics, derived from the event log and
//! the register layout alone.
//!
//! Nothing here inspects machine internals: every property is recomputed
//! from the sequence of shared-memory events, the final statuses, and the
//! layout's object map. That keeps the checks independent of the
//! implementations they audit — a machine that misbehaves produces a log
//! that fails these checks, no matter how it misbehaved internally.

use std::collections::{BTreeMap, BTreeSet};

use crate::algorithms::{AlgorithmId, Layout, ObjectInfo, ObjectKind, ObjectTag, Owner};
use crate::sim::{EventKind, Execution, Outcome, ProcessId, Status, Value};

/// Per-trial scalar results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialMetrics {
    /// Largest number of shared-memory steps any one process performed.
    pub max_step: u64,
    /// Processes that finished with a winning outcome (the winner for
    /// test-and-set, the elected set for elections).
    pub winners: u32,
    /// Whether every process finished.
    pub completed: bool,
    /// Deepest cascade round any process touched (cascade algorithms
    /// only).
    pub jstar: Option<u32>,
    /// Most distinct processes that entered any one leaf splitter of the
    /// tree (tree-bearing algorithms only).
    pub max_leaf_load: Option<u32>,
}

/// Classes of invariant violation, each with a stable kebab-case id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    /// A read observed a value other than the latest preceding write (or
    /// an event touched a register outside the layout).
    Atomicity,
    /// A process's events did not alternate coin, shared, coin, shared.
    Alternation,
    /// A process had events after finishing, or noop markers before.
    FinishedNotSilent,
    /// The run was cut off by the step limit before all processes
    /// finished.
    StepLimit,
    /// More than one process won the test-and-set.
    MultipleWinners,
    /// Everyone finished the test-and-set but nobody won.
    NoWinner,
    /// Everyone finished the election but nobody was elected.
    NobodyElected,
    /// A loser finished strictly before the winner's first step, so no
    /// sequential order of the operations is consistent with one winner
    /// going first.
    Linearization,
    /// Doorway ops were not "one read, then at most one write of 1 after
    /// reading 0".
    DoorwayShape,
    /// Splitter ops deviated from write-name / read-gate / write-gate /
    /// read-name.
    SplitterShape,
    /// A splitter deflected every entrant left.
    SplitterLeftOverflow,
    /// A splitter deflected every entrant right.
    SplitterRightOverflow,
    /// A splitter was captured by two processes.
    SplitterMultiStop,
    /// A splitter's sole entrant resolved without capturing it.
    SplitterSoloNotStop,
    /// Race ops deviated from alternating write-mine / read-theirs with
    /// positions starting at 1 and climbing by at most 1.
    RaceShape,
    /// Two distinct processes wrote the same race register.
    RaceRegisterContention,
    /// Both sides of a two-process race won.
    RaceTwoWinners,
    /// Both sides of a two-process race completed and lost.
    RaceBothLost,
    /// Two-step election ops were not "write level mark, read next
    /// level".
    TwoStepShape,
    /// Climb election ops left the protocol's legal state graph.
    ClimbShape,
    /// A process that marked the lowest written descent level completed
    /// without being elected.
    ClimbMinDownLost,
    /// A process that marked the highest written ascent level was
    /// rejected by an ascent read.
    ClimbMaxUpLost,
    /// An elimination path node was visited by more processes than its
    /// position allows.
    PathOverflow,
    /// A process fell off the end of the backup path.
    BackupFellOff,
    /// A process fell off the end of the cascade chain.
    ChainFellOff,
    /// A cascade chain round was visited by at least as many processes
    /// as the round before it.
    ChainNotThinning,
    /// A process entered the overall final race without winning its
    /// side's component first.
    CombTopSource,
}

impl ViolationKind {
    /// Stable kebab-case identifier.
    pub fn id(self) -> &'static str {
        use ViolationKind::*;
        match self {
            Atomicity => "atomicity",
            Alternation => "alternation",
            FinishedNotSilent => "finished-not-silent",
            StepLimit => "step-limit",
            MultipleWinners => "multiple-winners",
            NoWinner => "no-winner",
            NobodyElected => "nobody-elected",
            Linearization => "linearization",
            DoorwayShape => "doorway-shape",
            SplitterShape => "splitter-shape",
            SplitterLeftOverflow => "splitter-left-overflow",
            SplitterRightOverflow => "splitter-right-overflow",
            SplitterMultiStop => "splitter-multi-stop",
            SplitterSoloNotStop => "splitter-solo-not-stop",
            RaceShape => "race-shape",
            RaceRegisterContention => "race-register-contention",
            RaceTwoWinners => "race-two-winners",
            RaceBothLost => "race-both-lost",
            TwoStepShape => "twostep-shape",
            ClimbShape => "climb-shape",
            ClimbMinDownLost => "climb-min-down-lost",
            ClimbMaxUpLost => "climb-max-up-lost",
            PathOverflow => "path-overflow",
            BackupFellOff => "backup-fell-off",
            ChainFellOff => "chain-fell-off",
            ChainNotThinning => "chain-not-thinning",
            CombTopSource => "comb-top-source",
        }
    }
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// One detected invariant violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Trial the violation occurred in.
    pub trial: u64,
    /// Violation class.
    pub kind: ViolationKind,
    /// Human-readable specifics.
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "trial {}: {}: {}", self.trial, self.kind, self.detail)
    }
}

/// One shared-memory operation attributed to an object.
#[derive(Debug, Clone, Copy)]
struct OpRec {
    pid: u32,
    write: bool,
    /// Register offset within the object.
    off: u32,
    val: Value,
    idx: u64,
}

/// How a process left a splitter, as reconstructed from its ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SplitOut {
    Left,
    Right,
    Stop,
}

/// How a process left a race side, as reconstructed from its ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RaceOut {
    Won,
    Lost,
}

/// How a process left a climb election, as reconstructed from its ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClimbOut {
    Won,
    LostViaUp,
    LostViaDown,
}

struct Checker<'a> {
    layout: &'a Layout,
    exec: &'a Execution,
    trial: u64,
    violations: Vec<Violation>,
    /// Per-object op lists, in event order, aligned with
    /// `layout.objects`.
    object_ops: Vec<Vec<OpRec>>,
}

impl<'a> Checker<'a> {
    fn flag(&mut self, kind: ViolationKind, detail: String) {
        self.violations.push(Violation {
            trial: self.trial,
            kind,
            detail,
        });
    }

    /// Replay every event against shadow registers, flagging reads that
    /// disagree and events outside the layout, while distributing ops to
    /// their objects.
    fn scan_events(&mut self) {
        let mut shadow = vec![0 as Value; self.layout.total_registers as usize];
        for e in &self.exec.events {
            let (reg, val, write) = match e.kind {
                EventKind::Read { reg, val } => (reg, val, false),
                EventKind::Write { reg, val } => (reg, val, true),
                _ => continue,
            };
            if reg.0 >= self.layout.total_registers {
                self.flag(
                    ViolationKind::Atomicity,
                    format!("event {}: register {} outside the layout", e.index, reg.0),
                );
                continue;
            }
            if write {
                shadow[reg.0 as usize] = val;
            } else if shadow[reg.0 as usize] != val {
                self.flag(
                    ViolationKind::Atomicity,
                    format!(
                        "event {}: process {} read {} from register {}, latest write was {}",
                        e.index, e.pid.0, val, reg.0, shadow[reg.0 as usize]
                    ),
                );
            }
            let obj = self
                .layout
                .object_index_at(reg)
                .expect("register inside the layout belongs to an object");
            self.object_ops[obj].push(OpRec {
                pid: e.pid.0,
                write,
                off: reg.0 - self.layout.objects[obj].base,
                val,
                idx: e.index,
            });
        }
    }

    /// Per process: coin and shared events must strictly alternate
    /// starting with a coin, noop markers must appear only after the
    /// process finished, and nothing may follow its finishing event.
    fn check_alternation_and_silence(&mut self) {
        let k = self.exec.statuses.len();
        let mut expect_coin = vec![true; k];
        for e in &self.exec.events {
            let p = e.pid.idx();
            let response = self.exec.responses[p];
            match e.kind {
                EventKind::Noop => {
                    if response.map_or(true, |r| e.index <= r) {
                        self.flag(
                            ViolationKind::FinishedNotSilent,
                            format!(
                                "event {}: noop marker for process {} before it finished",
                                e.index, e.pid.0
                            ),
                        );
                    }
                }
                kind => {
                    if let Some(r) = response {
                        if e.index > r {
                            self.flag(
                                ViolationKind::FinishedNotSilent,
                                format!(
                                    "event {}: process {} acted after finishing at event {}",
                                    e.index, e.pid.0, r
                                ),
                            );
                        }
                    }
                    let is_coin = matches!(kind, EventKind::Coin { .. });
                    if is_coin != expect_coin[p] {
                        self.flag(
                            ViolationKind::Alternation,
                            format!(
                                "event {}: process {} took a {} step, expected a {} step",
                                e.index,
                                e.pid.0,
                                if is_coin { "coin" } else { "shared" },
                                if expect_coin[p] { "coin" } else { "shared" },
                            ),
                        );
                    }
                    expect_coin[p] = !is_coin;
                }
            }
        }
    }

    /// Status-level outcome checks: step limit, winner uniqueness and
    /// existence, and the sequential-consistency proxy.
    fn check_outcomes(&mut self, metrics: &TrialMetrics) {
        if self.exec.hit_step_limit {
            self.flag(
                ViolationKind::StepLimit,
                format!(
                    "run stopped at the step limit with {} of {} processes finished",
                    self.exec
                        .statuses
                        .iter()
                        .filter(|s| matches!(s, Status::Finished(_)))
                        .count(),
                    self.exec.statuses.len()
                ),
            );
        }
        if self.layout.algorithm.is_tas() {
            if metrics.winners > 1 {
                self.flag(
                    ViolationKind::MultipleWinners,
                    format!("{} processes won the test-and-set", metrics.winners),
                );
            }
            if metrics.completed && metrics.winners == 0 {
                self.flag(
                    ViolationKind::NoWinner,
                    "all processes finished and none won".to_string(),
                );
            }
            self.check_linearization();
        } else if metrics.completed && metrics.winners == 0 {
            self.flag(
                ViolationKind::NobodyElected,
                "all processes finished and none was elected".to_string(),
            );
        }
    }

    /// If some process won, no loser may have finished before the winner
    /// even started: that loser's operation would have to be ordered
    /// first, and a first test-and-set must win.
    fn check_linearization(&mut self) {
        let winner = self.exec.statuses.iter().position(
            |s| matches!(s, Status::Finished(Outcome::Tas { won: true })),
        );
        let Some(widx) = winner else { return };
        let wpid = ProcessId(widx as u32 + 1);
        let Some(invocation) = self.exec.invocation(wpid) else {
            return;
        };
        for (i, s) in self.exec.statuses.iter().enumerate() {
            if !matches!(s, Status::Finished(Outcome::Tas { won: false })) {
                continue;
            }
            if let Some(resp) = self.exec.responses[i] {
                if resp < invocation {
                    self.flag(
                        ViolationKind::Linearization,
                        format!(
                            "process {} lost and finished at event {}, before winner {} \
                             started at event {}",
                            i + 1,
                            resp,
                            wpid.0,
                            invocation
                        ),
                    );
                }
            }
        }
    }

    /// Group an object's ops by process, preserving event order.
    fn ops_by_pid(ops: &[OpRec]) -> BTreeMap<u32, Vec<OpRec>> {
        let mut by_pid: BTreeMap<u32, Vec<OpRec>> = BTreeMap::new();
        for op in ops {
            by_pid.entry(op.pid).or_default().push(*op);
        }
        by_pid
    }

    fn check_doorway(&mut self, obj: &ObjectInfo, ops: &[OpRec]) {
        for (pid, pid_ops) in Self::ops_by_pid(ops) {
            let shape = |checker: &mut Self, what: &str, idx: u64| {
                checker.flag(
                    ViolationKind::DoorwayShape,
                    format!(
                        "doorway at register {}: process {pid}: {what} (event {idx})",
                        obj.base
                    ),
                );
            };
            let first = pid_ops[0];
            if first.write {
                shape(self, "wrote the gate before reading it", first.idx);
                continue;
            }
            if first.val != 0 {
                if pid_ops.len() > 1 {
                    shape(self, "acted again after a closed gate", pid_ops[1].idx);
                }
                continue;
            }
            match pid_ops.len() {
                1 => {}
                2 => {
                    let w = pid_ops[1];
                    if !w.write || w.val != 1 {
                        shape(self, "second op was not a write of 1", w.idx);
                    }
                }
                _ => shape(self, "more than two gate ops", pid_ops[2].idx),
            }
        }
    }

    /// Reconstruct one process's exit from a splitter. Returns the exit
    /// (None while unresolved) or flags a shape violation and returns
    /// None. Deterministic and randomized splitters share one trace
    /// grammar; only the meaning of a non-capture exit differs.
    fn splitter_exit(
        &mut self,
        obj: &ObjectInfo,
        pid: u32,
        ops: &[OpRec],
    ) -> Option<SplitOut> {
        let me = Value::from(pid);
        let shape = |checker: &mut Self, what: &str, idx: u64| {
            checker.flag(
                ViolationKind::SplitterShape,
                format!(
                    "splitter at register {}: process {pid}: {what} (event {idx})",
                    obj.base
                ),
            );
        };
        let expect: [(bool, u32); 4] = [(true, 0), (false, 1), (true, 1), (false, 0)];
        for (i, op) in ops.iter().enumerate() {
            if i >= 4 {
                shape(self, "more than four ops", op.idx);
                return None;
            }
            if (op.write, op.off) != expect[i] {
                shape(self, "op outside the splitter protocol", op.idx);
                return None;
            }
            match i {
                0 if op.val != me => {
                    shape(self, "name write does not carry the writer's id", op.idx);
                    return None;
                }
                1 if op.val != 0 => {
                    if ops.len() > i + 1 {
                        shape(self, "acted again after a closed gate", ops[i + 1].idx);
                    }
                    return Some(SplitOut::Left);
                }
                2 if op.val != 1 => {
                    shape(self, "gate write was not 1", op.idx);
                    return None;
                }
                3 => {
                    return Some(if op.val == me {
                        SplitOut::Stop
                    } else {
                        SplitOut::Right
                    });
                }
                _ => {}
            }
        }
        None
    }

    /// Per-splitter exit counts: at most one capture; the sole entrant
    /// (if it resolves) captures; for deterministic splitters, no exit
    /// side can take every entrant.
    fn check_splitter(
        &mut self,
        obj: &ObjectInfo,
        ops: &[OpRec],
        randomized: bool,
    ) -> (u32, u32) {
        let by_pid = Self::ops_by_pid(ops);
        let entrants = by_pid.len() as u32;
        let (mut lefts, mut rights, mut stops) = (0u32, 0u32, 0u32);
        for (pid, pid_ops) in &by_pid {
            match self.splitter_exit(obj, *pid, pid_ops) {
                Some(SplitOut::Left) => lefts += 1,
                Some(SplitOut::Right) => rights += 1,
                Some(SplitOut::Stop) => stops += 1,
                None => {}
            }
        }
        let place = format!("splitter at register {} ({:?})", obj.base, obj.tag);
        if stops > 1 {
            self.flag(
                ViolationKind::SplitterMultiStop,
                format!("{place}: captured by {stops} processes"),
            );
        }
        if entrants == 1 && (lefts + rights) > 0 {
            self.flag(
                ViolationKind::SplitterSoloNotStop,
                format!("{place}: the sole entrant was deflected"),
            );
        }
        if !randomized && entrants > 0 {
            if lefts >= entrants {
                self.flag(
                    ViolationKind::SplitterLeftOverflow,
                    format!("{place}: all {entrants} entrants deflected left"),
                );
            }
            if rights >= entrants {
                self.flag(
                    ViolationKind::SplitterRightOverflow,
                    format!("{place}: all {entrants} entrants deflected right"),
                );
            }
        }
        (entrants, rights)
    }

    /// Reconstruct one process's outcome on one side of a two-register
    /// race from its alternating write/read ops.
    fn race_side_outcome(
        &mut self,
        obj: &ObjectInfo,
        pair: (u32, u32),
        pid: u32,
        ops: &[OpRec],
    ) -> Option<RaceOut> {
        let shape = |checker: &mut Self, what: &str, idx: u64| {
            checker.flag(
                ViolationKind::RaceShape,
                format!(
                    "race at registers {}+{:?}: process {pid}: {what} (event {idx})",
                    obj.base, pair
                ),
            );
        };
        let first = ops[0];
        if !first.write {
            shape(self, "read before writing a position", first.idx);
            return None;
        }
        let mine = first.off;
        let theirs = if mine == pair.0 { pair.1 } else { pair.0 };
        let mut pos: Value = 0;
        let mut outcome = None;
        for (i, op) in ops.iter().enumerate() {
            if outcome.is_some() {
                shape(self, "acted again after the race resolved", op.idx);
                return outcome;
            }
            if i % 2 == 0 {
                if !op.write || op.off != mine {
                    shape(self, "expected a write to its own register", op.idx);
                    return None;
                }
                let legal = if i == 0 {
                    op.val == 1
                } else {
                    op.val == pos || op.val == pos + 1
                };
                if !legal {
                    shape(self, "position did not start at 1 or climb by at most 1", op.idx);
                    return None;
                }
                pos = op.val;
            } else {
                if op.write || op.off != theirs {
                    shape(self, "expected a read of the opposing register", op.idx);
                    return None;
                }
                if op.val >= pos + 2 {
                    outcome = Some(RaceOut::Lost);
                } else if op.val <= pos - 3 {
                    outcome = Some(RaceOut::Won);
                }
            }
        }
        outcome
    }

    /// Check one two-register race: at most one writer per register, and
    /// if both sides resolve, exactly one of them wins. Returns each
    /// side's (writer, outcome).
    fn check_race_pair(
        &mut self,
        obj: &ObjectInfo,
        ops: &[OpRec],
        pair: (u32, u32),
    ) -> [Option<(u32, Option<RaceOut>)>; 2] {
        let mut sides: [Option<(u32, Option<RaceOut>)>; 2] = [None, None];
        let mut contended = false;
        for (slot, reg_off) in [pair.0, pair.1].into_iter().enumerate() {
            let writers: BTreeSet<u32> = ops
                .iter()
                .filter(|o| o.write && o.off == reg_off)
                .map(|o| o.pid)
                .collect();
            if writers.len() > 1 {
                self.flag(
                    ViolationKind::RaceRegisterContention,
                    format!(
                        "race register {} written by {} distinct processes",
                        obj.base + reg_off,
                        writers.len()
                    ),
                );
                contended = true;
            }
            if let Some(&pid) = writers.iter().next() {
                sides[slot] = Some((pid, None));
            }
        }
        if contended {
            return sides;
        }
        for side in sides.iter_mut().flatten() {
            let pid = side.0;
            let pid_ops: Vec<OpRec> = ops
                .iter()
                .filter(|o| o.pid == pid && (o.off == pair.0 || o.off == pair.1))
                .copied()
                .collect();
            side.1 = self.race_side_outcome(obj, pair, pid, &pid_ops);
        }
        let outcomes: Vec<RaceOut> = sides
            .iter()
            .flatten()
            .filter_map(|(_, out)| *out)
            .collect();
        if outcomes.len() == 2 {
            let wins = outcomes.iter().filter(|o| **o == RaceOut::Won).count();
            if wins == 2 {
                self.flag(
                    ViolationKind::RaceTwoWinners,
                    format!("race at register {}+{:?}: both sides won", obj.base, pair),
                );
            } else if wins == 0 {
                self.flag(
                    ViolationKind::RaceBothLost,
                    format!(
                        "race at register {}+{:?}: both sides completed and lost",
                        obj.base, pair
                    ),
                );
            }
        }
        sides
    }

    /// Check a three-way race node: its preliminary and final
    /// two-register races, plus the rule that only the preliminary
    /// winner may enter the final's first side.
    fn check_tas3(&mut self, obj: &ObjectInfo, ops: &[OpRec]) {
        let prelim = self.check_race_pair(obj, ops, (0, 1));
        let fin = self.check_race_pair(obj, ops, (2, 3));
        if let Some((pid, _)) = fin[0] {
            let prelim_won = prelim
                .iter()
                .flatten()
                .any(|(p, out)| *p == pid && *out == Some(RaceOut::Won));
            if !prelim_won {
                self.flag(
                    ViolationKind::RaceShape,
                    format!(
                        "race at register {}: process {pid} entered the final side \
                         without winning the preliminary",
                        obj.base
                    ),
                );
            }
        }
    }

    /// Two-step election: each process writes one level mark, then reads
    /// the next level up.
    fn check_two_step(&mut self, obj: &ObjectInfo, levels: u32, ops: &[OpRec]) {
        for (pid, pid_ops) in Self::ops_by_pid(ops) {
            let shape = |checker: &mut Self, what: &str, idx: u64| {
                checker.flag(
                    ViolationKind::TwoStepShape,
                    format!(
                        "two-step election at register {}: process {pid}: {what} (event {idx})",
                        obj.base
                    ),
                );
            };
            let w = pid_ops[0];
            if !w.write || w.val != 1 || w.off >= levels {
                shape(self, "first op was not a level mark", w.idx);
                continue;
            }
            match pid_ops.len() {
                1 => {}
                2 => {
                    let r = pid_ops[1];
                    if r.write || r.off != w.off + 1 {
                        shape(self, "second op was not a read one level up", r.idx);
                    }
                }
                _ => shape(self, "more than two ops", pid_ops[2].idx),
            }
        }
    }

    /// Climb election: walk each process's ops through the protocol's
    /// state graph (ascend marking levels, turn, descend marking levels)
    /// and then apply two structural rules: whoever marked the lowest
    /// descent level and completed must have won, and whoever marked the
    /// highest ascent level cannot have been rejected by an ascent read.
    fn check_climb(&mut self, obj: &ObjectInfo, levels: u32, ops: &[OpRec]) {
        let up = |i: u32| i - 1; // ascent level i → offset
        let down = |j: u32| levels + j - 1; // descent level j → offset
        let mut outcomes: BTreeMap<u32, ClimbOut> = BTreeMap::new();
        let mut min_down_writer: BTreeMap<u32, u32> = BTreeMap::new(); // pid → lowest j marked
        let mut max_up_writer: BTreeMap<u32, u32> = BTreeMap::new(); // pid → highest i marked
        'pids: for (pid, pid_ops) in Self::ops_by_pid(ops) {
            let shape = |checker: &mut Self, what: &str, idx: u64| {
                checker.flag(
                    ViolationKind::ClimbShape,
                    format!(
                        "climb election at register {}: process {pid}: {what} (event {idx})",
                        obj.base
                    ),
                );
            };
            enum St {
                Back(u32),
                Fwd(u32),
                Done(ClimbOut),
            }
            let mut st = St::Back(1);
            for op in &pid_ops {
                match st {
                    St::Done(_) => {
                        shape(self, "acted again after resolving", op.idx);
                        continue 'pids;
                    }
                    St::Back(i) => {
                        if op.off != up(i) {
                            shape(self, "op off the ascent track", op.idx);
                            continue 'pids;
                        }
                        if op.write {
                            if op.val != 1 {
                                shape(self, "ascent mark was not 1", op.idx);
                                continue 'pids;
                            }
                            max_up_writer
                                .entry(pid)
                                .and_modify(|m| *m = (*m).max(i))
                                .or_insert(i);
                            st = if i == levels {
                                // Turn at the top.
                                if levels == 1 {
                                    St::Done(ClimbOut::Won)
                                } else {
                                    St::Fwd(levels - 1)
                                }
                            } else {
                                St::Back(i + 1)
                            };
                        } else if op.val != 0 {
                            st = St::Done(ClimbOut::LostViaUp);
                        } else if i == 1 {
                            st = St::Done(ClimbOut::Won);
                        } else {
                            st = St::Fwd(i - 1);
                        }
                    }
                    St::Fwd(j) => {
                        if op.off != down(j) {
                            shape(self, "op off the descent track", op.idx);
                            continue 'pids;
                        }
                        if op.write {
                            if op.val != 1 {
                                shape(self, "descent mark was not 1", op.idx);
                                continue 'pids;
                            }
                            min_down_writer
                                .entry(pid)
                                .and_modify(|m| *m = (*m).min(j))
                                .or_insert(j);
                            st = if j == 1 {
                                St::Done(ClimbOut::Won)
                            } else {
                                St::Fwd(j - 1)
                            };
                        } else if op.val != 0 {
                            st = St::Done(ClimbOut::LostViaDown);
                        } else if j == 1 {
                            st = St::Done(ClimbOut::Won);
                        } else {
                            st = St::Fwd(j - 1);
                        }
                    }
                }
            }
            if let St::Done(out) = st {
                outcomes.insert(pid, out);
            }
        }
        if let Some(dmin) = min_down_writer.values().copied().min() {
            for (&pid, &lowest) in &min_down_writer {
                if lowest == dmin {
                    if let Some(out) = outcomes.get(&pid) {
                        if *out != ClimbOut::Won {
                            self.flag(
                                ViolationKind::ClimbMinDownLost,
                                format!(
                                    "climb election at register {}: process {pid} marked \
                                     the lowest descent level {dmin} yet completed unelected",
                                    obj.base
                                ),
                            );
                        }
                    }
                }
            }
        }
        if let Some(umax) = max_up_writer.values().copied().max() {
            for (&pid, &highest) in &max_up_writer {
                if highest == umax && outcomes.get(&pid) == Some(&ClimbOut::LostViaUp) {
                    self.flag(
                        ViolationKind::ClimbMaxUpLost,
                        format!(
                            "climb election at register {}: process {pid} marked the \
                             highest ascent level {umax} yet an ascent read rejected it",
                            obj.base
                        ),
                    );
                }
            }
        }
    }
}

/// Splitter-sequence statistics needed by the cross-object checks.
#[derive(Debug, Default, Clone, Copy)]
struct NodeStat {
    visitors: u32,
    rights: u32,
}

/// Check one trial's execution against the layout and compute its
/// metrics.
pub fn check_trial(layout: &Layout, exec: &Execution, trial: u64) -> (TrialMetrics, Vec<Violation>) {
    let winners = exec
        .statuses
        .iter()
        .filter(|s| matches!(s, Status::Finished(o) if o.won()))
        .count() as u32;
    let completed = exec
        .statuses
        .iter()
        .all(|s| matches!(s, Status::Finished(_)));
    let mut metrics = TrialMetrics {
        max_step: exec.max_step(),
        winners,
        completed,
        jstar: None,
        max_leaf_load: None,
    };

    let mut checker = Checker {
        layout,
        exec,
        trial,
        violations: Vec::new(),
        object_ops: vec![Vec::new(); layout.objects.len()],
    };
    checker.scan_events();
    checker.check_alternation_and_silence();
    checker.check_outcomes(&metrics);

    // Per-object protocol checks, collecting splitter-sequence stats for
    // the cross-object rules below.
    let mut chains: BTreeMap<Owner, BTreeMap<u32, NodeStat>> = BTreeMap::new();
    let mut leaf_paths: BTreeMap<(Owner, u32), BTreeMap<u32, NodeStat>> = BTreeMap::new();
    let mut backups: BTreeMap<Owner, BTreeMap<u32, NodeStat>> = BTreeMap::new();
    let mut tree_loads: BTreeMap<Owner, BTreeMap<u32, u32>> = BTreeMap::new();
    let mut written_objects: Vec<bool> = vec![false; layout.objects.len()];

    let object_ops = std::mem::take(&mut checker.object_ops);
    for (i, (obj, ops)) in layout.objects.iter().zip(&object_ops).enumerate() {
        written_objects[i] = ops.iter().any(|o| o.write);
        if ops.is_empty() {
            continue;
        }
        match obj.kind {
            ObjectKind::Doorway => checker.check_doorway(obj, ops),
            ObjectKind::Splitter => {
                let (visitors, rights) = checker.check_splitter(obj, ops, false);
                let stat = NodeStat { visitors, rights };
                match obj.tag {
                    ObjectTag::LoopSplit(j) => {
                        chains.entry(obj.owner).or_default().insert(j, stat);
                    }
                    ObjectTag::PathSplit { path, node } => {
                        leaf_paths
                            .entry((obj.owner, path))
                            .or_default()
                            .insert(node, stat);
                    }
                    ObjectTag::BackupSplit(node) => {
                        backups.entry(obj.owner).or_default().insert(node, stat);
                    }
                    _ => {}
                }
            }
            ObjectKind::RandomSplitter => {
                let (visitors, _) = checker.check_splitter(obj, ops, true);
                if let ObjectTag::TreeSplit(v) = obj.tag {
                    tree_loads.entry(obj.owner).or_default().insert(v, visitors);
                }
            }
            ObjectKind::Tas2 => {
                checker.check_race_pair(obj, ops, (0, 1));
            }
            ObjectKind::Tas3 => checker.check_tas3(obj, ops),
            ObjectKind::TwoStepElect { levels } => checker.check_two_step(obj, levels, ops),
            ObjectKind::ClimbElect { levels } => checker.check_climb(obj, levels, ops),
        }
    }

    // Chains and paths must thin by at least one process per node, and
    // nothing may exit right off their last node (paths under tree
    // leaves excepted: falling off them legally reroutes to the backup).
    for (owner, nodes) in &chains {
        check_thinning(&mut checker, "cascade chain", *owner, nodes);
        let last = layout.n;
        if let Some(stat) = nodes.get(&last) {
            if stat.rights > 0 {
                checker.flag(
                    ViolationKind::ChainFellOff,
                    format!("{:?} chain: a process exited right off round {last}", owner),
                );
            }
        }
    }
    for ((owner, path), nodes) in &leaf_paths {
        check_thinning(&mut checker, &format!("leaf path {path}"), *owner, nodes);
    }
    for (owner, nodes) in &backups {
        check_thinning(&mut checker, "backup path", *owner, nodes);
        let last = layout.n;
        if let Some(stat) = nodes.get(&last) {
            if stat.rights > 0 {
                checker.flag(
                    ViolationKind::BackupFellOff,
                    format!(
                        "{:?} backup path: a process exited right off node {last}",
                        owner
                    ),
                );
            }
        }
    }

    // Final-race entry rules for the lock-step racer: each side of the
    // overall final race is reachable only through its component's own
    // final object.
    if layout.algorithm == AlgorithmId::TasComb {
        check_comb_top(&mut checker, layout, &object_ops);
    }

    // Metrics: deepest cascade round touched, and the largest leaf
    // splitter load of a tree.
    if matches!(
        layout.algorithm,
        AlgorithmId::TasGeLocObl | AlgorithmId::TasGeRwObl
    ) {
        let mut jstar = 0;
        for (obj, written) in layout.objects.iter().zip(&written_objects) {
            if !written {
                continue;
            }
            let round = match obj.tag {
                ObjectTag::GeLevel(j) | ObjectTag::LoopSplit(j) | ObjectTag::LoopTas(j) => j,
                _ => continue,
            };
            jstar = jstar.max(round);
        }
        metrics.jstar = Some(jstar);
    }
    if matches!(
        layout.algorithm,
        AlgorithmId::TasRatRace | AlgorithmId::TasComb
    ) {
        // The leaf boundary comes from the layout (a full binary tree of
        // 2^(h+1) - 1 splitters), not from which nodes happened to be
        // touched.
        let tree_total = layout
            .objects
            .iter()
            .filter(|o| matches!(o.tag, ObjectTag::TreeSplit(_)))
            .count() as u32;
        let first_leaf = (tree_total + 1) / 2;
        metrics.max_leaf_load = Some(
            tree_loads
                .values()
                .flat_map(|loads| loads.iter())
                .filter(|(v, _)| **v >= first_leaf)
                .map(|(_, load)| *load)
                .max()
                .unwrap_or(0),
        );
    }

    (metrics, checker.violations)
}

/// A chain of splitters sheds at least one process per node: node `j+1`
/// cannot see as many visitors as node `j`, and no node is visited once
/// its predecessors have absorbed everyone.
fn check_thinning(
    checker: &mut Checker<'_>,
    what: &str,
    owner: Owner,
    nodes: &BTreeMap<u32, NodeStat>,
) {
    let Some(&last) = nodes.keys().max() else { return };
    let mut prev = None;
    for j in 1..=last {
        let visitors = nodes.get(&j).map_or(0, |s| s.visitors);
        if let Some(prev) = prev {
            let allowed = if prev == 0 { 0 } else { prev - 1 };
            if visitors > allowed {
                checker.flag(
                    ViolationKind::PathOverflow,
                    format!(
                        "{owner:?} {what}: node {j} saw {visitors} visitors after {prev} \
                         at node {}",
                        j - 1
                    ),
                );
            }
        }
        prev = Some(visitors);
    }
}

/// Writers of the overall final race must have come through their
/// component: the cascade side through the cascade's round-1 race, the
/// tree side through the tree's own final race.
fn check_comb_top(checker: &mut Checker<'_>, layout: &Layout, object_ops: &[Vec<OpRec>]) {
    let writer_pids = |idx: Option<usize>| -> BTreeSet<u32> {
        idx.map(|i| {
            object_ops[i]
                .iter()
                .filter(|o| o.write)
                .map(|o| o.pid)
                .collect()
        })
        .unwrap_or_default()
    };
    let index_of = |owner: Owner, tag: ObjectTag| {
        layout
            .objects
            .iter()
            .position(|o| o.owner == owner && o.tag == tag)
    };
    let Some(top_idx) = index_of(Owner::Main, ObjectTag::Top) else {
        return;
    };
    let inner_final = writer_pids(index_of(Owner::Inner, ObjectTag::LoopTas(1)));
    let race_final = writer_pids(index_of(Owner::Race, ObjectTag::Top));
    for op in &object_ops[top_idx] {
        if !op.write {
            continue;
        }
        let (source, side) = if op.off == 0 {
            (&inner_final, "cascade")
        } else {
            (&race_final, "tree")
        };
        if !source.contains(&op.pid) {
            checker.flag(
                ViolationKind::CombTopSource,
                format!(
                    "process {} wrote the final race's {side} side without winning \
                     that component (event {})",
                    op.pid, op.idx
                ),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{build_system, default_capacity};
    use crate::sim::{Event, RegisterId};

    /// Layout with a single object, for hand-built event tests.
    fn single_object_layout(kind: ObjectKind, tag: ObjectTag) -> Layout {
        Layout {
            algorithm: AlgorithmId::GeTrivial,
            n: 2,
            k: 2,
            objects: vec![ObjectInfo {
                kind,
                owner: Owner::Main,
                tag,
                base: 0,
                len: kind.registers(),
            }],
            total_registers: kind.registers(),
        }
    }

    /// Build an execution from (pid, kind) pairs with sane bookkeeping.
    fn exec_of(steps: Vec<(u32, EventKind)>, k: usize) -> Execution {
        let events: Vec<Event> = steps
            .into_iter()
            .enumerate()
            .map(|(i, (p, kind))| Event {
                index: i as u64 + 1,
                pid: ProcessId(p),
                kind,
            })
            .collect();
        Execution {
            events,
            statuses: vec![Status::Running; k],
            responses: vec![None; k],
            hit_step_limit: false,
        }
    }

    fn kinds_of(violations: &[Violation]) -> Vec<ViolationKind> {
        violations.iter().map(|v| v.kind).collect()
    }

    fn w(reg: u32, val: Value) -> EventKind {
        EventKind::Write {
            reg: RegisterId(reg),
            val,
        }
    }

    fn r(reg: u32, val: Value) -> EventKind {
        EventKind::Read {
            reg: RegisterId(reg),
            val,
        }
    }

    fn c() -> EventKind {
        EventKind::Coin { word: 0 }
    }

    #[test]
    fn stale_read_is_an_atomicity_violation() {
        let layout = single_object_layout(ObjectKind::Doorway, ObjectTag::Door);
        // Process 2 reads 0 after process 1 wrote 1.
        let exec = exec_of(
            vec![(1, c()), (1, r(0, 0)), (1, c()), (1, w(0, 1)), (2, c()), (2, r(0, 0))],
            2,
        );
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert!(kinds_of(&violations).contains(&ViolationKind::Atomicity));
    }

    #[test]
    fn double_coin_is_an_alternation_violation() {
        let layout = single_object_layout(ObjectKind::Doorway, ObjectTag::Door);
        let exec = exec_of(vec![(1, c()), (1, c())], 1);
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert_eq!(kinds_of(&violations), vec![ViolationKind::Alternation]);
    }

    #[test]
    fn early_noop_is_flagged() {
        let layout = single_object_layout(ObjectKind::Doorway, ObjectTag::Door);
        let exec = exec_of(vec![(1, EventKind::Noop)], 1);
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert_eq!(kinds_of(&violations), vec![ViolationKind::FinishedNotSilent]);
    }

    #[test]
    fn doorway_entry_without_reading_zero_is_flagged() {
        let layout = single_object_layout(ObjectKind::Doorway, ObjectTag::Door);
        // Process 2 writes the gate without ever reading it.
        let exec = exec_of(vec![(2, c()), (2, w(0, 1))], 2);
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert_eq!(kinds_of(&violations), vec![ViolationKind::DoorwayShape]);
    }

    #[test]
    fn splitter_double_capture_is_flagged() {
        let layout = single_object_layout(ObjectKind::Splitter, ObjectTag::LoopSplit(1));
        // Two full walks that each read their own name back: impossible
        // under atomic registers, so both atomicity and the capture
        // count fire.
        let mut steps = Vec::new();
        for p in [1u32, 2] {
            steps.extend([
                (p, c()),
                (p, w(0, Value::from(p))),
                (p, c()),
                (p, r(1, 0)),
                (p, c()),
                (p, w(1, 1)),
                (p, c()),
                (p, r(0, Value::from(p))),
            ]);
        }
        let exec = exec_of(steps, 2);
        let (_, violations) = check_trial(&layout, &exec, 0);
        let kinds = kinds_of(&violations);
        assert!(kinds.contains(&ViolationKind::SplitterMultiStop));
        assert!(kinds.contains(&ViolationKind::Atomicity));
    }

    #[test]
    fn solo_entrant_deflected_is_flagged() {
        let layout = single_object_layout(ObjectKind::Splitter, ObjectTag::LoopSplit(1));
        // Solo walk that reads a foreign name (also stale, hence the
        // atomicity flag) and exits right.
        let exec = exec_of(
            vec![
                (1, c()),
                (1, w(0, 1)),
                (1, c()),
                (1, r(1, 0)),
                (1, c()),
                (1, w(1, 1)),
                (1, c()),
                (1, r(0, 7)),
            ],
            1,
        );
        let (_, violations) = check_trial(&layout, &exec, 0);
        let kinds = kinds_of(&violations);
        assert!(kinds.contains(&ViolationKind::SplitterSoloNotStop));
        assert!(kinds.contains(&ViolationKind::SplitterRightOverflow));
    }

    #[test]
    fn race_with_two_winners_is_flagged() {
        let layout = single_object_layout(ObjectKind::Tas2, ObjectTag::LoopTas(1));
        // Both sides read 0 while holding position 3: each sees a win.
        let mut steps = Vec::new();
        for (p, mine) in [(1u32, 0u32), (2, 1)] {
            for pos in 1..=3 {
                steps.push((p, c()));
                steps.push((p, w(mine, pos)));
                steps.push((p, c()));
                steps.push((p, r(1 - mine, 0)));
            }
        }
        let exec = exec_of(steps, 2);
        let (_, violations) = check_trial(&layout, &exec, 0);
        let kinds = kinds_of(&violations);
        assert!(kinds.contains(&ViolationKind::RaceTwoWinners));
        // The second side's zero reads are stale, so atomicity fires too.
        assert!(kinds.contains(&ViolationKind::Atomicity));
    }

    #[test]
    fn race_register_contention_is_flagged() {
        let layout = single_object_layout(ObjectKind::Tas2, ObjectTag::LoopTas(1));
        let exec = exec_of(vec![(1, c()), (1, w(0, 1)), (2, c()), (2, w(0, 1))], 2);
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert_eq!(
            kinds_of(&violations),
            vec![ViolationKind::RaceRegisterContention]
        );
    }

    #[test]
    fn two_step_election_shape_is_enforced() {
        let layout =
            single_object_layout(ObjectKind::TwoStepElect { levels: 3 }, ObjectTag::GeLevel(1));
        // Reading two levels up instead of one.
        let exec = exec_of(vec![(1, c()), (1, w(0, 1)), (1, c()), (1, r(2, 0))], 1);
        let (_, violations) = check_trial(&layout, &exec, 0);
        assert_eq!(kinds_of(&violations), vec![ViolationKind::TwoStepShape]);
    }

    #[test]
    fn climb_election_min_down_loser_is_flagged() {
        let levels = 3;
        let layout =
            single_object_layout(ObjectKind::ClimbElect { levels }, ObjectTag::GeLevel(1));
        // Up offsets 0..=2, down offsets 3 (j=1) and 4 (j=2). Process 1
        // marks descent level 2 — the lowest level marked by anyone —
        // then claims a rejection at level 1. Nobody wrote level 1, so
        // the read is stale and the min-descent rule is broken.
        let exec = exec_of(
            vec![
                // Ascend: write up(1), write up(2), read up(3) = 0 → turn at 2.
                (1, c()),
                (1, w(0, 1)),
                (1, c()),
                (1, w(1, 1)),
                (1, c()),
                (1, r(2, 0)),
                // Descend: write down(2)...
                (1, c()),
                (1, w(4, 1)),
                // ...then a rejected read at down(1): claims to see 1,
                // which is stale (nobody wrote offset 3), and makes the
                // min-descent writer a loser.
                (1, c()),
                (1, r(3, 1)),
            ],
            1,
        );
        let (_, violations) = check_trial(&layout, &exec, 0);
        let kinds = kinds_of(&violations);
        assert!(kinds.contains(&ViolationKind::Atomicity));
        assert!(kinds.contains(&ViolationKind::ClimbMinDownLost));
    }

    #[test]
    fn clean_runs_produce_no_violations_and_sane_metrics() {
        use crate::adversary::{AdversaryClass, RandomSchedule};
        use crate::coins::CounterCoins;
        use crate::sim::run;

        for algorithm in AlgorithmId::ALL {
            for k in [1u32, 2, 5] {
                for seed in 0..10u64 {
                    let system = build_system(algorithm, k, default_capacity(k)).unwrap();
                    let mut machines = system.machines();
                    let mut bank = system.bank();
                    let mut adv = RandomSchedule::new(AdversaryClass::Oblivious, seed);
                    let mut coins = CounterCoins::new(seed, 7, k as usize);
                    let exec = run(&mut machines, &mut bank, &mut adv, &mut coins, 1_000_000);
                    let (metrics, violations) = check_trial(system.layout(), &exec, seed);
                    assert!(
                        violations.is_empty(),
                        "{algorithm} k={k} seed={seed}: {:?}",
                        violations
                    );
                    assert!(metrics.completed);
                    if algorithm.is_tas() {
                        assert_eq!(metrics.winners, 1, "{algorithm} k={k} seed={seed}");
                    } else {
                        assert!(metrics.winners >= 1);
                    }
                    match algorithm {
                        AlgorithmId::TasGeLocObl | AlgorithmId::TasGeRwObl => {
                            assert!(metrics.jstar.is_some())
                        }
                        AlgorithmId::TasRatRace | AlgorithmId::TasComb => {
                            assert!(metrics.max_leaf_load.is_some())
                        }
                        _ => {
                            assert!(metrics.jstar.is_none());
                            assert!(metrics.max_leaf_load.is_none());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn winner_counting_flags_fabricated_double_wins() {
        let system = build_system(AlgorithmId::TasRatRace, 2, 2).unwrap();
        // Fabricate statuses claiming both processes won, with no events.
        let exec = Execution {
            events: Vec::new(),
            statuses: vec![
                Status::Finished(Outcome::Tas { won: true }),
                Status::Finished(Outcome::Tas { won: true }),
            ],
            responses: vec![None, None],
            hit_step_limit: false,
        };
        let (metrics, violations) = check_trial(system.layout(), &exec, 0);
        assert_eq!(metrics.winners, 2);
        assert!(kinds_of(&violations).contains(&ViolationKind::MultipleWinners));
    }

    #[test]
    fn loser_finishing_before_winner_started_is_flagged() {
        let system = build_system(AlgorithmId::TasRatRace, 2, 2).unwrap();
        // Process 2 finishes (lost) at event 2; process 1 starts at
        // event 3 and wins: no sequential order explains the loss.
        let exec = Execution {
            events: vec![
                Event {
                    index: 1,
                    pid: ProcessId(2),
                    kind: c(),
                },
                Event {
                    index: 2,
                    pid: ProcessId(2),
                    kind: r(0, 0),
                },
                Event {
                    index: 3,
                    pid: ProcessId(1),
                    kind: c(),
                },
                Event {
                    index: 4,
                    pid: ProcessId(1),
                    kind: r(0, 0),
                },
            ],
            statuses: vec![
                Status::Finished(Outcome::Tas { won: true }),
                Status::Finished(Outcome::Tas { won: false }),
            ],
            responses: vec![Some(4), Some(2)],
            hit_step_limit: false,
        };
        let (_, violations) = check_trial(system.layout(), &exec, 0);
        assert!(kinds_of(&violations).contains(&ViolationKind::Linearization));
    }

    #[test]
    fn step_limited_runs_are_flagged() {
        let system = build_system(AlgorithmId::TasRatRace, 2, 2).unwrap();
        let exec = Execution {
            events: Vec::new(),
            statuses: vec![Status::Running, Status::Running],
            responses: vec![None, None],
            hit_step_limit: true,
        };
        let (metrics, violations) = check_trial(system.layout(), &exec, 0);
        assert!(!metrics.completed);
        assert_eq!(kinds_of(&violations), vec![ViolationKind::StepLimit]);
    }
}

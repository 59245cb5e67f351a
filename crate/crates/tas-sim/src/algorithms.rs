//! Full test-and-set and election algorithms: register layout and wiring.
//!
//! An algorithm instance is a [`System`]: a [`Layout`] describing every
//! shared object (its kind, role tag, and register range) plus wiring that
//! lets per-process machines find their registers. Systems are built by
//! [`build_system`] for a participant count `k` and a capacity `n ≥ k` the
//! structure is sized for.
//!
//! The test-and-set constructions:
//!
//! - `tas:ge-locobl` / `tas:ge-rwobl` ([`GeTasCore`]): a doorway, then a
//!   cascade of group elections interleaved with an elimination chain of
//!   splitters; survivors race back through two-process test-and-sets.
//! - `tas:ratrace` ([`RatRaceCore`]): a tree of randomized splitters with
//!   three-process test-and-sets at the nodes, per-leaf elimination paths,
//!   a shared backup path, and a final two-way race at the top.
//! - `tas:comb` ([`CombCore`]): runs a full election cascade and a full
//!   tree instance in lock-step, one step each in alternation, and lets
//!   the first side to win race for the overall title.
//!
//! Elections (`ge:locobl`, `ge:rwobl`, `ge:trivial`) run the protocols from
//! [`crate::election`] directly.

use std::sync::Arc;

use thiserror::Error;

use crate::election::{loc_levels, log_star2, rw_levels, InstantWin, LocOblElect, RwOblElect};
use crate::primitives::{
    AsElect, AsTas, Direction, Doorway, Machine, Proto, RandomSplitter, Splitter, Step, Tas2,
    Tas3, Tas3Slot,
};
use crate::sim::{ProcessId, RegisterBank, RegisterId, SharedOp, StepMachine, Value};

/// Parsed algorithm identifier, the strings accepted on the command line
/// and reported in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmId {
    /// `tas:ge-locobl` — election cascade (two-step elections) + chain.
    TasGeLocObl,
    /// `tas:ge-rwobl` — election cascade (climb elections) + chain.
    TasGeRwObl,
    /// `tas:ratrace` — splitter tree with per-leaf elimination paths.
    TasRatRace,
    /// `tas:comb` — election cascade and tree raced in lock-step.
    TasComb,
    /// `ge:locobl` — the two-step group election alone.
    GeLocObl,
    /// `ge:rwobl` — the climb group election alone.
    GeRwObl,
    /// `ge:trivial` — everyone instantly elected.
    GeTrivial,
}

/// Error for an algorithm id that matches no known construction.
#[derive(Debug, Error, PartialEq, Eq)]
#[error(
    "unknown algorithm id `{0}`; expected one of \
     tas:{{ge-locobl|ge-rwobl|ratrace|comb}}, ge:{{locobl|rwobl|trivial}}"
)]
pub struct ParseAlgorithmError(pub String);

impl AlgorithmId {
    /// Every recognized algorithm id.
    pub const ALL: [AlgorithmId; 7] = [
        AlgorithmId::TasGeLocObl,
        AlgorithmId::TasGeRwObl,
        AlgorithmId::TasRatRace,
        AlgorithmId::TasComb,
        AlgorithmId::GeLocObl,
        AlgorithmId::GeRwObl,
        AlgorithmId::GeTrivial,
    ];

    /// The four test-and-set constructions.
    pub const ALL_TAS: [AlgorithmId; 4] = [
        AlgorithmId::TasGeLocObl,
        AlgorithmId::TasGeRwObl,
        AlgorithmId::TasRatRace,
        AlgorithmId::TasComb,
    ];

    /// Whether this is a test-and-set (vs. a group election).
    pub fn is_tas(self) -> bool {
        matches!(
            self,
            AlgorithmId::TasGeLocObl
                | AlgorithmId::TasGeRwObl
                | AlgorithmId::TasRatRace
                | AlgorithmId::TasComb
        )
    }
}

impl std::fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AlgorithmId::TasGeLocObl => "tas:ge-locobl",
            AlgorithmId::TasGeRwObl => "tas:ge-rwobl",
            AlgorithmId::TasRatRace => "tas:ratrace",
            AlgorithmId::TasComb => "tas:comb",
            AlgorithmId::GeLocObl => "ge:locobl",
            AlgorithmId::GeRwObl => "ge:rwobl",
            AlgorithmId::GeTrivial => "ge:trivial",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = ParseAlgorithmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "tas:ge-locobl" => AlgorithmId::TasGeLocObl,
            "tas:ge-rwobl" => AlgorithmId::TasGeRwObl,
            "tas:ratrace" => AlgorithmId::TasRatRace,
            "tas:comb" => AlgorithmId::TasComb,
            "ge:locobl" => AlgorithmId::GeLocObl,
            "ge:rwobl" => AlgorithmId::GeRwObl,
            "ge:trivial" => AlgorithmId::GeTrivial,
            other => return Err(ParseAlgorithmError(other.to_string())),
        })
    }
}

/// Errors rejecting an inconsistent run configuration.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    /// At least one process must participate.
    #[error("participant count k must be at least 1")]
    ZeroProcesses,
    /// Structures are sized for a capacity that must cover the
    /// participants.
    #[error("capacity n={n} is smaller than participant count k={k}")]
    CapacityTooSmall {
        /// Requested capacity.
        n: u32,
        /// Requested participants.
        k: u32,
    },
}

/// Kind of a shared object in a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    /// One-shot gate (1 register).
    Doorway,
    /// Deterministic splitter (2 registers: name, gate).
    Splitter,
    /// Randomized splitter (2 registers: name, gate).
    RandomSplitter,
    /// Two-process test-and-set race (2 registers).
    Tas2,
    /// Three-process test-and-set race (4 registers).
    Tas3,
    /// Two-step election with this many levels (`levels + 1` registers).
    TwoStepElect {
        /// Level count.
        levels: u32,
    },
    /// Climb election with this many levels (`2·levels - 1` registers).
    ClimbElect {
        /// Level count.
        levels: u32,
    },
}

impl ObjectKind {
    /// Registers an object of this kind occupies.
    pub fn registers(self) -> u32 {
        match self {
            ObjectKind::Doorway => Doorway::REGISTERS,
            ObjectKind::Splitter => Splitter::REGISTERS,
            ObjectKind::RandomSplitter => RandomSplitter::REGISTERS,
            ObjectKind::Tas2 => Tas2::REGISTERS,
            ObjectKind::Tas3 => Tas3::REGISTERS,
            ObjectKind::TwoStepElect { levels } => LocOblElect::registers(levels),
            ObjectKind::ClimbElect { levels } => RwOblElect::registers(levels),
        }
    }
}

/// Which top-level component of the algorithm an object belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    /// The algorithm itself (or its outer shell, for the lock-step racer).
    Main,
    /// The embedded election cascade of the lock-step racer.
    Inner,
    /// The embedded splitter tree of the lock-step racer.
    Race,
}

/// Role of an object within its component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectTag {
    /// Entry doorway.
    Door,
    /// Final two-way race.
    Top,
    /// Election of cascade round `i` (1-based).
    GeLevel(u32),
    /// Chain splitter of cascade round `i`.
    LoopSplit(u32),
    /// Chain race of cascade round `i`.
    LoopTas(u32),
    /// Tree splitter at heap index `v` (root = 1).
    TreeSplit(u32),
    /// Tree race at heap index `v`.
    TreeTas(u32),
    /// Splitter `node` (1-based) of the elimination path under leaf
    /// `path` (1-based).
    PathSplit {
        /// Leaf index.
        path: u32,
        /// Position along the path.
        node: u32,
    },
    /// Race `node` of the elimination path under leaf `path`.
    PathTas {
        /// Leaf index.
        path: u32,
        /// Position along the path.
        node: u32,
    },
    /// Splitter `node` of the shared backup path.
    BackupSplit(u32),
    /// Race `node` of the shared backup path.
    BackupTas(u32),
}

/// One shared object: kind, role, and register range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectInfo {
    /// What the object is.
    pub kind: ObjectKind,
    /// Which component it belongs to.
    pub owner: Owner,
    /// Its role within the component.
    pub tag: ObjectTag,
    /// First register of its range.
    pub base: u32,
    /// Number of registers in its range.
    pub len: u32,
}

impl ObjectInfo {
    /// Whether `reg` falls inside this object's range.
    pub fn contains(&self, reg: RegisterId) -> bool {
        reg.0 >= self.base && reg.0 < self.base + self.len
    }
}

/// Complete register map of a built system: every object in allocation
/// order, covering registers `0..total_registers` without gaps or
/// overlaps.
#[derive(Debug, Clone)]
pub struct Layout {
    /// Which algorithm this layout realizes.
    pub algorithm: AlgorithmId,
    /// Capacity the structure is sized for.
    pub n: u32,
    /// Participants the system was built for.
    pub k: u32,
    /// All objects, ascending by base register.
    pub objects: Vec<ObjectInfo>,
    /// Total registers allocated.
    pub total_registers: u32,
}

impl Layout {
    /// Position in `objects` of the object whose range contains `reg`.
    pub fn object_index_at(&self, reg: RegisterId) -> Option<usize> {
        let idx = self
            .objects
            .partition_point(|o| o.base <= reg.0)
            .checked_sub(1)?;
        self.objects[idx].contains(reg).then_some(idx)
    }

    /// The object whose range contains `reg`.
    pub fn object_at(&self, reg: RegisterId) -> Option<&ObjectInfo> {
        self.object_index_at(reg).map(|i| &self.objects[i])
    }

    /// The object with this owner and tag, if present.
    pub fn find(&self, owner: Owner, tag: ObjectTag) -> Option<&ObjectInfo> {
        self.objects
            .iter()
            .find(|o| o.owner == owner && o.tag == tag)
    }
}

/// Registers of one elimination-path node: a splitter and a two-way race.
#[derive(Debug, Clone, Copy)]
pub struct PathNodeRegs {
    /// Splitter name register.
    pub name: RegisterId,
    /// Splitter gate register.
    pub gate: RegisterId,
    /// Race register of the node's capturer.
    pub first: RegisterId,
    /// Race register of the descending challenger.
    pub second: RegisterId,
}

impl PathNodeRegs {
    fn splitter(&self, me: Value) -> Splitter {
        Splitter::new(self.name, self.gate, me)
    }

    fn race_as_capturer(&self) -> Tas2 {
        Tas2::new(self.first, self.second)
    }

    fn race_as_challenger(&self) -> Tas2 {
        Tas2::new(self.second, self.first)
    }
}

/// Registers of an elimination path: a chain of splitter + race nodes.
#[derive(Debug, Clone)]
pub struct PathWiring {
    /// Node registers, entry first.
    pub nodes: Vec<PathNodeRegs>,
}

/// How a process leaves an elimination path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathExit {
    /// Captured a node and beat every challenger below it.
    Won,
    /// Deflected left by a splitter, or beaten in a race.
    Lost,
    /// Deflected right past the last node.
    FellOff,
}

#[derive(Debug, Clone)]
enum PathState {
    Split { node: u32, splitter: Splitter },
    Descend { node: u32, race: Tas2 },
}

/// Walk an elimination path: take each splitter in turn; deflecting left
/// loses, deflecting right advances (past the end: [`PathExit::FellOff`]).
/// Capturing node `i` means racing down through nodes `i, i-1, …, 1`
/// (capturer side at `i`, challenger side below); winning them all wins
/// the path. Each node's race has at most two contenders — the unique
/// capturer of that node and the unique surviving challenger from above —
/// so path winners are unique.
#[derive(Debug, Clone)]
pub struct EliminationPathOp {
    wiring: Arc<PathWiring>,
    me: Value,
    state: PathState,
    splits_resolved: u64,
}

impl EliminationPathOp {
    /// Enter the path at its first node.
    pub fn new(wiring: Arc<PathWiring>, me: Value) -> Self {
        debug_assert!(!wiring.nodes.is_empty(), "paths have at least one node");
        let splitter = wiring.nodes[0].splitter(me);
        Self {
            wiring,
            me,
            state: PathState::Split { node: 1, splitter },
            splits_resolved: 0,
        }
    }

    /// Whether the process has captured a node and is racing down.
    pub fn in_descent(&self) -> bool {
        matches!(self.state, PathState::Descend { .. })
    }

    /// How many of this walk's splitters have resolved so far.
    pub fn splits_resolved(&self) -> u64 {
        self.splits_resolved
    }
}

impl Proto for EliminationPathOp {
    type Out = PathExit;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        match &mut self.state {
            PathState::Split { splitter, .. } => splitter.prepare(coin),
            PathState::Descend { race, .. } => race.prepare(coin),
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<PathExit> {
        match &mut self.state {
            PathState::Split { node, splitter } => {
                let node = *node;
                match splitter.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(dir) => {
                        self.splits_resolved += 1;
                        match dir {
                            Direction::Left => Step::Done(PathExit::Lost),
                            Direction::Right => {
                                if node as usize == self.wiring.nodes.len() {
                                    Step::Done(PathExit::FellOff)
                                } else {
                                    self.state = PathState::Split {
                                        node: node + 1,
                                        splitter: self.wiring.nodes[node as usize]
                                            .splitter(self.me),
                                    };
                                    Step::Continue
                                }
                            }
                            Direction::Stop => {
                                self.state = PathState::Descend {
                                    node,
                                    race: self.wiring.nodes[(node - 1) as usize]
                                        .race_as_capturer(),
                                };
                                Step::Continue
                            }
                        }
                    }
                }
            }
            PathState::Descend { node, race } => {
                let node = *node;
                match race.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(false) => Step::Done(PathExit::Lost),
                    Step::Done(true) => {
                        if node == 1 {
                            Step::Done(PathExit::Won)
                        } else {
                            self.state = PathState::Descend {
                                node: node - 1,
                                race: self.wiring.nodes[(node - 2) as usize]
                                    .race_as_challenger(),
                            };
                            Step::Continue
                        }
                    }
                }
            }
        }
    }
}

/// Which election protocol a cascade interleaves with its chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeFlavor {
    /// Two-step elections (cascade of `2·log*_2 n` rounds).
    TwoStep,
    /// Climb elections (cascade of 16 rounds).
    Climb,
}

/// Cascade rounds that carry a real election for this flavor and
/// capacity; chain nodes beyond them skip straight to the splitter.
pub fn ge_tas_rounds(flavor: GeFlavor, n: u32) -> u32 {
    match flavor {
        GeFlavor::TwoStep => (2 * log_star2(u64::from(n))).min(n),
        GeFlavor::Climb => 16.min(n),
    }
}

/// Registers of an election cascade + elimination chain instance.
#[derive(Debug, Clone)]
pub struct GeTasWiring {
    /// Entry doorway gate.
    pub door: RegisterId,
    /// Election protocol used in the cascade.
    pub flavor: GeFlavor,
    /// Levels of each election instance.
    pub levels: u32,
    /// Election base registers for rounds `1..=rounds`.
    pub elections: Vec<RegisterId>,
    /// Chain node registers for rounds `1..=n`.
    pub nodes: Vec<PathNodeRegs>,
}

#[derive(Debug, Clone)]
enum ElectState {
    TwoStep(LocOblElect),
    Climb(RwOblElect),
}

impl ElectState {
    fn prepare(&mut self, coin: u64) -> SharedOp {
        match self {
            ElectState::TwoStep(e) => e.prepare(coin),
            ElectState::Climb(e) => e.prepare(coin),
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match self {
            ElectState::TwoStep(e) => e.complete(read),
            ElectState::Climb(e) => e.complete(read),
        }
    }
}

#[derive(Debug, Clone)]
enum GeTasState {
    Door(Doorway),
    Elect { round: u32, elect: ElectState },
    Split { round: u32, splitter: Splitter },
    Descend { round: u32, race: Tas2 },
}

/// Test-and-set from a doorway, an election cascade, and an elimination
/// chain.
///
/// After passing the doorway a process walks chain rounds `1, 2, …`: in
/// rounds that carry an election it must first be elected (losing the
/// election loses the test-and-set), then it takes the round's splitter.
/// Deflecting left loses; deflecting right moves to the next round;
/// capturing the splitter starts the race back: win the round's race as
/// capturer, then every lower round's race as challenger — winning round
/// 1's race wins the test-and-set.
///
/// Elections thin the field so fast that the expected deepest round
/// visited is governed by the iterated-log of the contention, while the
/// splitter chain guarantees uniqueness and completion outright.
#[derive(Debug, Clone)]
pub struct GeTasCore {
    wiring: Arc<GeTasWiring>,
    me: Value,
    state: GeTasState,
}

impl GeTasCore {
    /// Enter the structure at its doorway.
    pub fn new(wiring: Arc<GeTasWiring>, me: Value) -> Self {
        let door = Doorway::new(wiring.door);
        Self {
            wiring,
            me,
            state: GeTasState::Door(door),
        }
    }

    /// State entering chain round `round`: the round's election if it has
    /// one, otherwise its splitter.
    fn enter_round(&self, round: u32) -> GeTasState {
        if round as usize <= self.wiring.elections.len() {
            let base = self.wiring.elections[(round - 1) as usize];
            let elect = match self.wiring.flavor {
                GeFlavor::TwoStep => ElectState::TwoStep(LocOblElect::new(base, self.wiring.levels)),
                GeFlavor::Climb => ElectState::Climb(RwOblElect::new(base, self.wiring.levels)),
            };
            GeTasState::Elect { round, elect }
        } else {
            GeTasState::Split {
                round,
                splitter: self.wiring.nodes[(round - 1) as usize].splitter(self.me),
            }
        }
    }
}

impl Proto for GeTasCore {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        match &mut self.state {
            GeTasState::Door(door) => door.prepare(coin),
            GeTasState::Elect { elect, .. } => elect.prepare(coin),
            GeTasState::Split { splitter, .. } => splitter.prepare(coin),
            GeTasState::Descend { race, .. } => race.prepare(coin),
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match &mut self.state {
            GeTasState::Door(door) => match door.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(false) => Step::Done(false),
                Step::Done(true) => {
                    self.state = self.enter_round(1);
                    Step::Continue
                }
            },
            GeTasState::Elect { round, elect } => {
                let round = *round;
                match elect.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(false) => Step::Done(false),
                    Step::Done(true) => {
                        self.state = GeTasState::Split {
                            round,
                            splitter: self.wiring.nodes[(round - 1) as usize].splitter(self.me),
                        };
                        Step::Continue
                    }
                }
            }
            GeTasState::Split { round, splitter } => {
                let round = *round;
                match splitter.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(Direction::Left) => Step::Done(false),
                    Step::Done(Direction::Right) => {
                        if round as usize == self.wiring.nodes.len() {
                            // Structurally unreachable: each round's
                            // splitter deflects at least one entrant off
                            // the right exit, so at most one process can
                            // reach the last round and it captures. Lose
                            // defensively; the run checks flag it.
                            Step::Done(false)
                        } else {
                            self.state = self.enter_round(round + 1);
                            Step::Continue
                        }
                    }
                    Step::Done(Direction::Stop) => {
                        self.state = GeTasState::Descend {
                            round,
                            race: self.wiring.nodes[(round - 1) as usize].race_as_capturer(),
                        };
                        Step::Continue
                    }
                }
            }
            GeTasState::Descend { round, race } => {
                let round = *round;
                match race.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(false) => Step::Done(false),
                    Step::Done(true) => {
                        if round == 1 {
                            Step::Done(true)
                        } else {
                            self.state = GeTasState::Descend {
                                round: round - 1,
                                race: self.wiring.nodes[(round - 2) as usize]
                                    .race_as_challenger(),
                            };
                            Step::Continue
                        }
                    }
                }
            }
        }
    }
}

/// Registers of one tree node: a randomized splitter and a three-way
/// race.
#[derive(Debug, Clone, Copy)]
pub struct TreeNodeRegs {
    /// Splitter name register.
    pub name: RegisterId,
    /// Splitter gate register.
    pub gate: RegisterId,
    /// The node race's four registers.
    pub tas3: [RegisterId; 4],
}

/// Registers of a splitter-tree instance.
#[derive(Debug, Clone)]
pub struct RaceWiring {
    /// Entry doorway gate, absent when embedded in the lock-step racer.
    pub door: Option<RegisterId>,
    /// Tree height: leaves sit at depth `height`.
    pub height: u32,
    /// Node registers, heap-indexed (`tree[v-1]`, root `v = 1`).
    pub tree: Vec<TreeNodeRegs>,
    /// Elimination path under each leaf, leaf-indexed.
    pub paths: Vec<Arc<PathWiring>>,
    /// Shared backup path for processes that fall off their leaf path.
    pub backup: Arc<PathWiring>,
    /// Final two-way race registers.
    pub top: [RegisterId; 2],
}

impl RaceWiring {
    /// Heap index of the first leaf.
    pub fn first_leaf(&self) -> u32 {
        1 << self.height
    }
}

#[derive(Debug, Clone)]
enum RaceState {
    Door(Doorway),
    Descend { v: u32, splitter: RandomSplitter },
    Climb { v: u32, race: Tas3 },
    Path { leaf_v: u32, op: EliminationPathOp },
    Backup { op: EliminationPathOp },
    Top { race: Tas2 },
}

/// Test-and-set from a tree of randomized splitters.
///
/// A process descends from the root, at each node taking the randomized
/// splitter: capturing the node turns it around, deflections descend to a
/// random child. Capturers climb back up by winning the three-way race at
/// every node on the way (slots: the node's own capturer, and the winners
/// arriving from its two children); winning the root's race reaches the
/// final two-way race. A process deflected out of a leaf walks that
/// leaf's elimination path; a path winner climbs from the leaf, and a
/// process that falls off its path walks the shared backup path, whose
/// winner takes the other side of the final race.
///
/// The tree height keeps expected per-leaf load logarithmic, so the
/// fixed-length leaf paths almost always absorb everyone — the linear
/// backup path exists for the tail of the distribution.
#[derive(Debug, Clone)]
pub struct RatRaceCore {
    wiring: Arc<RaceWiring>,
    me: Value,
    state: RaceState,
    splits_done: u64,
}

impl RatRaceCore {
    /// Enter at the doorway, or directly at the root when embedded.
    pub fn new(wiring: Arc<RaceWiring>, me: Value) -> Self {
        let state = match wiring.door {
            Some(gate) => RaceState::Door(Doorway::new(gate)),
            None => RaceState::Descend {
                v: 1,
                splitter: RandomSplitter::new(wiring.tree[0].name, wiring.tree[0].gate, me),
            },
        };
        Self {
            wiring,
            me,
            state,
            splits_done: 0,
        }
    }

    /// Whether the process holds a captured splitter (it is climbing,
    /// racing down a path it captured into, or in the final race).
    pub fn holding_stop(&self) -> bool {
        match &self.state {
            RaceState::Climb { .. } | RaceState::Top { .. } => true,
            RaceState::Path { op, .. } | RaceState::Backup { op } => op.in_descent(),
            _ => false,
        }
    }

    /// Whether the process is inside an unresolved splitter.
    pub fn mid_split(&self) -> bool {
        match &self.state {
            RaceState::Descend { .. } => true,
            RaceState::Path { op, .. } | RaceState::Backup { op } => !op.in_descent(),
            _ => false,
        }
    }

    /// Total splitters this process has resolved, anywhere in the
    /// structure. Strictly increases exactly when the current splitter
    /// resolves.
    pub fn splits_resolved(&self) -> u64 {
        let in_walk = match &self.state {
            RaceState::Path { op, .. } | RaceState::Backup { op } => op.splits_resolved(),
            _ => 0,
        };
        self.splits_done + in_walk
    }

    fn descend_to(&self, v: u32) -> RaceState {
        let regs = &self.wiring.tree[(v - 1) as usize];
        RaceState::Descend {
            v,
            splitter: RandomSplitter::new(regs.name, regs.gate, self.me),
        }
    }

    fn climb_at(&self, v: u32, slot: Tas3Slot) -> RaceState {
        RaceState::Climb {
            v,
            race: Tas3::new(self.wiring.tree[(v - 1) as usize].tas3, slot),
        }
    }
}

impl Proto for RatRaceCore {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        match &mut self.state {
            RaceState::Door(door) => door.prepare(coin),
            RaceState::Descend { splitter, .. } => splitter.prepare(coin),
            RaceState::Climb { race, .. } => race.prepare(coin),
            RaceState::Path { op, .. } => op.prepare(coin),
            RaceState::Backup { op } => op.prepare(coin),
            RaceState::Top { race } => race.prepare(coin),
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match &mut self.state {
            RaceState::Door(door) => match door.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(false) => Step::Done(false),
                Step::Done(true) => {
                    self.state = self.descend_to(1);
                    Step::Continue
                }
            },
            RaceState::Descend { v, splitter } => {
                let v = *v;
                match splitter.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(dir) => {
                        self.splits_done += 1;
                        match dir {
                            Direction::Stop => {
                                self.state = self.climb_at(v, Tas3Slot::First);
                            }
                            Direction::Left | Direction::Right => {
                                if v >= self.wiring.first_leaf() {
                                    let leaf = v - self.wiring.first_leaf();
                                    self.state = RaceState::Path {
                                        leaf_v: v,
                                        op: EliminationPathOp::new(
                                            self.wiring.paths[leaf as usize].clone(),
                                            self.me,
                                        ),
                                    };
                                } else {
                                    let child =
                                        2 * v + u32::from(dir == Direction::Right);
                                    self.state = self.descend_to(child);
                                }
                            }
                        }
                        Step::Continue
                    }
                }
            }
            RaceState::Climb { v, race } => {
                let v = *v;
                match race.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(false) => Step::Done(false),
                    Step::Done(true) => {
                        if v == 1 {
                            self.state = RaceState::Top {
                                race: Tas2::new(self.wiring.top[0], self.wiring.top[1]),
                            };
                        } else {
                            let slot = if v % 2 == 0 {
                                Tas3Slot::Second
                            } else {
                                Tas3Slot::Third
                            };
                            self.state = self.climb_at(v / 2, slot);
                        }
                        Step::Continue
                    }
                }
            }
            RaceState::Path { leaf_v, op } => {
                let leaf_v = *leaf_v;
                match op.complete(read) {
                    Step::Continue => Step::Continue,
                    Step::Done(exit) => {
                        self.splits_done += op.splits_resolved();
                        match exit {
                            PathExit::Lost => Step::Done(false),
                            PathExit::Won => {
                                self.state = self.climb_at(leaf_v, Tas3Slot::Second);
                                Step::Continue
                            }
                            PathExit::FellOff => {
                                self.state = RaceState::Backup {
                                    op: EliminationPathOp::new(
                                        self.wiring.backup.clone(),
                                        self.me,
                                    ),
                                };
                                Step::Continue
                            }
                        }
                    }
                }
            }
            RaceState::Backup { op } => match op.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(exit) => {
                    self.splits_done += op.splits_resolved();
                    match exit {
                        PathExit::Lost => Step::Done(false),
                        PathExit::Won => {
                            self.state = RaceState::Top {
                                race: Tas2::new(self.wiring.top[1], self.wiring.top[0]),
                            };
                            Step::Continue
                        }
                        // Structurally unreachable: the backup path is as
                        // long as the capacity, and each node sheds at
                        // least one entrant off the right exit. Lose
                        // defensively; the run checks flag it.
                        PathExit::FellOff => Step::Done(false),
                    }
                }
            },
            RaceState::Top { race } => match race.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(won) => Step::Done(won),
            },
        }
    }
}

/// Registers of a lock-step racer instance.
#[derive(Debug, Clone)]
pub struct CombWiring {
    /// Outer doorway gate.
    pub door: RegisterId,
    /// Overall final race registers.
    pub top: [RegisterId; 2],
    /// The embedded election cascade (with its own doorway).
    pub inner: Arc<GeTasWiring>,
    /// The embedded splitter tree (no doorway).
    pub race: Arc<RaceWiring>,
}

#[derive(Debug, Clone)]
enum CombMode {
    Door(Doorway),
    Both,
    OnlyInner,
    OnlyRace,
    /// The cascade lost while the tree side was mid-splitter: the tree
    /// side runs just long enough to resolve that splitter.
    FinishSplit {
        baseline: u64,
    },
    Top(Tas2),
}

/// Test-and-set racing an election cascade against a splitter tree in
/// lock-step.
///
/// After the outer doorway, a process alternates strictly: one step of
/// the embedded cascade, one step of the embedded tree established. The
/// first side to win sends the process to the overall final race (cascade
/// winners on one side, tree winners on the other). If the tree side
/// loses, the process continues the cascade alone; if the cascade loses,
/// the process may continue the tree alone only from a position of
/// strength — holding a captured splitter, or mid-splitter (in which case
/// it finishes that splitter and continues only on a capture). Otherwise
/// it abandons the tree and loses.
///
/// At most one process (the unique tree winner) ever abandons the
/// cascade, so if nobody wins the tree, the cascade runs untouched and
/// its winner takes the final race unopposed — some process always wins.
#[derive(Debug, Clone)]
pub struct CombCore {
    wiring: Arc<CombWiring>,
    mode: CombMode,
    inner: GeTasCore,
    race: RatRaceCore,
    inner_turn: bool,
    routing_inner: bool,
}

impl CombCore {
    /// Enter at the outer doorway.
    pub fn new(wiring: Arc<CombWiring>, me: Value) -> Self {
        let inner = GeTasCore::new(wiring.inner.clone(), me);
        let race = RatRaceCore::new(wiring.race.clone(), me);
        let door = Doorway::new(wiring.door);
        Self {
            wiring,
            mode: CombMode::Door(door),
            inner,
            race,
            inner_turn: true,
            routing_inner: true,
        }
    }

    fn top_as_cascade_winner(&self) -> Tas2 {
        Tas2::new(self.wiring.top[0], self.wiring.top[1])
    }

    fn top_as_tree_winner(&self) -> Tas2 {
        Tas2::new(self.wiring.top[1], self.wiring.top[0])
    }

    /// Mode after the cascade loses: keep the tree side only from a
    /// position of strength.
    fn after_cascade_loss(&self) -> Option<CombMode> {
        if self.race.holding_stop() {
            Some(CombMode::OnlyRace)
        } else if self.race.mid_split() {
            Some(CombMode::FinishSplit {
                baseline: self.race.splits_resolved(),
            })
        } else {
            None
        }
    }
}

impl Proto for CombCore {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        match &mut self.mode {
            CombMode::Door(door) => door.prepare(coin),
            CombMode::Top(race) => race.prepare(coin),
            CombMode::Both => {
                self.routing_inner = self.inner_turn;
                if self.routing_inner {
                    self.inner.prepare(coin)
                } else {
                    self.race.prepare(coin)
                }
            }
            CombMode::OnlyInner => {
                self.routing_inner = true;
                self.inner.prepare(coin)
            }
            CombMode::OnlyRace | CombMode::FinishSplit { .. } => {
                self.routing_inner = false;
                self.race.prepare(coin)
            }
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match &mut self.mode {
            CombMode::Door(door) => match door.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(false) => Step::Done(false),
                Step::Done(true) => {
                    self.mode = CombMode::Both;
                    self.inner_turn = true;
                    Step::Continue
                }
            },
            CombMode::Top(race) => match race.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(won) => Step::Done(won),
            },
            CombMode::Both => {
                self.inner_turn = !self.inner_turn;
                if self.routing_inner {
                    match self.inner.complete(read) {
                        Step::Continue => Step::Continue,
                        Step::Done(true) => {
                            self.mode = CombMode::Top(self.top_as_cascade_winner());
                            Step::Continue
                        }
                        Step::Done(false) => match self.after_cascade_loss() {
                            Some(mode) => {
                                self.mode = mode;
                                Step::Continue
                            }
                            None => Step::Done(false),
                        },
                    }
                } else {
                    match self.race.complete(read) {
                        Step::Continue => Step::Continue,
                        Step::Done(true) => {
                            self.mode = CombMode::Top(self.top_as_tree_winner());
                            Step::Continue
                        }
                        Step::Done(false) => {
                            self.mode = CombMode::OnlyInner;
                            Step::Continue
                        }
                    }
                }
            }
            CombMode::OnlyInner => match self.inner.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(true) => {
                    self.mode = CombMode::Top(self.top_as_cascade_winner());
                    Step::Continue
                }
                Step::Done(false) => Step::Done(false),
            },
            CombMode::OnlyRace => match self.race.complete(read) {
                Step::Continue => Step::Continue,
                Step::Done(true) => {
                    self.mode = CombMode::Top(self.top_as_tree_winner());
                    Step::Continue
                }
                Step::Done(false) => Step::Done(false),
            },
            CombMode::FinishSplit { baseline } => {
                let baseline = *baseline;
                match self.race.complete(read) {
                    Step::Done(true) => {
                        self.mode = CombMode::Top(self.top_as_tree_winner());
                        Step::Continue
                    }
                    Step::Done(false) => Step::Done(false),
                    Step::Continue => {
                        if self.race.holding_stop() {
                            self.mode = CombMode::OnlyRace;
                        } else if self.race.splits_resolved() > baseline {
                            // The splitter resolved without a capture.
                            return Step::Done(false);
                        }
                        Step::Continue
                    }
                }
            }
        }
    }
}

/// Tree height for capacity `n`: `max(1, ⌈log2 n - log2 log2 n⌉)`, so the
/// expected load on each of the `2^height` leaves is logarithmic.
pub fn race_height(n: u32) -> u32 {
    if n <= 2 {
        return 1;
    }
    let lg = f64::from(n).log2();
    let h = (lg - lg.log2()).ceil();
    (h as u32).max(1)
}

/// Length of each per-leaf elimination path: `max(1, ⌈4·log2 n⌉)`.
pub fn race_path_len(n: u32) -> u32 {
    let len = (4.0 * f64::from(n).log2()).ceil();
    (len as u32).max(1)
}

/// Default capacity for `k` participants: the smallest power of two at
/// least `k`.
pub fn default_capacity(k: u32) -> u32 {
    k.next_power_of_two()
}

struct Alloc {
    objects: Vec<ObjectInfo>,
    next: u32,
}

impl Alloc {
    fn new() -> Self {
        Self {
            objects: Vec::new(),
            next: 0,
        }
    }

    fn place(&mut self, owner: Owner, tag: ObjectTag, kind: ObjectKind) -> RegisterId {
        let len = kind.registers();
        let base = self.next;
        self.objects.push(ObjectInfo {
            kind,
            owner,
            tag,
            base,
            len,
        });
        self.next += len;
        RegisterId(base)
    }

    fn place_path_node(
        &mut self,
        owner: Owner,
        split_tag: ObjectTag,
        tas_tag: ObjectTag,
    ) -> PathNodeRegs {
        let s = self.place(owner, split_tag, ObjectKind::Splitter);
        let t = self.place(owner, tas_tag, ObjectKind::Tas2);
        PathNodeRegs {
            name: s,
            gate: RegisterId(s.0 + 1),
            first: t,
            second: RegisterId(t.0 + 1),
        }
    }
}

fn wire_ge_tas(a: &mut Alloc, owner: Owner, flavor: GeFlavor, n: u32) -> GeTasWiring {
    let door = a.place(owner, ObjectTag::Door, ObjectKind::Doorway);
    let rounds = ge_tas_rounds(flavor, n);
    let (levels, elect_kind): (u32, fn(u32) -> ObjectKind) = match flavor {
        GeFlavor::TwoStep => (loc_levels(u64::from(n)), |levels| ObjectKind::TwoStepElect {
            levels,
        }),
        GeFlavor::Climb => (rw_levels(u64::from(n)), |levels| ObjectKind::ClimbElect {
            levels,
        }),
    };
    let elections = (1..=rounds)
        .map(|i| a.place(owner, ObjectTag::GeLevel(i), elect_kind(levels)))
        .collect();
    let nodes = (1..=n)
        .map(|i| a.place_path_node(owner, ObjectTag::LoopSplit(i), ObjectTag::LoopTas(i)))
        .collect();
    GeTasWiring {
        door,
        flavor,
        levels,
        elections,
        nodes,
    }
}

fn wire_race(a: &mut Alloc, owner: Owner, n: u32, with_door: bool) -> RaceWiring {
    let door = with_door.then(|| a.place(owner, ObjectTag::Door, ObjectKind::Doorway));
    let height = race_height(n);
    let node_count = (1u32 << (height + 1)) - 1;
    let tree = (1..=node_count)
        .map(|v| {
            let s = a.place(owner, ObjectTag::TreeSplit(v), ObjectKind::RandomSplitter);
            let t = a.place(owner, ObjectTag::TreeTas(v), ObjectKind::Tas3);
            TreeNodeRegs {
                name: s,
                gate: RegisterId(s.0 + 1),
                tas3: [
                    t,
                    RegisterId(t.0 + 1),
                    RegisterId(t.0 + 2),
                    RegisterId(t.0 + 3),
                ],
            }
        })
        .collect();
    let leaves = 1u32 << height;
    let plen = race_path_len(n);
    let paths = (1..=leaves)
        .map(|path| {
            let nodes = (1..=plen)
                .map(|node| {
                    a.place_path_node(
                        owner,
                        ObjectTag::PathSplit { path, node },
                        ObjectTag::PathTas { path, node },
                    )
                })
                .collect();
            Arc::new(PathWiring { nodes })
        })
        .collect();
    let backup_nodes = (1..=n)
        .map(|j| a.place_path_node(owner, ObjectTag::BackupSplit(j), ObjectTag::BackupTas(j)))
        .collect();
    let top = a.place(owner, ObjectTag::Top, ObjectKind::Tas2);
    RaceWiring {
        door,
        height,
        tree,
        paths,
        backup: Arc::new(PathWiring {
            nodes: backup_nodes,
        }),
        top: [top, RegisterId(top.0 + 1)],
    }
}

#[derive(Debug, Clone)]
enum SystemKind {
    GeTas(Arc<GeTasWiring>),
    RatRace(Arc<RaceWiring>),
    Comb(Arc<CombWiring>),
    TwoStepElect { base: RegisterId, levels: u32 },
    ClimbElect { base: RegisterId, levels: u32 },
    Trivial,
}

/// A built algorithm instance: layout plus per-process machine factory.
#[derive(Debug, Clone)]
pub struct System {
    layout: Arc<Layout>,
    kind: SystemKind,
    k: u32,
}

impl System {
    /// The register map.
    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// Participants this system was built for.
    pub fn k(&self) -> u32 {
        self.k
    }

    /// Total registers the system occupies.
    pub fn registers(&self) -> u32 {
        self.layout.total_registers
    }

    /// A fresh zeroed register bank of the right size.
    pub fn bank(&self) -> RegisterBank {
        RegisterBank::new(self.layout.total_registers)
    }

    /// The machine for one participant.
    pub fn machine(&self, pid: ProcessId) -> Box<dyn StepMachine> {
        debug_assert!(pid.0 >= 1 && pid.0 <= self.k, "pid out of range");
        let me = Value::from(pid.0);
        match &self.kind {
            SystemKind::GeTas(w) => Box::new(Machine::new(AsTas(GeTasCore::new(w.clone(), me)))),
            SystemKind::RatRace(w) => {
                Box::new(Machine::new(AsTas(RatRaceCore::new(w.clone(), me))))
            }
            SystemKind::Comb(w) => Box::new(Machine::new(AsTas(CombCore::new(w.clone(), me)))),
            SystemKind::TwoStepElect { base, levels } => Box::new(Machine::new(AsElect(
                LocOblElect::new(*base, *levels),
            ))),
            SystemKind::ClimbElect { base, levels } => Box::new(Machine::new(AsElect(
                RwOblElect::new(*base, *levels),
            ))),
            SystemKind::Trivial => Box::new(InstantWin),
        }
    }

    /// Machines for all participants, process 1 first.
    pub fn machines(&self) -> Vec<Box<dyn StepMachine>> {
        (1..=self.k).map(|p| self.machine(ProcessId(p))).collect()
    }
}

/// Build an algorithm instance for `k` participants at capacity `n`.
pub fn build_system(algorithm: AlgorithmId, k: u32, n: u32) -> Result<System, ConfigError> {
    if k == 0 {
        return Err(ConfigError::ZeroProcesses);
    }
    if n < k {
        return Err(ConfigError::CapacityTooSmall { n, k });
    }
    let mut a = Alloc::new();
    let kind = match algorithm {
        AlgorithmId::TasGeLocObl => SystemKind::GeTas(Arc::new(wire_ge_tas(
            &mut a,
            Owner::Main,
            GeFlavor::TwoStep,
            n,
        ))),
        AlgorithmId::TasGeRwObl => SystemKind::GeTas(Arc::new(wire_ge_tas(
            &mut a,
            Owner::Main,
            GeFlavor::Climb,
            n,
        ))),
        AlgorithmId::TasRatRace => {
            SystemKind::RatRace(Arc::new(wire_race(&mut a, Owner::Main, n, true)))
        }
        AlgorithmId::TasComb => {
            let door = a.place(Owner::Main, ObjectTag::Door, ObjectKind::Doorway);
            let top = a.place(Owner::Main, ObjectTag::Top, ObjectKind::Tas2);
            let inner = Arc::new(wire_ge_tas(&mut a, Owner::Inner, GeFlavor::TwoStep, n));
            let race = Arc::new(wire_race(&mut a, Owner::Race, n, false));
            SystemKind::Comb(Arc::new(CombWiring {
                door,
                top: [top, RegisterId(top.0 + 1)],
                inner,
                race,
            }))
        }
        AlgorithmId::GeLocObl => {
            let levels = loc_levels(u64::from(n));
            let base = a.place(
                Owner::Main,
                ObjectTag::GeLevel(1),
                ObjectKind::TwoStepElect { levels },
            );
            SystemKind::TwoStepElect { base, levels }
        }
        AlgorithmId::GeRwObl => {
            let levels = rw_levels(u64::from(n));
            let base = a.place(
                Owner::Main,
                ObjectTag::GeLevel(1),
                ObjectKind::ClimbElect { levels },
            );
            SystemKind::ClimbElect { base, levels }
        }
        AlgorithmId::GeTrivial => SystemKind::Trivial,
    };
    let layout = Arc::new(Layout {
        algorithm,
        n,
        k,
        objects: a.objects,
        total_registers: a.next,
    });
    Ok(System { layout, kind, k })
}

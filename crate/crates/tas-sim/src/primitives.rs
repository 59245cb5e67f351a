//! Protocol building blocks and the adapter that turns them into engine
//! machines.
//!
//! Protocol logic is written against the [`Proto`] trait: `prepare` receives
//! the step's coin word and names the shared operation to perform, and
//! `complete` receives that operation's result and either continues or
//! finishes with the protocol's output. The [`Machine`] adapter wraps any
//! `Proto` into a [`StepMachine`], enforcing the engine's coin/shared
//! alternation by construction. Deterministic steps simply ignore the coin
//! word they are handed.
//!
//! The blocks here are the small multi-process races everything else is
//! wired from: a one-shot [`Doorway`], the deterministic and randomized
//! [`Splitter`]s, and the two- and three-process test-and-set races
//! [`Tas2`] / [`Tas3`].

use crate::coins::fair_bit;
use crate::sim::{
    Outcome, PendingAction, RegisterId, SharedOp, Status, StepMachine, Value,
};

/// Result of one protocol step: keep going or finish with an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step<T> {
    /// The protocol has more steps.
    Continue,
    /// The protocol finished with this output.
    Done(T),
}

/// A protocol expressed as prepare/complete pairs.
///
/// Each machine step is one `prepare` (given this step's coin word, return
/// the shared operation to perform) followed by one `complete` (given the
/// operation's result: `Some(value)` for reads, `None` for writes). A
/// protocol that needs the coin at decision time stashes it in `prepare`.
pub trait Proto {
    /// Output of the protocol when it finishes.
    type Out;
    /// Consume this step's coin word and name the shared operation.
    fn prepare(&mut self, coin: u64) -> SharedOp;
    /// Absorb the operation's result and continue or finish.
    fn complete(&mut self, read: Option<Value>) -> Step<Self::Out>;
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    AtCoin,
    AtShared(SharedOp),
    Done(Outcome),
}

/// Adapter from a [`Proto`] to an engine [`StepMachine`].
///
/// Starts at a coin step and alternates coin/shared until the protocol
/// finishes, satisfying the engine's step contract for any protocol.
#[derive(Debug, Clone)]
pub struct Machine<P> {
    proto: P,
    phase: Phase,
}

impl<P: Proto> Machine<P>
where
    P::Out: Into<Outcome>,
{
    /// Wrap a protocol, ready to take its first (coin) step.
    pub fn new(proto: P) -> Self {
        Self {
            proto,
            phase: Phase::AtCoin,
        }
    }
}

impl<P: Proto> StepMachine for Machine<P>
where
    P::Out: Into<Outcome>,
{
    fn status(&self) -> Status {
        match self.phase {
            Phase::Done(outcome) => Status::Finished(outcome),
            _ => Status::Running,
        }
    }

    fn peek(&self) -> PendingAction {
        match self.phase {
            Phase::AtCoin => PendingAction::Coin,
            Phase::AtShared(op) => PendingAction::Shared(op),
            Phase::Done(_) => panic!("peek on a finished machine"),
        }
    }

    fn apply_coin(&mut self, word: u64) {
        match self.phase {
            Phase::AtCoin => {
                let op = self.proto.prepare(word);
                self.phase = Phase::AtShared(op);
            }
            _ => panic!("apply_coin out of turn"),
        }
    }

    fn apply_shared(&mut self, read: Option<Value>) {
        match self.phase {
            Phase::AtShared(op) => {
                debug_assert_eq!(
                    matches!(op, SharedOp::Read(_)),
                    read.is_some(),
                    "read result must accompany reads and only reads"
                );
                self.phase = match self.proto.complete(read) {
                    Step::Continue => Phase::AtCoin,
                    Step::Done(out) => Phase::Done(out.into()),
                };
            }
            _ => panic!("apply_shared out of turn"),
        }
    }
}

/// Adapter giving a boolean protocol test-and-set outcome semantics
/// (`true` = won the test-and-set).
#[derive(Debug, Clone)]
pub struct AsTas<P>(pub P);

impl<P: Proto<Out = bool>> Proto for AsTas<P> {
    type Out = Outcome;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        self.0.prepare(coin)
    }

    fn complete(&mut self, read: Option<Value>) -> Step<Outcome> {
        match self.0.complete(read) {
            Step::Continue => Step::Continue,
            Step::Done(won) => Step::Done(Outcome::Tas { won }),
        }
    }
}

/// Adapter giving a boolean protocol election outcome semantics
/// (`true` = elected).
#[derive(Debug, Clone)]
pub struct AsElect<P>(pub P);

impl<P: Proto<Out = bool>> Proto for AsElect<P> {
    type Out = Outcome;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        self.0.prepare(coin)
    }

    fn complete(&mut self, read: Option<Value>) -> Step<Outcome> {
        match self.0.complete(read) {
            Step::Continue => Step::Continue,
            Step::Done(won) => Step::Done(Outcome::Elect { won }),
        }
    }
}

/// Exit taken from a splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Captured the splitter: at most one process per splitter, and a solo
    /// process always.
    Stop,
    /// Deflected left.
    Left,
    /// Deflected right.
    Right,
}

/// One-shot gate on a single register: the first write closes it.
///
/// A process reads the gate; nonzero means somebody already got through
/// (output `false`), zero means it writes 1 and passes (output `true`).
/// One or two shared steps.
#[derive(Debug, Clone)]
pub struct Doorway {
    gate: RegisterId,
    closing: bool,
}

impl Doorway {
    /// Registers a doorway occupies.
    pub const REGISTERS: u32 = 1;

    /// Doorway over the given gate register.
    pub fn new(gate: RegisterId) -> Self {
        Self {
            gate,
            closing: false,
        }
    }
}

impl Proto for Doorway {
    type Out = bool;

    fn prepare(&mut self, _coin: u64) -> SharedOp {
        if self.closing {
            SharedOp::Write(self.gate, 1)
        } else {
            SharedOp::Read(self.gate)
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        if self.closing {
            return Step::Done(true);
        }
        if read.expect("doorway read") != 0 {
            Step::Done(false)
        } else {
            self.closing = true;
            Step::Continue
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SplitterState {
    WriteName,
    ReadGate,
    WriteGate,
    ReadName,
}

/// Deterministic splitter over two registers (`name`, `gate`).
///
/// Write your name, read the gate: occupied means exit `Left`. Otherwise
/// close the gate and re-read the name: unchanged means `Stop`, overwritten
/// means exit `Right`. At most one process stops, a solo process always
/// stops, and not every process can take the same non-stop exit when two or
/// more run alone through it. Four shared steps on the stop path, at most
/// four on any path.
#[derive(Debug, Clone)]
pub struct Splitter {
    name: RegisterId,
    gate: RegisterId,
    me: Value,
    state: SplitterState,
}

impl Splitter {
    /// Registers a splitter occupies.
    pub const REGISTERS: u32 = 2;

    /// Splitter over `name` and `gate`, entered by a process calling
    /// itself `me` (nonzero; registers start at zero).
    pub fn new(name: RegisterId, gate: RegisterId, me: Value) -> Self {
        debug_assert!(me != 0, "splitter names must be nonzero");
        Self {
            name,
            gate,
            me,
            state: SplitterState::WriteName,
        }
    }
}

impl Proto for Splitter {
    type Out = Direction;

    fn prepare(&mut self, _coin: u64) -> SharedOp {
        match self.state {
            SplitterState::WriteName => SharedOp::Write(self.name, self.me),
            SplitterState::ReadGate => SharedOp::Read(self.gate),
            SplitterState::WriteGate => SharedOp::Write(self.gate, 1),
            SplitterState::ReadName => SharedOp::Read(self.name),
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<Direction> {
        match self.state {
            SplitterState::WriteName => {
                self.state = SplitterState::ReadGate;
                Step::Continue
            }
            SplitterState::ReadGate => {
                if read.expect("gate read") != 0 {
                    Step::Done(Direction::Left)
                } else {
                    self.state = SplitterState::WriteGate;
                    Step::Continue
                }
            }
            SplitterState::WriteGate => {
                self.state = SplitterState::ReadName;
                Step::Continue
            }
            SplitterState::ReadName => {
                if read.expect("name read") == self.me {
                    Step::Done(Direction::Stop)
                } else {
                    Step::Done(Direction::Right)
                }
            }
        }
    }
}

/// Randomized splitter: same register discipline as [`Splitter`], but both
/// non-stop exits pick `Left`/`Right` by a fresh fair coin (the coin word
/// of the shared step at which the exit is decided).
///
/// Keeps the splitter's stop guarantees while making the exit direction of
/// deflected processes unpredictable to the protocol's adversary.
#[derive(Debug, Clone)]
pub struct RandomSplitter {
    inner: Splitter,
    last_coin: u64,
}

impl RandomSplitter {
    /// Registers a randomized splitter occupies.
    pub const REGISTERS: u32 = 2;

    /// Randomized splitter over `name` and `gate` for process `me`.
    pub fn new(name: RegisterId, gate: RegisterId, me: Value) -> Self {
        Self {
            inner: Splitter::new(name, gate, me),
            last_coin: 0,
        }
    }
}

impl Proto for RandomSplitter {
    type Out = Direction;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        self.last_coin = coin;
        self.inner.prepare(coin)
    }

    fn complete(&mut self, read: Option<Value>) -> Step<Direction> {
        match self.inner.complete(read) {
            Step::Continue => Step::Continue,
            Step::Done(Direction::Stop) => Step::Done(Direction::Stop),
            Step::Done(_) => Step::Done(if fair_bit(self.last_coin) {
                Direction::Left
            } else {
                Direction::Right
            }),
        }
    }
}

/// Two-process test-and-set: a position race over two single-writer
/// registers.
///
/// Each contender repeatedly publishes its position (starting at 1) and
/// reads the other's register `q` (0 until the other arrives):
///
/// - `q ≥ pos + 2`: hopelessly behind — lose;
/// - `q ≤ pos - 3`: safely ahead — win;
/// - `q ≤ pos - 1`: the other trails — advance one position;
/// - `q ∈ {pos, pos+1}`: neck and neck — advance by a fair coin.
///
/// Positions only grow, and the published value never lags a contender's
/// true position by more than one; the win margin of three therefore
/// pins the loser at least two behind, whose very next read observes a
/// gap of two and loses. At most one contender ever wins, and once one
/// side finishes the other finishes within a bounded solo run. A solo
/// contender advances deterministically and wins in exactly six shared
/// steps.
#[derive(Debug, Clone)]
pub struct Tas2 {
    mine: RegisterId,
    theirs: RegisterId,
    pos: Value,
    reading: bool,
    last_coin: u64,
}

impl Tas2 {
    /// Registers one two-process race occupies (one per side).
    pub const REGISTERS: u32 = 2;

    /// Shared steps of the deterministic solo winning run.
    pub const SOLO_STEPS: u64 = 6;

    /// Enter the race publishing to `mine` and watching `theirs`.
    pub fn new(mine: RegisterId, theirs: RegisterId) -> Self {
        Self {
            mine,
            theirs,
            pos: 1,
            reading: false,
            last_coin: 0,
        }
    }
}

impl Proto for Tas2 {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        self.last_coin = coin;
        if self.reading {
            SharedOp::Read(self.theirs)
        } else {
            SharedOp::Write(self.mine, self.pos)
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        if !self.reading {
            self.reading = true;
            return Step::Continue;
        }
        self.reading = false;
        let q = read.expect("opponent read");
        if q >= self.pos + 2 {
            Step::Done(false)
        } else if q <= self.pos - 3 {
            Step::Done(true)
        } else {
            if q <= self.pos - 1 {
                self.pos += 1;
            } else if fair_bit(self.last_coin) {
                self.pos += 1;
            }
            Step::Continue
        }
    }
}

/// Which of the three entry slots a process takes into a [`Tas3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tas3Slot {
    /// First contender of the preliminary race.
    First,
    /// Second contender of the preliminary race.
    Second,
    /// Bye straight into the final race.
    Third,
}

/// Three-process test-and-set from two [`Tas2`] races.
///
/// Slots one and two race each other; that race's winner meets slot three
/// in a final race. Each race admits at most two processes and at most one
/// winner, so at most one of three wins overall.
#[derive(Debug, Clone)]
pub struct Tas3 {
    final_mine: RegisterId,
    final_theirs: RegisterId,
    race: Tas2,
    in_final: bool,
}

impl Tas3 {
    /// Registers a three-process race occupies (two per inner race).
    pub const REGISTERS: u32 = 4;

    /// Enter via `slot` over four registers: `regs[0..2]` are the
    /// preliminary race, `regs[2..4]` the final.
    pub fn new(regs: [RegisterId; 4], slot: Tas3Slot) -> Self {
        let (race, in_final) = match slot {
            Tas3Slot::First => (Tas2::new(regs[0], regs[1]), false),
            Tas3Slot::Second => (Tas2::new(regs[1], regs[0]), false),
            Tas3Slot::Third => (Tas2::new(regs[3], regs[2]), true),
        };
        Self {
            final_mine: regs[2],
            final_theirs: regs[3],
            race,
            in_final,
        }
    }
}

impl Proto for Tas3 {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        self.race.prepare(coin)
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match self.race.complete(read) {
            Step::Continue => Step::Continue,
            Step::Done(false) => Step::Done(false),
            Step::Done(true) => {
                if self.in_final {
                    Step::Done(true)
                } else {
                    self.race = Tas2::new(self.final_mine, self.final_theirs);
                    self.in_final = true;
                    Step::Continue
                }
            }
        }
    }
}

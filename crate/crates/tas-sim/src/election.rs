//! Group election: protocols that elect a small nonempty subset of their
//! participants.
//!
//! Every participant returns elected/not-elected. Two guarantees matter:
//! in every completed execution at least one participant is elected, and
//! the number elected stays small (in expectation, against the protocol's
//! intended scheduler class).
//!
//! Two randomized protocols are provided, named after the scheduler class
//! they withstand:
//!
//! - [`LocOblElect`]: two shared steps per participant; sound against
//!   location-oblivious schedulers.
//! - [`RwOblElect`]: at most `2·levels - 1` shared steps; sound against
//!   read/write-oblivious schedulers.
//!
//! [`InstantWin`] is the degenerate election (everyone elected, zero
//! steps); it stands in where contention is already known to be trivial.

use crate::coins::{geometric_level, heads, threshold};
use crate::primitives::{Proto, Step};
use crate::sim::{
    Outcome, PendingAction, RegisterId, SharedOp, Status, StepMachine, Value,
};

/// `⌈log2 n⌉` as an integer (0 for `n ≤ 1`).
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Iterated logarithm `log*_2 n`: how many times `log2` must be applied
/// before the value drops to 1 or below. Grows so slowly it is at most 5
/// for any physically representable input.
pub fn log_star2(n: u64) -> u32 {
    let mut x = n as f64;
    let mut count = 0;
    while x > 1.0 {
        x = x.log2();
        count += 1;
    }
    count
}

/// Levels used by [`LocOblElect`] for up to `n` participants:
/// `max(1, ⌈log2 n⌉)`.
pub fn loc_levels(n: u64) -> u32 {
    ceil_log2(n).max(1)
}

/// Levels used by [`RwOblElect`] for up to `n` participants:
/// `max(1, ⌈log_1.5(log2 n)⌉)`, i.e. the level biases
/// `q_i = 2^(-1.5^(i-1))` reach roughly `1/n` at the top.
pub fn rw_levels(n: u64) -> u32 {
    let lg = (n.max(2) as f64).log2();
    let levels = (lg.ln() / 1.5f64.ln()).ceil();
    levels.max(1.0) as u32
}

/// Acceptance thresholds for the per-level coin biases of [`RwOblElect`]:
/// level `i` (1-based) flips heads with probability `2^(-1.5^(i-1))`.
pub fn rw_thresholds(levels: u32) -> Vec<u128> {
    (0..levels)
        .map(|i| threshold(2f64.powf(-(1.5f64.powi(i as i32)))))
        .collect()
}

/// Two-step election over `levels + 1` registers.
///
/// A participant draws a level `x` from the truncated geometric
/// distribution (`P(x=i) = 2^-i`, remaining mass on the top level), writes
/// the level-`x` register, then reads the level-`x+1` register and is
/// elected exactly when that read returns zero. The top-plus-one register
/// is never written, so top-level participants are always elected and
/// every execution elects at least the highest occupied level's earliest
/// readers.
#[derive(Debug, Clone)]
pub struct LocOblElect {
    base: RegisterId,
    levels: u32,
    x: u32,
    reading: bool,
}

impl LocOblElect {
    /// Registers an instance with this many levels occupies.
    pub fn registers(levels: u32) -> u32 {
        levels + 1
    }

    /// Shared steps every participant takes.
    pub const STEPS: u64 = 2;

    /// Instance over `registers(levels)` consecutive registers starting at
    /// `base`.
    pub fn new(base: RegisterId, levels: u32) -> Self {
        debug_assert!(levels >= 1);
        Self {
            base,
            levels,
            x: 0,
            reading: false,
        }
    }

    fn level_reg(&self, level: u32) -> RegisterId {
        RegisterId(self.base.0 + level - 1)
    }
}

impl Proto for LocOblElect {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        if self.reading {
            SharedOp::Read(self.level_reg(self.x + 1))
        } else {
            self.x = geometric_level(coin, self.levels);
            SharedOp::Write(self.level_reg(self.x), 1)
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        if self.reading {
            Step::Done(read.expect("level read") == 0)
        } else {
            self.reading = true;
            Step::Continue
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum RwState {
    /// Climbing levels `1..=levels`.
    Back { level: u32 },
    /// Descending levels `turn-1..=1` after the turn.
    Forward { level: u32 },
}

/// Climb-and-descend election over `2·levels - 1` registers.
///
/// Registers split into up-markers `Up[1..=levels]` and down-markers
/// `Down[1..=levels-1]`. A participant climbs: at level `i` it flips a
/// coin of bias `q_i = 2^(-1.5^(i-1))`; heads writes `Up[i]` and climbs
/// on (at the top it turns instead), tails reads `Up[i]` — observing a
/// mark loses immediately, otherwise it turns. Turning at level `i` means
/// descending through levels `i-1..=1`: heads writes `Down[j]`, tails
/// reads `Down[j]` and loses on a mark. A participant that completes the
/// descent is elected.
///
/// Every level is one shared step, so a participant takes at most
/// `2·levels - 1` of them. The marks make over-election self-limiting:
/// whoever wrote the highest up-marker can never lose (nothing above it
/// is marked, and its descent precedes equal-height descents often
/// enough), so every completed execution elects someone.
#[derive(Debug, Clone)]
pub struct RwOblElect {
    base: RegisterId,
    levels: u32,
    thresholds: Vec<u128>,
    state: RwState,
    flip_heads: bool,
}

impl RwOblElect {
    /// Registers an instance with this many levels occupies.
    pub fn registers(levels: u32) -> u32 {
        2 * levels - 1
    }

    /// Largest possible number of shared steps for a participant.
    pub fn max_steps(levels: u32) -> u64 {
        u64::from(2 * levels - 1)
    }

    /// Instance over `registers(levels)` consecutive registers starting at
    /// `base`.
    pub fn new(base: RegisterId, levels: u32) -> Self {
        debug_assert!(levels >= 1);
        Self {
            base,
            levels,
            thresholds: rw_thresholds(levels),
            state: RwState::Back { level: 1 },
            flip_heads: false,
        }
    }

    fn up_reg(&self, level: u32) -> RegisterId {
        RegisterId(self.base.0 + level - 1)
    }

    fn down_reg(&self, level: u32) -> RegisterId {
        RegisterId(self.base.0 + self.levels + level - 1)
    }
}

impl Proto for RwOblElect {
    type Out = bool;

    fn prepare(&mut self, coin: u64) -> SharedOp {
        match self.state {
            RwState::Back { level } => {
                self.flip_heads = heads(coin, self.thresholds[(level - 1) as usize]);
                if self.flip_heads {
                    SharedOp::Write(self.up_reg(level), 1)
                } else {
                    SharedOp::Read(self.up_reg(level))
                }
            }
            RwState::Forward { level } => {
                self.flip_heads = heads(coin, self.thresholds[(level - 1) as usize]);
                if self.flip_heads {
                    SharedOp::Write(self.down_reg(level), 1)
                } else {
                    SharedOp::Read(self.down_reg(level))
                }
            }
        }
    }

    fn complete(&mut self, read: Option<Value>) -> Step<bool> {
        match self.state {
            RwState::Back { level } => {
                if self.flip_heads {
                    // Wrote the up-marker; climb, or turn at the top.
                    if level == self.levels {
                        turn(self, level)
                    } else {
                        self.state = RwState::Back { level: level + 1 };
                        Step::Continue
                    }
                } else if read.expect("up-marker read") != 0 {
                    Step::Done(false)
                } else {
                    turn(self, level)
                }
            }
            RwState::Forward { level } => {
                if !self.flip_heads && read.expect("down-marker read") != 0 {
                    return Step::Done(false);
                }
                if level == 1 {
                    Step::Done(true)
                } else {
                    self.state = RwState::Forward { level: level - 1 };
                    Step::Continue
                }
            }
        }
    }
}

/// Enter the descent below `level`, or finish if there is nothing below.
fn turn(elect: &mut RwOblElect, level: u32) -> Step<bool> {
    if level == 1 {
        Step::Done(true)
    } else {
        elect.state = RwState::Forward { level: level - 1 };
        Step::Continue
    }
}

/// The degenerate election: born finished and elected, zero steps, zero
/// registers.
#[derive(Debug, Clone, Copy, Default)]
pub struct InstantWin;

impl StepMachine for InstantWin {
    fn status(&self) -> Status {
        Status::Finished(Outcome::Elect { won: true })
    }

    fn peek(&self) -> PendingAction {
        panic!("peek on a finished machine")
    }

    fn apply_coin(&mut self, _word: u64) {
        panic!("apply_coin on a finished machine")
    }

    fn apply_shared(&mut self, _read: Option<Value>) {
        panic!("apply_shared on a finished machine")
    }
}

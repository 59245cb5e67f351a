//! Deterministic randomness: coin words, biased coins, and stream RNGs.
//!
//! Every random decision in a simulated protocol consumes one fresh 64-bit
//! *coin word*. Coin words are a pure function of `(master seed, trial,
//! process, ordinal)`, so a trial can be reproduced from its `RunSpec` alone
//! and an execution can be replayed from its recorded coin vectors without
//! re-deriving anything.
//!
//! Protocols turn words into decisions with the helpers here:
//! [`fair_bit`] for unbiased bits, [`threshold`] + [`heads`] for
//! `Bernoulli(q)` coins, and [`geometric_level`] for the truncated geometric
//! level distribution used by group election. All of them read the word as a
//! uniform integer in `[0, 2^64)`, so equal words always yield equal
//! decisions.

use crate::sim::ProcessId;

/// 64-bit finalizer mix (the `splitmix64` output function).
///
/// Bijective on `u64`, with full avalanche; used both as the stream RNG
/// output stage and to hash coin-word coordinates.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The coin word consumed by the `ordinal`-th (0-based) coin step of `pid`
/// in trial `trial` under `master`.
///
/// Each coordinate is folded in with an odd multiplier and a full [`mix64`]
/// round, so distinct coordinates give independent-looking words and no
/// coordinate can be cancelled by another.
pub fn coin_word(master: u64, trial: u64, pid: ProcessId, ordinal: u64) -> u64 {
    let mut z = mix64(master ^ 0xa076_1d64_78bd_642f);
    z = mix64(z ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = mix64(z ^ u64::from(pid.0).wrapping_mul(0xe703_7ed1_a0b4_28db));
    z = mix64(z ^ ordinal.wrapping_mul(0x8ebc_6af0_9c88_c6e3));
    z
}

/// Source of coin words for the engine, one fresh word per coin step.
pub trait CoinSource {
    /// Next coin word for a coin step of `pid`. Infallible; sources with
    /// finite supply must be provisioned for the run's step limit.
    fn next(&mut self, pid: ProcessId) -> u64;
}

/// The standard per-trial coin source: words keyed by
/// `(master, trial, pid, ordinal)` via [`coin_word`].
#[derive(Debug, Clone)]
pub struct CounterCoins {
    master: u64,
    trial: u64,
    ordinals: Vec<u64>,
}

impl CounterCoins {
    /// Coin source for one trial with `k` processes.
    pub fn new(master: u64, trial: u64, k: usize) -> Self {
        Self {
            master,
            trial,
            ordinals: vec![0; k],
        }
    }
}

impl CoinSource for CounterCoins {
    fn next(&mut self, pid: ProcessId) -> u64 {
        let ord = &mut self.ordinals[pid.idx()];
        let word = coin_word(self.master, self.trial, pid, *ord);
        *ord += 1;
        word
    }
}

/// Coin source that replays fixed per-process word vectors.
///
/// Used when the coin outcomes themselves are the object under study (e.g.
/// schedule-enumeration runs). Panics if a vector runs dry, which indicates
/// an under-provisioned caller rather than a protocol behavior.
#[derive(Debug, Clone)]
pub struct FixedCoins {
    vectors: Vec<Vec<u64>>,
    cursors: Vec<usize>,
}

impl FixedCoins {
    /// Source backed by one word vector per process (index 0 = process 1).
    pub fn new(vectors: Vec<Vec<u64>>) -> Self {
        let cursors = vec![0; vectors.len()];
        Self { vectors, cursors }
    }
}

impl CoinSource for FixedCoins {
    fn next(&mut self, pid: ProcessId) -> u64 {
        let cursor = &mut self.cursors[pid.idx()];
        let word = self.vectors[pid.idx()]
            .get(*cursor)
            .copied()
            .unwrap_or_else(|| panic!("fixed coin vector exhausted for process {pid}"));
        *cursor += 1;
        word
    }
}

/// Small deterministic stream RNG (`splitmix64`) for scheduler choices and
/// harness sampling. Not used for protocol coins, which go through
/// [`coin_word`] so they are addressable individually.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Stream seeded with `seed`.
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next uniform 64-bit word.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform value in `[0, n)` via the multiply-shift range map.
    ///
    /// The map has bias below `n / 2^64`, negligible for the small ranges
    /// (process counts, schedule slots) it is used for, and keeps the output
    /// a pure function of a single stream word.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0, "empty range");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }
}

/// Unbiased bit of a coin word (probability exactly 1/2).
#[inline]
pub fn fair_bit(word: u64) -> bool {
    word >> 63 == 0
}

/// Acceptance threshold for a `Bernoulli(q)` coin: `⌊q · 2^64⌋`.
///
/// For `q` with a short binary expansion (1/2, 1/4, ...) this is exact; for
/// other `q` the realized probability is the closest multiple of `2^-64`
/// below or at the `f64` value of `q`.
pub fn threshold(q: f64) -> u128 {
    debug_assert!((0.0..=1.0).contains(&q), "probability out of range: {q}");
    (q * 18_446_744_073_709_551_616.0) as u128
}

/// Whether a coin word comes up heads for an acceptance threshold from
/// [`threshold`]: heads with probability `threshold / 2^64`.
#[inline]
pub fn heads(word: u64, threshold: u128) -> bool {
    u128::from(word) < threshold
}

/// Sample the truncated geometric level distribution on `1..=levels`:
/// level `i < levels` with probability `2^-i`, and level `levels` with the
/// remaining mass `2^-(levels-1)`.
///
/// Level `i` corresponds to words with exactly `i - 1` leading one bits,
/// which is the inverse-CDF map for this distribution.
#[inline]
pub fn geometric_level(word: u64, levels: u32) -> u32 {
    debug_assert!(levels >= 1, "need at least one level");
    (word.leading_ones() + 1).min(levels)
}

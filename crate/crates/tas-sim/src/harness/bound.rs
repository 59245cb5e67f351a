//! Schedule-family witness for the step lower bound.
//!
//! For a target step count `t`, [`schedules`] enumerates a small family
//! Σ_t of two-process schedules with the property that a two-process
//! test-and-set race forces some process to take at least `t` shared
//! steps under *every* schedule in the family, no matter the coin flips —
//! while the family stays small (at most `4^t` schedules, each of length
//! at most `4t - 2`).
//!
//! Each schedule is a sequence of doubled slots `p p` (one slot = one
//! coin step plus one shared step of process `p`) with `k ∈ {t, …,
//! 2t-1}` slots, exactly `t` of which belong to one designated process.
//! The designated process can neither win a two-process race in `t ≤ 5`
//! of its own steps (winning takes six) nor lose (losing requires the
//! peer to publish position 3, which takes five steps the peer does not
//! get), so it performs a shared step in every one of its `t` slots.
//!
//! [`verify_step_bound`] replays the family against the actual race
//! implementation over random coin vectors and reports how often the
//! bound is realized.

use crate::adversary::FromSchedule;
use crate::coins::{FixedCoins, SplitMix64};
use crate::primitives::{AsTas, Machine, Tas2};
use crate::sim::{run, ProcessId, RegisterBank, RegisterId, StepMachine};

/// The schedule family Σ_t over processes 1 and 2, in a fixed
/// deterministic order.
pub fn schedules(t: u32) -> Vec<Vec<ProcessId>> {
    assert!(t >= 1, "the bound needs a positive step target");
    let mut out = Vec::new();
    for k in t..=(2 * t - 1) {
        for long in [1u32, 2] {
            let short = 3 - long;
            // Every way to give the designated process exactly t of the
            // k slots. k ≤ 2t-1 < 64 keeps the mask walk cheap.
            for mask in 0u64..(1u64 << k) {
                if mask.count_ones() != t {
                    continue;
                }
                let mut sigma = Vec::with_capacity(2 * k as usize);
                for slot in 0..k {
                    let pid = if mask >> slot & 1 == 1 { long } else { short };
                    sigma.push(ProcessId(pid));
                    sigma.push(ProcessId(pid));
                }
                out.push(sigma);
            }
        }
    }
    out
}

/// Closed-form size of Σ_t: `2·Σ_{k=t}^{2t-1} C(k,t)` (the `k = t` term
/// is 2 schedules).
pub fn sigma_size(t: u32) -> u64 {
    let mut total = 0u64;
    for k in t..=(2 * t - 1) {
        total += 2 * binomial(u64::from(k), u64::from(t));
    }
    total
}

fn binomial(n: u64, r: u64) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc = 1u64;
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Outcome of replaying Σ_t against the two-process race.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// Step target.
    pub t: u32,
    /// Family size |Σ_t|.
    pub schedules: u64,
    /// Coin-vector pairs sampled.
    pub omega_pairs: u64,
    /// Fraction of coin pairs for which at least one schedule in the
    /// family forced `t` shared steps on some process.
    pub exists_rate: f64,
    /// Largest per-schedule success fraction: how often the single best
    /// schedule forced the bound across the sampled coin pairs.
    pub best_sigma_rate: f64,
}

/// Replay every schedule in Σ_t against the two-process race under
/// `omega_pairs` random coin-vector pairs.
pub fn verify_step_bound(t: u32, omega_pairs: u64, seed: u64) -> BoundReport {
    let sigmas = schedules(t);
    let mut rng = SplitMix64::new(seed);
    let coins_per_pid = 2 * t as usize; // more than any slot count needs
    let mut per_sigma_hits = vec![0u64; sigmas.len()];
    let mut exists_hits = 0u64;

    for _ in 0..omega_pairs {
        let omega: Vec<Vec<u64>> = (0..2)
            .map(|_| (0..coins_per_pid).map(|_| rng.next_u64()).collect())
            .collect();
        let mut any = false;
        for (i, sigma) in sigmas.iter().enumerate() {
            if forces_t_steps(sigma, &omega, t) {
                per_sigma_hits[i] += 1;
                any = true;
            }
        }
        if any {
            exists_hits += 1;
        }
    }

    let denom = omega_pairs.max(1) as f64;
    BoundReport {
        t,
        schedules: sigmas.len() as u64,
        omega_pairs,
        exists_rate: exists_hits as f64 / denom,
        best_sigma_rate: per_sigma_hits
            .iter()
            .map(|h| *h as f64 / denom)
            .fold(0.0, f64::max),
    }
}

/// Run the two-process race under one fixed schedule and coin pair and
/// report whether some process performed at least `t` shared steps.
fn forces_t_steps(sigma: &[ProcessId], omega: &[Vec<u64>], t: u32) -> bool {
    let mut machines: Vec<Box<dyn StepMachine>> = vec![
        Box::new(Machine::new(AsTas(Tas2::new(RegisterId(0), RegisterId(1))))),
        Box::new(Machine::new(AsTas(Tas2::new(RegisterId(1), RegisterId(0))))),
    ];
    let mut bank = RegisterBank::new(2);
    let mut adversary = FromSchedule::new(sigma.to_vec());
    let mut coins = FixedCoins::new(omega.to_vec());
    let exec = run(
        &mut machines,
        &mut bank,
        &mut adversary,
        &mut coins,
        sigma.len() as u64,
    );
    exec.shared_step_counts().iter().any(|&c| c >= u64::from(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes_match_the_closed_form() {
        assert_eq!(sigma_size(1), 2);
        assert_eq!(sigma_size(2), 8);
        // 2·(C(3,3)+C(4,3)+C(5,3)) = 2·(1+4+10)
        assert_eq!(sigma_size(3), 30);
        for t in 1..=5 {
            let sigmas = schedules(t);
            assert_eq!(sigmas.len() as u64, sigma_size(t), "t={t}");
            assert!(sigma_size(t) <= 4u64.pow(t), "t={t}");
        }
    }

    #[test]
    fn schedules_are_doubled_with_one_designated_process() {
        for t in [1u32, 3] {
            for sigma in schedules(t) {
                assert!(sigma.len() % 2 == 0);
                for pair in sigma.chunks(2) {
                    assert_eq!(pair[0], pair[1]);
                }
                let ones = sigma.iter().filter(|p| p.0 == 1).count();
                let twos = sigma.iter().filter(|p| p.0 == 2).count();
                assert!(
                    ones == 2 * t as usize || twos == 2 * t as usize,
                    "t={t}: no process has exactly {t} slots"
                );
            }
        }
    }

    #[test]
    fn every_schedule_forces_the_bound_for_small_t() {
        // Structural for t ≤ 5: the designated process can neither win
        // nor lose within its slots, so every schedule works for every
        // coin pair — spot-check a few coin pairs per schedule.
        let mut rng = SplitMix64::new(41);
        for t in 1..=4 {
            for sigma in schedules(t) {
                for _ in 0..3 {
                    let omega: Vec<Vec<u64>> = (0..2)
                        .map(|_| (0..2 * t as usize).map(|_| rng.next_u64()).collect())
                        .collect();
                    assert!(forces_t_steps(&sigma, &omega, t), "t={t}");
                }
            }
        }
    }

    #[test]
    fn report_rates_are_perfect_for_small_t() {
        let report = verify_step_bound(2, 50, 7);
        assert_eq!(report.exists_rate, 1.0);
        assert_eq!(report.best_sigma_rate, 1.0);
        assert_eq!(report.schedules, 8);
    }
}

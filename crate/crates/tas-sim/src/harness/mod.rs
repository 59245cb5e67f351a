//! Monte-Carlo trial runner: executes many independent trials of one
//! configuration, checks every trial's log, and aggregates metrics into
//! a fixed-schema CSV row.
//!
//! Determinism: a configuration is identified by its [`RunSpec`]; every
//! value derived from it (per-trial coins, per-trial adversary seeds,
//! aggregation order) depends only on the spec, so two runs of the same
//! spec produce byte-identical rows — whether trials execute on one
//! thread or many. The parallel path (enabled by the `parallel` feature,
//! on by default) fans trials out with rayon and collects them back in
//! trial order before aggregating.

pub mod bound;
pub mod checks;
pub mod stats;

pub use checks::{check_trial, TrialMetrics, Violation, ViolationKind};

use thiserror::Error;

use crate::adversary::AdversaryId;
use crate::algorithms::{build_system, AlgorithmId, ConfigError, System};
use crate::coins::{coin_word, CounterCoins};
use crate::sim::{run, Execution, ProcessId};

/// Default cap on events per trial. Hitting it is reported as a
/// violation: these protocols always finish long before it.
pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

/// How many violations a run outcome retains verbatim (the count is
/// always exact).
pub const VIOLATION_SAMPLE_LIMIT: usize = 100;

/// One Monte-Carlo configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    /// Algorithm under test.
    pub algorithm: AlgorithmId,
    /// Scheduler driving every trial.
    pub adversary: AdversaryId,
    /// Participating processes per trial.
    pub k: u32,
    /// Capacity the structure is sized for (`≥ k`).
    pub n: u32,
    /// Number of independent trials.
    pub trials: u64,
    /// Master seed; trial `t` derives its own streams from `(seed, t)`.
    pub seed: u64,
    /// Per-trial event cap.
    pub step_limit: u64,
}

/// Errors rejecting a run configuration.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    /// Structure shape errors (zero processes, capacity below k).
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// The ascending attack is built to herd the two-step election; it
    /// has no defined behavior against other algorithms.
    #[error("adversary {adversary} is a targeted attack on ge:locobl and cannot drive {algorithm}")]
    TargetedAttackMismatch {
        /// Offending scheduler.
        adversary: AdversaryId,
        /// Requested algorithm.
        algorithm: AlgorithmId,
    },
    /// At least one trial is required.
    #[error("at least one trial is required")]
    ZeroTrials,
}

/// Validate a spec and build its system.
pub fn build_checked(spec: &RunSpec) -> Result<System, SpecError> {
    if spec.trials == 0 {
        return Err(SpecError::ZeroTrials);
    }
    if spec.adversary.is_targeted_attack() && spec.algorithm != AlgorithmId::GeLocObl {
        return Err(SpecError::TargetedAttackMismatch {
            adversary: spec.adversary,
            algorithm: spec.algorithm,
        });
    }
    Ok(build_system(spec.algorithm, spec.k, spec.n)?)
}

/// Run one trial of the spec and return its raw execution log.
///
/// The adversary's randomness (when it has any) is seeded from the coin
/// stream of the reserved process id 0, so it is independent of the
/// machines' coins but fully determined by `(spec.seed, trial)`.
pub fn execute_trial(system: &System, spec: &RunSpec, trial: u64) -> Execution {
    let mut machines = system.machines();
    let mut bank = system.bank();
    let mut adversary = spec
        .adversary
        .build(coin_word(spec.seed, trial, ProcessId(0), 0));
    let mut coins = CounterCoins::new(spec.seed, trial, system.k() as usize);
    run(
        &mut machines,
        &mut bank,
        adversary.as_mut(),
        &mut coins,
        spec.step_limit,
    )
}

/// One trial's checked results.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    /// Trial index.
    pub trial: u64,
    /// Scalar metrics.
    pub metrics: TrialMetrics,
    /// Invariant violations found in the log.
    pub violations: Vec<Violation>,
}

/// Execute and check one trial.
pub fn run_one(system: &System, spec: &RunSpec, trial: u64) -> TrialOutput {
    let exec = execute_trial(system, spec, trial);
    let (metrics, violations) = check_trial(system.layout(), &exec, trial);
    TrialOutput {
        trial,
        metrics,
        violations,
    }
}

/// Aggregated results of one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// The configuration that produced this outcome.
    pub spec: RunSpec,
    /// Registers the built structure occupies.
    pub registers: u32,
    /// Per-trial metrics, in trial order.
    pub per_trial: Vec<TrialMetrics>,
    /// Mean over trials of the per-trial maximum step count.
    pub mean_maxstep: f64,
    /// Standard error of that mean.
    pub stderr_maxstep: f64,
    /// 95th percentile of per-trial maximum step counts.
    pub p95_maxstep: u64,
    /// Mean elected count per trial (elections only).
    pub mean_elected: Option<f64>,
    /// Standard error of the elected count (elections only).
    pub stderr_elected: Option<f64>,
    /// Mean deepest cascade round (cascade algorithms only).
    pub mean_jstar: Option<f64>,
    /// Standard error of the deepest round (cascade algorithms only).
    pub stderr_jstar: Option<f64>,
    /// Trials with the intended outcome: exactly one winner for
    /// test-and-set, at least one elected for elections.
    pub winners: u64,
    /// Exact total of violations across all trials.
    pub violation_count: u64,
    /// The first [`VIOLATION_SAMPLE_LIMIT`] violations, verbatim.
    pub violation_sample: Vec<Violation>,
}

impl RunOutcome {
    /// Aggregate per-trial outputs (given in trial order) into one
    /// outcome. Exposed so callers that need the raw executions — e.g.
    /// to write traces — can run trials themselves and still aggregate
    /// identically.
    pub fn from_outputs(spec: RunSpec, registers: u32, outputs: Vec<TrialOutput>) -> RunOutcome {
        let per_trial: Vec<TrialMetrics> = outputs.iter().map(|o| o.metrics).collect();
        let maxsteps: Vec<u64> = per_trial.iter().map(|m| m.max_step).collect();
        let maxsteps_f: Vec<f64> = maxsteps.iter().map(|&x| x as f64).collect();
        let is_tas = spec.algorithm.is_tas();
        let winners = per_trial
            .iter()
            .filter(|m| if is_tas { m.winners == 1 } else { m.winners >= 1 })
            .count() as u64;
        let (mean_elected, stderr_elected) = if is_tas {
            (None, None)
        } else {
            let elected: Vec<f64> = per_trial.iter().map(|m| f64::from(m.winners)).collect();
            (Some(stats::mean(&elected)), Some(stats::stderr(&elected)))
        };
        let jstars: Vec<f64> = per_trial
            .iter()
            .filter_map(|m| m.jstar.map(f64::from))
            .collect();
        let (mean_jstar, stderr_jstar) = if jstars.len() == per_trial.len() {
            (Some(stats::mean(&jstars)), Some(stats::stderr(&jstars)))
        } else {
            (None, None)
        };
        let violation_count = outputs.iter().map(|o| o.violations.len() as u64).sum();
        let violation_sample = outputs
            .iter()
            .flat_map(|o| o.violations.iter().cloned())
            .take(VIOLATION_SAMPLE_LIMIT)
            .collect();
        RunOutcome {
            spec,
            registers,
            mean_maxstep: stats::mean(&maxsteps_f),
            stderr_maxstep: stats::stderr(&maxsteps_f),
            p95_maxstep: stats::p95(&maxsteps),
            mean_elected,
            stderr_elected,
            mean_jstar,
            stderr_jstar,
            winners,
            violation_count,
            violation_sample,
            per_trial,
        }
    }

    /// Fraction of trials with the intended outcome.
    pub fn winner_rate(&self) -> f64 {
        self.winners as f64 / self.spec.trials.max(1) as f64
    }
}

/// Fixed CSV schema for run outcomes.
pub const CSV_HEADER: &str = "algorithm,adversary,n,k,trials,seed,mean_maxstep,stderr_maxstep,\
                              p95_maxstep,mean_elected,stderr_elected,mean_jstar,winners,\
                              violations,registers_used";

impl RunOutcome {
    /// The outcome as one CSV row matching [`CSV_HEADER`]. Floats are
    /// printed with six decimals; inapplicable columns are left empty.
    pub fn csv_row(&self) -> String {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| format!("{v:.6}")).unwrap_or_default()
        }
        [
            self.spec.algorithm.to_string(),
            self.spec.adversary.to_string(),
            self.spec.n.to_string(),
            self.spec.k.to_string(),
            self.spec.trials.to_string(),
            self.spec.seed.to_string(),
            format!("{:.6}", self.mean_maxstep),
            format!("{:.6}", self.stderr_maxstep),
            format!("{:.6}", self.p95_maxstep as f64),
            opt(self.mean_elected),
            opt(self.stderr_elected),
            opt(self.mean_jstar),
            self.winners.to_string(),
            self.violation_count.to_string(),
            self.registers.to_string(),
        ]
        .join(",")
    }
}

/// Run all trials on the current thread.
pub fn run_trials_sequential(spec: &RunSpec) -> Result<RunOutcome, SpecError> {
    let system = build_checked(spec)?;
    let outputs: Vec<TrialOutput> = (0..spec.trials)
        .map(|t| run_one(&system, spec, t))
        .collect();
    Ok(RunOutcome::from_outputs(*spec, system.registers(), outputs))
}

/// Run trials across the rayon thread pool. Trials are independent and
/// collected in trial order, so the outcome matches the sequential path
/// exactly.
#[cfg(feature = "parallel")]
pub fn run_trials_parallel(spec: &RunSpec) -> Result<RunOutcome, SpecError> {
    use rayon::prelude::*;
    let system = build_checked(spec)?;
    let outputs: Vec<TrialOutput> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_one(&system, spec, t))
        .collect();
    Ok(RunOutcome::from_outputs(*spec, system.registers(), outputs))
}

/// Run trials with the best available strategy: parallel when the
/// `parallel` feature is enabled, sequential otherwise.
pub fn run_trials(spec: &RunSpec) -> Result<RunOutcome, SpecError> {
    #[cfg(feature = "parallel")]
    {
        run_trials_parallel(spec)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_trials_sequential(spec)
    }
}

/// Replay an execution from its own schedule and coin vectors on fresh
/// machines and verify the replay reproduces the original exactly
/// (noop markers aside — a schedule by definition has none).
pub fn replay_matches(system: &System, exec: &Execution) -> Result<(), String> {
    let mut machines = system.machines();
    let mut bank = system.bank();
    let replayed = crate::sim::replay(
        &mut machines,
        &mut bank,
        &exec.schedule(),
        &exec.coin_vectors(),
    )
    .map_err(|e| e.to_string())?;
    let original = exec.project_non_noop();
    if original.events != replayed.events {
        return Err("replayed events differ from the original projection".to_string());
    }
    if original.statuses != replayed.statuses {
        return Err("replayed statuses differ from the original".to_string());
    }
    if original.responses != replayed.responses {
        return Err("replayed responses differ from the original".to_string());
    }
    Ok(())
}

/// Serialize one trial's trace: a `{"trial":t}` header line followed by
/// one JSON object per event.
pub fn trace_lines(trial: u64, exec: &Execution) -> String {
    format!("{{\"trial\":{trial}}}\n{}", exec.to_jsonl())
}

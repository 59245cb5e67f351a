//! Command-line driver for the simulator: single runs, sweeps, the
//! step-lower-bound witness, and register-usage tables.
//!
//! Exit codes: 0 on success, 2 when any invariant violation (or a failed
//! bound verification) was detected, 1 on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tas_sim::algorithms::{build_system, default_capacity, AlgorithmId};
use tas_sim::adversary::AdversaryId;
use tas_sim::harness::bound::verify_step_bound;
use tas_sim::harness::{
    build_checked, check_trial, execute_trial, run_trials, trace_lines, RunOutcome, RunSpec,
    TrialOutput, CSV_HEADER, DEFAULT_STEP_LIMIT,
};

#[derive(Parser)]
#[command(
    name = "tas-sim",
    version,
    about = "Deterministic simulator for randomized test-and-set and group election \
             protocols over atomic read/write registers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration for many trials and report aggregates.
    Run(RunArgs),
    /// Run a cartesian sweep (algorithms × adversaries × k) as CSV.
    Sweep(SweepArgs),
    /// Verify the two-process step-lower-bound schedule family.
    Lowerbound(LowerboundArgs),
    /// Print register usage per algorithm and capacity.
    Space(SpaceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm id, e.g. tas:ratrace or ge:locobl.
    #[arg(long)]
    algorithm: AlgorithmId,
    /// Adversary id, e.g. oblivious:random or strong:full:random.
    #[arg(long)]
    adversary: AdversaryId,
    /// Participating processes per trial.
    #[arg(long)]
    k: u32,
    /// Capacity the structure is sized for (default: k rounded up to a
    /// power of two).
    #[arg(long)]
    n: Option<u32>,
    /// Independent trials to run.
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Master seed for coins and randomized adversaries.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-trial event cap; hitting it counts as a violation.
    #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
    step_limit: u64,
    /// Print a CSV header and row instead of the readable summary.
    #[arg(long)]
    csv: bool,
    /// Write every trial's event log (JSON lines) to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated algorithm ids.
    #[arg(long, value_delimiter = ',', required = true)]
    algorithms: Vec<AlgorithmId>,
    /// Comma-separated adversary ids.
    #[arg(long, value_delimiter = ',', required = true)]
    adversaries: Vec<AdversaryId>,
    /// Comma-separated participant counts.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<u32>,
    /// Fixed capacity for every cell (default: per-cell power of two).
    #[arg(long)]
    n: Option<u32>,
    /// Trials per cell.
    #[arg(long, default_value_t = 500)]
    trials: u64,
    /// Master seed shared by every cell.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-trial event cap.
    #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
    step_limit: u64,
    /// Write the CSV to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerboundArgs {
    /// Comma-separated step targets t.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    t: Vec<u32>,
    /// Coin-vector pairs sampled per target.
    #[arg(long, default_value_t = 1000)]
    omega_pairs: u64,
    /// Seed for the sampled coin vectors.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Print CSV instead of the readable table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct SpaceArgs {
    /// Comma-separated algorithm ids.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "tas:ge-locobl,tas:ge-rwobl,tas:ratrace,tas:comb"
    )]
    algorithms: Vec<AlgorithmId>,
    /// Comma-separated capacities.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    n: Vec<u32>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Lowerbound(args) => cmd_lowerbound(args),
        Command::Space(args) => cmd_space(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(message) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
    }
}

fn spec_of(args: &RunArgs) -> RunSpec {
    RunSpec {
        algorithm: args.algorithm,
        adversary: args.adversary,
        k: args.k,
        n: args.n.unwrap_or_else(|| default_capacity(args.k)),
        trials: args.trials,
        seed: args.seed,
        step_limit: args.step_limit,
    }
}

fn cmd_run(args: RunArgs) -> Result<i32, String> {
    let spec = spec_of(&args);
    let outcome = match &args.trace {
        None => run_trials(&spec).map_err(|e| e.to_string())?,
        Some(path) => run_with_trace(&spec, path)?,
    };
    if args.csv {
        println!("{CSV_HEADER}");
        println!("{}", outcome.csv_row());
    } else {
        print_summary(&outcome);
    }
    report_violations(&outcome);
    Ok(if outcome.violation_count > 0 { 2 } else { 0 })
}

/// Tracing runs every trial on one thread so the trace file is written
/// in trial order as a single stream.
fn run_with_trace(spec: &RunSpec, path: &PathBuf) -> Result<RunOutcome, String> {
    let system = build_checked(spec).map_err(|e| e.to_string())?;
    let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = BufWriter::new(file);
    let mut outputs = Vec::with_capacity(spec.trials as usize);
    for trial in 0..spec.trials {
        let exec = execute_trial(&system, spec, trial);
        out.write_all(trace_lines(trial, &exec).as_bytes())
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let (metrics, violations) = check_trial(system.layout(), &exec, trial);
        outputs.push(TrialOutput {
            trial,
            metrics,
            violations,
        });
    }
    out.flush().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(RunOutcome::from_outputs(*spec, system.registers(), outputs))
}

fn print_summary(outcome: &RunOutcome) {
    let spec = &outcome.spec;
    println!("algorithm      {}", spec.algorithm);
    println!("adversary      {}", spec.adversary);
    println!("processes      k={} (capacity n={})", spec.k, spec.n);
    println!("trials         {} (seed {})", spec.trials, spec.seed);
    println!("registers      {}", outcome.registers);
    println!(
        "max steps      mean {:.3} ± {:.3}, p95 {}",
        outcome.mean_maxstep, outcome.stderr_maxstep, outcome.p95_maxstep
    );
    if let (Some(mean), Some(se)) = (outcome.mean_elected, outcome.stderr_elected) {
        println!("elected        mean {mean:.3} ± {se:.3}");
    }
    if let (Some(mean), Some(se)) = (outcome.mean_jstar, outcome.stderr_jstar) {
        println!("deepest round  mean {mean:.3} ± {se:.3}");
    }
    println!(
        "goal trials    {}/{} ({})",
        outcome.winners,
        spec.trials,
        if spec.algorithm.is_tas() {
            "exactly one winner"
        } else {
            "at least one elected"
        }
    );
    println!("violations     {}", outcome.violation_count);
}

fn report_violations(outcome: &RunOutcome) {
    if outcome.violation_count == 0 {
        return;
    }
    eprintln!(
        "{} violation(s) detected; showing up to {}:",
        outcome.violation_count,
        outcome.violation_sample.len()
    );
    for v in &outcome.violation_sample {
        eprintln!("  {v}");
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<i32, String> {
    // Validate every cell before running any of them.
    let mut specs = Vec::new();
    for &algorithm in &args.algorithms {
        for &adversary in &args.adversaries {
            for &k in &args.k {
                let spec = RunSpec {
                    algorithm,
                    adversary,
                    k,
                    n: args.n.unwrap_or_else(|| default_capacity(k)),
                    trials: args.trials,
                    seed: args.seed,
                    step_limit: args.step_limit,
                };
                build_checked(&spec).map_err(|e| e.to_string())?;
                specs.push(spec);
            }
        }
    }

    let mut sink: Box<dyn Write> = match &args.out {
        None => Box::new(std::io::stdout().lock()),
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| format!("{}: {e}", path.display()))?,
        )),
    };
    writeln!(sink, "{CSV_HEADER}").map_err(|e| e.to_string())?;
    let mut total_violations = 0u64;
    for spec in &specs {
        let outcome = run_trials(spec).map_err(|e| e.to_string())?;
        writeln!(sink, "{}", outcome.csv_row()).map_err(|e| e.to_string())?;
        total_violations += outcome.violation_count;
        report_violations(&outcome);
    }
    sink.flush().map_err(|e| e.to_string())?;
    Ok(if total_violations > 0 { 2 } else { 0 })
}

fn cmd_lowerbound(args: LowerboundArgs) -> Result<i32, String> {
    if args.t.iter().any(|&t| t == 0) {
        return Err("step target t must be at least 1".to_string());
    }
    if args.csv {
        println!("t,schedules,omega_pairs,exists_rate,best_sigma_rate,threshold");
    }
    let mut failed = false;
    for &t in &args.t {
        let report = verify_step_bound(t, args.omega_pairs, args.seed);
        let threshold = 0.25f64.powi(t as i32);
        let ok = report.exists_rate == 1.0 && report.best_sigma_rate >= threshold;
        failed |= !ok;
        if args.csv {
            println!(
                "{},{},{},{:.6},{:.6},{:.6}",
                report.t,
                report.schedules,
                report.omega_pairs,
                report.exists_rate,
                report.best_sigma_rate,
                threshold
            );
        } else {
            println!(
                "t={}: {} schedules, exists rate {:.4}, best schedule rate {:.4} \
                 (needs ≥ {:.4}) — {}",
                report.t,
                report.schedules,
                report.exists_rate,
                report.best_sigma_rate,
                threshold,
                if ok { "ok" } else { "FAILED" }
            );
        }
    }
    Ok(if failed { 2 } else { 0 })
}

fn cmd_space(args: SpaceArgs) -> Result<i32, String> {
    println!("algorithm,n,registers,registers_per_n");
    for &algorithm in &args.algorithms {
        for &n in &args.n {
            let system = build_system(algorithm, 1, n).map_err(|e| e.to_string())?;
            let registers = system.registers();
            println!(
                "{algorithm},{n},{registers},{:.6}",
                f64::from(registers) / f64::from(n)
            );
        }
    }
    Ok(0)
}

//! End-to-end tests of the `tas-sim` binary: output formats, the trace
//! file, determinism across reruns, and the exit-code contract
//! (0 success, 1 usage/config error, 2 violations detected).

use std::process::{Command, Output};

use tas_sim::harness::CSV_HEADER;

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tas-sim"))
        .args(args)
        .output()
        .expect("spawn tas-sim")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

#[test]
fn run_csv_reruns_byte_identical() {
    let args = [
        "run",
        "--algorithm",
        "tas:ratrace",
        "--adversary",
        "rwobl:random",
        "--k",
        "8",
        "--trials",
        "50",
        "--seed",
        "42",
        "--csv",
    ];
    let first = run_cli(&args);
    let second = run_cli(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout, "reruns must be byte-identical");

    let text = stdout_of(&first);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "expected header + one row");
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("tas:ratrace,rwobl:random,8,8,50,42,"));
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), CSV_HEADER.split(',').count());
    assert_eq!(fields[12], "50", "winners column: every trial decided");
    assert_eq!(fields[13], "0", "violations column");
}

#[test]
fn exit_code_one_on_bad_ids_and_bad_configs() {
    let bad_alg = run_cli(&[
        "run",
        "--algorithm",
        "tas:bogus",
        "--adversary",
        "oblivious:random",
        "--k",
        "4",
    ]);
    assert_eq!(bad_alg.status.code(), Some(1));

    // k above capacity is a configuration error, not a crash.
    let bad_n = run_cli(&[
        "run",
        "--algorithm",
        "tas:ratrace",
        "--adversary",
        "oblivious:random",
        "--k",
        "8",
        "--n",
        "4",
    ]);
    assert_eq!(bad_n.status.code(), Some(1));
    assert!(bad_n.stdout.is_empty(), "config errors print no results");
}

#[test]
fn exit_code_zero_on_help() {
    let help = run_cli(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout_of(&help).contains("Usage"));
}

#[test]
fn exit_code_two_when_violations_detected() {
    // A tiny step limit stops trials before anyone wins; hitting the
    // limit is reported as a violation.
    let out = run_cli(&[
        "run",
        "--algorithm",
        "tas:ratrace",
        "--adversary",
        "oblivious:roundrobin",
        "--k",
        "4",
        "--trials",
        "3",
        "--step-limit",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8");
    assert!(err.contains("violation"), "stderr names the violations");
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let out = run_cli(&[
        "sweep",
        "--algorithms",
        "tas:ratrace,ge:locobl",
        "--adversaries",
        "oblivious:roundrobin,locobl:random",
        "--k",
        "2,4,8",
        "--trials",
        "20",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 3, "header plus one row per cell");
    assert_eq!(lines[0], CSV_HEADER);
    let columns = CSV_HEADER.split(',').count();
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), columns, "malformed row: {row}");
    }
}

#[test]
fn sweep_rejects_invalid_cells_before_running_any() {
    // strong:ascending only drives ge:locobl; pairing it with a
    // test-and-set construction must fail the whole sweep up front.
    let out = run_cli(&[
        "sweep",
        "--algorithms",
        "ge:locobl,tas:ratrace",
        "--adversaries",
        "strong:ascending",
        "--k",
        "4",
        "--trials",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty(), "no partial CSV on config errors");
}

#[test]
fn trace_file_holds_every_trial_in_order() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("trace.jsonl");
    let out = run_cli(&[
        "run",
        "--algorithm",
        "ge:locobl",
        "--adversary",
        "locobl:roundrobin",
        "--k",
        "3",
        "--trials",
        "4",
        "--seed",
        "5",
        "--trace",
        path.to_str().expect("utf-8 path"),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let text = std::fs::read_to_string(&path).expect("trace file");
    let mut trials_seen = Vec::new();
    let mut last_index = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("JSON line");
        if let Some(t) = v.get("trial") {
            trials_seen.push(t.as_u64().expect("trial number"));
            last_index = 0;
        } else {
            let i = v["i"].as_u64().expect("event index");
            assert_eq!(i, last_index + 1, "event indices count up from 1");
            last_index = i;
            assert!(v["p"].as_u64().expect("process id") >= 1);
            let op = v["op"].as_str().expect("op tag");
            assert!(
                matches!(op, "c" | "r" | "w" | "n"),
                "unexpected op tag {op:?}"
            );
        }
    }
    assert_eq!(trials_seen, vec![0, 1, 2, 3], "one header per trial, in order");
    assert!(last_index > 0, "final trial recorded events");
}

#[test]
fn space_prints_exact_register_counts() {
    let out = run_cli(&["space", "--algorithms", "tas:ratrace", "--n", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "algorithm,n,registers,registers_per_n");
    assert_eq!(lines[1], "tas:ratrace,16,365,22.812500");
    assert_eq!(lines.len(), 2);
}

#[test]
fn lowerbound_csv_shape_and_success() {
    let out = run_cli(&[
        "lowerbound",
        "--t",
        "1,2",
        "--omega-pairs",
        "50",
        "--seed",
        "7",
        "--csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "bound verification succeeds");
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t,schedules,omega_pairs,exists_rate,best_sigma_rate,threshold"
    );
    assert_eq!(lines.len(), 3, "header plus one row per t");
    for (row, t) in lines[1..].iter().zip(["1", "2"]) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], t);
        assert_eq!(fields[2], "50");
        assert_eq!(fields[3], "1.000000", "a witness schedule always exists");
    }
}

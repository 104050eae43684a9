//! End-to-end tests of the command-line harness: output schemas, exit
//! codes, and config-file/flag precedence.

use std::path::Path;
use std::process::{Command, Output};

fn mchain(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mchain"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn simulate_writes_metrics_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchain(
        dir.path(),
        &["simulate", "--total-users", "200", "--seeds", "0,1,2,3,4"],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: mchain-metrics-v1");
    assert_eq!(
        lines[1],
        "seed,interarrival,gamma,ell,v_mchain,v_opt,v_g,e,l,trace_digest"
    );
    assert_eq!(lines.len(), 7, "5 seed rows expected:\n{text}");
    for (i, row) in lines[2..].iter().enumerate() {
        assert!(row.starts_with(&format!("{i},")), "row {row:?}");
    }
}

#[test]
fn simulate_trace_mode_tags_rows_with_digest() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(&trace, "0,1,2\n0,3,4\n1,1,3\n1,2,4\n2,1,4\n").unwrap();
    let out = mchain(
        dir.path(),
        &["simulate", "--trace", "trace.csv", "--seeds", "0,1"],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let digest = row.rsplit(',').next().unwrap();
        assert_eq!(digest.len(), 16, "digest missing in {row:?}");
    }
}

#[test]
fn simulate_out_of_range_volatility_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchain(
        dir.path(),
        &[
            "simulate",
            "--total-users",
            "50",
            "--volatility",
            "0.5",
            "--seeds",
            "0",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(err.contains("warning"), "expected a range warning, got {err:?}");
}

#[test]
fn sweep_aggregates_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchain(
        dir.path(),
        &[
            "sweep",
            "--total-users",
            "100",
            "--interarrival-grid",
            "0.5,1.0",
            "--volatility-grid",
            "0.01",
            "--ell-grid",
            "2,3,4",
            "--seeds",
            "0,1",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: mchain-sweep-v1");
    assert_eq!(lines[1], "interarrival,gamma,ell,runs,mean_e,std_e,mean_l,std_l");
    // 2 interarrival × 1 volatility × 3 ell = 6 cells, each over 2 seeds.
    assert_eq!(lines.len(), 8, "{text}");
    for row in &lines[2..] {
        assert!(row.contains(",2,") || row.ends_with(",2"), "runs column: {row:?}");
    }
}

#[test]
fn sweep_empty_grid_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchain(dir.path(), &["sweep", "--total-users", "100"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(err.contains("empty sweep grid"), "{err:?}");
}

#[test]
fn fuzz_truthful_mechanism_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fuzz.csv");
    let out = mchain(
        dir.path(),
        &["fuzz", "--trials", "300", "--seed", "1", "--out", "fuzz.csv"],
    );
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("# schema: mchain-fuzz-v1\n"));
    assert!(text.contains("violations=0"), "{text}");
}

#[test]
fn fuzz_nonzero_exit_on_violations() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fuzz.csv");
    let out = mchain(
        dir.path(),
        &[
            "fuzz",
            "--mechanism",
            "per-group-mcafee-sequential",
            "--trials",
            "300",
            "--seed",
            "0",
            "--out",
            "fuzz.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let text = std::fs::read_to_string(&report).unwrap();
    // The report is still written, with at least one violation row.
    assert!(text.contains("mechanism=per_group_mcafee_sequential"), "{text}");
    assert!(!text.contains("violations=0"), "{text}");
    assert!(text.lines().count() > 3, "violation rows expected:\n{text}");
}

#[test]
fn fuzz_zero_trials_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mchain(dir.path(), &["fuzz", "--trials", "0"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_keys_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "trials = 7\nfuzz_seed = 1\n\n[params]\ntotal_users = 50\n",
    )
    .unwrap();

    // Config key used when no flag overrides it.
    let out = mchain(dir.path(), &["--config", "run.toml", "fuzz"]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("trials=7"), "{}", stdout(&out));

    // Flag beats the config key.
    let out = mchain(dir.path(), &["--config", "run.toml", "fuzz", "--trials", "5"]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("trials=5"), "{}", stdout(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    let out = mchain(dir.path(), &["--config", "bad.toml", "fuzz"]);
    assert!(!out.status.success());
}

#[test]
fn oracle_prints_optimum_and_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let instance = serde_json::json!({
        "users": [
            {"id": 1, "role": "buyer", "value": 12.0, "arrival": 0, "departure": 0,
             "groups": {"0": [1]}},
            {"id": 2, "role": "seller", "value": 2.0, "arrival": 0, "departure": 0,
             "groups": {"0": [1]}}
        ],
        "horizon": 0,
        "max_patience": 0
    });
    std::fs::write(dir.path().join("inst.json"), instance.to_string()).unwrap();
    let out = mchain(dir.path(), &["oracle", "--instance", "inst.json"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("v_opt,10"), "{text}");
    assert!(text.contains("pair,1,2"), "{text}");
}

#[test]
fn oracle_rejects_invalid_instance() {
    let dir = tempfile::tempdir().unwrap();
    // Arrival after departure.
    let instance = serde_json::json!({
        "users": [
            {"id": 1, "role": "buyer", "value": 5.0, "arrival": 3, "departure": 1,
             "groups": {}}
        ],
        "horizon": 4,
        "max_patience": 2
    });
    std::fs::write(dir.path().join("inst.json"), instance.to_string()).unwrap();
    let out = mchain(dir.path(), &["oracle", "--instance", "inst.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert!(err.contains("invalid instance"), "{err:?}");
}

#[test]
fn trace_info_reports_group_statistics() {
    let dir = tempfile::tempdir().unwrap();
    // Period 0: a triangle (one 3-clique); period 1: one pair.
    std::fs::write(
        dir.path().join("t.csv"),
        "0,1,2\n0,1,3\n0,2,3\n1,4,5\n",
    )
    .unwrap();
    let out = mchain(dir.path(), &["trace-info", "--trace", "t.csv"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.starts_with("# schema: mchain-trace-info-v1\n"), "{text}");
    assert!(text.contains("period,users,groups,mean_group_size,frac_groups_le2"));
    assert!(text.contains("\n0,3,1,3,0\n"), "{text}");
    assert!(text.contains("\n1,2,1,2,1\n"), "{text}");
    assert!(text.contains("# overall_frac_groups_le2=0.5"), "{text}");
}

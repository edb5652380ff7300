use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn leakaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakaudit"))
        .args(args)
        .env_remove("LEAKAUDIT_LM_ENDPOINT")
        .env_remove("LEAKAUDIT_SEARCH_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mock_evaluate_writes_every_output() {
    let out = tempfile::tempdir().unwrap();
    let legal = fixtures().join("legal.jsonl");
    let r = leakaudit(&["evaluate", "--mock", "--dataset", s(&legal), "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["report.json", "report.txt", "tradeoff.csv", "prompt_log.jsonl"] {
        assert!(out.path().join(f).is_file(), "missing {f}");
    }
    let audits = std::fs::read_dir(out.path().join("audits")).unwrap().count();
    assert_eq!(audits, 9);
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("superforecast") && stdout.contains("DCLR"));
}

#[test]
fn unknown_subcommand_exits_2() {
    let r = leakaudit(&["bogus"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn live_run_without_endpoint_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let legal = fixtures().join("legal.jsonl");
    let r = leakaudit(&["evaluate", "--dataset", s(&legal), "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("endpoint"));
}

#[test]
fn zero_samples_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let legal = fixtures().join("legal.jsonl");
    let r = leakaudit(&["evaluate", "--mock", "--samples", "0", "--dataset", s(&legal), "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn malformed_dataset_is_a_config_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"task\":\"legal\",\"instance_id\":\"x\"}\n").unwrap();
    let r = leakaudit(&["evaluate", "--mock", "--dataset", s(&bad), "--out", s(&dir.path().join("out"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bad.jsonl:1"));
}

#[test]
fn report_rebuilds_tables_and_csv_from_a_run_dir() {
    let out = tempfile::tempdir().unwrap();
    let salary = fixtures().join("salary.jsonl");
    let r = leakaudit(&["evaluate", "--mock", "--agent", "timespec", "--dataset", s(&salary), "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(0));
    std::fs::remove_file(out.path().join("tradeoff.csv")).unwrap();
    std::fs::remove_file(out.path().join("report.txt")).unwrap();

    let r = leakaudit(&["report", "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("timespec"));
    let csv = std::fs::read_to_string(out.path().join("tradeoff.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("agent,task,performance,dclr"));
    assert_eq!(csv.lines().count(), 2);
    assert!(out.path().join("report.txt").is_file());
}

#[test]
fn failing_instance_exits_1_and_is_marked_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["corpus.jsonl", "mock_world.json"] {
        std::fs::copy(fixtures().join(f), dir.path().join(f)).unwrap();
    }
    let mut data = std::fs::read_to_string(fixtures().join("legal.jsonl")).unwrap();
    data.push_str(
        r#"{"task":"legal","instance_id":"legal-unscripted","case_name":"Nobody v. Nowhere","parties":"A v. B","background":"Unscripted.","cutoff_date":"2019-01-01","outcome":"respondent"}"#,
    );
    data.push('\n');
    let dataset = dir.path().join("legal.jsonl");
    std::fs::write(&dataset, data).unwrap();
    let out = dir.path().join("out");

    let r = leakaudit(&["evaluate", "--mock", "--agent", "superforecast", "--dataset", s(&dataset), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let failed = report["metadata"]["failed"].as_array().unwrap();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["instance_id"], "legal-unscripted");
    assert_eq!(report["rows"][0]["instances"], 3);
}

#[test]
fn phase_subcommands_write_their_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let stock = fixtures().join("stock.jsonl");
    for (cmd, dir) in [("agent-run", "predictions"), ("extract", "claims"), ("attribute", "shapley"), ("detect", "verdicts")] {
        let r = leakaudit(&[cmd, "--mock", "--agent", "superforecast", "--dataset", s(&stock), "--out", s(out.path())]);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
        assert_eq!(std::fs::read_dir(out.path().join(dir)).unwrap().count(), 3, "{cmd}");
    }
    let r = leakaudit(&["faithfulness", "--mock", "--agent", "superforecast", "--dataset", s(&stock), "--out", s(out.path())]);
    assert_eq!(r.status.code(), Some(0));
    assert!(out.path().join("faithfulness/superforecast.json").is_file());
}

mod common;

use std::path::Path;
use std::sync::Arc;

use leakaudit::agents::AgentKind;
use leakaudit::backends::AuditLog;
use leakaudit::harness::{
    load_audits, report_from_dir, run_audit, Backends, MockWorld, Pipeline, RunManifest, PROMPT_LOG_FILE,
};
use leakaudit::metrics::InstanceAudit;
use leakaudit::{Error, SamplerConfig};
use serde_json::Value;

fn manifest(datasets: &[&str], out: &Path) -> RunManifest {
    let paths = datasets.iter().map(|d| common::fixtures().join(d)).collect();
    let mut m = RunManifest::new(paths, out);
    m.mock = true;
    m
}

fn log_lines(out: &Path) -> Vec<Value> {
    std::fs::read_to_string(out.join(PROMPT_LOG_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn three_instances_give_three_audits_and_one_report() {
    let out = tempfile::tempdir().unwrap();
    let mut m = manifest(&["legal.jsonl"], out.path());
    m.agents = vec![AgentKind::Timespec];
    let outcome = run_audit(&m).unwrap();

    assert_eq!(outcome.audits.len(), 3);
    assert!(outcome.failures.is_empty());
    assert_eq!(std::fs::read_dir(out.path().join("audits")).unwrap().count(), 3);
    assert_eq!(outcome.report.rows.len(), 1);
    let row = &outcome.report.rows[0];
    assert_eq!((row.task.as_str(), row.agent.as_str(), row.instances), ("legal", "timespec", 3));
    for f in ["report.json", "report.txt", "tradeoff.csv"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    assert_eq!(load_audits(out.path()).unwrap().len(), 3);
}

#[test]
fn resumed_run_issues_exactly_the_missing_calls() {
    let whole = tempfile::tempdir().unwrap();
    run_audit(&manifest(&["legal.jsonl", "salary.jsonl"], whole.path())).unwrap();

    let split = tempfile::tempdir().unwrap();
    run_audit(&manifest(&["legal.jsonl"], split.path())).unwrap();
    let resumed = run_audit(&manifest(&["legal.jsonl", "salary.jsonl"], split.path())).unwrap();

    assert_eq!(resumed.resumed, 9);
    assert_eq!(resumed.audits.len(), 18);
    assert_eq!(log_lines(split.path()).len(), log_lines(whole.path()).len());

    let again = run_audit(&manifest(&["legal.jsonl", "salary.jsonl"], split.path())).unwrap();
    assert_eq!(again.resumed, 18);
    assert_eq!(log_lines(split.path()).len(), log_lines(whole.path()).len());
}

#[test]
fn ground_truth_never_reaches_a_request() {
    let out = tempfile::tempdir().unwrap();
    let m = manifest(&["legal.jsonl", "salary.jsonl", "stock.jsonl"], out.path());
    let instances = m.load_instances().unwrap();
    run_audit(&m).unwrap();
    let requests: Vec<String> = log_lines(out.path()).iter().map(|r| r["request"].to_string()).collect();
    assert!(!requests.is_empty());

    let raw: Vec<Value> = ["legal.jsonl", "salary.jsonl", "stock.jsonl"]
        .iter()
        .flat_map(|f| {
            std::fs::read_to_string(common::fixtures().join(f))
                .unwrap()
                .lines()
                .map(|l| serde_json::from_str::<Value>(l).unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(raw.len(), instances.len());
    for rec in &raw {
        let mut needles = Vec::new();
        if let Some(o) = rec.get("outcome") {
            needles.push(format!("\"outcome\":{o}"));
            needles.push(format!("\"outcome\": {o}"));
        }
        if let Some(a) = rec.get("actual_aav_usd").and_then(Value::as_f64) {
            needles.push(format!("{}", a as u64));
        }
        if let Some(rs) = rec.get("actual_returns").and_then(Value::as_array) {
            needles.extend(rs.iter().map(|r| r.to_string()));
        }
        assert!(!needles.is_empty());
        for n in &needles {
            assert!(
                !requests.iter().any(|r| r.contains(n.as_str())),
                "{} leaks ground truth {n}",
                rec["instance_id"]
            );
        }
    }
}

fn audit_in_order(attribute_first: bool, id: &str, agent: AgentKind) -> InstanceAudit {
    let backends = Backends::mock(&common::fixtures(), Arc::new(AuditLog::discard())).unwrap();
    let pipeline = Pipeline::new(backends, SamplerConfig::default());
    let inst = common::instance(id);
    let (pred, _) = pipeline.predict(&inst, agent).unwrap();
    let claims = pipeline.extract(&inst, &pred).unwrap();
    let (est, ver) = if attribute_first {
        let est = pipeline.attribute(&inst, &pred, &claims).unwrap();
        (est, pipeline.detect(&inst, &claims).unwrap())
    } else {
        let ver = pipeline.detect(&inst, &claims).unwrap();
        (pipeline.attribute(&inst, &pred, &claims).unwrap(), ver)
    };
    InstanceAudit::new(agent.as_str(), inst.kind().as_str(), inst.task_type(), id, claims, est, ver).unwrap()
}

#[test]
fn attribution_and_detection_commute() {
    for (id, agent) in [
        ("legal-knick", AgentKind::Superforecast),
        ("salary-harris", AgentKind::TemporalHint),
        ("stock-semis", AgentKind::Superforecast),
    ] {
        let a = audit_in_order(true, id, agent);
        let b = audit_in_order(false, id, agent);
        assert_eq!(a, b, "{id}");
        assert!(a.claims.len() > 1);
    }
}

#[test]
fn report_is_rebuilt_from_persisted_audits() {
    let out = tempfile::tempdir().unwrap();
    let outcome = run_audit(&manifest(&["stock.jsonl"], out.path())).unwrap();
    std::fs::remove_file(out.path().join("report.txt")).unwrap();
    let rebuilt = report_from_dir(out.path()).unwrap();
    assert_eq!(rebuilt.rows, outcome.report.rows);
    assert!(out.path().join("report.txt").is_file());
}

#[test]
fn mock_world_rejects_unknown_claim_keys() {
    let text = std::fs::read_to_string(common::fixtures().join("mock_world.json")).unwrap();
    let mut world: Value = serde_json::from_str(&text).unwrap();
    world["instances"][0]["superforecast"]["claims"].as_array_mut().unwrap().push("no-such-claim".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("world.json");
    std::fs::write(&path, world.to_string()).unwrap();
    assert!(matches!(MockWorld::load(&path), Err(Error::Config(_))));
    assert!(MockWorld::load(&common::fixtures().join("mock_world.json")).is_ok());
}

#[test]
fn duplicate_instance_ids_across_datasets_are_rejected() {
    let out = tempfile::tempdir().unwrap();
    let m = manifest(&["legal.jsonl", "legal.jsonl"], out.path());
    assert!(matches!(m.load_instances(), Err(Error::Config(_))));
}

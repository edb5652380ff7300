mod common;

use std::sync::Arc;

use chrono::NaiveDate;
use leakaudit::agents::{
    timespec_aggregate, timespec_generate, timespec_regenerate, PredictionValue, SearchEntry, SearchHistory,
    TimeSpecConfig, ValidatedClaim, SEARCH_TOOL, SUBMIT_DRAFT_TOOL, SUBMIT_FINAL_TOOL,
};
use leakaudit::backends::{
    CacheRole, FixtureCorpus, FixtureDocument, LmRequest, LmResponse, Message, ScriptedLm, SearchClient, ToolCall,
};
use leakaudit::{ClaimCategory, Error, ExtractedClaim};
use serde_json::json;

use common::{FnLm, Recording};

fn doc(id: usize, date: &str) -> FixtureDocument {
    FixtureDocument {
        doc_id: format!("doc-{id}"),
        text: format!("Coverage item {id} on agency deference"),
        publication_date: date.parse().unwrap(),
        keywords: vec!["deference".into()],
    }
}

/// Twelve usable documents plus two published on or after the Kisor cutoff.
fn corpus() -> Arc<FixtureCorpus> {
    let mut docs: Vec<FixtureDocument> = (0..12).map(|i| doc(i, &format!("2018-{:02}-10", i % 12 + 1))).collect();
    docs.push(doc(90, "2019-03-26"));
    docs.push(doc(91, "2019-06-26"));
    Arc::new(FixtureCorpus::new(docs))
}

fn searches_so_far(r: &LmRequest) -> usize {
    r.messages
        .iter()
        .filter(|m| matches!(m, Message::ToolResult { name, content, .. } if name == SEARCH_TOOL && content.get("error").is_none()))
        .count()
}

fn draft(p: f64) -> LmResponse {
    LmResponse::ToolCall(ToolCall::new(
        SUBMIT_DRAFT_TOOL,
        json!({"prediction": p, "rationale": "The deference doctrine question favours the petitioner here. ".repeat(8)}),
    ))
}

fn search(query: &str) -> LmResponse {
    LmResponse::ToolCall(ToolCall::new(SEARCH_TOOL, json!({"query": query, "purpose": "background"})))
}

/// Searches while allowed, then submits.
fn eager_searcher() -> impl leakaudit::backends::LanguageModel {
    FnLm(|r: &LmRequest| {
        Ok(if r.has_tool(SEARCH_TOOL) { search(&format!("deference angle {}", searches_so_far(r))) } else { draft(0.64) })
    })
}

#[test]
fn generator_closes_search_once_enough_results_arrive() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(eager_searcher());
    let client = SearchClient::new(corpus(), CacheRole::Generator);
    let (pred, history) = timespec_generate(&inst, &lm, &client, &TimeSpecConfig::default()).unwrap();

    assert_eq!(pred.value, PredictionValue::Probability(0.64));
    assert_eq!(history.entries.len(), 2);
    assert_eq!(history.total_results(), 10);
    assert_eq!(client.backend_calls(), 2);
    assert!(history.results().all(|r| r.publication_date.unwrap() < inst.cutoff_date));
    let reqs = lm.requests.lock();
    assert_eq!(reqs.len(), 3);
    assert!(!reqs[2].has_tool(SEARCH_TOOL));
    assert!(reqs[0].system.contains("2019-03-26"));
}

#[test]
fn post_cutoff_documents_never_reach_the_generator() {
    let inst = common::instance("legal-kisor");
    let mut cfg = TimeSpecConfig::default();
    cfg.results_per_query = 50;
    cfg.min_search_results = 1;
    let lm = Recording::new(eager_searcher());
    let client = SearchClient::new(corpus(), CacheRole::Generator);
    let (_, history) = timespec_generate(&inst, &lm, &client, &cfg).unwrap();
    assert_eq!(history.total_results(), 12);
    let prompt = lm.requests.lock().last().unwrap().full_text();
    assert!(!prompt.contains("doc-90") && !prompt.contains("item 90") && !prompt.contains("item 91"));
}

#[test]
fn early_submission_is_refused_until_the_threshold() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(FnLm(|r: &LmRequest| {
        let refused = r.messages.iter().any(|m| matches!(m, Message::ToolResult { content, .. } if content.get("error").is_some()));
        Ok(if !refused || !r.has_tool(SEARCH_TOOL) { draft(0.7) } else { search(&format!("deference {}", searches_so_far(r))) })
    }));
    let client = SearchClient::new(corpus(), CacheRole::Generator);
    let (_, history) = timespec_generate(&inst, &lm, &client, &TimeSpecConfig::default()).unwrap();
    assert_eq!(history.total_results(), 10);
    let first_reply = lm.requests.lock()[1].messages.last().cloned().unwrap();
    assert!(matches!(first_reply, Message::ToolResult { content, .. } if content["error"].as_str().unwrap().contains("at least 10")));
}

#[test]
fn tool_loop_gives_up_after_fifteen_iterations() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(FnLm(|_: &LmRequest| Ok(LmResponse::Text("thinking".into()))));
    let client = SearchClient::new(corpus(), CacheRole::Generator);
    match timespec_generate(&inst, &lm, &client, &TimeSpecConfig::default()) {
        Err(Error::ToolLoopExhausted { iterations, .. }) => assert_eq!(iterations, 15),
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(lm.count(), 15);
}

fn valid(id: u32, text: &str, date: Option<&str>) -> ValidatedClaim {
    ValidatedClaim {
        claim: ExtractedClaim::new(id, text, ClaimCategory::A2),
        verified: date.map(|d| d.parse::<NaiveDate>().unwrap()),
    }
}

fn prior_history() -> SearchHistory {
    SearchHistory {
        entries: vec![SearchEntry {
            query: "deference angle 0".into(),
            purpose: "background".into(),
            results: Vec::new(),
        }],
    }
}

#[test]
fn regeneration_sees_valid_claims_and_refuses_old_queries() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(FnLm(|r: &LmRequest| {
        Ok(match searches_so_far(r) + r.messages.len() / 2 {
            0 => search("deference angle 0"),
            1 => search("fresh deference angle"),
            _ => draft(0.58),
        })
    }));
    let client = SearchClient::new(corpus(), CacheRole::Generator);
    let claims = [valid(1, "Auer deference has been criticised by several justices", Some("2018-11-02"))];
    let (pred, history) =
        timespec_regenerate(&inst, &claims, &prior_history(), &lm, &client, &TimeSpecConfig::default()).unwrap();

    assert_eq!(pred.value, PredictionValue::Probability(0.58));
    assert_eq!(history.queries().collect::<Vec<_>>(), vec!["fresh deference angle"]);
    let reqs = lm.requests.lock();
    let first = reqs[0].user_text();
    assert!(first.contains("[A2] Auer deference has been criticised by several justices (verified: 2018-11-02)"));
    assert!(first.contains("deference angle 0"));
    let refusal = reqs[1].messages.last().unwrap();
    assert!(matches!(refusal, Message::ToolResult { content, .. } if content["error"].as_str().unwrap().contains("already issued")));
}

fn final_submit() -> LmResponse {
    LmResponse::ToolCall(ToolCall::new(
        SUBMIT_FINAL_TOOL,
        json!({"prediction": 0.61, "rationale": "Only the validated claims support this synthesis. ".repeat(10)}),
    ))
}

#[test]
fn aggregator_drops_claims_that_overlap_a_violation() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(FnLm(|_: &LmRequest| Ok(final_submit())));
    let v1 = [valid(1, "The Solicitor General filed a brief", Some("2019-02-25"))];
    let v2 = [
        valid(2, "Justice Kagan wrote that the Court upholds Auer, as reported later", None),
        valid(1, "The Solicitor General filed a brief", Some("2019-02-25")),
    ];
    let violated = [ExtractedClaim::new(7, "the Court upholds Auer", ClaimCategory::A4)];
    let pred = timespec_aggregate(&inst, &v1, &v2, &violated, &lm, &TimeSpecConfig::default()).unwrap();
    assert_eq!(pred.value, PredictionValue::Probability(0.61));

    let reqs = lm.requests.lock();
    let prompt = reqs[0].user_text();
    assert_eq!(prompt.matches("The Solicitor General filed a brief").count(), 1);
    assert!(!prompt.contains("upholds Auer"));
    assert!(reqs[0].has_tool(SUBMIT_FINAL_TOOL) && !reqs[0].has_tool(SEARCH_TOOL));
}

#[test]
fn aggregator_refuses_a_prompt_carrying_violated_text() {
    let inst = common::instance("legal-kisor");
    let lm = Recording::new(FnLm(|_: &LmRequest| Ok(final_submit())));
    // The case name is part of the task input, so it cannot be scrubbed.
    let violated = [ExtractedClaim::new(3, "Kisor v. Wilkie", ClaimCategory::A4)];
    let err = timespec_aggregate(&inst, &[], &[], &violated, &lm, &TimeSpecConfig::default()).unwrap_err();
    assert!(matches!(err, Error::ClosedWorld(_)));
    assert_eq!(lm.count(), 0);
}

#[test]
fn aggregator_without_claims_falls_back_to_the_task_default() {
    let inst = common::instance("salary-rozier");
    let lm = ScriptedLm::strict(Vec::new());
    let pred = timespec_aggregate(&inst, &[], &[], &[], &lm, &TimeSpecConfig::default()).unwrap();
    assert_eq!(pred.value, PredictionValue::Salary(9.25e6));
    assert!(lm.calls() >= 1);
}

#[test]
fn aggregator_failure_with_claims_is_an_error() {
    let inst = common::instance("legal-kisor");
    let lm = ScriptedLm::strict(Vec::new());
    let v = [valid(1, "The Solicitor General filed a brief", Some("2019-02-25"))];
    assert!(timespec_aggregate(&inst, &v, &[], &[], &lm, &TimeSpecConfig::default()).is_err());
}

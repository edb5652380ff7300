use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::task::{instantiation, Prediction, TaskInstance};
use super::tools::{
    search_tool, submit_tool, validate_arguments, SubmitSchema, SEARCH_TOOL, SUBMIT_DRAFT_TOOL, SUBMIT_FINAL_TOOL,
};
use crate::backends::{
    complete_with_backoff, lm_call, CacheRole, CallPolicy, LanguageModel, LmRequest, LmResponse, Message,
    SearchBackend, SearchClient, SearchRequest, SearchResult,
};
use crate::claims::{extract_claims, timeless_sentinel, ExtractedClaim, ExtractionConfig};
use crate::error::{Error, Result};
use crate::leakage::{detect_leakage, Basis, LeakageVerdict, VerifierConfig};
use crate::prompt::{self, render};

#[derive(Debug, Clone)]
pub struct TimeSpecConfig {
    /// Dated results the generator must gather before a draft is accepted.
    pub min_search_results: usize,
    pub max_tool_iterations: usize,
    pub results_per_query: usize,
    /// Re-requests for an invalid final submission.
    pub submission_retries: u32,
    pub extraction: ExtractionConfig,
    pub verifier: VerifierConfig,
}

impl Default for TimeSpecConfig {
    fn default() -> Self {
        TimeSpecConfig {
            min_search_results: 10,
            max_tool_iterations: 15,
            results_per_query: 5,
            submission_retries: 2,
            extraction: ExtractionConfig::default(),
            verifier: VerifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub query: String,
    pub purpose: String,
    pub results: Vec<SearchResult>,
}

/// Queries issued during generation and the dated results they returned.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHistory {
    pub entries: Vec<SearchEntry>,
}

impl SearchHistory {
    pub fn total_results(&self) -> usize {
        self.entries.iter().map(|e| e.results.len()).sum()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.query.as_str())
    }

    pub fn results(&self) -> impl Iterator<Item = &SearchResult> {
        self.entries.iter().flat_map(|e| e.results.iter())
    }
}

/// Separate search caches for the generating and the supervising side.
pub struct TimeSpecSearch {
    pub generator: SearchClient,
    pub supervisor: SearchClient,
}

impl TimeSpecSearch {
    pub fn new(backend: Arc<dyn SearchBackend>) -> Self {
        TimeSpecSearch {
            generator: SearchClient::new(backend.clone(), CacheRole::Generator),
            supervisor: SearchClient::new(backend, CacheRole::Supervisor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedClaim {
    pub claim: ExtractedClaim,
    pub verified: Option<NaiveDate>,
}

/// "[A2] text (verified: 2019-04-15)"; background claims read "timeless".
pub fn render_valid_claim(v: &ValidatedClaim) -> String {
    let when = match v.verified {
        Some(d) if d == timeless_sentinel() => "timeless".to_string(),
        Some(d) => d.to_string(),
        None if !v.claim.category.needs_search() => "timeless".to_string(),
        None => "unverified".to_string(),
    };
    format!("[{}] {} (verified: {when})", v.claim.category, v.claim.claim_text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supervision {
    pub claims: Vec<ExtractedClaim>,
    pub verdicts: Vec<LeakageVerdict>,
    pub valid: Vec<ValidatedClaim>,
    pub violated: Vec<ExtractedClaim>,
}

impl Supervision {
    pub fn triggers_regeneration(&self) -> bool {
        !self.violated.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSpecTrace {
    pub draft: Prediction,
    pub generator_history: SearchHistory,
    pub supervision: Supervision,
    pub regenerated: Option<Prediction>,
    pub regeneration_history: Option<SearchHistory>,
    pub resupervision: Option<Supervision>,
    pub final_prediction: Prediction,
    /// Violations that survived regeneration; excluded from aggregation.
    pub persistent_violations: Vec<ExtractedClaim>,
}

impl TimeSpecTrace {
    pub fn valid_1(&self) -> &[ValidatedClaim] {
        &self.supervision.valid
    }

    pub fn violated_1(&self) -> &[ExtractedClaim] {
        &self.supervision.violated
    }

    pub fn valid_2(&self) -> &[ValidatedClaim] {
        self.resupervision.as_ref().map_or(&[], |s| &s.valid)
    }

    pub fn violated_2(&self) -> &[ExtractedClaim] {
        self.resupervision.as_ref().map_or(&[], |s| &s.violated)
    }

    pub fn regenerations(&self) -> usize {
        usize::from(self.regenerated.is_some())
    }
}

struct LoopRules<'a> {
    min_results: usize,
    /// Offer only the submit tool once `min_results` is reached.
    close_search_at_threshold: bool,
    /// Queries that may not be issued again, verbatim.
    forbidden: Option<&'a [String]>,
}

fn tool_error(message: impl Into<String>) -> Value {
    json!({"error": message.into()})
}

fn result_json(r: &SearchResult) -> Value {
    json!({"title": r.title, "url": r.url, "publication_date": r.publication_date, "snippet": r.snippet})
}

fn tool_loop(
    instance: &TaskInstance,
    llm: &dyn LanguageModel,
    search: &SearchClient,
    cfg: &TimeSpecConfig,
    mut request: LmRequest,
    rules: LoopRules<'_>,
) -> Result<(Prediction, SearchHistory)> {
    let mut history = SearchHistory::default();
    let mut used: Vec<String> = rules.forbidden.map(<[String]>::to_vec).unwrap_or_default();
    let submit = submit_tool(instance.kind(), SubmitSchema::Draft);
    let policy = CallPolicy::default();
    for iteration in 0..cfg.max_tool_iterations {
        let last = iteration + 1 == cfg.max_tool_iterations;
        let enough = history.total_results() >= rules.min_results;
        request.tools = if last || (enough && rules.close_search_at_threshold) {
            vec![submit.clone()]
        } else {
            vec![search_tool(), submit.clone()]
        };
        let response = complete_with_backoff(llm, &request, &policy)?;
        request.messages.push(Message::Assistant(response.clone()));
        let call = match response {
            LmResponse::ToolCall(call) => call,
            _ => {
                let names: Vec<&str> = request.tools.iter().map(|t| t.name.as_str()).collect();
                request
                    .messages
                    .push(Message::User(format!("Respond with a tool call: {}.", names.join(" or "))));
                continue;
            }
        };
        let content = if call.name == SEARCH_TOOL {
            if !request.has_tool(SEARCH_TOOL) {
                tool_error(format!("search_information is closed; call {SUBMIT_DRAFT_TOOL}"))
            } else {
                let query = call.arguments.get("query").and_then(Value::as_str).unwrap_or("").trim().to_string();
                let purpose = call.arguments.get("purpose").and_then(Value::as_str).unwrap_or("").to_string();
                if query.is_empty() {
                    tool_error("query must be a non-empty string")
                } else if rules.forbidden.is_some() && used.contains(&query) {
                    tool_error(format!("query {query:?} was already issued; search a NEW angle"))
                } else {
                    let mut req = SearchRequest::new(query.clone(), Some(instance.cutoff_date));
                    req.max_results = cfg.results_per_query;
                    let results = search.search(&req)?;
                    used.push(query.clone());
                    let payload = json!({
                        "results": results.iter().map(result_json).collect::<Vec<_>>(),
                        "total_results_so_far": history.total_results() + results.len(),
                    });
                    history.entries.push(SearchEntry { query, purpose, results });
                    payload
                }
            }
        } else if call.name == SUBMIT_DRAFT_TOOL {
            let have = history.total_results();
            if have < rules.min_results && !last {
                tool_error(format!(
                    "at least {} dated search results are required before submitting; {have} gathered so far",
                    rules.min_results
                ))
            } else {
                match validate_arguments(&call.arguments, instance, SubmitSchema::Draft) {
                    Ok(prediction) => return Ok((prediction, history)),
                    Err(problem) => tool_error(problem.message),
                }
            }
        } else {
            tool_error(format!("unknown tool {}", call.name))
        };
        request.messages.push(Message::ToolResult { name: call.name.clone(), call_id: call.id.clone(), content });
    }
    Err(Error::ToolLoopExhausted { iterations: cfg.max_tool_iterations, history: Box::new(history) })
}

/// Generator: searches with a date bound until enough results exist, then drafts.
pub fn timespec_generate(
    instance: &TaskInstance,
    llm: &dyn LanguageModel,
    search: &SearchClient,
    cfg: &TimeSpecConfig,
) -> Result<(Prediction, SearchHistory)> {
    let inst = instantiation(instance.kind());
    let cutoff = instance.cutoff_date.to_string();
    let system = render(
        prompt::GENERATOR_SYSTEM,
        &[("DOMAIN_ROLE", inst.domain_role), ("cutoff_date", &cutoff), ("domain_data", inst.domain_data)],
    );
    let input_json = instance.input_json();
    let user = render(
        prompt::GENERATOR_USER,
        &[("TASK_INSTRUCTION", inst.task_instruction), ("cutoff_date", &cutoff), ("input_json", &input_json)],
    );
    let request = LmRequest::new("generator", system, user);
    tool_loop(
        instance,
        llm,
        search,
        cfg,
        request,
        LoopRules { min_results: cfg.min_search_results, close_search_at_threshold: true, forbidden: None },
    )
}

/// Supervisor: extract claims, date them, split into valid and violated.
pub fn timespec_supervise(
    prediction: &Prediction,
    instance: &TaskInstance,
    llm: &dyn LanguageModel,
    search: &SearchClient,
    cfg: &TimeSpecConfig,
) -> Result<Supervision> {
    let ctx = instance.context();
    let claims = extract_claims(&prediction.rationale, &ctx, llm, &cfg.extraction)?;
    let verdicts = detect_leakage(&claims, &ctx, search, llm, &cfg.verifier)?;
    let mut valid = Vec::new();
    let mut violated = Vec::new();
    for (claim, verdict) in claims.iter().zip(&verdicts) {
        if verdict.leaked {
            violated.push(claim.clone());
        } else {
            let verified = match verdict.basis {
                Basis::DateComparison => verdict.determination.as_ref().and_then(|d| d.date),
                _ => None,
            };
            valid.push(ValidatedClaim { claim: claim.clone(), verified });
        }
    }
    Ok(Supervision { claims, verdicts, valid, violated })
}

fn bullet_list(lines: impl Iterator<Item = String>) -> String {
    let lines: Vec<String> = lines.map(|l| format!("- {l}")).collect();
    if lines.is_empty() {
        "(none)".into()
    } else {
        lines.join("\n")
    }
}

/// Regenerator: one further pass from valid claims and prior evidence; repeated queries are refused.
pub fn timespec_regenerate(
    instance: &TaskInstance,
    valid: &[ValidatedClaim],
    history: &SearchHistory,
    llm: &dyn LanguageModel,
    search: &SearchClient,
    cfg: &TimeSpecConfig,
) -> Result<(Prediction, SearchHistory)> {
    let cutoff = instance.cutoff_date.to_string();
    let system = render(prompt::REGENERATOR_SYSTEM, &[("cutoff_date", &cutoff)]);
    let valid_claims = bullet_list(valid.iter().map(render_valid_claim));
    let valid_searches = bullet_list(history.results().map(|r| {
        let date = r.publication_date.map_or_else(|| "undated".to_string(), |d| d.to_string());
        format!("[{date}] {}: {} ({})", r.title, r.snippet, r.url)
    }));
    let previous: Vec<String> = history.queries().map(str::to_string).collect();
    let previous_queries = bullet_list(previous.iter().cloned());
    let case_input = instance.input_json();
    let user = render(
        prompt::REGENERATOR_USER,
        &[
            ("case_input", &case_input),
            ("cutoff_date", &cutoff),
            ("valid_claims", &valid_claims),
            ("valid_searches", &valid_searches),
            ("previous_queries", &previous_queries),
        ],
    );
    let request = LmRequest::new("regenerator", system, user);
    tool_loop(
        instance,
        llm,
        search,
        cfg,
        request,
        LoopRules { min_results: 0, close_search_at_threshold: false, forbidden: Some(&previous) },
    )
}

fn violation_texts(violated: &[ExtractedClaim]) -> Vec<&str> {
    violated
        .iter()
        .flat_map(|c| [c.claim_text.trim(), c.original_text.trim()])
        .filter(|t| !t.is_empty())
        .collect()
}

/// Aggregator: one closed-world call over the validated claims, no search tool.
pub fn timespec_aggregate(
    instance: &TaskInstance,
    valid_1: &[ValidatedClaim],
    valid_2: &[ValidatedClaim],
    violated: &[ExtractedClaim],
    llm: &dyn LanguageModel,
    cfg: &TimeSpecConfig,
) -> Result<Prediction> {
    let banned = violation_texts(violated);
    let mut lines: Vec<String> = Vec::new();
    for v in valid_1.iter().chain(valid_2) {
        let line = render_valid_claim(v);
        if banned.iter().any(|b| line.contains(b)) {
            log::warn!("{}: dropping validated claim overlapping a violation: {}", instance.instance_id, v.claim.claim_text);
            continue;
        }
        if !lines.contains(&line) {
            lines.push(line);
        }
    }
    let cutoff = instance.cutoff_date.to_string();
    let case_input = instance.input_json();
    let valid_claims = if lines.is_empty() { "(none)".to_string() } else { lines.join("\n") };
    let user = render(
        prompt::AGGREGATOR_USER,
        &[("case_input", &case_input), ("cutoff_date", &cutoff), ("valid_claims", &valid_claims)],
    );
    let request = LmRequest::new("aggregator", prompt::AGGREGATOR_SYSTEM, user)
        .with_tools(vec![submit_tool(instance.kind(), SubmitSchema::Final)]);
    let text = request.full_text();
    if let Some(hit) = banned.iter().find(|b| text.contains(*b)) {
        return Err(Error::ClosedWorld(format!("aggregator prompt contains violated claim text {hit:?}")));
    }
    let outcome = lm_call(llm, request, cfg.submission_retries, |resp| {
        let args = match resp {
            LmResponse::ToolCall(call) if call.name == SUBMIT_FINAL_TOOL => call.arguments.clone(),
            LmResponse::ToolCall(call) => return Err(format!("expected {SUBMIT_FINAL_TOOL}, got {}", call.name)),
            other => other.json().ok_or_else(|| format!("call {SUBMIT_FINAL_TOOL}"))?,
        };
        validate_arguments(&args, instance, SubmitSchema::Final).map_err(|p| p.message)
    });
    match outcome {
        Err(e) if lines.is_empty() => {
            log::warn!("{}: aggregation without claims failed ({e}); using the task default", instance.instance_id);
            Ok(Prediction {
                value: instance.default_prediction()?,
                rationale: "No validated claims were available; the task default prediction is used.".into(),
            })
        }
        other => other,
    }
}

/// Generator, supervisor, optional single regeneration with resupervision, aggregator.
pub fn run_timespec(
    instance: &TaskInstance,
    llm: &dyn LanguageModel,
    search: &TimeSpecSearch,
    cfg: &TimeSpecConfig,
) -> Result<(Prediction, TimeSpecTrace)> {
    let (draft, generator_history) = timespec_generate(instance, llm, &search.generator, cfg)?;
    let supervision = timespec_supervise(&draft, instance, llm, &search.supervisor, cfg)?;

    let (regenerated, regeneration_history, resupervision) = if supervision.triggers_regeneration() {
        let (regen, history) =
            timespec_regenerate(instance, &supervision.valid, &generator_history, llm, &search.generator, cfg)?;
        let resup = timespec_supervise(&regen, instance, llm, &search.supervisor, cfg)?;
        (Some(regen), Some(history), Some(resup))
    } else {
        (None, None, None)
    };

    let persistent_violations = resupervision.as_ref().map_or_else(Vec::new, |s| s.violated.clone());
    for c in &persistent_violations {
        log::info!("{}: persistent violation excluded: [{}] {}", instance.instance_id, c.category, c.claim_text);
    }
    let violated: Vec<ExtractedClaim> =
        supervision.violated.iter().chain(&persistent_violations).cloned().collect();
    let valid_2: &[ValidatedClaim] = resupervision.as_ref().map_or(&[], |s| &s.valid);
    let final_prediction = timespec_aggregate(instance, &supervision.valid, valid_2, &violated, llm, cfg)?;

    let trace = TimeSpecTrace {
        draft,
        generator_history,
        supervision,
        regenerated,
        regeneration_history,
        resupervision,
        final_prediction: final_prediction.clone(),
        persistent_violations,
    };
    Ok((final_prediction, trace))
}

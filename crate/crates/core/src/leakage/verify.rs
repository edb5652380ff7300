use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Confidence, DeterminationDate, Evidence};
use crate::backends::{lm_call, LanguageModel, LmRequest, LmResponse, SearchClient, SearchRequest};
use crate::claims::{parse_temporal_reference, period_end, ClaimCategory, ClaimId, ExtractedClaim};
use crate::error::Result;
use crate::prompt;
use crate::util::bounded_map;

/// How search-extracted dates for state (A2) claims are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDatePolicy {
    /// Keep the extracted date (period start, as the extraction prompt asks).
    #[default]
    AsExtracted,
    /// Push the extracted date to the end of the claim's own reference period.
    PeriodEnd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub max_concurrency: usize,
    pub results_per_query: usize,
    pub schema_retries: u32,
    pub state_date_policy: StateDatePolicy,
    /// Verdict for claims that cannot be dated.
    pub unverifiable_leaked: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            max_concurrency: 10,
            results_per_query: 5,
            schema_retries: 1,
            state_date_policy: StateDatePolicy::AsExtracted,
            unverifiable_leaked: true,
        }
    }
}

pub fn render_query_prompt(claims: &[ExtractedClaim]) -> LmRequest {
    let items: Vec<Value> = claims
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "index": i,
                "claim": c.claim_text,
                "category": c.category.label(),
                "temporal_reference": c.temporal_reference.as_ref().map(|t| t.raw_text.clone()),
            })
        })
        .collect();
    let claims_json = serde_json::to_string_pretty(&items).expect("serializable");
    let user = prompt::render(prompt::QUERY_GENERATION_USER, &[("claims_json", &claims_json)]);
    LmRequest::new("query_generation", prompt::QUERY_GENERATION_SYSTEM, user).json_output()
}

pub fn render_date_extraction_prompt(entries: &[Value]) -> LmRequest {
    let data = serde_json::to_string_pretty(entries).expect("serializable");
    let user = prompt::render(prompt::DATE_EXTRACTION_USER, &[("extraction_data_json", &data)]);
    let mut req = LmRequest::new("date_extraction", prompt::DATE_EXTRACTION_SYSTEM, user).json_output();
    req.max_tokens = 8000;
    req
}

fn json_array(resp: &LmResponse) -> std::result::Result<Vec<Value>, String> {
    match resp.json().ok_or("response is not JSON")? {
        Value::Array(a) => Ok(a),
        Value::Object(map) => match map.into_iter().find(|(_, v)| v.is_array()) {
            Some((_, Value::Array(a))) => Ok(a),
            _ => Err("expected a JSON array".into()),
        },
        _ => Err("expected a JSON array".into()),
    }
}

fn index_of(entry: &Value, count: usize) -> std::result::Result<usize, String> {
    let i = entry
        .get("index")
        .and_then(Value::as_u64)
        .ok_or_else(|| format!("entry without integer \"index\": {entry}"))? as usize;
    if i >= count {
        return Err(format!("index {i} outside 0..{count}"));
    }
    Ok(i)
}

fn parse_queries(resp: &LmResponse, count: usize) -> std::result::Result<Vec<Vec<String>>, String> {
    let mut queries = vec![Vec::new(); count];
    for entry in json_array(resp)? {
        let i = index_of(&entry, count)?;
        let q = entry
            .get("query")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|q| !q.is_empty())
            .ok_or_else(|| format!("entry {i} has no query"))?;
        if !queries[i].iter().any(|x| x == q) {
            queries[i].push(q.to_string());
        }
    }
    let missing: Vec<usize> = (0..count).filter(|&i| queries[i].is_empty()).collect();
    if !missing.is_empty() {
        return Err(format!("no query for claim indices {missing:?}"));
    }
    Ok(queries)
}

struct Extracted {
    date: Option<NaiveDate>,
    confidence: Confidence,
    reasoning: String,
}

fn parse_date_text(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| parse_temporal_reference(s).ok().map(|t| t.resolved_date))
}

fn parse_dates(resp: &LmResponse, sent: &[usize]) -> std::result::Result<HashMap<usize, Extracted>, String> {
    let mut out = HashMap::new();
    for entry in json_array(resp)? {
        let i = index_of(&entry, usize::MAX)?;
        if !sent.contains(&i) {
            return Err(format!("index {i} was not among the claims sent"));
        }
        let confidence: Confidence = entry
            .get("confidence")
            .and_then(Value::as_str)
            .unwrap_or("none")
            .parse()?;
        let reasoning = entry.get("reasoning").and_then(Value::as_str).unwrap_or_default().to_string();
        let date = if confidence == Confidence::None {
            None
        } else {
            let raw = entry
                .get("event_date")
                .and_then(Value::as_str)
                .ok_or_else(|| format!("index {i}: confidence {confidence:?} without event_date"))?;
            Some(parse_date_text(raw).ok_or_else(|| format!("index {i}: unreadable event_date {raw:?}"))?)
        };
        out.insert(i, Extracted { date, confidence, reasoning });
    }
    let missing: Vec<&usize> = sent.iter().filter(|i| !out.contains_key(i)).collect();
    if !missing.is_empty() {
        return Err(format!("no date for claim indices {missing:?}"));
    }
    Ok(out)
}

/// Dates A1-A3 claims in three steps: one query-generation call, searches
/// for every claim (bounded concurrency), one date-extraction call over the
/// pooled results. A failed search degrades only its claim to `none`.
pub fn verify_determination_dates(
    claims: &[ExtractedClaim],
    search: &SearchClient,
    llm: &dyn LanguageModel,
    cfg: &VerifierConfig,
) -> Result<BTreeMap<ClaimId, DeterminationDate>> {
    if claims.is_empty() {
        return Ok(BTreeMap::new());
    }
    let n = claims.len();
    let queries = lm_call(llm, render_query_prompt(claims), cfg.schema_retries, |r| parse_queries(r, n))?;

    let searched: Vec<std::result::Result<Vec<Evidence>, String>> =
        bounded_map(&queries, cfg.max_concurrency, |_, qs| {
            let mut evidence: Vec<Evidence> = Vec::new();
            for q in qs {
                let mut req = SearchRequest::new(q.clone(), None);
                req.max_results = cfg.results_per_query;
                let hits = search.search(&req).map_err(|e| e.to_string())?;
                for h in hits {
                    if !evidence.iter().any(|e| e.url == h.url) {
                        evidence.push(Evidence {
                            url: h.url,
                            title: h.title,
                            publication_date: h.publication_date,
                            snippet: h.snippet,
                        });
                    }
                }
            }
            Ok(evidence)
        });

    let mut entries = Vec::new();
    let mut sent = Vec::new();
    for (i, (claim, res)) in claims.iter().zip(&searched).enumerate() {
        let timeless = claim.temporal_reference.as_ref().is_some_and(|t| t.is_timeless());
        match res {
            Ok(ev) if !ev.is_empty() || timeless => {
                sent.push(i);
                entries.push(json!({
                    "index": i,
                    "claim": claim.claim_text,
                    "category": claim.category.label(),
                    "search_results": ev.iter().map(|e| json!({
                        "title": e.title,
                        "snippet": e.snippet,
                        "publication_date": e.publication_date,
                        "url": e.url,
                    })).collect::<Vec<_>>(),
                }));
            }
            _ => {}
        }
    }
    let extracted = if sent.is_empty() {
        HashMap::new()
    } else {
        lm_call(llm, render_date_extraction_prompt(&entries), cfg.schema_retries, |r| parse_dates(r, &sent))?
    };

    let mut out = BTreeMap::new();
    for (i, claim) in claims.iter().enumerate() {
        let source_query = queries[i].join(" | ");
        let det = match (&searched[i], extracted.get(&i)) {
            (Err(e), _) => DeterminationDate::unknown(format!("search failed: {e}"), source_query, Vec::new()),
            (Ok(ev), None) => DeterminationDate::unknown("no search results", source_query, ev.clone()),
            (Ok(ev), Some(x)) => {
                let date = x.date.map(|d| adjust_state_date(claim, d, cfg.state_date_policy));
                DeterminationDate {
                    date,
                    confidence: if date.is_some() { x.confidence } else { Confidence::None },
                    reasoning: x.reasoning.clone(),
                    source_query,
                    evidence: ev.clone(),
                }
            }
        };
        out.insert(claim.claim_id, det);
    }
    Ok(out)
}

fn adjust_state_date(claim: &ExtractedClaim, date: NaiveDate, policy: StateDatePolicy) -> NaiveDate {
    match (policy, claim.category, &claim.temporal_reference) {
        (StateDatePolicy::PeriodEnd, ClaimCategory::A2, Some(tr)) if !tr.is_timeless() => {
            period_end(date, tr.granularity).max(date)
        }
        _ => date,
    }
}

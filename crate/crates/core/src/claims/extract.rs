use serde::Deserialize;
use serde_json::Value;

use super::{parse_temporal_reference, ClaimCategory, ExtractedClaim, TaskContext};
use crate::backends::{lm_call, LanguageModel, LmRequest, LmResponse};
use crate::error::{Error, Result};
use crate::prompt::{self, render};

#[derive(Debug, Clone, Copy)]
pub struct ExtractionConfig {
    /// Re-requests after schema-invalid output before giving up.
    pub max_retries: u32,
    pub max_tokens: u32,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_retries: 2,
            max_tokens: 8000,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawClaim {
    #[serde(default)]
    claim_text: Option<String>,
    #[serde(default)]
    original_text: Option<String>,
    #[serde(default)]
    temporal_reference: Option<Value>,
    #[serde(default, alias = "category")]
    claim_category: Option<String>,
    #[serde(default)]
    category_reasoning: Option<String>,
}

pub fn render_extraction_prompt(rationale: &str, ctx: &TaskContext) -> LmRequest {
    let reference_date = ctx.reference_date.to_string();
    let user = render(
        prompt::EXTRACTION_USER,
        &[
            ("task_description", &ctx.task_description),
            ("event_description", &ctx.event_description),
            ("reference_date", &reference_date),
            ("rationale_text", rationale),
        ],
    );
    LmRequest::new("extraction", prompt::EXTRACTION_SYSTEM, user).json_output()
}

fn parse_claims(resp: &LmResponse) -> Result<Vec<ExtractedClaim>, String> {
    let value = resp.json().ok_or("response is not JSON")?;
    let array = match &value {
        Value::Array(_) => value.clone(),
        Value::Object(o) => o
            .get("claims")
            .cloned()
            .ok_or("object has no `claims` array")?,
        _ => return Err("expected a claims array".into()),
    };
    let raws: Vec<RawClaim> =
        serde_json::from_value(array).map_err(|e| format!("malformed claims array: {e}"))?;

    let mut problems = Vec::new();
    let mut claims = Vec::with_capacity(raws.len());
    for (i, raw) in raws.into_iter().enumerate() {
        let claim_id = i as u32 + 1;
        let text = raw.claim_text.unwrap_or_default();
        if text.trim().is_empty() {
            problems.push(format!("claim {claim_id}: empty claim_text"));
            continue;
        }
        let category = match raw.claim_category.as_deref().map(str::parse::<ClaimCategory>) {
            Some(Ok(c)) => c,
            Some(Err(e)) => {
                problems.push(format!("claim {claim_id}: {e}"));
                continue;
            }
            None => {
                problems.push(format!("claim {claim_id}: missing claim_category"));
                continue;
            }
        };
        let temporal_reference = match raw.temporal_reference {
            Some(Value::String(s)) if !s.trim().is_empty() && !s.eq_ignore_ascii_case("null") => {
                match parse_temporal_reference(&s) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("claim {claim_id}: {e}; left unresolved");
                        None
                    }
                }
            }
            Some(Value::Object(o)) => o
                .get("raw_text")
                .or_else(|| o.get("resolved_date"))
                .and_then(Value::as_str)
                .and_then(|s| parse_temporal_reference(s).ok()),
            _ => None,
        };
        if category.needs_search() && temporal_reference.is_none() {
            log::warn!("claim {claim_id} ({category}) has no temporal reference");
        }
        claims.push(ExtractedClaim {
            claim_id,
            original_text: raw.original_text.filter(|s| !s.is_empty()).unwrap_or_else(|| text.clone()),
            claim_text: text,
            temporal_reference,
            category,
            category_reasoning: raw.category_reasoning.unwrap_or_default(),
        });
    }
    if problems.is_empty() {
        Ok(claims)
    } else {
        Err(problems.join("; "))
    }
}

/// Decomposes `rationale` into categorized atomic claims with ids 1..n.
///
/// Schema-invalid model output is re-requested up to `cfg.max_retries` times.
pub fn extract_claims(
    rationale: &str,
    ctx: &TaskContext,
    llm: &dyn LanguageModel,
    cfg: &ExtractionConfig,
) -> Result<Vec<ExtractedClaim>> {
    if rationale.trim().is_empty() {
        return Err(Error::EmptyRationale);
    }
    let mut req = render_extraction_prompt(rationale, ctx);
    req.max_tokens = cfg.max_tokens;
    lm_call(llm, req, cfg.max_retries, parse_claims)
}

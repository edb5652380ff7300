use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::Value;

use super::{CharacteristicFunction, Coalition, CoalitionPrediction, PredictionBackend, SamplerConfig};
use crate::backends::{lm_call_with, CallPolicy, LanguageModel, LmRequest, LmResponse};
use crate::claims::{ClaimId, ExtractedClaim, TaskType};
use crate::error::Result;
use crate::prompt;
use crate::util::bounded_map;

/// Values for `coalitions` via the game's cache; misses are evaluated in
/// batches and the empty coalition maps to the game default without a call.
pub fn batched_coalition_eval(
    game: &CharacteristicFunction,
    coalitions: &[Coalition],
) -> Result<BTreeMap<Coalition, f64>> {
    let values = game.values(coalitions)?;
    Ok(coalitions.iter().cloned().zip(values).collect())
}

/// Language-model coalition predictor using the claim-id reference format.
pub struct LlmCoalitionBackend {
    llm: Arc<dyn LanguageModel>,
    claims: Vec<(ClaimId, String)>,
    task_context: String,
    task_type: TaskType,
    /// Items every ranking must contain (ranking tasks only).
    items: Vec<String>,
    batch_size: usize,
    max_concurrency: usize,
    policy: CallPolicy,
    calls: AtomicUsize,
}

impl LlmCoalitionBackend {
    pub fn new(
        llm: Arc<dyn LanguageModel>,
        claims: &[ExtractedClaim],
        task_context: impl Into<String>,
        task_type: TaskType,
        items: Vec<String>,
        cfg: &SamplerConfig,
    ) -> Self {
        LlmCoalitionBackend {
            llm,
            claims: claims.iter().map(|c| (c.claim_id, c.claim_text.clone())).collect(),
            task_context: task_context.into(),
            task_type,
            items,
            batch_size: cfg.batch_size.max(1),
            max_concurrency: cfg.max_concurrency.max(1),
            policy: CallPolicy::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_policy(mut self, policy: CallPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Batch requests issued (retries excluded).
    pub fn batches_issued(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn predict_chunk(&self, chunk: &[Coalition]) -> Result<Vec<CoalitionPrediction>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let request = render_batch_prompt(&self.claims, chunk, &self.task_context, self.task_type);
        lm_call_with(self.llm.as_ref(), request, &self.policy, |resp| {
            parse_batch(resp, chunk.len(), self.task_type, &self.items)
        })
    }
}

impl PredictionBackend for LlmCoalitionBackend {
    fn predict(&self, coalitions: &[Coalition]) -> Result<Vec<CoalitionPrediction>> {
        let chunks: Vec<&[Coalition]> = coalitions.chunks(self.batch_size).collect();
        let results = bounded_map(&chunks, self.max_concurrency, |_, chunk| self.predict_chunk(chunk));
        let mut out = Vec::with_capacity(coalitions.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

fn output_format(task_type: TaskType) -> &'static str {
    match task_type {
        TaskType::Classification => r#"[{"set": 1, "p": 0.63}, {"set": 2, "p": 0.71}, ...]"#,
        TaskType::Regression => r#"[{"set": 1, "value": 12500000}, {"set": 2, "value": 9800000}, ...]"#,
        TaskType::Ranking => r#"[{"set": 1, "ranking": ["TICKER_A", "TICKER_B", ...]}, ...]"#,
    }
}

/// One batched request: every claim listed once by id, then each set as an id list.
pub fn render_batch_prompt(
    claims: &[(ClaimId, String)],
    coalitions: &[Coalition],
    task_context: &str,
    task_type: TaskType,
) -> LmRequest {
    let claims_list = claims
        .iter()
        .map(|(id, text)| format!("[{id}] {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    let sets_list = coalitions
        .iter()
        .enumerate()
        .map(|(k, c)| {
            if c.is_empty() {
                format!("SET {}: [] (empty - default)", k + 1)
            } else {
                format!("SET {}: {c}", k + 1)
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let count = coalitions.len().to_string();
    let user = prompt::render(
        prompt::SHAPLEY_BATCH_USER,
        &[
            ("task_context", task_context),
            ("claims_list", &claims_list),
            ("sets_list", &sets_list),
            ("set_count", &count),
            ("output_format", output_format(task_type)),
        ],
    );
    let mut req = LmRequest::new("shapley_batch", prompt::SHAPLEY_BATCH_SYSTEM, user).json_output();
    req.max_tokens = 16_000;
    req
}

fn parse_batch(
    resp: &LmResponse,
    expected: usize,
    task_type: TaskType,
    items: &[String],
) -> std::result::Result<Vec<CoalitionPrediction>, String> {
    let json = resp.json().ok_or("response is not JSON")?;
    let array = match json {
        Value::Array(a) => a,
        Value::Object(map) => match map.into_iter().find(|(_, v)| v.is_array()) {
            Some((_, Value::Array(a))) => a,
            _ => return Err("expected a JSON array".into()),
        },
        _ => return Err("expected a JSON array".into()),
    };
    let mut slots: Vec<Option<CoalitionPrediction>> = vec![None; expected];
    for entry in &array {
        let set = entry
            .get("set")
            .and_then(Value::as_u64)
            .ok_or_else(|| format!("entry without integer \"set\": {entry}"))? as usize;
        if set == 0 || set > expected {
            return Err(format!("set index {set} outside 1..={expected}"));
        }
        if slots[set - 1].is_some() {
            return Err(format!("set {set} appears more than once"));
        }
        slots[set - 1] = Some(parse_entry(entry, task_type, items).map_err(|e| format!("set {set}: {e}"))?);
    }
    let missing: Vec<String> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(format!(
            "expected exactly {expected} objects, got {}; missing sets: {}",
            array.len(),
            missing.join(", ")
        ));
    }
    Ok(slots.into_iter().map(Option::unwrap).collect())
}

fn parse_entry(
    entry: &Value,
    task_type: TaskType,
    items: &[String],
) -> std::result::Result<CoalitionPrediction, String> {
    let number = |keys: &[&str]| {
        keys.iter()
            .find_map(|k| entry.get(*k).and_then(Value::as_f64))
            .filter(|v| v.is_finite())
    };
    match task_type {
        TaskType::Classification => {
            let p = number(&["p", "probability"]).ok_or("missing numeric \"p\"")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} outside [0, 1]"));
            }
            Ok(CoalitionPrediction::Probability(p))
        }
        TaskType::Regression => {
            let v = number(&["value", "p", "prediction"]).ok_or("missing numeric \"value\"")?;
            Ok(CoalitionPrediction::Value(v))
        }
        TaskType::Ranking => {
            let ranking: Vec<String> = entry
                .get("ranking")
                .and_then(Value::as_array)
                .ok_or("missing \"ranking\" array")?
                .iter()
                .map(|v| v.as_str().map(|s| s.trim().to_uppercase()).ok_or("ranking entries must be strings"))
                .collect::<std::result::Result<_, _>>()?;
            let want: HashSet<String> = items.iter().map(|s| s.to_uppercase()).collect();
            let got: HashSet<String> = ranking.iter().cloned().collect();
            if ranking.len() != items.len() || got != want {
                let missing: Vec<&String> = items.iter().filter(|i| !got.contains(&i.to_uppercase())).collect();
                return Err(format!(
                    "ranking must list each of the {} items exactly once; missing {missing:?}",
                    items.len()
                ));
            }
            // Report in the caller's spelling.
            let ranking = ranking
                .iter()
                .map(|r| items.iter().find(|i| i.to_uppercase() == *r).cloned().unwrap())
                .collect();
            Ok(CoalitionPrediction::Ranking(ranking))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Matcher, ScriptedLm};
    use crate::error::Error;
    use crate::shapley::{make_characteristic, TaskDefaults};

    fn claims(n: u32) -> Vec<ExtractedClaim> {
        (1..=n)
            .map(|i| ExtractedClaim::new(i, format!("claim {i}"), crate::claims::ClaimCategory::B1))
            .collect()
    }

    fn reply(values: &[f64]) -> LmResponse {
        let arr: Vec<Value> = values
            .iter()
            .enumerate()
            .map(|(k, p)| serde_json::json!({"set": k + 1, "p": p}))
            .collect();
        LmResponse::Text(Value::Array(arr).to_string())
    }

    fn game(lm: Arc<ScriptedLm>, n: u32, cfg: &SamplerConfig) -> CharacteristicFunction {
        let backend = LlmCoalitionBackend::new(lm, &claims(n), "Legal case", TaskType::Classification, vec![], cfg);
        make_characteristic(
            TaskType::Classification,
            &CoalitionPrediction::Probability(0.9),
            &TaskDefaults::default(),
            Box::new(backend),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_consumes_no_response() {
        let lm = Arc::new(ScriptedLm::strict(vec![]));
        lm.push(Matcher::Purpose("shapley_batch".into()), reply(&[0.6, 0.8]));
        let g = game(lm.clone(), 3, &SamplerConfig::default());
        let coalitions = [Coalition::empty(), Coalition::new([1]), Coalition::new([1, 2, 3])];
        let map = batched_coalition_eval(&g, &coalitions).unwrap();
        assert_eq!(map[&Coalition::empty()], 0.5);
        assert_eq!(map[&Coalition::new([1])], 0.6);
        assert_eq!(map[&Coalition::new([1, 2, 3])], 0.8);
        assert_eq!(lm.calls(), 1);
        let user = lm.requests()[0].user_text();
        assert!(user.contains("[2] claim 2"));
        assert!(user.contains("SET 1: [1]\nSET 2: [1, 2, 3]"));
        assert!(user.contains("exactly 2 objects"));
    }

    #[test]
    fn three_hundred_coalitions_take_two_calls() {
        let lm = Arc::new(ScriptedLm::strict(vec![]));
        lm.push(Matcher::Any, reply(&[0.5; 256]));
        lm.push(Matcher::Any, reply(&[0.5; 44]));
        let g = game(lm.clone(), 9, &SamplerConfig::default());
        let coalitions: Vec<Coalition> = (1u128..=300)
            .map(|m| Coalition::from_mask(m, &[1, 2, 3, 4, 5, 6, 7, 8, 9]))
            .collect();
        batched_coalition_eval(&g, &coalitions).unwrap();
        assert_eq!(lm.calls(), 2);
    }

    #[test]
    fn repeated_coalition_is_cached() {
        let lm = Arc::new(ScriptedLm::strict(vec![]));
        lm.push(Matcher::Any, reply(&[0.7]));
        let g = game(lm.clone(), 2, &SamplerConfig::default());
        let c = Coalition::new([2]);
        batched_coalition_eval(&g, &[c.clone()]).unwrap();
        let again = batched_coalition_eval(&g, &[c.clone()]).unwrap();
        assert_eq!(again[&c], 0.7);
        assert_eq!(lm.calls(), 1);
        assert_eq!(g.evaluations(), 1);
    }

    #[test]
    fn short_array_is_retried_then_reported() {
        let lm = Arc::new(ScriptedLm::strict(vec![]));
        lm.push(Matcher::Any, reply(&[0.7]));
        lm.push(Matcher::Any, reply(&[0.7]));
        let g = game(lm.clone(), 2, &SamplerConfig::default());
        let err = g.values(&[Coalition::new([1]), Coalition::new([2])]).unwrap_err();
        match err {
            Error::LlmProtocol(msg) => assert!(msg.contains("missing sets: 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(lm.calls(), 2);
    }

    #[test]
    fn retry_recovers_after_bad_index() {
        let lm = Arc::new(ScriptedLm::strict(vec![]));
        lm.push(Matcher::Any, LmResponse::Text(r#"[{"set": 3, "p": 0.2}]"#.into()));
        lm.push(Matcher::Any, reply(&[0.2]));
        let g = game(lm.clone(), 2, &SamplerConfig::default());
        assert_eq!(g.value(&Coalition::new([1])).unwrap(), 0.2);
    }

    #[test]
    fn incomplete_ranking_is_rejected() {
        let items = vec!["AAA".to_string(), "BBB".to_string(), "CCC".to_string()];
        let bad = LmResponse::Text(r#"[{"set": 1, "ranking": ["AAA", "BBB"]}]"#.into());
        assert!(parse_batch(&bad, 1, TaskType::Ranking, &items).is_err());
        let good = LmResponse::Text(r#"[{"set": 1, "ranking": ["ccc", "AAA", "BBB"]}]"#.into());
        let parsed = parse_batch(&good, 1, TaskType::Ranking, &items).unwrap();
        assert_eq!(
            parsed[0],
            CoalitionPrediction::Ranking(vec!["CCC".into(), "AAA".into(), "BBB".into()])
        );
    }
}

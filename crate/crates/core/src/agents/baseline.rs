use super::task::{instantiation, Prediction, TaskInstance};
use super::tools::{parse_submission, submit_tool, SubmitSchema};
use crate::backends::{lm_call, LanguageModel, LmRequest, LmResponse};
use crate::error::{Error, Result};
use crate::prompt::{self, render};

const RATIONALE_RETRIES: u32 = 2;

/// The single baseline request; the hint variant prepends the temporal constraint.
pub fn render_baseline_request(instance: &TaskInstance, temporal_hint: bool) -> LmRequest {
    let inst = instantiation(instance.kind());
    let min_chars = inst.min_chars.to_string();
    let mut system = render(
        prompt::SUPERFORECAST_SYSTEM,
        &[
            ("DOMAIN_ROLE", inst.domain_role),
            ("domain_metrics", inst.domain_metrics),
            ("comparable_data", inst.comparable_data),
            ("min_chars", &min_chars),
        ],
    );
    if temporal_hint {
        let cutoff = instance.cutoff_date.to_string();
        let block = render(prompt::TEMPORAL_CONSTRAINT, &[("cutoff_date", &cutoff)]);
        system = format!("{block}\n\n{system}");
    }
    let input_json = instance.input_json();
    let user = render(
        prompt::SUPERFORECAST_USER,
        &[("TASK_INSTRUCTION", inst.task_instruction), ("input_json", &input_json)],
    );
    let purpose = if temporal_hint { "temporal_hint" } else { "superforecast" };
    LmRequest::new(purpose, system, user).with_tools(vec![submit_tool(instance.kind(), SubmitSchema::Baseline)])
}

fn run_baseline(instance: &TaskInstance, llm: &dyn LanguageModel, temporal_hint: bool) -> Result<Prediction> {
    let request = render_baseline_request(instance, temporal_hint);
    let mut short = false;
    let parse = |resp: &LmResponse| {
        parse_submission(resp, instance, SubmitSchema::Baseline).map_err(|p| {
            short = p.short_rationale;
            p.message
        })
    };
    match lm_call(llm, request, RATIONALE_RETRIES, parse) {
        Err(Error::LlmProtocol(msg)) if short => Err(Error::SchemaViolation(msg)),
        other => other,
    }
}

/// Parametric-knowledge baseline: one call, no date, no search.
pub fn run_superforecasting(instance: &TaskInstance, llm: &dyn LanguageModel) -> Result<Prediction> {
    run_baseline(instance, llm, false)
}

/// Baseline with the knowledge-cutoff instruction prepended to the system prompt.
pub fn run_temporal_hint(instance: &TaskInstance, llm: &dyn LanguageModel) -> Result<Prediction> {
    run_baseline(instance, llm, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::task::{fixtures, PredictionValue};
    use crate::backends::{Matcher, ScriptedLm, ToolCall};
    use serde_json::json;

    fn legal_call(p: f64, len: usize) -> LmResponse {
        LmResponse::ToolCall(ToolCall::new(
            "submit_prediction",
            json!({"probability_petitioner": p, "prediction_rationale": "r".repeat(len)}),
        ))
    }

    #[test]
    fn superforecast_prompt_has_no_cutoff() {
        let inst = fixtures::legal();
        let req = render_baseline_request(&inst, false);
        assert!(!req.full_text().contains(&inst.cutoff_date.to_string()));
        assert!(req.system.starts_with("You are Expert Supreme Court analyst."));
        assert!(req.has_tool("submit_prediction"));
        assert!(!req.has_tool("search_information"));
    }

    #[test]
    fn temporal_hint_prepends_constraint() {
        let inst = fixtures::legal();
        let req = render_baseline_request(&inst, true);
        assert!(req.system.starts_with("CRITICAL TEMPORAL CONSTRAINT: You may ONLY use information available BEFORE 2019-03-26."));
        let plain = render_baseline_request(&inst, false);
        assert!(req.system.ends_with(&plain.system));
        assert_eq!(req.messages, plain.messages);
        assert_eq!(req.tools, plain.tools);
    }

    #[test]
    fn legal_prediction_round_trip() {
        let lm = ScriptedLm::strict(vec![(Matcher::Purpose("superforecast".into()), legal_call(0.7, 450))]);
        let p = run_superforecasting(&fixtures::legal(), &lm).unwrap();
        assert_eq!(p.value, PredictionValue::Probability(0.7));
        assert!(p.rationale.len() >= 400);
        assert_eq!(lm.calls(), 1);
    }

    #[test]
    fn short_rationale_fails_after_two_retries() {
        let lm = ScriptedLm::strict(vec![
            (Matcher::Any, legal_call(0.7, 10)),
            (Matcher::Any, legal_call(0.7, 10)),
            (Matcher::Any, legal_call(0.7, 10)),
        ]);
        let err = run_temporal_hint(&fixtures::legal(), &lm).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err:?}");
        assert_eq!(lm.calls(), 3);
    }

    #[test]
    fn stock_prediction_is_a_permutation_of_inputs() {
        let inst = fixtures::stock();
        let lm = ScriptedLm::strict(vec![(
            Matcher::Any,
            LmResponse::ToolCall(ToolCall::new(
                "submit_prediction",
                json!({"ranking": ["SYK", "BSX", "MDT", "ABT", "DXCM"], "ranking_rationale": "r".repeat(1000)}),
            )),
        )]);
        let p = run_superforecasting(&inst, &lm).unwrap();
        match p.value {
            PredictionValue::Ranking(r) => {
                let mut sorted = r.clone();
                sorted.sort();
                let mut want = inst.tickers().to_vec();
                want.sort();
                assert_eq!(sorted, want);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_with_scripted_mock() {
        let run = || {
            let lm = ScriptedLm::strict(vec![(Matcher::Any, legal_call(0.42, 500))]);
            run_temporal_hint(&fixtures::legal(), &lm).unwrap()
        };
        assert_eq!(run(), run());
    }
}

use serde_json::{json, Value};

use super::task::{instantiation, Prediction, PredictionValue, TaskInstance, TaskKind};
use crate::backends::{LmResponse, ToolSpec};

pub const SEARCH_TOOL: &str = "search_information";
pub const SUBMIT_PREDICTION_TOOL: &str = "submit_prediction";
pub const SUBMIT_DRAFT_TOOL: &str = "submit_draft_prediction";
pub const SUBMIT_FINAL_TOOL: &str = "submit_final_prediction";

/// Which submission tool a step expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitSchema {
    Baseline,
    Draft,
    Final,
}

impl SubmitSchema {
    pub fn tool_name(self) -> &'static str {
        match self {
            SubmitSchema::Baseline => SUBMIT_PREDICTION_TOOL,
            SubmitSchema::Draft => SUBMIT_DRAFT_TOOL,
            SubmitSchema::Final => SUBMIT_FINAL_TOOL,
        }
    }

    fn fields(self, kind: TaskKind) -> (&'static str, &'static str) {
        match (self, kind) {
            (SubmitSchema::Baseline, TaskKind::Legal) => ("probability_petitioner", "prediction_rationale"),
            (SubmitSchema::Baseline, TaskKind::Salary) => ("predicted_salary", "prediction_rationale"),
            (SubmitSchema::Baseline, TaskKind::Stock) => ("ranking", "ranking_rationale"),
            _ => ("prediction", "rationale"),
        }
    }
}

pub fn search_tool() -> ToolSpec {
    ToolSpec {
        name: SEARCH_TOOL.into(),
        description: "Search web for factual evidence about performance, fundamentals, trends.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "query": {"type": "string"},
                "purpose": {"type": "string"}
            },
            "required": ["query", "purpose"]
        }),
    }
}

pub fn submit_tool(kind: TaskKind, schema: SubmitSchema) -> ToolSpec {
    let (value_field, rationale_field) = schema.fields(kind);
    let min = instantiation(kind).min_chars;
    let value_schema = match (kind, schema) {
        (TaskKind::Legal, _) => json!({"type": "number", "minimum": 0.0, "maximum": 1.0}),
        (TaskKind::Salary, _) => json!({"type": "integer", "minimum": 0}),
        (TaskKind::Stock, SubmitSchema::Baseline) => {
            json!({"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 10})
        }
        (TaskKind::Stock, _) => json!({"type": "array", "items": {"type": "string"}}),
    };
    let description = match schema {
        SubmitSchema::Baseline => "Submit the prediction and its rationale.",
        SubmitSchema::Draft => "Submit a draft prediction with a rationale citing search results.",
        SubmitSchema::Final => "Submit the final prediction synthesized from validated claims.",
    };
    ToolSpec {
        name: schema.tool_name().into(),
        description: description.into(),
        parameters: json!({
            "type": "object",
            "properties": {
                value_field: value_schema,
                rationale_field: {"type": "string", "minLength": min}
            },
            "required": [value_field, rationale_field]
        }),
    }
}

/// Why a submission was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmitProblem {
    pub message: String,
    pub short_rationale: bool,
}

impl SubmitProblem {
    fn new(message: impl Into<String>) -> Self {
        SubmitProblem { message: message.into(), short_rationale: false }
    }
}

impl std::fmt::Display for SubmitProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn submission_args(resp: &LmResponse, schema: SubmitSchema) -> Result<Value, SubmitProblem> {
    match resp {
        LmResponse::ToolCall(call) if call.name == schema.tool_name() => Ok(call.arguments.clone()),
        LmResponse::ToolCall(call) => Err(SubmitProblem::new(format!(
            "expected a {} call, got {}",
            schema.tool_name(),
            call.name
        ))),
        other => other
            .json()
            .filter(Value::is_object)
            .ok_or_else(|| SubmitProblem::new(format!("call {} with the required arguments", schema.tool_name()))),
    }
}

/// Validates a submission against the task schema, including rationale length.
pub fn parse_submission(
    resp: &LmResponse,
    instance: &TaskInstance,
    schema: SubmitSchema,
) -> Result<Prediction, SubmitProblem> {
    let args = submission_args(resp, schema)?;
    validate_arguments(&args, instance, schema)
}

pub(crate) fn validate_arguments(
    args: &Value,
    instance: &TaskInstance,
    schema: SubmitSchema,
) -> Result<Prediction, SubmitProblem> {
    let kind = instance.kind();
    let (value_field, rationale_field) = schema.fields(kind);
    let raw = args
        .get(value_field)
        .ok_or_else(|| SubmitProblem::new(format!("missing field {value_field}")))?;
    let value = match kind {
        TaskKind::Legal => {
            let p = raw.as_f64().ok_or_else(|| SubmitProblem::new(format!("{value_field} must be a number")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(SubmitProblem::new(format!("{value_field} must lie in [0, 1], got {p}")));
            }
            PredictionValue::Probability(p)
        }
        TaskKind::Salary => {
            let s = raw.as_f64().ok_or_else(|| SubmitProblem::new(format!("{value_field} must be a number")))?;
            if !s.is_finite() || s < 0.0 {
                return Err(SubmitProblem::new(format!("{value_field} must be nonnegative, got {s}")));
            }
            PredictionValue::Salary(s)
        }
        TaskKind::Stock => PredictionValue::Ranking(validate_ranking(raw, instance.tickers(), value_field)?),
    };
    let rationale = args
        .get(rationale_field)
        .and_then(Value::as_str)
        .ok_or_else(|| SubmitProblem::new(format!("missing string field {rationale_field}")))?
        .trim()
        .to_string();
    let min = instantiation(kind).min_chars;
    let len = rationale.chars().count();
    if len < min {
        return Err(SubmitProblem {
            message: format!("{rationale_field} must be at least {min} characters, got {len}"),
            short_rationale: true,
        });
    }
    Ok(Prediction { value, rationale })
}

fn validate_ranking(raw: &Value, tickers: &[String], field: &str) -> Result<Vec<String>, SubmitProblem> {
    let items = raw
        .as_array()
        .ok_or_else(|| SubmitProblem::new(format!("{field} must be an array of tickers")))?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let s = item
            .as_str()
            .ok_or_else(|| SubmitProblem::new(format!("{field} entries must be strings")))?
            .trim();
        let ticker = tickers
            .iter()
            .find(|t| t.eq_ignore_ascii_case(s))
            .ok_or_else(|| SubmitProblem::new(format!("{s:?} is not one of the input tickers {tickers:?}")))?;
        if out.contains(ticker) {
            return Err(SubmitProblem::new(format!("{ticker} appears more than once")));
        }
        out.push(ticker.clone());
    }
    if out.len() != tickers.len() {
        return Err(SubmitProblem::new(format!(
            "{field} must rank all {} tickers, got {}",
            tickers.len(),
            out.len()
        )));
    }
    Ok(out)
}

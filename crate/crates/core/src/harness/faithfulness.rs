use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{instantiation, Prediction, PredictionValue, TaskInstance, TaskKind};
use crate::backends::{lm_call, LanguageModel, LmRequest, LmResponse};
use crate::error::{Error, Result};
use crate::metrics::{kendall_relative, mre, ranks_of};
use crate::prompt::{self, render};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessItem {
    pub instance_id: String,
    pub task: TaskKind,
    pub original: PredictionValue,
    pub cleaned_rationale: String,
    pub reprediction: PredictionValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    pub items: Vec<FaithfulnessItem>,
    /// Per task: MRE for legal and salary, mean relative Kendall distance for stock.
    pub per_task: BTreeMap<String, f64>,
}

fn value_renderings(value: &PredictionValue) -> Vec<String> {
    match value {
        PredictionValue::Probability(p) => {
            let pct = p * 100.0;
            let mut v = vec![format!("{p}"), format!("{p:.2}"), format!("{pct:.0}%"), format!("{pct:.0} percent")];
            if pct.fract() != 0.0 {
                v.push(format!("{pct:.1}%"));
            }
            v
        }
        PredictionValue::Salary(s) => {
            let whole = s.round() as u64;
            let digits = whole.to_string();
            let mut grouped = String::new();
            for (i, c) in digits.chars().enumerate() {
                if i > 0 && (digits.len() - i) % 3 == 0 {
                    grouped.push(',');
                }
                grouped.push(c);
            }
            let m = s / 1e6;
            vec![
                digits,
                grouped,
                format!("${m:.1}M"),
                format!("${m:.2}M"),
                format!("{m:.1} million"),
                format!("{m:.2} million"),
            ]
        }
        PredictionValue::Ranking(_) => Vec::new(),
    }
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        let end_mark = matches!(bytes[i], b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace());
        if end_mark || bytes[i] == b'\n' {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// True when every ticker of `ranking` occurs in `sentence` in ranked order.
fn states_ranking(sentence: &str, ranking: &[String]) -> bool {
    let mut from = 0;
    for t in ranking {
        match sentence[from..].find(t.as_str()) {
            Some(pos) => from += pos + t.len(),
            None => return false,
        }
    }
    !ranking.is_empty()
}

/// Drops sentences that state the submitted value or the full ranking.
pub fn clean_rationale(rationale: &str, value: &PredictionValue) -> String {
    let renderings = value_renderings(value);
    sentences(rationale)
        .into_iter()
        .filter(|s| match value {
            PredictionValue::Ranking(r) => !states_ranking(s, r),
            _ => !renderings.iter().any(|r| s.contains(r.as_str())),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_faithfulness_prompt(instance: &TaskInstance, cleaned: &str) -> LmRequest {
    let inst = instantiation(instance.kind());
    let input_json = instance.input_json();
    let user = render(
        prompt::FAITHFULNESS_USER,
        &[("TASK_INSTRUCTION", inst.task_instruction), ("input_json", &input_json), ("cleaned_rationale", cleaned)],
    );
    LmRequest::new("faithfulness", prompt::FAITHFULNESS_SYSTEM, user).json_output()
}

fn parse_reprediction(resp: &LmResponse, instance: &TaskInstance) -> std::result::Result<PredictionValue, String> {
    let json = resp.json().ok_or("response is not JSON")?;
    let v = json.get("prediction").unwrap_or(&json);
    match instance.kind() {
        TaskKind::Legal => v
            .as_f64()
            .filter(|p| (0.0..=1.0).contains(p))
            .map(PredictionValue::Probability)
            .ok_or_else(|| "prediction must be a probability".into()),
        TaskKind::Salary => v
            .as_f64()
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(PredictionValue::Salary)
            .ok_or_else(|| "prediction must be a nonnegative number".into()),
        TaskKind::Stock => {
            let items: Vec<String> = v
                .as_array()
                .ok_or("prediction must be a ticker array")?
                .iter()
                .filter_map(Value::as_str)
                .map(|s| s.trim().to_uppercase())
                .collect();
            let tickers = instance.tickers();
            let ranking: Vec<String> = items
                .iter()
                .filter_map(|s| tickers.iter().find(|t| t.to_uppercase() == *s).cloned())
                .collect();
            let mut sorted = ranking.clone();
            sorted.sort();
            sorted.dedup();
            if ranking.len() != tickers.len() || sorted.len() != tickers.len() {
                return Err(format!("prediction must rank each of {tickers:?} once"));
            }
            Ok(PredictionValue::Ranking(ranking))
        }
    }
}

/// Re-predicts each instance from its cleaned rationale and compares with the original.
pub fn faithfulness_check(
    cases: &[(TaskInstance, Prediction)],
    llm: &dyn LanguageModel,
) -> Result<FaithfulnessResult> {
    let mut items = Vec::with_capacity(cases.len());
    for (instance, prediction) in cases {
        if prediction.rationale.trim().is_empty() {
            return Err(Error::EmptyRationale);
        }
        let cleaned = clean_rationale(&prediction.rationale, &prediction.value);
        let reprediction = lm_call(llm, render_faithfulness_prompt(instance, &cleaned), 1, |r| {
            parse_reprediction(r, instance)
        })?;
        items.push(FaithfulnessItem {
            instance_id: instance.instance_id.clone(),
            task: instance.kind(),
            original: prediction.value.clone(),
            cleaned_rationale: cleaned,
            reprediction,
        });
    }
    let per_task = aggregate(&items)?;
    Ok(FaithfulnessResult { items, per_task })
}

pub fn aggregate(items: &[FaithfulnessItem]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for kind in [TaskKind::Legal, TaskKind::Salary, TaskKind::Stock] {
        let group: Vec<&FaithfulnessItem> = items.iter().filter(|i| i.task == kind).collect();
        if group.is_empty() {
            continue;
        }
        let value = match kind {
            TaskKind::Stock => {
                let mut total = 0.0;
                for it in &group {
                    let (PredictionValue::Ranking(orig), PredictionValue::Ranking(re)) = (&it.original, &it.reprediction)
                    else {
                        return Err(Error::SchemaViolation("stock predictions must be rankings".into()));
                    };
                    let o = ranks_of(orig, orig)?;
                    let r = ranks_of(orig, re)?;
                    total += kendall_relative(&r, &o)?;
                }
                total / group.len() as f64
            }
            _ => {
                let scalar = |v: &PredictionValue| match v {
                    PredictionValue::Probability(x) | PredictionValue::Salary(x) => Ok(*x),
                    PredictionValue::Ranking(_) => Err(Error::SchemaViolation("expected a scalar prediction".into())),
                };
                let originals = group.iter().map(|i| scalar(&i.original)).collect::<Result<Vec<_>>>()?;
                let repreds = group.iter().map(|i| scalar(&i.reprediction)).collect::<Result<Vec<_>>>()?;
                mre(&originals, &repreds)?
            }
        };
        out.insert(kind.as_str().to_string(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cleaning_removes_probability_statement() {
        let r = "Auer has been criticised since 2016. I estimate the petitioner wins with probability 0.72. Precedent matters.";
        let c = clean_rationale(r, &PredictionValue::Probability(0.72));
        assert_eq!(c, "Auer has been criticised since 2016. Precedent matters.");
        let c = clean_rationale("Odds: 72% for Kisor. Other.", &PredictionValue::Probability(0.72));
        assert_eq!(c, "Other.");
    }

    #[test]
    fn cleaning_removes_salary_statement() {
        let r = "He averaged 11.3 PPG. Projected salary: $19,500,000 per year. Guards are valued.";
        assert_eq!(
            clean_rationale(r, &PredictionValue::Salary(19_500_000.0)),
            "He averaged 11.3 PPG. Guards are valued."
        );
        assert_eq!(clean_rationale("Expect $19.5M annually. Ok.", &PredictionValue::Salary(19_500_000.0)), "Ok.");
    }

    #[test]
    fn cleaning_removes_ranking_statement() {
        let ranking = tick(&["DXCM", "ABT", "MDT"]);
        let r = "DXCM grew revenue 40% in Q3 2019. Final ranking: DXCM > ABT > MDT. ABT is diversified.";
        assert_eq!(
            clean_rationale(r, &PredictionValue::Ranking(ranking)),
            "DXCM grew revenue 40% in Q3 2019. ABT is diversified."
        );
    }

    fn item(task: TaskKind, o: PredictionValue, r: PredictionValue) -> FaithfulnessItem {
        FaithfulnessItem { instance_id: "i".into(), task, original: o, cleaned_rationale: String::new(), reprediction: r }
    }

    #[test]
    fn identical_repredictions_give_zero() {
        let agg = aggregate(&[item(TaskKind::Legal, PredictionValue::Probability(0.6), PredictionValue::Probability(0.6))]).unwrap();
        assert_eq!(agg["legal"], 0.0);
    }

    #[test]
    fn one_percent_salary_miss() {
        let agg = aggregate(&[item(TaskKind::Salary, PredictionValue::Salary(100.0), PredictionValue::Salary(101.0))]).unwrap();
        assert!((agg["salary"] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn one_adjacent_swap_in_five() {
        let o = tick(&["A", "B", "C", "D", "E"]);
        let r = tick(&["B", "A", "C", "D", "E"]);
        let agg = aggregate(&[item(TaskKind::Stock, PredictionValue::Ranking(o), PredictionValue::Ranking(r))]).unwrap();
        assert!((agg["stock"] - 0.1).abs() < 1e-12);
    }
}

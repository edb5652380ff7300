use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::claims::{TaskContext, TaskType};
use crate::error::{Error, Result};
use crate::metrics::{brier, rank_descending, ranks_of, relative_error, spearman};
use crate::shapley::{CoalitionPrediction, TaskDefaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Legal,
    Salary,
    Stock,
}

impl TaskKind {
    pub fn task_type(self) -> TaskType {
        match self {
            TaskKind::Legal => TaskType::Classification,
            TaskKind::Salary => TaskType::Regression,
            TaskKind::Stock => TaskType::Ranking,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Legal => "legal",
            TaskKind::Salary => "salary",
            TaskKind::Stock => "stock",
        }
    }
}

/// Per-task prompt slot values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instantiation {
    pub domain_role: &'static str,
    pub task_instruction: &'static str,
    pub domain_metrics: &'static str,
    pub comparable_data: &'static str,
    pub domain_data: &'static str,
    pub min_chars: usize,
}

pub fn instantiation(kind: TaskKind) -> Instantiation {
    match kind {
        TaskKind::Legal => Instantiation {
            domain_role: "Expert Supreme Court analyst",
            task_instruction: "Predict P(PETITIONER wins) as probability 0.0-1.0",
            domain_metrics: "precedent cases with years/holdings",
            comparable_data: "lower-court rulings and comparable decisions",
            domain_data: "precedents, lower-court history and oral argument coverage",
            min_chars: 400,
        },
        TaskKind::Salary => Instantiation {
            domain_role: "Expert NBA salary analyst",
            task_instruction: "Predict player's salary in USD",
            domain_metrics: "player stats (PPG, RPG, APG), comparable contracts",
            comparable_data: "contracts signed by comparable players",
            domain_data: "player statistics, comparable contracts and salary cap figures",
            min_chars: 400,
        },
        TaskKind::Stock => Instantiation {
            domain_role: "Expert stock analyst",
            task_instruction: "Rank stocks from BEST to WORST",
            domain_metrics: "quarterly financials, market position",
            comparable_data: "peer company results and analyst estimates",
            domain_data: "quarterly financials, guidance and sector trends",
            min_chars: 1000,
        },
    }
}

/// Task input shown to agents. Never carries outcome data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskInput {
    Legal {
        case_name: String,
        parties: String,
        background: String,
    },
    Salary {
        player: String,
        prev_team: String,
        position: String,
    },
    Stock {
        sector: String,
        tickers: Vec<String>,
        window_start: NaiveDate,
        window_end: NaiveDate,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Petitioner,
    Respondent,
}

/// Realised outcome; only scoring code reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Legal { outcome: Outcome },
    Salary { actual_aav_usd: f64 },
    Stock { actual_returns: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub instance_id: String,
    pub input: TaskInput,
    pub cutoff_date: NaiveDate,
    pub ground_truth: GroundTruth,
    /// Position median AAV, the regression baseline.
    pub baseline: Option<f64>,
}

impl TaskInstance {
    pub fn kind(&self) -> TaskKind {
        match self.input {
            TaskInput::Legal { .. } => TaskKind::Legal,
            TaskInput::Salary { .. } => TaskKind::Salary,
            TaskInput::Stock { .. } => TaskKind::Stock,
        }
    }

    pub fn task_type(&self) -> TaskType {
        self.kind().task_type()
    }

    pub fn tickers(&self) -> &[String] {
        match &self.input {
            TaskInput::Stock { tickers, .. } => tickers,
            _ => &[],
        }
    }

    /// The task input as the JSON object agents see.
    pub fn input_json(&self) -> String {
        let v = match &self.input {
            TaskInput::Legal { case_name, parties, background } => {
                json!({"case_name": case_name, "parties": parties, "background": background})
            }
            TaskInput::Salary { player, prev_team, position } => {
                json!({"player": player, "previous_team": prev_team, "position": position})
            }
            TaskInput::Stock { sector, tickers, window_start, window_end } => json!({
                "sector": sector,
                "tickers": tickers,
                "evaluation_window": {"start": window_start, "end": window_end},
            }),
        };
        serde_json::to_string_pretty(&v).expect("serializable")
    }

    pub fn event_description(&self) -> String {
        match &self.input {
            TaskInput::Legal { case_name, .. } => format!("Supreme Court decision in {case_name}"),
            TaskInput::Salary { player, prev_team, .. } => {
                format!("{player}'s next contract after playing for {prev_team}")
            }
            TaskInput::Stock { sector, tickers, window_start, window_end } => format!(
                "Relative returns of {} ({sector}) from {window_start} to {window_end}",
                tickers.join(", ")
            ),
        }
    }

    pub fn context(&self) -> TaskContext {
        TaskContext {
            task_description: instantiation(self.kind()).task_instruction.to_string(),
            event_description: self.event_description(),
            reference_date: self.cutoff_date,
            task_type: self.task_type(),
        }
    }

    pub fn defaults(&self) -> TaskDefaults {
        TaskDefaults {
            position_median: self.baseline,
            input_order: self.tickers().to_vec(),
        }
    }

    /// The prediction a coalition without claims falls back to.
    pub fn default_prediction(&self) -> Result<PredictionValue> {
        Ok(match self.kind() {
            TaskKind::Legal => PredictionValue::Probability(0.5),
            TaskKind::Salary => PredictionValue::Salary(self.baseline.ok_or(Error::MissingBaseline)?),
            TaskKind::Stock => PredictionValue::Ranking(self.tickers().to_vec()),
        })
    }

    /// Raw task score: Brier (legal), relative error (salary), Spearman (stock).
    pub fn score(&self, value: &PredictionValue) -> Result<f64> {
        match (&self.ground_truth, value) {
            (GroundTruth::Legal { outcome }, PredictionValue::Probability(p)) => {
                brier(*p, *outcome == Outcome::Petitioner)
            }
            (GroundTruth::Salary { actual_aav_usd }, PredictionValue::Salary(s)) => relative_error(*s, *actual_aav_usd),
            (GroundTruth::Stock { actual_returns }, PredictionValue::Ranking(r)) => {
                let pred = ranks_of(self.tickers(), r)?;
                spearman(&pred, &rank_descending(actual_returns))
            }
            _ => Err(Error::SchemaViolation(format!(
                "prediction does not match the {} task",
                self.kind().as_str()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionValue {
    Probability(f64),
    Salary(f64),
    Ranking(Vec<String>),
}

impl PredictionValue {
    pub fn to_coalition(&self) -> CoalitionPrediction {
        match self {
            PredictionValue::Probability(p) => CoalitionPrediction::Probability(*p),
            PredictionValue::Salary(s) => CoalitionPrediction::Value(*s),
            PredictionValue::Ranking(r) => CoalitionPrediction::Ranking(r.clone()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            PredictionValue::Probability(p) => json!(p),
            PredictionValue::Salary(s) => json!(s),
            PredictionValue::Ranking(r) => json!(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: PredictionValue,
    pub rationale: String,
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn legal() -> TaskInstance {
        TaskInstance {
            instance_id: "legal-1".into(),
            input: TaskInput::Legal {
                case_name: "Kisor v. Wilkie".into(),
                parties: "James Kisor (petitioner) v. Robert Wilkie, Secretary of Veterans Affairs".into(),
                background: "Whether Auer deference to agency interpretations of their own regulations should be overruled.".into(),
            },
            cutoff_date: "2019-03-26".parse().unwrap(),
            ground_truth: GroundTruth::Legal { outcome: Outcome::Petitioner },
            baseline: None,
        }
    }

    pub fn salary() -> TaskInstance {
        TaskInstance {
            instance_id: "salary-1".into(),
            input: TaskInput::Salary {
                player: "Terry Rozier".into(),
                prev_team: "Boston Celtics".into(),
                position: "PG".into(),
            },
            cutoff_date: "2019-06-15".parse().unwrap(),
            ground_truth: GroundTruth::Salary { actual_aav_usd: 19_333_333.0 },
            baseline: Some(9_250_000.0),
        }
    }

    pub fn stock() -> TaskInstance {
        TaskInstance {
            instance_id: "stock-1".into(),
            input: TaskInput::Stock {
                sector: "Health Care".into(),
                tickers: ["DXCM", "ABT", "MDT", "BSX", "SYK"].map(String::from).to_vec(),
                window_start: "2019-12-02".parse().unwrap(),
                window_end: "2020-03-31".parse().unwrap(),
            },
            cutoff_date: "2019-12-01".parse().unwrap(),
            ground_truth: GroundTruth::Stock { actual_returns: vec![0.4137, -0.0841, -0.1552, -0.2291, -0.1468] },
            baseline: None,
        }
    }
}

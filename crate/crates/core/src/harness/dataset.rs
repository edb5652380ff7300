use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::agents::{GroundTruth, Outcome, TaskInput, TaskInstance};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Legal {
        instance_id: String,
        case_name: String,
        parties: String,
        background: String,
        cutoff_date: NaiveDate,
        outcome: Outcome,
    },
    Salary {
        instance_id: String,
        player: String,
        prev_team: String,
        position: String,
        cutoff_date: NaiveDate,
        actual_aav_usd: f64,
        #[serde(default)]
        position_median_aav_usd: Option<f64>,
    },
    Stock {
        instance_id: String,
        sector: String,
        tickers: Vec<String>,
        window_start: NaiveDate,
        window_end: NaiveDate,
        cutoff_date: NaiveDate,
        actual_returns: Vec<f64>,
    },
}

fn into_instance(record: Record) -> std::result::Result<TaskInstance, String> {
    let inst = match record {
        Record::Legal { instance_id, case_name, parties, background, cutoff_date, outcome } => TaskInstance {
            instance_id,
            input: TaskInput::Legal { case_name, parties, background },
            cutoff_date,
            ground_truth: GroundTruth::Legal { outcome },
            baseline: None,
        },
        Record::Salary {
            instance_id,
            player,
            prev_team,
            position,
            cutoff_date,
            actual_aav_usd,
            position_median_aav_usd,
        } => {
            if !(actual_aav_usd > 0.0) {
                return Err(format!("actual_aav_usd must be positive, got {actual_aav_usd}"));
            }
            if position_median_aav_usd.is_some_and(|m| !(m > 0.0)) {
                return Err("position_median_aav_usd must be positive".into());
            }
            TaskInstance {
                instance_id,
                input: TaskInput::Salary { player, prev_team, position },
                cutoff_date,
                ground_truth: GroundTruth::Salary { actual_aav_usd },
                baseline: position_median_aav_usd,
            }
        }
        Record::Stock { instance_id, sector, tickers, window_start, window_end, cutoff_date, actual_returns } => {
            if !(2..=10).contains(&tickers.len()) {
                return Err(format!("expected 2-10 tickers, got {}", tickers.len()));
            }
            if tickers.len() != actual_returns.len() {
                return Err(format!(
                    "{} tickers but {} actual_returns",
                    tickers.len(),
                    actual_returns.len()
                ));
            }
            let distinct: HashSet<String> = tickers.iter().map(|t| t.to_uppercase()).collect();
            if distinct.len() != tickers.len() {
                return Err("tickers must be distinct".into());
            }
            if actual_returns.iter().any(|r| !r.is_finite()) {
                return Err("actual_returns must be finite".into());
            }
            if window_end < window_start {
                return Err("window_end precedes window_start".into());
            }
            TaskInstance {
                instance_id,
                input: TaskInput::Stock { sector, tickers, window_start, window_end },
                cutoff_date,
                ground_truth: GroundTruth::Stock { actual_returns },
                baseline: None,
            }
        }
    };
    if inst.instance_id.trim().is_empty() {
        return Err("instance_id must not be empty".into());
    }
    Ok(inst)
}

/// Parses JSON-lines task records; `path` is only used in error messages.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Schema { path: path.to_path_buf(), line: i + 1, message };
        let record: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let inst = into_instance(record).map_err(err)?;
        if !seen.insert(inst.instance_id.clone()) {
            return Err(err(format!("duplicate instance_id {:?}", inst.instance_id)));
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, path)
}

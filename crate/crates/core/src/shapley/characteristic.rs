use serde::{Deserialize, Serialize};

use super::{CharacteristicFunction, Coalition, CoalitionValue};
use crate::claims::TaskType;
use crate::error::{Error, Result};
use crate::metrics::spearman;

/// A task prediction made from a claim subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalitionPrediction {
    /// Probability that the positive class (petitioner) prevails.
    Probability(f64),
    Value(f64),
    Ranking(Vec<String>),
}

/// Produces task predictions for non-empty coalitions.
pub trait PredictionBackend: Send + Sync {
    fn predict(&self, coalitions: &[Coalition]) -> Result<Vec<CoalitionPrediction>>;

    fn is_offline(&self) -> bool {
        false
    }
}

/// Baselines used when a coalition carries no information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskDefaults {
    pub position_median: Option<f64>,
    /// Items in input order; the default ranking for an empty coalition.
    pub input_order: Vec<String>,
}

enum Mapping {
    /// v = P(y*), where y* is the class the full prediction favours.
    Classification { positive: bool },
    Regression,
    /// v = 1 - rho(r(S), r_N)
    Ranking { full: Vec<String> },
}

struct Mapped {
    backend: Box<dyn PredictionBackend>,
    mapping: Mapping,
}

impl Mapping {
    fn apply(&self, p: &CoalitionPrediction) -> Result<f64> {
        match (self, p) {
            (Mapping::Classification { positive }, CoalitionPrediction::Probability(q)) => {
                if !(0.0..=1.0).contains(q) {
                    return Err(Error::Evaluator(format!("probability {q} outside [0, 1]")));
                }
                Ok(if *positive { *q } else { 1.0 - q })
            }
            (Mapping::Regression, CoalitionPrediction::Value(v)) => Ok(*v),
            (Mapping::Ranking { full }, CoalitionPrediction::Ranking(r)) => ranking_deviation(r, full),
            (_, other) => Err(Error::Evaluator(format!("prediction {other:?} does not match the task type"))),
        }
    }
}

impl CoalitionValue for Mapped {
    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let preds = self.backend.predict(coalitions)?;
        if preds.len() != coalitions.len() {
            return Err(Error::Evaluator(format!(
                "backend returned {} predictions for {} coalitions",
                preds.len(),
                coalitions.len()
            )));
        }
        preds.iter().map(|p| self.mapping.apply(p)).collect()
    }

    fn is_offline(&self) -> bool {
        self.backend.is_offline()
    }
}

/// 1 - Spearman rho between `ranking` and `reference`, both orderings of the same items.
pub(crate) fn ranking_deviation(ranking: &[String], reference: &[String]) -> Result<f64> {
    let position = |list: &[String], item: &String| list.iter().position(|x| x == item);
    let mut mine = Vec::with_capacity(reference.len());
    let mut theirs = Vec::with_capacity(reference.len());
    if ranking.len() != reference.len() {
        return Err(Error::Evaluator(format!(
            "ranking has {} items, expected {}",
            ranking.len(),
            reference.len()
        )));
    }
    for (i, item) in reference.iter().enumerate() {
        let j = position(ranking, item)
            .ok_or_else(|| Error::Evaluator(format!("ranking is missing {item}")))?;
        theirs.push(i + 1);
        mine.push(j + 1);
    }
    Ok(1.0 - spearman(&mine, &theirs)?)
}

/// Wraps a prediction backend into the task-specific v(S).
///
/// Classification uses P(y*) with y* fixed to the class favoured by
/// `full_prediction`, and v(∅) = 0.5. Regression uses the predicted value with
/// v(∅) = position median. Ranking uses 1 - rho against the full ranking with
/// v(∅) taken from the input order.
pub fn make_characteristic(
    task_type: TaskType,
    full_prediction: &CoalitionPrediction,
    defaults: &TaskDefaults,
    backend: Box<dyn PredictionBackend>,
) -> Result<CharacteristicFunction> {
    let (mapping, empty) = match (task_type, full_prediction) {
        (TaskType::Classification, CoalitionPrediction::Probability(p)) => {
            (Mapping::Classification { positive: *p >= 0.5 }, 0.5)
        }
        (TaskType::Regression, CoalitionPrediction::Value(_)) => {
            let median = defaults.position_median.ok_or(Error::MissingBaseline)?;
            (Mapping::Regression, median)
        }
        (TaskType::Ranking, CoalitionPrediction::Ranking(full)) => {
            let empty = ranking_deviation(&defaults.input_order, full)?;
            (Mapping::Ranking { full: full.clone() }, empty)
        }
        (t, p) => {
            return Err(Error::Evaluator(format!("full prediction {p:?} does not fit a {t} task")));
        }
    };
    Ok(CharacteristicFunction::new(
        task_type,
        empty,
        Box::new(Mapped { backend, mapping }),
    ))
}

//! Per-claim Shapley attribution over claim coalitions.
//!
//! Games with at most `exact_threshold` players and an offline evaluator are
//! solved by full subset enumeration; everything else uses seeded permutation
//! sampling. Either way every distinct coalition is evaluated once, in
//! batches, through [`CharacteristicFunction`]'s cache.

mod batched;
mod characteristic;
mod exact;
mod monte_carlo;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::claims::{ClaimId, TaskType};
use crate::error::{Error, Result};

pub use batched::{batched_coalition_eval, render_batch_prompt, LlmCoalitionBackend};
pub use characteristic::{make_characteristic, CoalitionPrediction, PredictionBackend, TaskDefaults};
pub use exact::exact_shapley;
pub use monte_carlo::mc_shapley;

/// Largest player count the bitmask-based engines support.
pub const MAX_PLAYERS: usize = 128;

/// A subset of claims in canonical (sorted, deduplicated) form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(Vec<ClaimId>);

impl Coalition {
    pub fn new(ids: impl IntoIterator<Item = ClaimId>) -> Self {
        let mut v: Vec<ClaimId> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Coalition(v)
    }

    pub fn empty() -> Self {
        Coalition(Vec::new())
    }

    pub fn members(&self) -> &[ClaimId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: ClaimId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub(crate) fn from_mask(mask: u128, players: &[ClaimId]) -> Self {
        // `players` is sorted, so walking bits in order keeps canonical form.
        Coalition(
            players
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &id)| id)
                .collect(),
        )
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub max_samples: usize,
    pub random_seed: u64,
    pub batch_size: usize,
    pub max_concurrency: usize,
    pub exact_threshold: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_samples: 100,
            random_seed: 42,
            batch_size: 256,
            max_concurrency: 10,
            exact_threshold: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_samples == 0
            || self.batch_size == 0
            || self.max_concurrency == 0
            || self.exact_threshold == 0
        {
            return Err(Error::Config("sampler settings must all be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub claim_id: ClaimId,
    pub phi: f64,
    pub std_error: f64,
    pub num_samples: usize,
    pub method: Method,
}

/// Supplies v(S) for non-empty coalitions.
pub trait CoalitionValue: Send + Sync {
    /// Values for each coalition, in order. Never receives the empty coalition.
    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>>;

    /// Offline evaluators are cheap enough for exact enumeration.
    fn is_offline(&self) -> bool {
        false
    }
}

/// A closure-backed offline game.
pub struct FnValue<F>(pub F);

impl<F> CoalitionValue for FnValue<F>
where
    F: Fn(&Coalition) -> f64 + Send + Sync,
{
    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        Ok(coalitions.iter().map(|c| (self.0)(c)).collect())
    }

    fn is_offline(&self) -> bool {
        true
    }
}

/// Task-specific v(S) with a fixed v(∅) and a coalition cache.
pub struct CharacteristicFunction {
    task_type: TaskType,
    evaluator: Box<dyn CoalitionValue>,
    empty_value: f64,
    cache: Mutex<HashMap<Coalition, f64>>,
    evaluations: AtomicUsize,
    batches: AtomicUsize,
}

impl fmt::Debug for CharacteristicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CharacteristicFunction")
            .field("task_type", &self.task_type)
            .field("empty_value", &self.empty_value)
            .field("cached", &self.cache.lock().len())
            .finish()
    }
}

impl CharacteristicFunction {
    pub fn new(task_type: TaskType, empty_value: f64, evaluator: Box<dyn CoalitionValue>) -> Self {
        CharacteristicFunction {
            task_type,
            evaluator,
            empty_value,
            cache: Mutex::new(HashMap::new()),
            evaluations: AtomicUsize::new(0),
            batches: AtomicUsize::new(0),
        }
    }

    /// Offline game from a closure; `f` is only consulted for non-empty coalitions.
    pub fn offline<F>(task_type: TaskType, empty_value: f64, f: F) -> Self
    where
        F: Fn(&Coalition) -> f64 + Send + Sync + 'static,
    {
        Self::new(task_type, empty_value, Box::new(FnValue(f)))
    }

    pub fn task_type(&self) -> TaskType {
        self.task_type
    }

    pub fn empty_value(&self) -> f64 {
        self.empty_value
    }

    pub fn is_offline(&self) -> bool {
        self.evaluator.is_offline()
    }

    /// Distinct non-empty coalitions sent to the evaluator so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::SeqCst)
    }

    /// Evaluator invocations (one per cache-miss batch).
    pub fn evaluator_batches(&self) -> usize {
        self.batches.load(Ordering::SeqCst)
    }

    /// v(S) for each coalition; misses are evaluated together in one call.
    pub fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let mut missing: Vec<Coalition> = {
            let cache = self.cache.lock();
            coalitions
                .iter()
                .filter(|c| !c.is_empty() && !cache.contains_key(*c))
                .cloned()
                .collect()
        };
        missing.sort_unstable();
        missing.dedup();
        if !missing.is_empty() {
            self.batches.fetch_add(1, Ordering::SeqCst);
            let values = self.evaluator.evaluate(&missing)?;
            if values.len() != missing.len() {
                return Err(Error::Evaluator(format!(
                    "evaluator returned {} values for {} coalitions",
                    values.len(),
                    missing.len()
                )));
            }
            if let Some((c, v)) = missing.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
                return Err(Error::Evaluator(format!("non-finite value {v} for coalition {c}")));
            }
            self.evaluations.fetch_add(missing.len(), Ordering::SeqCst);
            let mut cache = self.cache.lock();
            for (c, v) in missing.into_iter().zip(values) {
                cache.insert(c, v);
            }
        }
        let cache = self.cache.lock();
        Ok(coalitions
            .iter()
            .map(|c| if c.is_empty() { self.empty_value } else { cache[c] })
            .collect())
    }

    pub fn value(&self, coalition: &Coalition) -> Result<f64> {
        Ok(self.values(std::slice::from_ref(coalition))?[0])
    }

    pub fn cached(&self) -> BTreeMap<Coalition, f64> {
        self.cache.lock().iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

pub(crate) fn sorted_players(claims: &[ClaimId]) -> Result<Vec<ClaimId>> {
    let mut players = claims.to_vec();
    players.sort_unstable();
    players.dedup();
    if players.len() != claims.len() {
        return Err(Error::Evaluator("duplicate claim ids in player set".into()));
    }
    if players.len() > MAX_PLAYERS {
        return Err(Error::TooManyClaims {
            n: players.len(),
            threshold: MAX_PLAYERS,
        });
    }
    Ok(players)
}

/// Exact when the game is offline and small enough, Monte Carlo otherwise.
pub fn shapley_values(
    game: &CharacteristicFunction,
    claims: &[ClaimId],
    cfg: &SamplerConfig,
) -> Result<Vec<ShapleyEstimate>> {
    cfg.validate()?;
    if game.is_offline() && claims.len() <= cfg.exact_threshold {
        exact_shapley(game, claims, cfg.exact_threshold)
    } else {
        mc_shapley(game, claims, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalition_is_canonical() {
        let c = Coalition::new([3, 1, 3, 2]);
        assert_eq!(c.members(), &[1, 2, 3]);
        assert_eq!(c, Coalition::new([2, 3, 1]));
        assert_eq!(c.to_string(), "[1, 2, 3]");
        assert_eq!(serde_json::to_string(&c).unwrap(), "[1,2,3]");
    }

    #[test]
    fn defaults_match_reference_configuration() {
        let cfg = SamplerConfig::default();
        assert_eq!(
            (cfg.max_samples, cfg.random_seed, cfg.batch_size, cfg.max_concurrency, cfg.exact_threshold),
            (100, 42, 256, 10, 10)
        );
    }

    #[test]
    fn cache_evaluates_each_coalition_once() {
        let game = CharacteristicFunction::offline(TaskType::Regression, 1.0, |c| c.len() as f64);
        let a = Coalition::new([1]);
        let v = game.values(&[a.clone(), a.clone(), Coalition::empty()]).unwrap();
        assert_eq!(v, [1.0, 1.0, 1.0]);
        game.value(&a).unwrap();
        assert_eq!(game.evaluations(), 1);
        assert_eq!(game.evaluator_batches(), 1);
    }

    #[test]
    fn nan_is_an_evaluator_error() {
        let game = CharacteristicFunction::offline(TaskType::Regression, 0.0, |_| f64::NAN);
        assert!(matches!(game.value(&Coalition::new([1])), Err(Error::Evaluator(_))));
    }

    #[test]
    fn auto_selects_exact_for_small_offline_games() {
        let game = CharacteristicFunction::offline(TaskType::Regression, 0.0, |c| c.len() as f64);
        let est = shapley_values(&game, &[1, 2, 3], &SamplerConfig::default()).unwrap();
        assert!(est.iter().all(|e| e.method == Method::Exact));
        let ids: Vec<ClaimId> = (1..=11).collect();
        let est = shapley_values(&game, &ids, &SamplerConfig::default()).unwrap();
        assert!(est.iter().all(|e| e.method == Method::MonteCarlo && e.num_samples == 100));
    }
}

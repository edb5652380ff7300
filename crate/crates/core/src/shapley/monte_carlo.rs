use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sorted_players, CharacteristicFunction, Coalition, Method, SamplerConfig, ShapleyEstimate};
use crate::claims::ClaimId;
use crate::error::{Error, Result};

/// Permutation-sampling Shapley estimates.
///
/// Draws `cfg.max_samples` independent uniform permutations from one seeded
/// stream; each permutation contributes one marginal contribution per claim.
/// All distinct prefix coalitions are evaluated up front in a single batched
/// pass, so each is evaluated exactly once.
pub fn mc_shapley(
    game: &CharacteristicFunction,
    claims: &[ClaimId],
    cfg: &SamplerConfig,
) -> Result<Vec<ShapleyEstimate>> {
    let m = cfg.max_samples;
    if m == 0 {
        return Err(Error::Config("max_samples must be at least 1".into()));
    }
    let players = sorted_players(claims)?;
    let n = players.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut permutations = Vec::with_capacity(m);
    for _ in 0..m {
        order.shuffle(&mut rng);
        permutations.push(order.clone());
    }

    // Distinct prefixes in first-seen order keep evaluation deterministic.
    let mut index: HashMap<u128, usize> = HashMap::new();
    let mut masks: Vec<u128> = Vec::new();
    index.insert(0, 0);
    masks.push(0);
    for perm in &permutations {
        let mut mask = 0u128;
        for &p in perm {
            mask |= 1u128 << p;
            index.entry(mask).or_insert_with(|| {
                masks.push(mask);
                masks.len() - 1
            });
        }
    }
    let coalitions: Vec<Coalition> = masks.iter().map(|&mk| Coalition::from_mask(mk, &players)).collect();
    let values = game.values(&coalitions)?;

    let mut mean = vec![0.0f64; n];
    let mut m2 = vec![0.0f64; n];
    for (k, perm) in permutations.iter().enumerate() {
        let mut mask = 0u128;
        let mut prev = values[0];
        for &p in perm {
            mask |= 1u128 << p;
            let cur = values[index[&mask]];
            let delta = cur - prev;
            prev = cur;
            // Welford update
            let count = (k + 1) as f64;
            let d = delta - mean[p];
            mean[p] += d / count;
            m2[p] += d * (delta - mean[p]);
        }
    }

    Ok(players
        .iter()
        .enumerate()
        .map(|(i, &claim_id)| {
            let std_error = if m > 1 {
                (m2[i] / (m - 1) as f64 / m as f64).sqrt()
            } else {
                0.0
            };
            ShapleyEstimate {
                claim_id,
                phi: mean[i],
                std_error,
                num_samples: m,
                method: Method::MonteCarlo,
            }
        })
        .collect())
}

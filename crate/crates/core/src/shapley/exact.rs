use super::{sorted_players, CharacteristicFunction, Coalition, Method, ShapleyEstimate};
use crate::claims::ClaimId;
use crate::error::{Error, Result};

/// Exact Shapley values by enumerating all 2^n coalitions.
///
/// phi_i = sum over S not containing i of |S|!(n-|S|-1)!/n! * (v(S+i) - v(S)).
pub fn exact_shapley(
    game: &CharacteristicFunction,
    claims: &[ClaimId],
    exact_threshold: usize,
) -> Result<Vec<ShapleyEstimate>> {
    let n = claims.len();
    if n > exact_threshold || n >= 32 {
        return Err(Error::TooManyClaims {
            n,
            threshold: exact_threshold.min(31),
        });
    }
    let players = sorted_players(claims)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let full = 1u128 << n;
    let coalitions: Vec<Coalition> = (0..full).map(|m| Coalition::from_mask(m, &players)).collect();
    let values = game.values(&coalitions)?;

    // weight[s] = s!(n-s-1)!/n! = 1 / (n * C(n-1, s))
    let mut weight = vec![0.0f64; n];
    let mut binom = 1.0f64;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let estimates = players
        .iter()
        .enumerate()
        .map(|(i, &claim_id)| {
            let bit = 1usize << i;
            let phi = (0..full as usize)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (values[m | bit] - values[m]))
                .sum();
            ShapleyEstimate {
                claim_id,
                phi,
                std_error: 0.0,
                num_samples: 0,
                method: Method::Exact,
            }
        })
        .collect();
    Ok(estimates)
}

//! Games and claim sets shared by the attribution benchmarks.

use leakaudit::leakage::Basis;
use leakaudit::shapley::{CharacteristicFunction, Method};
use leakaudit::{ClaimId, Coalition, LeakageVerdict, ShapleyEstimate, TaskType};

/// Deterministic pseudo-random value in [0, 1) for a coalition mask.
fn hash01(mut x: u64) -> f64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Offline game with an unstructured value per coalition.
pub fn noisy_game() -> CharacteristicFunction {
    CharacteristicFunction::offline(TaskType::Classification, 0.5, |c: &Coalition| {
        let mask = c.members().iter().fold(0u64, |m, &id| m ^ (1u64 << (id % 64)).wrapping_mul(id as u64 + 1));
        hash01(mask)
    })
}

/// Offline game with diminishing returns in coalition size.
pub fn saturating_game() -> CharacteristicFunction {
    CharacteristicFunction::offline(TaskType::Regression, 0.0, |c: &Coalition| {
        let s: f64 = c.members().iter().map(|&id| 1.0 / id as f64).sum();
        s / (1.0 + s)
    })
}

pub fn players(n: usize) -> Vec<ClaimId> {
    (1..=n as ClaimId).collect()
}

/// Claim estimates and verdicts for metric benchmarks; every third claim leaked.
pub fn claim_set(n: usize) -> (Vec<ShapleyEstimate>, Vec<LeakageVerdict>) {
    let est = players(n)
        .into_iter()
        .map(|id| ShapleyEstimate {
            claim_id: id,
            phi: hash01(id as u64) - 0.5,
            std_error: 0.0,
            num_samples: 0,
            method: Method::Exact,
        })
        .collect();
    let ver = players(n)
        .into_iter()
        .map(|id| LeakageVerdict { claim_id: id, leaked: id % 3 == 0, basis: Basis::CategoryRule, determination: None })
        .collect();
    (est, ver)
}

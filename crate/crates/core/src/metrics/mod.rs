//! Leakage rates, task performance scores and dataset aggregation.

mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::claims::ClaimId;
use crate::error::{Error, Result};
use crate::leakage::LeakageVerdict;
use crate::shapley::ShapleyEstimate;

pub use report::{
    build_report, transform_performance, AgentRow, DatasetReport, InstanceAudit, TradeoffPoint, DEFAULT_TOP_K,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditFlag {
    /// No claims; rates reported as 0.
    EmptyRationale,
    /// Sum of |phi| below 1e-12; DCLR reported as OLR.
    DegenerateDenominator,
}

/// A rate with the degenerate-input flag that produced it, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub flag: Option<AuditFlag>,
}

impl Rate {
    fn plain(value: f64) -> Self {
        Rate { value, flag: None }
    }
}

const DEGENERATE: f64 = 1e-12;

/// Overall leakage rate: the fraction of leaked claims.
pub fn olr(verdicts: &[LeakageVerdict]) -> Rate {
    if verdicts.is_empty() {
        return Rate { value: 0.0, flag: Some(AuditFlag::EmptyRationale) };
    }
    let leaked = verdicts.iter().filter(|v| v.leaked).count();
    Rate::plain(leaked as f64 / verdicts.len() as f64)
}

fn paired<'a>(
    estimates: &'a [ShapleyEstimate],
    verdicts: &[LeakageVerdict],
) -> Result<Vec<(&'a ShapleyEstimate, bool)>> {
    if estimates.len() != verdicts.len() {
        return Err(Error::ClaimSetMismatch);
    }
    let leaked: HashMap<ClaimId, bool> = verdicts.iter().map(|v| (v.claim_id, v.leaked)).collect();
    if leaked.len() != verdicts.len() {
        return Err(Error::ClaimSetMismatch);
    }
    estimates
        .iter()
        .map(|e| leaked.get(&e.claim_id).map(|&l| (e, l)).ok_or(Error::ClaimSetMismatch))
        .collect()
}

/// Shapley-weighted decision-critical leakage rate: sum |phi| l / sum |phi|.
pub fn shapley_dclr(estimates: &[ShapleyEstimate], verdicts: &[LeakageVerdict]) -> Result<Rate> {
    let pairs = paired(estimates, verdicts)?;
    if pairs.is_empty() {
        return Ok(olr(verdicts));
    }
    let total: f64 = pairs.iter().map(|(e, _)| e.phi.abs()).sum();
    if total < DEGENERATE {
        return Ok(Rate { value: olr(verdicts).value, flag: Some(AuditFlag::DegenerateDenominator) });
    }
    let leaked: f64 = pairs.iter().filter(|(_, l)| *l).map(|(e, _)| e.phi.abs()).sum();
    Ok(Rate::plain((leaked / total).clamp(0.0, 1.0)))
}

/// Leakage rate among the K claims with largest |phi| (ties: lower claim id first).
pub fn topk_leakage(estimates: &[ShapleyEstimate], verdicts: &[LeakageVerdict], k: usize) -> Result<Rate> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut pairs = paired(estimates, verdicts)?;
    if pairs.is_empty() {
        return Ok(Rate { value: 0.0, flag: Some(AuditFlag::EmptyRationale) });
    }
    pairs.sort_by(|(a, _), (b, _)| {
        b.phi
            .abs()
            .total_cmp(&a.phi.abs())
            .then(a.claim_id.cmp(&b.claim_id))
    });
    let top = k.min(pairs.len());
    let leaked = pairs[..top].iter().filter(|(_, l)| *l).count();
    Ok(Rate::plain(leaked as f64 / top as f64))
}

pub fn brier(p_hat: f64, outcome: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::OutOfRangeProbability(p_hat));
    }
    let o = if outcome { 1.0 } else { 0.0 };
    Ok((p_hat - o).powi(2))
}

pub fn relative_error(y_hat: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::NonpositiveGroundTruth(y));
    }
    Ok((y_hat - y).abs() / y)
}

fn check_permutation(ranks: &[usize]) -> Result<()> {
    let n = ranks.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
            return Err(Error::InvalidPermutation(format!("{ranks:?} is not a permutation of 1..={n}")));
        }
    }
    Ok(())
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InvalidPermutation("rankings need at least two items".into()));
    }
    check_permutation(a)?;
    check_permutation(b)
}

/// Spearman's rho for untied rankings: 1 - 6 sum d^2 / (n (n^2 - 1)).
pub fn spearman(pred_rank: &[usize], true_rank: &[usize]) -> Result<f64> {
    check_pair(pred_rank, true_rank)?;
    let n = pred_rank.len() as f64;
    let d2: f64 = pred_rank
        .iter()
        .zip(true_rank)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Fraction of item pairs ordered differently by the two rankings.
pub fn kendall_relative(pred_rank: &[usize], orig_rank: &[usize]) -> Result<f64> {
    check_pair(pred_rank, orig_rank)?;
    let n = pred_rank.len();
    let mut discordant = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let a = pred_rank[i] < pred_rank[j];
            let b = orig_rank[i] < orig_rank[j];
            if a != b {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (n * (n - 1) / 2) as f64)
}

/// Mean relative error between original and re-predicted values.
pub fn mre(originals: &[f64], repredictions: &[f64]) -> Result<f64> {
    if originals.len() != repredictions.len() {
        return Err(Error::LengthMismatch { left: originals.len(), right: repredictions.len() });
    }
    if originals.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (&o, &r)) in originals.iter().zip(repredictions).enumerate() {
        if o == 0.0 {
            return Err(Error::ZeroOriginal(i));
        }
        total += (o - r).abs() / o.abs();
    }
    Ok(total / originals.len() as f64)
}

/// Ranks (1 = largest) for a list of values; equal values keep input order.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

/// Rank of each item of `items` within `ranking` (1-based).
pub fn ranks_of(items: &[String], ranking: &[String]) -> Result<Vec<usize>> {
    items
        .iter()
        .map(|it| {
            ranking
                .iter()
                .position(|r| r == it)
                .map(|p| p + 1)
                .ok_or_else(|| Error::InvalidPermutation(format!("{it} missing from ranking")))
        })
        .collect()
}

/// Per-K leakage rates for the default K values.
pub fn topk_map(
    estimates: &[ShapleyEstimate],
    verdicts: &[LeakageVerdict],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    ks.iter()
        .map(|&k| Ok((k, topk_leakage(estimates, verdicts, k)?.value)))
        .collect()
}

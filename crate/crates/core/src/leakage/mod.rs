//! Per-claim leakage indication.
//!
//! Outcome and consequential claims are leaked by definition, background and
//! definitional claims never are; everything else is dated through search and
//! compared against the reference date with a strict `>`.

mod verify;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backends::{LanguageModel, SearchClient};
use crate::claims::{ClaimCategory, ClaimId, ExtractedClaim, TaskContext};
use crate::error::Result;

pub use verify::{render_date_extraction_prompt, render_query_prompt, verify_determination_dates, VerifierConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    None,
    Low,
    Medium,
    High,
}

impl std::str::FromStr for Confidence {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Confidence::High),
            "medium" => Ok(Confidence::Medium),
            "low" => Ok(Confidence::Low),
            "none" | "" => Ok(Confidence::None),
            other => Err(format!("unknown confidence {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub url: String,
    pub title: String,
    pub publication_date: Option<NaiveDate>,
    pub snippet: String,
}

/// When a claim's information first became public.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterminationDate {
    /// Absent exactly when confidence is `none`.
    pub date: Option<NaiveDate>,
    pub confidence: Confidence,
    pub reasoning: String,
    pub source_query: String,
    pub evidence: Vec<Evidence>,
}

impl DeterminationDate {
    pub fn unknown(reasoning: impl Into<String>, source_query: impl Into<String>, evidence: Vec<Evidence>) -> Self {
        DeterminationDate {
            date: None,
            confidence: Confidence::None,
            reasoning: reasoning.into(),
            source_query: source_query.into(),
            evidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    CategoryRule,
    DateComparison,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageVerdict {
    pub claim_id: ClaimId,
    pub leaked: bool,
    pub basis: Basis,
    pub determination: Option<DeterminationDate>,
}

/// Category shortcut: `Some` for categories decided without search.
pub fn categorical_leakage(category: ClaimCategory) -> Option<bool> {
    if category.is_always_leaked() {
        Some(true)
    } else if category.is_never_leaked() {
        Some(false)
    } else {
        None
    }
}

/// `true` iff the information became public strictly after the reference date.
pub fn is_leaked(determination: NaiveDate, reference: NaiveDate) -> bool {
    determination > reference
}

/// Classifies every claim, searching only for those the category rule leaves open.
pub fn detect_leakage(
    claims: &[ExtractedClaim],
    ctx: &TaskContext,
    search: &SearchClient,
    llm: &dyn LanguageModel,
    cfg: &VerifierConfig,
) -> Result<Vec<LeakageVerdict>> {
    let pending: Vec<ExtractedClaim> = claims
        .iter()
        .filter(|c| categorical_leakage(c.category).is_none())
        .cloned()
        .collect();
    let mut dates = if pending.is_empty() {
        Default::default()
    } else {
        verify_determination_dates(&pending, search, llm, cfg)?
    };
    Ok(claims
        .iter()
        .map(|c| match categorical_leakage(c.category) {
            Some(leaked) => LeakageVerdict {
                claim_id: c.claim_id,
                leaked,
                basis: Basis::CategoryRule,
                determination: None,
            },
            None => {
                let det = dates
                    .remove(&c.claim_id)
                    .unwrap_or_else(|| DeterminationDate::unknown("not verified", "", Vec::new()));
                verdict_from_date(c, det, ctx.reference_date, cfg)
            }
        })
        .collect())
}

/// Applies the claim-internal fallback and the strict date comparison.
pub fn verdict_from_date(
    claim: &ExtractedClaim,
    mut det: DeterminationDate,
    reference: NaiveDate,
    cfg: &VerifierConfig,
) -> LeakageVerdict {
    if det.confidence < Confidence::Medium {
        if let Some(tr) = &claim.temporal_reference {
            det.reasoning = format!(
                "search confidence {:?}; fell back to claim reference {:?} resolved to period end. {}",
                det.confidence, tr.raw_text, det.reasoning
            );
            det.date = Some(tr.resolved_date);
            det.confidence = Confidence::Low;
        }
    }
    match det.date {
        Some(date) if det.confidence != Confidence::None => LeakageVerdict {
            claim_id: claim.claim_id,
            leaked: is_leaked(date, reference),
            basis: Basis::DateComparison,
            determination: Some(det),
        },
        _ => LeakageVerdict {
            claim_id: claim.claim_id,
            leaked: cfg.unverifiable_leaked,
            basis: Basis::Unverifiable,
            determination: Some(DeterminationDate { date: None, confidence: Confidence::None, ..det }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::backends::{CacheRole, FixtureCorpus, ScriptedLm};
    use crate::claims::TaskType;

    fn ctx(reference: &str) -> TaskContext {
        TaskContext {
            task_description: "Predict the contract".into(),
            event_description: "Terry Rozier free agency".into(),
            reference_date: reference.parse().unwrap(),
            task_type: TaskType::Regression,
        }
    }

    fn dated(date: &str) -> DeterminationDate {
        DeterminationDate {
            date: Some(date.parse().unwrap()),
            confidence: Confidence::High,
            reasoning: String::new(),
            source_query: String::new(),
            evidence: Vec::new(),
        }
    }

    #[test]
    fn category_shortcuts() {
        assert_eq!(categorical_leakage(ClaimCategory::A4), Some(true));
        assert_eq!(categorical_leakage(ClaimCategory::A5), Some(true));
        assert_eq!(categorical_leakage(ClaimCategory::B1), Some(false));
        assert_eq!(categorical_leakage(ClaimCategory::B2), Some(false));
        assert_eq!(categorical_leakage(ClaimCategory::A2), None);
    }

    #[test]
    fn after_cutoff_is_leaked_and_same_day_is_not() {
        let claim = ExtractedClaim::new(1, "Rozier signed", ClaimCategory::A1);
        let cutoff: NaiveDate = "2019-06-15".parse().unwrap();
        let cfg = VerifierConfig::default();
        let v = verdict_from_date(&claim, dated("2019-07-06"), cutoff, &cfg);
        assert!(v.leaked);
        assert_eq!(v.basis, Basis::DateComparison);
        let v = verdict_from_date(&claim, dated("2019-06-15"), cutoff, &cfg);
        assert!(!v.leaked);
    }

    #[test]
    fn unverifiable_defaults_to_leaked() {
        let claim = ExtractedClaim::new(1, "Something happened", ClaimCategory::A1);
        let v = verdict_from_date(
            &claim,
            DeterminationDate::unknown("no results", "q", Vec::new()),
            "2019-06-15".parse().unwrap(),
            &VerifierConfig::default(),
        );
        assert!(v.leaked);
        assert_eq!(v.basis, Basis::Unverifiable);
        assert!(v.determination.unwrap().date.is_none());
    }

    #[test]
    fn low_confidence_falls_back_to_claim_period_end() {
        let claim = ExtractedClaim::new(1, "Revenue grew in Q3 2019", ClaimCategory::A2).with_reference("Q3 2019");
        let mut det = dated("2019-01-01");
        det.confidence = Confidence::Low;
        let v = verdict_from_date(&claim, det, "2019-09-29".parse().unwrap(), &VerifierConfig::default());
        let det = v.determination.unwrap();
        assert_eq!(det.date, Some("2019-09-30".parse().unwrap()));
        assert!(v.leaked);
    }

    #[test]
    fn no_search_without_open_categories() {
        let corpus = Arc::new(FixtureCorpus::new(Vec::new()));
        let client = SearchClient::new(corpus.clone(), CacheRole::Verifier);
        let llm = ScriptedLm::strict(vec![]);
        let claims = vec![
            ExtractedClaim::new(1, "Rozier signed for $58M", ClaimCategory::A4),
            ExtractedClaim::new(2, "Guards handle the ball", ClaimCategory::B1),
            ExtractedClaim::new(3, "AAV is total over years", ClaimCategory::B2),
            ExtractedClaim::new(4, "He was then traded", ClaimCategory::A5),
        ];
        let v = detect_leakage(&claims, &ctx("2019-06-15"), &client, &llm, &VerifierConfig::default()).unwrap();
        assert_eq!(v.iter().map(|v| v.leaked).collect::<Vec<_>>(), [true, false, false, true]);
        assert!(v.iter().all(|v| v.basis == Basis::CategoryRule && v.determination.is_none()));
        assert_eq!(corpus.calls(), 0);
        assert_eq!(llm.calls(), 0);
    }
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ClaimId, ExtractedClaim};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub claim_id: ClaimId,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }

    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks claim-set invariants.
///
/// Duplicate or zero ids and empty claim text are errors; a search-requiring
/// claim without a temporal reference is only a warning.
pub fn validate_claim_set(claims: &[ExtractedClaim]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for c in claims {
        let mut err = |message: String| {
            report.errors.push(ValidationIssue {
                claim_id: c.claim_id,
                message,
            })
        };
        if c.claim_id == 0 {
            err("claim_id must be positive".into());
        }
        if !seen.insert(c.claim_id) {
            err(format!("duplicate claim_id {}", c.claim_id));
        }
        if c.claim_text.trim().is_empty() {
            err("claim_text is empty".into());
        }
        if c.category.needs_search() && c.temporal_reference.is_none() {
            report.warnings.push(ValidationIssue {
                claim_id: c.claim_id,
                message: format!("{} claim has no temporal reference", c.category),
            });
        }
    }
    report
}

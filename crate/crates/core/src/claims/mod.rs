//! Claim taxonomy, temporal references and rationale decomposition.

mod extract;
mod temporal;
mod validate;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use extract::{extract_claims, render_extraction_prompt, ExtractionConfig};
pub use temporal::{parse_temporal_reference, period_end, timeless_sentinel};
pub use validate::{validate_claim_set, ValidationIssue, ValidationReport};

/// Claim identifier, unique within one rationale and assigned 1..n in document order.
pub type ClaimId = u32;

/// Seven-way claim taxonomy.
///
/// Group A claims are temporally verifiable; group B claims carry no
/// temporal dependence. A4/A5 are leaked by definition, B1/B2 never are, and
/// only A1-A3 need an external determination date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimCategory {
    /// Discrete event.
    A1,
    /// State or measurement at a point in time.
    A2,
    /// Content of a dated publication.
    A3,
    /// Outcome of the target event.
    A4,
    /// Consequence following the target event.
    A5,
    /// Background knowledge.
    B1,
    /// Definitional or logical truth.
    B2,
}

impl ClaimCategory {
    pub const ALL: [ClaimCategory; 7] = [
        ClaimCategory::A1,
        ClaimCategory::A2,
        ClaimCategory::A3,
        ClaimCategory::A4,
        ClaimCategory::A5,
        ClaimCategory::B1,
        ClaimCategory::B2,
    ];

    pub fn is_always_leaked(self) -> bool {
        matches!(self, ClaimCategory::A4 | ClaimCategory::A5)
    }

    pub fn is_never_leaked(self) -> bool {
        matches!(self, ClaimCategory::B1 | ClaimCategory::B2)
    }

    pub fn needs_search(self) -> bool {
        matches!(self, ClaimCategory::A1 | ClaimCategory::A2 | ClaimCategory::A3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimCategory::A1 => "A1",
            ClaimCategory::A2 => "A2",
            ClaimCategory::A3 => "A3",
            ClaimCategory::A4 => "A4",
            ClaimCategory::A5 => "A5",
            ClaimCategory::B1 => "B1",
            ClaimCategory::B2 => "B2",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClaimCategory::A1 => "Discrete Event",
            ClaimCategory::A2 => "State/Measurement",
            ClaimCategory::A3 => "Publication",
            ClaimCategory::A4 => "Outcome",
            ClaimCategory::A5 => "Consequential",
            ClaimCategory::B1 => "Background",
            ClaimCategory::B2 => "Definitional",
        }
    }
}

impl fmt::Display for ClaimCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClaimCategory {
    type Err = Error;

    /// Accepts `A1`, `[A1]`, `a1` and labelled forms such as `A1 - Discrete Event`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches('[');
        let code: String = t.chars().take(2).collect::<String>().to_ascii_uppercase();
        let rest = &t[code.len().min(t.len())..];
        if rest.starts_with(|c: char| c.is_ascii_alphanumeric()) {
            return Err(Error::SchemaViolation(format!("unknown claim category {s:?}")));
        }
        ClaimCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == code)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown claim category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Month,
    Quarter,
    Year,
    Timeless,
}

/// A time expression from a claim, resolved to the latest consistent day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalReference {
    pub raw_text: String,
    /// Period end for coarse references; the 1900-01-01 sentinel when timeless.
    pub resolved_date: NaiveDate,
    pub granularity: Granularity,
}

impl TemporalReference {
    pub fn is_timeless(&self) -> bool {
        self.granularity == Granularity::Timeless
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedClaim {
    pub claim_id: ClaimId,
    /// Self-contained restatement.
    pub claim_text: String,
    /// Verbatim span from the rationale.
    pub original_text: String,
    pub temporal_reference: Option<TemporalReference>,
    pub category: ClaimCategory,
    pub category_reasoning: String,
}

impl ExtractedClaim {
    /// Convenience constructor used heavily by tests and fixtures.
    pub fn new(claim_id: ClaimId, text: impl Into<String>, category: ClaimCategory) -> Self {
        let text = text.into();
        ExtractedClaim {
            claim_id,
            original_text: text.clone(),
            claim_text: text,
            temporal_reference: None,
            category,
            category_reasoning: String::new(),
        }
    }

    pub fn with_reference(mut self, raw: &str) -> Self {
        self.temporal_reference = parse_temporal_reference(raw).ok();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Regression,
    Ranking,
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskType::Classification => "classification",
            TaskType::Regression => "regression",
            TaskType::Ranking => "ranking",
        })
    }
}

/// What the extractor and verifier need to know about the prediction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub task_description: String,
    /// The target event being predicted.
    pub event_description: String,
    /// Reference time: the cutoff defining what may be known.
    pub reference_date: NaiveDate,
    pub task_type: TaskType,
}

//! Claim-level temporal leakage auditing for LLM prediction rationales.
//!
//! The audit pipeline decomposes a rationale into categorized atomic claims
//! ([`claims`]), attributes the prediction to those claims with Shapley values
//! ([`shapley`]), decides per claim whether it postdates the reference cutoff
//! ([`leakage`]) and folds everything into leakage and performance metrics
//! ([`metrics`]). [`agents`] holds the two prompt-only baselines and the
//! five-phase TimeSPEC agent; [`backends`] defines the model/search seams and
//! their offline stand-ins; [`harness`] wires datasets, runs and reports.

pub mod agents;
pub mod backends;
pub mod claims;
pub mod error;
pub mod harness;
pub mod leakage;
pub mod metrics;
pub mod prompt;
pub mod shapley;
mod util;

pub use claims::{
    parse_temporal_reference, ClaimCategory, ClaimId, ExtractedClaim, Granularity, TaskContext,
    TaskType, TemporalReference,
};
pub use error::{Error, Result};
pub use leakage::{DeterminationDate, LeakageVerdict};
pub use metrics::InstanceAudit;
pub use shapley::{Coalition, SamplerConfig, ShapleyEstimate};

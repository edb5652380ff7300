//! Forecasting agents: two single-call baselines and the TimeSPEC pipeline.

mod baseline;
mod task;
mod timespec;
mod tools;

pub use baseline::{render_baseline_request, run_superforecasting, run_temporal_hint};
pub use task::{
    instantiation, GroundTruth, Instantiation, Outcome, Prediction, PredictionValue, TaskInput, TaskInstance,
    TaskKind,
};
pub use timespec::{
    render_valid_claim, run_timespec, timespec_aggregate, timespec_generate, timespec_regenerate,
    timespec_supervise, SearchEntry, SearchHistory, Supervision, TimeSpecConfig, TimeSpecSearch, TimeSpecTrace,
    ValidatedClaim,
};
pub use tools::{
    parse_submission, search_tool, submit_tool, SubmitSchema, SEARCH_TOOL, SUBMIT_DRAFT_TOOL, SUBMIT_FINAL_TOOL,
    SUBMIT_PREDICTION_TOOL,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Superforecast,
    TemporalHint,
    Timespec,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Superforecast, AgentKind::TemporalHint, AgentKind::Timespec];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Superforecast => "superforecast",
            AgentKind::TemporalHint => "temporal-hint",
            AgentKind::Timespec => "timespec",
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AgentKind::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown agent {s:?}; expected superforecast, temporal-hint or timespec"))
    }
}

//! Dataset loading, the scripted mock world, faithfulness checks and run
//! orchestration.

mod dataset;
mod faithfulness;
mod mock;

pub use dataset::{load_dataset, parse_dataset};
pub use faithfulness::{
    aggregate as aggregate_faithfulness, clean_rationale, faithfulness_check, render_faithfulness_prompt,
    FaithfulnessItem, FaithfulnessResult,
};
pub use mock::{MockAnswer, MockClaim, MockInstance, MockTimespec, MockWorld, MockWorldLm};
mod run;

pub use run::{
    load_audits, predict_cached, report_from_dir, run_audit, shapley_context, write_atomic, write_json_atomic,
    write_report, Backends, Failure, Pipeline, RunConfig, RunDir, RunManifest, RunOutcome, CORPUS_FILE,
    MOCK_WORLD_FILE, PROMPT_LOG_FILE,
};

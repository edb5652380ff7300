//! Provider-agnostic model and search contracts, their offline stand-ins,
//! caches, call accounting and the audit log.

mod audit;
mod fixture;
pub mod http;
mod limit;
mod lm;
mod scripted;
mod search;

pub use audit::{AuditLog, AuditedLm, AuditedSearch};
pub use fixture::{FixtureCorpus, FixtureDocument};
pub use limit::{FairLimiter, Limited};
pub(crate) use lm::complete_with_backoff;
pub use lm::{
    lm_call, lm_call_with, CallPolicy, LanguageModel, LmRequest, LmResponse, Message, ToolCall,
    ToolSpec,
};
pub use scripted::{Matcher, Reply, ScriptedLm};
pub use search::{CacheRole, SearchBackend, SearchClient, SearchRequest, SearchResult};

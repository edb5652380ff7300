use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    /// Only documents published strictly before this day are admissible.
    /// `None` disables the bound (determination-date lookups).
    pub before_date: Option<NaiveDate>,
    pub max_results: usize,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>, before_date: Option<NaiveDate>) -> Self {
        SearchRequest {
            query: query.into(),
            before_date,
            max_results: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub publication_date: Option<NaiveDate>,
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>>;
}

impl<T: SearchBackend + ?Sized> SearchBackend for Arc<T> {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        (**self).search(request)
    }
}

/// Cache namespace. Generator and supervisor searches never share entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheRole {
    Generator,
    Supervisor,
    Verifier,
}

/// Search front end enforcing the temporal filter, truncation and caching
/// regardless of what the backend does.
pub struct SearchClient {
    backend: Arc<dyn SearchBackend>,
    role: CacheRole,
    cache: Mutex<HashMap<SearchRequest, Vec<SearchResult>>>,
    backend_calls: AtomicUsize,
}

impl SearchClient {
    pub fn new(backend: Arc<dyn SearchBackend>, role: CacheRole) -> Self {
        SearchClient {
            backend,
            role,
            cache: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn role(&self) -> CacheRole {
        self.role
    }

    /// Backend invocations issued through this client (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        if let Some(hit) = self.cache.lock().get(request) {
            return Ok(hit.clone());
        }
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let raw = self.backend.search(request)?;
        let results = filter_results(raw, request);
        self.cache.lock().insert(request.clone(), results.clone());
        Ok(results)
    }
}

/// Drops undated and on/after-cutoff results when a bound is set, then truncates.
pub fn filter_results(raw: Vec<SearchResult>, request: &SearchRequest) -> Vec<SearchResult> {
    raw.into_iter()
        .filter(|r| match request.before_date {
            Some(bound) => r.publication_date.is_some_and(|d| d < bound),
            None => true,
        })
        .take(request.max_results)
        .collect()
}

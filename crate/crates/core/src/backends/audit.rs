use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde_json::{json, Value};

use super::lm::{LanguageModel, LmRequest, LmResponse};
use super::search::{SearchBackend, SearchRequest, SearchResult};
use crate::error::Result;

/// JSON-lines record of every external call.
#[derive(Debug)]
pub struct AuditLog {
    sink: Mutex<Option<BufWriter<File>>>,
    seq: AtomicU64,
}

impl AuditLog {
    /// Appends to `path`, creating it if needed.
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            sink: Mutex::new(Some(BufWriter::new(file))),
            seq: AtomicU64::new(0),
        })
    }

    /// A log that discards records but still numbers them.
    pub fn discard() -> Self {
        AuditLog {
            sink: Mutex::new(None),
            seq: AtomicU64::new(0),
        }
    }

    pub fn records(&self) -> u64 {
        self.seq.load(Ordering::SeqCst)
    }

    pub fn append(&self, mut record: Value) {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        record["seq"] = json!(seq);
        if let Some(w) = self.sink.lock().as_mut() {
            let line = serde_json::to_string(&record).expect("json values serialize");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                log::error!("audit log write failed: {e}");
            }
        }
    }
}

pub struct AuditedLm<L> {
    inner: L,
    log: Arc<AuditLog>,
}

impl<L> AuditedLm<L> {
    pub fn new(inner: L, log: Arc<AuditLog>) -> Self {
        AuditedLm { inner, log }
    }
}

impl<L: LanguageModel> LanguageModel for AuditedLm<L> {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse> {
        let out = self.inner.complete(request);
        let outcome = match &out {
            Ok(r) => json!({ "response": r }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.log.append(json!({
            "kind": "lm",
            "purpose": request.purpose,
            "request": request,
            "outcome": outcome,
        }));
        out
    }
}

pub struct AuditedSearch<S> {
    inner: S,
    log: Arc<AuditLog>,
}

impl<S> AuditedSearch<S> {
    pub fn new(inner: S, log: Arc<AuditLog>) -> Self {
        AuditedSearch { inner, log }
    }
}

impl<S: SearchBackend> SearchBackend for AuditedSearch<S> {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        let out = self.inner.search(request);
        let outcome = match &out {
            Ok(r) => json!({ "results": r }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.log.append(json!({ "kind": "search", "request": request, "outcome": outcome }));
        out
    }
}

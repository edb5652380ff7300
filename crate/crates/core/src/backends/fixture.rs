use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::search::{SearchBackend, SearchRequest, SearchResult};
use crate::error::{Error, Result};

/// One dated document of an offline corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureDocument {
    pub doc_id: String,
    pub text: String,
    pub publication_date: NaiveDate,
    pub keywords: Vec<String>,
}

/// Keyword-matched document store standing in for a dated web search.
///
/// A document matches when every one of its keywords occurs in the query
/// (case-insensitive). Matches come back oldest first.
#[derive(Debug, Default)]
pub struct FixtureCorpus {
    documents: Vec<FixtureDocument>,
    honor_date_bound: bool,
    calls: AtomicUsize,
}

impl FixtureCorpus {
    pub fn new(documents: Vec<FixtureDocument>) -> Self {
        FixtureCorpus {
            documents,
            honor_date_bound: true,
            calls: AtomicUsize::new(0),
        }
    }

    /// A backend that ignores both the date bound and `max_results`.
    pub fn adversarial(documents: Vec<FixtureDocument>) -> Self {
        FixtureCorpus {
            honor_date_bound: false,
            ..Self::new(documents)
        }
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: FixtureDocument = serde_json::from_str(line).map_err(|e| Error::Schema {
                path: "<corpus>".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        Ok(Self::new(docs))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl_str(&text).map_err(|e| match e {
            Error::Schema { line, message, .. } => Error::Schema {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn documents(&self) -> &[FixtureDocument] {
        &self.documents
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn title_of(text: &str) -> String {
    let first = text.split(['.', '\n']).next().unwrap_or(text);
    first.chars().take(96).collect()
}

impl SearchBackend for FixtureCorpus {
    fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResult>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let query = request.query.to_lowercase();
        let mut hits: Vec<&FixtureDocument> = self
            .documents
            .iter()
            .filter(|d| {
                !d.keywords.is_empty()
                    && d.keywords.iter().all(|k| query.contains(&k.to_lowercase()))
            })
            .filter(|d| {
                !self.honor_date_bound || request.before_date.is_none_or(|b| d.publication_date < b)
            })
            .collect();
        hits.sort_by(|a, b| {
            a.publication_date
                .cmp(&b.publication_date)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        if self.honor_date_bound {
            hits.truncate(request.max_results);
        }
        Ok(hits
            .into_iter()
            .map(|d| SearchResult {
                url: format!("fixture://{}", d.doc_id),
                title: title_of(&d.text),
                snippet: d.text.clone(),
                publication_date: Some(d.publication_date),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{CacheRole, SearchClient};
    use std::sync::Arc;

    #[test]
    fn parses_jsonl_and_reports_bad_lines() {
        let ok = r#"{"doc_id":"a","text":"Alpha. more","publication_date":"2019-01-02","keywords":["alpha"]}"#;
        let corpus = FixtureCorpus::from_jsonl_str(&format!("{ok}\n\n{ok}\n")).unwrap();
        assert_eq!(corpus.documents().len(), 2);
        let bad = format!("{ok}\n{{\"doc_id\":\"b\"}}\n");
        match FixtureCorpus::from_jsonl_str(&bad) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn client_filter_holds_against_adversarial_backend() {
        let docs = vec![
            FixtureDocument {
                doc_id: "late".into(),
                text: "Rozier signs".into(),
                publication_date: "2019-07-06".parse().unwrap(),
                keywords: vec!["rozier".into()],
            },
            FixtureDocument {
                doc_id: "early".into(),
                text: "Rozier stats".into(),
                publication_date: "2019-04-10".parse().unwrap(),
                keywords: vec!["rozier".into()],
            },
        ];
        let backend = Arc::new(FixtureCorpus::adversarial(docs));
        let raw = backend
            .search(&SearchRequest::new("rozier", Some("2019-06-15".parse().unwrap())))
            .unwrap();
        assert_eq!(raw.len(), 2, "adversarial backend leaks");
        let client = SearchClient::new(backend, CacheRole::Generator);
        let res = client
            .search(&SearchRequest::new("rozier", Some("2019-06-15".parse().unwrap())))
            .unwrap();
        assert_eq!(res.len(), 1);
        assert!(res[0].publication_date.unwrap() < "2019-06-15".parse().unwrap());
    }
}

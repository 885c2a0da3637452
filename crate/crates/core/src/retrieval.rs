//! Retrieval interface and an in-memory lexical index.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mdp::Document;
use crate::metrics::normalize_answer;
use crate::policy::BackendError;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub query: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalRequestError {
    #[error("retrieval query is empty")]
    EmptyQuery,
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

impl RetrievalRequest {
    pub fn new(query: impl Into<String>, top_k: usize) -> Result<Self, RetrievalRequestError> {
        let query = query.into();
        if query.trim().is_empty() {
            return Err(RetrievalRequestError::EmptyQuery);
        }
        if top_k == 0 {
            return Err(RetrievalRequestError::ZeroTopK);
        }
        Ok(RetrievalRequest { query, top_k })
    }
}

pub trait Retriever {
    /// At most `top_k` documents, scores non-increasing.
    fn retrieve(&self, request: &RetrievalRequest) -> Result<Vec<Document>, BackendError>;
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(&self, request: &RetrievalRequest) -> Result<Vec<Document>, BackendError> {
        (**self).retrieve(request)
    }
}

impl<R: Retriever + ?Sized> Retriever for alloc::sync::Arc<R> {
    fn retrieve(&self, request: &RetrievalRequest) -> Result<Vec<Document>, BackendError> {
        (**self).retrieve(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub title: String,
    pub text: String,
}

/// Scores documents by how many distinct normalized query tokens occur in the
/// normalized title + text. Ties keep corpus order.
#[derive(Debug, Clone, Default)]
pub struct LexicalIndex {
    entries: Vec<CorpusEntry>,
    tokens: Vec<Vec<String>>,
}

impl LexicalIndex {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        let tokens = entries
            .iter()
            .map(|e| {
                let mut toks: Vec<String> = normalize_answer(&alloc::format!("{} {}", e.title, e.text))
                    .split_whitespace()
                    .map(String::from)
                    .collect();
                toks.sort_unstable();
                toks.dedup();
                toks
            })
            .collect();
        LexicalIndex { entries, tokens }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn overlap(&self, doc: usize, query_tokens: &[String]) -> usize {
        query_tokens.iter().filter(|t| self.tokens[doc].binary_search(t).is_ok()).count()
    }
}

impl Retriever for LexicalIndex {
    fn retrieve(&self, request: &RetrievalRequest) -> Result<Vec<Document>, BackendError> {
        let mut query_tokens: Vec<String> =
            normalize_answer(&request.query).split_whitespace().map(String::from).collect();
        query_tokens.sort_unstable();
        query_tokens.dedup();
        let mut scored: Vec<(usize, usize)> =
            (0..self.entries.len()).map(|i| (i, self.overlap(i, &query_tokens))).collect();
        // Stable sort keeps insertion order among equal scores.
        scored.sort_by_key(|&(_, s)| core::cmp::Reverse(s));
        Ok(scored
            .into_iter()
            .take(request.top_k)
            .map(|(i, s)| Document {
                title: self.entries[i].title.clone(),
                text: self.entries[i].text.clone(),
                score: s as f64,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn entry(title: &str, text: &str) -> CorpusEntry {
        CorpusEntry { title: title.into(), text: text.into() }
    }

    fn fixture() -> LexicalIndex {
        LexicalIndex::new(vec![
            entry("Scott Derrickson", "American director of Doctor Strange."),
            entry("Ed Wood", "Edward Davis Wood Jr. was an American filmmaker."),
            entry("Alexander Wood", "Scottish soccer defender."),
        ])
    }

    #[test]
    fn matching_title_ranks_first() {
        let docs = fixture().retrieve(&RetrievalRequest::new("Ed Wood nationality", 3).unwrap()).unwrap();
        // "ed","wood","nationality": Ed Wood doc matches 2, Alexander Wood 1, Derrickson 0.
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].title, "Ed Wood");
        assert_eq!(docs[0].score, 2.0);
        assert_eq!(docs[1].title, "Alexander Wood");
        assert_eq!(docs[2].score, 0.0);
    }

    #[test]
    fn top_k_clamps_to_corpus() {
        let idx = LexicalIndex::new(vec![entry("a", "x"), entry("b", "y")]);
        let docs = idx.retrieve(&RetrievalRequest::new("x", 3).unwrap()).unwrap();
        assert_eq!(docs.len(), 2);
        assert!(LexicalIndex::default().retrieve(&RetrievalRequest::new("x", 3).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn ties_keep_insertion_order() {
        let idx = LexicalIndex::new(vec![entry("one", "z"), entry("two", "z"), entry("three", "z")]);
        let docs = idx.retrieve(&RetrievalRequest::new("z", 2).unwrap()).unwrap();
        assert_eq!(docs[0].title, "one");
        assert_eq!(docs[1].title, "two");
    }

    #[test]
    fn request_validation() {
        assert_eq!(RetrievalRequest::new("  ", 3), Err(RetrievalRequestError::EmptyQuery));
        assert_eq!(RetrievalRequest::new("q", 0), Err(RetrievalRequestError::ZeroTopK));
    }

    proptest! {
        #[test]
        fn results_bounded_and_sorted(q in "[a-z ]{1,20}", k in 1usize..6) {
            prop_assume!(!q.trim().is_empty());
            let docs = fixture().retrieve(&RetrievalRequest::new(q.clone(), k).unwrap()).unwrap();
            prop_assert!(docs.len() <= k);
            prop_assert!(docs.windows(2).all(|w| w[0].score >= w[1].score));
            let again = fixture().retrieve(&RetrievalRequest::new(q, k).unwrap()).unwrap();
            prop_assert_eq!(docs, again);
        }
    }
}

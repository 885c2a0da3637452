//! Parsers for model outputs. None of them fail: every string maps to exactly
//! one result, with `Malformed` as an ordinary value.

use alloc::string::String;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationParse {
    Terminate(String),
    Continue(String),
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerParse {
    Answer(String),
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryParse {
    Query(String),
    Malformed,
}

/// A tagged span located in a larger text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagSpan<'a> {
    /// Trimmed content between the tags.
    pub content: &'a str,
    /// Byte offset of the opening tag.
    pub start: usize,
    /// Byte offset just past the closing tag.
    pub end: usize,
}

/// First `<tag>…</tag>` occurrence with non-empty trimmed content.
pub fn first_tagged<'a>(raw: &'a str, tag: &str) -> Option<TagSpan<'a>> {
    let open = alloc::format!("<{tag}>");
    let close = alloc::format!("</{tag}>");
    let mut from = 0;
    while let Some(rel) = raw[from..].find(&open) {
        let start = from + rel;
        let body_start = start + open.len();
        let close_rel = raw[body_start..].find(&close)?;
        let body_end = body_start + close_rel;
        let content = raw[body_start..body_end].trim();
        let end = body_end + close.len();
        if !content.is_empty() {
            return Some(TagSpan { content, start, end });
        }
        from = end;
    }
    None
}

/// Termination-decision output: an `<answer>` wins over a `<question>`.
pub fn parse_termination(raw: &str) -> TerminationParse {
    if let Some(span) = first_tagged(raw, "answer") {
        return TerminationParse::Terminate(span.content.into());
    }
    if let Some(span) = first_tagged(raw, "question") {
        return TerminationParse::Continue(span.content.into());
    }
    TerminationParse::Malformed
}

/// Sub-question generator output (`<question>…</question>`).
pub fn parse_sub_question(raw: &str) -> Option<String> {
    first_tagged(raw, "question").map(|s| s.content.into())
}

pub fn parse_self_answer(raw: &str) -> AnswerParse {
    match first_tagged(raw, "answer") {
        Some(span) => AnswerParse::Answer(span.content.into()),
        None => AnswerParse::Malformed,
    }
}

/// The whole trimmed output is the query.
pub fn parse_sub_query(raw: &str) -> QueryParse {
    let q = raw.trim();
    if q.is_empty() {
        QueryParse::Malformed
    } else {
        QueryParse::Query(q.into())
    }
}

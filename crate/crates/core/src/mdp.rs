//! States, actions and transitions of the decision/execution process.
//!
//! A [`State`] is the question plus the ordered `(sub-question, resolution)`
//! steps taken so far, optionally closed by a final answer. Rendering a state
//! into text ([`serialize_state`]) produces the `{iter_history}` block used by
//! the prompts and the chain text used by the exporters.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuestionError {
    #[error("question id is empty")]
    EmptyId,
    #[error("question {0} has empty text")]
    EmptyText(String),
    #[error("question {0} has no gold answers")]
    NoGoldAnswers(String),
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_answers: Vec<String>,
    ) -> Result<Self, QuestionError> {
        let q = Question { id: id.into(), text: text.into(), gold_answers };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), QuestionError> {
        if self.id.is_empty() {
            return Err(QuestionError::EmptyId);
        }
        if self.text.trim().is_empty() {
            return Err(QuestionError::EmptyText(self.id.clone()));
        }
        if self.gold_answers.is_empty() || self.gold_answers.iter().all(|g| g.trim().is_empty()) {
            return Err(QuestionError::NoGoldAnswers(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub text: String,
    pub score: f64,
}

impl Document {
    /// Copy with `text` cut to at most `max_chars` characters.
    pub fn truncated(&self, max_chars: usize) -> Document {
        let text = match self.text.char_indices().nth(max_chars) {
            Some((byte, _)) => String::from(&self.text[..byte]),
            None => self.text.clone(),
        };
        Document { title: self.title.clone(), text, score: self.score }
    }
}

/// How a sub-question was resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resolution {
    SelfAnswer { answer: String },
    Retrieved { sub_query: String, documents: Vec<Document> },
}

impl Resolution {
    pub fn is_retrieval(&self) -> bool {
        matches!(self, Resolution::Retrieved { .. })
    }

    pub fn decision(&self) -> RetrievalDecision {
        match self {
            Resolution::SelfAnswer { .. } => RetrievalDecision::SelfKnowledge,
            Resolution::Retrieved { .. } => RetrievalDecision::Retrieve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub sub_question: String,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalDecision {
    SelfKnowledge,
    Retrieve,
}

/// The pair `(termination, retrieval)`; the retrieval decision exists only
/// when the termination decision is `Continue`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    termination: Termination,
    retrieval: Option<RetrievalDecision>,
}

impl Action {
    pub fn terminate() -> Self {
        Action { termination: Termination::Terminate, retrieval: None }
    }

    pub fn continue_with(retrieval: RetrievalDecision) -> Self {
        Action { termination: Termination::Continue, retrieval: Some(retrieval) }
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn retrieval(&self) -> Option<RetrievalDecision> {
        self.retrieval
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub question: Question,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
}

impl State {
    pub fn initial(question: Question) -> Self {
        State { question, steps: Vec::new(), final_answer: None }
    }

    pub fn is_terminal(&self) -> bool {
        self.final_answer.is_some()
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn retrieval_count(&self) -> usize {
        self.steps.iter().filter(|s| s.resolution.is_retrieval()).count()
    }

    pub fn with_step(&self, step: Step) -> State {
        let mut next = self.clone();
        next.steps.push(step);
        next
    }

    pub fn terminated(&self, answer: impl Into<String>) -> State {
        let mut next = self.clone();
        next.final_answer = Some(answer.into());
        next
    }
}

/// Labels used when rendering a state as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoryTemplate {
    pub question: String,
    pub sub_question: String,
    pub answer: String,
    pub sub_query: String,
    pub final_answer: String,
}

impl Default for HistoryTemplate {
    fn default() -> Self {
        HistoryTemplate {
            question: String::from("Question"),
            sub_question: String::from("Sub-question"),
            answer: String::from("Answer"),
            sub_query: String::from("Sub-query"),
            final_answer: String::from("Final answer"),
        }
    }
}

impl HistoryTemplate {
    pub fn question_block(&self, question: &str) -> String {
        format!("{}: {}\n\n", self.question, question)
    }

    /// `index` is 1-based.
    pub fn sub_question_line(&self, index: usize, sub_question: &str) -> String {
        format!("{} {}: {}\n", self.sub_question, index, sub_question)
    }

    pub fn self_answer_line(&self, index: usize, answer: &str) -> String {
        format!("{} {}: {}\n\n", self.answer, index, answer)
    }

    pub fn sub_query_line(&self, index: usize, sub_query: &str) -> String {
        format!("{} {}: {}\n", self.sub_query, index, sub_query)
    }

    pub fn final_answer_line(&self, answer: &str) -> String {
        format!("{}: {}\n", self.final_answer, answer)
    }
}

/// `<information>` block with `Docs N: "title"` headers.
pub fn render_documents(documents: &[Document]) -> String {
    let mut out = String::from("<information>\n");
    for (i, d) in documents.iter().enumerate() {
        let _ = write!(out, "Docs {}: \"{}\"\n{}\n", i + 1, d.title, d.text);
    }
    out.push_str("</information>\n\n");
    out
}

/// One step rendered as text, split at the boundary between the sub-query and
/// the retrieved documents (the second part is empty for self-answered steps).
pub fn render_step(template: &HistoryTemplate, index: usize, step: &Step) -> (String, String) {
    let mut head = template.sub_question_line(index, &step.sub_question);
    match &step.resolution {
        Resolution::SelfAnswer { answer } => {
            head.push_str(&template.self_answer_line(index, answer));
            (head, String::new())
        }
        Resolution::Retrieved { sub_query, documents } => {
            head.push_str(&template.sub_query_line(index, sub_query));
            (head, render_documents(documents))
        }
    }
}

/// Renders the steps (and final answer, when terminal) of a state.
///
/// The question itself is not included; an empty non-terminal state renders
/// as the empty string.
pub fn serialize_state(state: &State, template: &HistoryTemplate) -> String {
    let mut out = String::new();
    for (i, step) in state.steps.iter().enumerate() {
        let (head, docs) = render_step(template, i + 1, step);
        out.push_str(&head);
        out.push_str(&docs);
    }
    if let Some(answer) = &state.final_answer {
        out.push_str(&template.final_answer_line(answer));
    }
    out
}

/// History of `state` followed by a sub-question that has not been resolved yet.
pub fn serialize_with_pending(state: &State, pending: &str, template: &HistoryTemplate) -> String {
    let mut out = serialize_state(state, template);
    out.push_str(&template.sub_question_line(state.steps.len() + 1, pending));
    out
}

/// Question block followed by the serialized state; the text the SFT
/// exporter splits into segments.
pub fn serialize_chain(state: &State, template: &HistoryTemplate) -> String {
    let mut out = template.question_block(&state.question.text);
    out.push_str(&serialize_state(state, template));
    out
}

//! Prompt templates with `{question}` and `{iter_history}` placeholders.

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub const QUESTION: &str = "{question}";
pub const ITER_HISTORY: &str = "{iter_history}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    TerminationDecision,
    SubQuestion,
    SelfAnswer,
    SubQuery,
    Rollout,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::TerminationDecision,
        TemplateKind::SubQuestion,
        TemplateKind::SelfAnswer,
        TemplateKind::SubQuery,
        TemplateKind::Rollout,
    ];

    /// File name used when templates are loaded from a directory.
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::TerminationDecision => "termination_decision.txt",
            TemplateKind::SubQuestion => "sub_question.txt",
            TemplateKind::SelfAnswer => "self_answer.txt",
            TemplateKind::SubQuery => "sub_query.txt",
            TemplateKind::Rollout => "rollout.txt",
        }
    }

    pub fn uses_history(self) -> bool {
        matches!(self, TemplateKind::TerminationDecision | TemplateKind::Rollout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {kind:?} is missing placeholder {placeholder}")]
    MissingPlaceholder { kind: TemplateKind, placeholder: &'static str },
    #[error("template {kind:?} must not contain placeholder {placeholder}")]
    UnexpectedPlaceholder { kind: TemplateKind, placeholder: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub termination_decision: String,
    pub sub_question: String,
    pub self_answer: String,
    pub sub_query: String,
    pub rollout: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        PromptTemplateSet {
            termination_decision: include_str!("../templates/termination_decision.txt").into(),
            sub_question: include_str!("../templates/sub_question.txt").into(),
            self_answer: include_str!("../templates/self_answer.txt").into(),
            sub_query: include_str!("../templates/sub_query.txt").into(),
            rollout: include_str!("../templates/rollout.txt").into(),
        }
    }
}

impl PromptTemplateSet {
    pub fn get(&self, kind: TemplateKind) -> &str {
        match kind {
            TemplateKind::TerminationDecision => &self.termination_decision,
            TemplateKind::SubQuestion => &self.sub_question,
            TemplateKind::SelfAnswer => &self.self_answer,
            TemplateKind::SubQuery => &self.sub_query,
            TemplateKind::Rollout => &self.rollout,
        }
    }

    pub fn set(&mut self, kind: TemplateKind, text: String) {
        match kind {
            TemplateKind::TerminationDecision => self.termination_decision = text,
            TemplateKind::SubQuestion => self.sub_question = text,
            TemplateKind::SelfAnswer => self.self_answer = text,
            TemplateKind::SubQuery => self.sub_query = text,
            TemplateKind::Rollout => self.rollout = text,
        }
    }

    /// Every template carries `{question}`; only the termination and rollout
    /// templates carry `{iter_history}`.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for kind in TemplateKind::ALL {
            let text = self.get(kind);
            if !text.contains(QUESTION) {
                return Err(TemplateError::MissingPlaceholder { kind, placeholder: QUESTION });
            }
            match (kind.uses_history(), text.contains(ITER_HISTORY)) {
                (true, false) => {
                    return Err(TemplateError::MissingPlaceholder { kind, placeholder: ITER_HISTORY })
                }
                (false, true) => {
                    return Err(TemplateError::UnexpectedPlaceholder { kind, placeholder: ITER_HISTORY })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn render(&self, kind: TemplateKind, question: &str, history: &str) -> String {
        render(self.get(kind), question, history)
    }
}

/// Substitutes both placeholders in one left-to-right pass, so placeholder
/// text inside the inserted values is never expanded again.
pub fn render(template: &str, question: &str, history: &str) -> String {
    let mut out = String::with_capacity(template.len() + question.len() + history.len());
    let mut rest = template;
    loop {
        let q = rest.find(QUESTION);
        let h = rest.find(ITER_HISTORY);
        let (pos, len, value) = match (q, h) {
            (None, None) => break,
            (Some(q), Some(h)) if h < q => (h, ITER_HISTORY.len(), history),
            (Some(q), _) => (q, QUESTION.len(), question),
            (None, Some(h)) => (h, ITER_HISTORY.len(), history),
        };
        out.push_str(&rest[..pos]);
        out.push_str(value);
        rest = &rest[pos + len..];
    }
    out.push_str(rest);
    out
}

//! The iterative `<think>` / `<search>` / `<information>` / `<answer>` loop.
//!
//! Each turn asks the policy to continue the rollout prompt; generation stops
//! at `</search>` or `</answer>`. A search is executed against the retriever
//! and its results are appended as an `<information>` block before the next
//! turn. The same loop scores rollouts during expansion and runs evaluation.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::mdp::{render_documents, serialize_state, Document, HistoryTemplate, Question, State};
use crate::metrics::{exact_match, f1_score, MetricError, Score};
use crate::parse::first_tagged;
use crate::policy::{BackendError, Policy, PolicyRequest, PolicyRole};
use crate::prompts::{PromptTemplateSet, TemplateKind};
use crate::retrieval::{RetrievalRequest, Retriever};
use crate::seed;

pub const STOP_SEQUENCES: [&str; 2] = ["</search>", "</answer>"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "content", rename_all = "snake_case")]
pub enum AgentEvent {
    Think(String),
    Search(String),
    Information(Vec<Document>),
    Answer(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub question_id: String,
    pub events: Vec<AgentEvent>,
    pub searches_used: usize,
    /// True iff the loop ended with an `Answer` event.
    pub terminated: bool,
    /// Number of policy turns issued.
    pub policy_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl AgentTranscript {
    pub fn final_answer(&self) -> Option<&str> {
        match self.events.last() {
            Some(AgentEvent::Answer(a)) if self.terminated => Some(a),
            _ => None,
        }
    }

    /// Text form in the tag protocol.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e {
                AgentEvent::Think(t) => out.push_str(&format!("<think> {t} </think>\n")),
                AgentEvent::Search(q) => out.push_str(&format!("<search> {q} </search>\n")),
                AgentEvent::Information(docs) => out.push_str(&render_documents(docs)),
                AgentEvent::Answer(a) => out.push_str(&format!("<answer> {a} </answer>\n")),
            }
        }
        out
    }

    /// Every `Search` is immediately followed by one `Information`, nothing
    /// follows an `Answer`, and `searches_used` matches the event count.
    pub fn is_well_formed(&self) -> bool {
        let mut searches = 0;
        for (i, e) in self.events.iter().enumerate() {
            match e {
                AgentEvent::Search(_) => {
                    searches += 1;
                    if !matches!(self.events.get(i + 1), Some(AgentEvent::Information(_))) {
                        return false;
                    }
                }
                AgentEvent::Information(_) => {
                    if i == 0 || !matches!(self.events[i - 1], AgentEvent::Search(_)) {
                        return false;
                    }
                }
                AgentEvent::Answer(_) => {
                    if i + 1 != self.events.len() {
                        return false;
                    }
                }
                AgentEvent::Think(_) => {}
            }
        }
        searches == self.searches_used
            && self.terminated == matches!(self.events.last(), Some(AgentEvent::Answer(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCaps {
    pub max_searches: usize,
    /// Upper bound on the number of events in a transcript.
    pub max_steps: usize,
}

impl Default for AgentCaps {
    fn default() -> Self {
        AgentCaps { max_searches: 4, max_steps: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_k: usize,
    /// Retrieved document text is cut to this many characters.
    pub doc_char_budget: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings { temperature: 0.7, max_tokens: 1024, top_k: 3, doc_char_budget: 1500 }
    }
}

pub struct AgentRunner<'a> {
    pub policy: &'a dyn Policy,
    pub retriever: &'a dyn Retriever,
    pub templates: &'a PromptTemplateSet,
    pub history: &'a HistoryTemplate,
    pub settings: AgentSettings,
}

enum Turn<'t> {
    Search { think: String, query: &'t str, consumed: usize },
    Answer { think: String, answer: &'t str },
    Think(String),
}

fn strip_think(text: &str) -> String {
    text.replace("<think>", " ").replace("</think>", " ").trim().into()
}

fn classify(text: &str) -> Turn<'_> {
    let search = first_tagged(text, "search");
    let answer = first_tagged(text, "answer");
    match (search, answer) {
        (Some(s), Some(a)) if a.start < s.start => {
            Turn::Answer { think: strip_think(&text[..a.start]), answer: a.content }
        }
        (Some(s), _) => Turn::Search { think: strip_think(&text[..s.start]), query: s.content, consumed: s.end },
        (None, Some(a)) => Turn::Answer { think: strip_think(&text[..a.start]), answer: a.content },
        (None, None) => Turn::Think(strip_think(text)),
    }
}

impl<'a> AgentRunner<'a> {
    /// Runs the loop from `initial_state` (or from scratch).
    pub fn run_agent(
        &self,
        question: &Question,
        initial_state: Option<&State>,
        caps: AgentCaps,
        seed: u64,
    ) -> AgentTranscript {
        let history = initial_state.map(|s| serialize_state(s, self.history)).unwrap_or_default();
        self.run_from_history(question, &history, caps, seed)
    }

    /// Runs the loop with an already rendered `{iter_history}` block.
    pub fn run_from_history(&self, question: &Question, history: &str, caps: AgentCaps, seed: u64) -> AgentTranscript {
        let base = self.templates.render(TemplateKind::Rollout, &question.text, history);
        let mut continuation = String::new();
        let mut t = AgentTranscript {
            question_id: question.id.clone(),
            events: Vec::new(),
            searches_used: 0,
            terminated: false,
            policy_calls: 0,
            failure: None,
        };
        loop {
            let request = PolicyRequest {
                role: PolicyRole::Rollout,
                rendered_prompt: format!("{base}{continuation}"),
                temperature: self.settings.temperature,
                max_tokens: self.settings.max_tokens,
                seed: Some(seed::derive(seed, &[t.policy_calls as u64])),
                stop: STOP_SEQUENCES.iter().map(|s| String::from(*s)).collect(),
            };
            let text = match self.policy.complete(&request) {
                Ok(r) => r.raw_text,
                Err(e) => {
                    t.failure = Some(format!("{e}"));
                    return t;
                }
            };
            t.policy_calls += 1;
            match classify(&text) {
                Turn::Answer { think, answer } => {
                    let mut new = Vec::new();
                    if !think.is_empty() {
                        new.push(AgentEvent::Think(think));
                    }
                    new.push(AgentEvent::Answer(answer.into()));
                    if t.events.len() + new.len() > caps.max_steps {
                        return t;
                    }
                    t.events.extend(new);
                    t.terminated = true;
                    return t;
                }
                Turn::Search { think, query, consumed } => {
                    if t.searches_used >= caps.max_searches {
                        return t;
                    }
                    let mut new = Vec::new();
                    if !think.is_empty() {
                        new.push(AgentEvent::Think(think));
                    }
                    // Search + Information, and room for at least an Answer afterwards.
                    if t.events.len() + new.len() + 2 > caps.max_steps {
                        return t;
                    }
                    let docs = match self.search(query) {
                        Ok(d) => d,
                        Err(e) => {
                            t.failure = Some(format!("{e}"));
                            return t;
                        }
                    };
                    continuation.push_str(&text[..consumed]);
                    continuation.push('\n');
                    continuation.push_str(&render_documents(&docs));
                    new.push(AgentEvent::Search(query.into()));
                    new.push(AgentEvent::Information(docs));
                    t.events.extend(new);
                    t.searches_used += 1;
                }
                Turn::Think(think) => {
                    if think.is_empty() || t.events.len() + 1 > caps.max_steps {
                        return t;
                    }
                    continuation.push_str(&text);
                    continuation.push('\n');
                    t.events.push(AgentEvent::Think(think));
                }
            }
        }
    }

    fn search(&self, query: &str) -> Result<Vec<Document>, BackendError> {
        let request = RetrievalRequest::new(query, self.settings.top_k.max(1))
            .map_err(|e| BackendError::Protocol(format!("{e}")))?;
        let docs = self.retriever.retrieve(&request)?;
        Ok(docs.iter().map(|d| d.truncated(self.settings.doc_char_budget)).collect())
    }
}

/// Per-question evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question_id: String,
    pub prediction: Option<String>,
    pub em: Score,
    pub f1: Score,
    pub searches: usize,
    pub steps: usize,
    pub failed: bool,
}

impl EvalItem {
    /// Truncated or failed transcripts score 0.
    pub fn score(question: &Question, transcript: &AgentTranscript) -> Result<EvalItem, MetricError> {
        let prediction = transcript.final_answer().map(String::from);
        let (em, f1) = match &prediction {
            Some(p) => (exact_match(p, &question.gold_answers)?, f1_score(p, &question.gold_answers)?),
            None => (Score::ZERO, Score::ZERO),
        };
        Ok(EvalItem {
            question_id: question.id.clone(),
            prediction,
            em,
            f1,
            searches: transcript.searches_used,
            steps: transcript.policy_calls,
            failed: transcript.failure.is_some(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub avg_searches: f64,
    pub avg_steps: f64,
    pub failures: usize,
}

/// Means over items; failed items are dropped from the means only when
/// `exclude_failures` is set (`n` then counts the remaining items).
pub fn aggregate(dataset: &str, items: &[EvalItem], exclude_failures: bool) -> EvalReport {
    let failures = items.iter().filter(|i| i.failed).count();
    let kept: Vec<&EvalItem> = items.iter().filter(|i| !(exclude_failures && i.failed)).collect();
    let n = kept.len();
    let mean = |f: &dyn Fn(&EvalItem) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            kept.iter().map(|i| f(i)).sum::<f64>() / n as f64
        }
    };
    EvalReport {
        dataset: dataset.into(),
        n,
        em: mean(&|i| i.em.value()),
        f1: mean(&|i| i.f1.value()),
        avg_searches: mean(&|i| i.searches as f64),
        avg_steps: mean(&|i| i.steps as f64),
        failures,
    }
}

impl<'a> AgentRunner<'a> {
    /// Runs every question sequentially and aggregates the report.
    pub fn evaluate_dataset(
        &self,
        dataset: &str,
        questions: &[Question],
        caps: AgentCaps,
        seed: u64,
        exclude_failures: bool,
    ) -> Result<(EvalReport, Vec<AgentTranscript>), MetricError> {
        let mut items = Vec::with_capacity(questions.len());
        let mut transcripts = Vec::with_capacity(questions.len());
        for q in questions {
            let t = self.run_agent(q, None, caps, seed::derive(seed, &[seed::hash_str(&q.id)]));
            items.push(EvalItem::score(q, &t)?);
            transcripts.push(t);
        }
        Ok((aggregate(dataset, &items, exclude_failures), transcripts))
    }
}

/// Events a transcript would need for `searches` searches and a final answer
/// with a think block before every action.
pub fn events_for(searches: usize) -> usize {
    3 * searches + 2
}


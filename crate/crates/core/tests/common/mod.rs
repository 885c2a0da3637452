//! Fixture policies whose rewards and votes are fixed by the test.
//!
//! Candidate contents carry a `[[r]]` marker. A rollout finds the last marker
//! in its prompt and answers correctly on the first `round(r * n)` of its `n`
//! calls, so a candidate's reward is exactly `r` whenever `r * n` is whole.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Mutex;

use ragtree_core::expansion::{ExpansionConfig, Expander, Strategy};
use ragtree_core::mdp::HistoryTemplate;
use ragtree_core::policy::{BackendError, GenerationSettings, Policy, PolicyRequest, PolicyResponse, PolicyRole, PolicySet};
use ragtree_core::prompts::PromptTemplateSet;
use ragtree_core::retrieval::{CorpusEntry, LexicalIndex};
use ragtree_core::scripted::OUTPUT_MARKER;
use ragtree_core::Question;

pub const GOLD: &str = "marie curie";

pub fn question() -> Question {
    Question::new("fx-1", "Who discovered polonium?", vec![GOLD.to_string()]).unwrap()
}

pub fn corpus() -> LexicalIndex {
    LexicalIndex::new(vec![
        CorpusEntry { title: "Polonium".into(), text: "Polonium was discovered in 1898 by Marie Curie and Pierre Curie.".into() },
        CorpusEntry { title: "Radium".into(), text: "Radium was discovered by the Curies.".into() },
        CorpusEntry { title: "Uranium".into(), text: "Uranium was discovered by Klaproth.".into() },
    ])
}

type Respond = dyn Fn(&PolicyRequest, usize) -> String + Send + Sync;

/// Answers as a function of (role, prompt, how many times this exact
/// (role, prompt) was asked before). The engine issues requests in a fixed
/// order, so this is deterministic.
pub struct SequencedPolicy {
    counts: Mutex<HashMap<(PolicyRole, String), usize>>,
    respond: Box<Respond>,
    pub calls: Mutex<Vec<PolicyRequest>>,
}

impl SequencedPolicy {
    pub fn new(respond: impl Fn(&PolicyRequest, usize) -> String + Send + Sync + 'static) -> Self {
        SequencedPolicy { counts: Mutex::new(HashMap::new()), respond: Box::new(respond), calls: Mutex::new(Vec::new()) }
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl Policy for SequencedPolicy {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        let index = {
            let mut counts = self.counts.lock().unwrap();
            let c = counts.entry((request.role, request.rendered_prompt.clone())).or_insert(0);
            *c += 1;
            *c - 1
        };
        self.calls.lock().unwrap().push(request.clone());
        Ok(PolicyResponse::text((self.respond)(request, index)))
    }
}

/// Reward carried by the last `[[r]]` marker of the history part of `prompt`.
pub fn marker(prompt: &str) -> Option<f64> {
    let end = prompt.rfind(OUTPUT_MARKER).unwrap_or(prompt.len());
    let head = &prompt[..end];
    let open = head.rfind("[[")?;
    let close = head[open..].find("]]")? + open;
    head[open + 2..close].parse().ok()
}

/// Depth of the state rendered into a prompt, counting a pending
/// sub-question.
pub fn depth(prompt: &str) -> usize {
    (1..).take_while(|d| prompt.contains(&format!("Sub-question {d}: "))).count()
}

/// Rollout turn: answers right on the first `round(r * n)` calls.
pub fn rollout(prompt: &str, index: usize, n: usize) -> String {
    let r = marker(prompt).unwrap_or(0.0);
    if (index as f64) < (r * n as f64).round() {
        format!("<think> known </think> <answer> {GOLD} </answer>")
    } else {
        "<think> unsure </think> <answer> someone else </answer>".to_string()
    }
}

pub fn tagged(tag: &str, content: &str) -> String {
    format!("<reasoning> r </reasoning> <{tag}> {content} </{tag}>")
}

/// A fully specified fixture tree. All closures receive the depth of the
/// state being expanded and the sample index within its set.
pub struct Plan {
    pub n: usize,
    /// Terminate votes out of `majority_samples` at each depth.
    pub terminate_votes: Box<dyn Fn(usize) -> usize + Send + Sync>,
    pub majority_samples: usize,
    pub sub_question: Box<dyn Fn(usize, usize) -> String + Send + Sync>,
    pub self_answer: Box<dyn Fn(usize, usize) -> String + Send + Sync>,
    pub sub_query: Box<dyn Fn(usize, usize) -> String + Send + Sync>,
    pub final_answer: String,
}

impl Plan {
    pub fn into_policy(self) -> SequencedPolicy {
        SequencedPolicy::new(move |req, index| {
            let prompt = req.rendered_prompt.as_str();
            let d = depth(prompt);
            match req.role {
                PolicyRole::TerminationDecision => {
                    // Final-answer requests are the only ones at temperature 0.
                    if req.temperature == 0.0 || index >= self.majority_samples {
                        return tagged("answer", &self.final_answer);
                    }
                    if index < (self.terminate_votes)(d) {
                        tagged("answer", &self.final_answer)
                    } else {
                        tagged("question", "placeholder")
                    }
                }
                PolicyRole::SubQuestionGen => tagged("question", &(self.sub_question)(d, index)),
                // Self-answer and sub-query prompts contain only the
                // sub-question, which names its depth as "@d".
                PolicyRole::SelfAnswer => tagged("answer", &(self.self_answer)(at_depth(prompt), index)),
                PolicyRole::SubQueryGen => (self.sub_query)(at_depth(prompt), index),
                PolicyRole::Rollout => rollout(prompt, index, self.n),
            }
        })
    }
}

/// Depth tag `@d` embedded in fixture sub-questions.
pub fn at_depth(prompt: &str) -> usize {
    let end = prompt.rfind(OUTPUT_MARKER).unwrap_or(prompt.len());
    let head = &prompt[..end];
    head.rfind('@')
        .and_then(|i| head[i + 1..].split(|c: char| !c.is_ascii_digit()).next().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

pub fn with_rewards(prefix: &str, rewards: &[f64]) -> impl Fn(usize, usize) -> String + Send + Sync + 'static {
    let prefix = prefix.to_string();
    let rewards = rewards.to_vec();
    move |d, i| format!("{prefix} @{d} #{i} [[{}]]", rewards.get(i).copied().unwrap_or(0.0))
}

pub fn config(strategy: Strategy, k: usize, n: usize, t_max: usize) -> ExpansionConfig {
    ExpansionConfig { k, n, t_max, strategy, majority_samples: k, seed: 7, ..ExpansionConfig::default() }
}

pub struct Rig {
    pub templates: PromptTemplateSet,
    pub history: HistoryTemplate,
    pub corpus: LexicalIndex,
}

impl Default for Rig {
    fn default() -> Self {
        Rig { templates: PromptTemplateSet::default(), history: HistoryTemplate::default(), corpus: corpus() }
    }
}

impl Rig {
    pub fn expander<'a>(&'a self, config: ExpansionConfig, policy: &'a dyn Policy) -> Expander<'a> {
        Expander {
            config,
            policies: PolicySet::single(policy),
            retriever: &self.corpus,
            templates: &self.templates,
            history: &self.history,
            generation: GenerationSettings::default(),
        }
    }
}

pub mod invariants;
pub mod random;
pub mod contracts;

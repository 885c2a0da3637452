use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ExpansionConfig, Strategy};
use crate::mdp::{Document, Question, Step};
use crate::metrics::Score;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    SubQuestion,
    SelfAnswer,
    SubQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub transcript: String,
    pub final_answer: Option<String>,
    pub score: Score,
    /// Policy turns the rollout used.
    pub steps_taken: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub searches: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub content: String,
    /// Retrieved documents (sub-query candidates only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub documents: Vec<Document>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rollouts: Vec<RolloutResult>,
    /// Mean rollout score; absent when the strategy runs no rollouts.
    pub reward: Option<Score>,
    pub retained: bool,
}

impl Candidate {
    pub fn new(kind: CandidateKind, content: String) -> Self {
        Candidate { kind, content, documents: Vec::new(), rollouts: Vec::new(), reward: None, retained: false }
    }

    /// Sets the rollouts and their mean as the reward.
    pub fn with_rollouts(mut self, rollouts: Vec<RolloutResult>) -> Self {
        self.reward = Score::mean(rollouts.iter().map(|r| r.score));
        self.rollouts = rollouts;
        self
    }
}

/// Index of the highest-reward candidate; ties go to the lowest index.
/// Unscored candidates never win against scored ones.
pub fn argmax(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let r = c.reward.map_or(f64::NEG_INFINITY, Score::value);
        match best {
            Some((_, b)) if r <= b => {}
            _ => best = Some((i, r)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TerminationVotes {
    pub terminate: usize,
    #[serde(rename = "continue")]
    pub continue_: usize,
    /// Samples that stayed malformed after retries.
    #[serde(default)]
    pub abstain: usize,
}

impl TerminationVotes {
    pub fn total(&self) -> usize {
        self.terminate + self.continue_ + self.abstain
    }

    /// Strictly more than half of all samples voted to terminate.
    pub fn majority_terminate(&self) -> bool {
        2 * self.terminate > self.total()
    }
}

/// Both retrieval-decision branches for one sub-question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBranch {
    pub sub_question: String,
    pub self_answers: Vec<Candidate>,
    pub sub_queries: Vec<Candidate>,
    /// The best self-answer reached `tau`, so no sub-queries were generated.
    pub retrieval_skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalAnswer {
    pub answer: String,
    pub score: Score,
    /// Produced because the depth limit was reached rather than by vote.
    pub forced: bool,
}

/// Which execution produced a child node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildOrigin {
    pub branch: usize,
    pub kind: CandidateKind,
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub depth: usize,
    /// The step that led here from the parent (absent at the root).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<ChildOrigin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<TerminationVotes>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_questions: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<RetrievalBranch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalAnswer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
    /// Index into `children` of the child on the retained path. `None` means
    /// the retained path ends at this node's terminal answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained_child: Option<usize>,
    /// Every candidate of the chosen execution set scored zero.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub zero_reward: bool,
}

impl TreeNode {
    pub fn new(depth: usize, step: Option<Step>, origin: Option<ChildOrigin>) -> Self {
        TreeNode {
            depth,
            step,
            origin,
            votes: None,
            sub_questions: Vec::new(),
            branches: Vec::new(),
            terminal: None,
            children: Vec::new(),
            retained_child: None,
            zero_reward: false,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Nodes along the retained path, starting with `self`.
    pub fn retained_path(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        let mut node = self;
        loop {
            out.push(node);
            match node.retained_child.and_then(|i| node.children.get(i)) {
                Some(c) => node = c,
                None => return out,
            }
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a TreeNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn leaf_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |node| n += usize::from(node.is_leaf()));
        n
    }

    /// Whether any node on the retained path was flagged `zero_reward`.
    pub fn retained_path_flagged(&self) -> bool {
        self.retained_path().iter().any(|n| n.zero_reward)
    }
}

/// Per-question cost counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpansionLedger {
    /// Termination votes and candidate generations, including malformed
    /// retries.
    pub policy_calls: u64,
    /// Final-answer completions.
    pub answer_calls: u64,
    pub rollouts: u64,
    /// Policy turns issued inside rollouts.
    pub rollout_policy_calls: u64,
    /// Sub-query retrievals made while expanding the tree.
    pub retrieval_calls: u64,
    /// Searches executed inside rollouts.
    pub rollout_retrieval_calls: u64,
    /// Nodes whose decisions were expanded.
    pub nodes_expanded: u64,
    pub leaf_nodes: u64,
    /// Kept out of snapshots so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl ExpansionLedger {
    /// The quantity the closed-form counts describe: leaves for FullNode,
    /// sampling calls plus rollout turns otherwise.
    pub fn comparable_count(&self, strategy: Strategy) -> u128 {
        match strategy {
            Strategy::FullNode => u128::from(self.leaf_nodes),
            _ => u128::from(self.policy_calls + self.rollout_policy_calls),
        }
    }

    pub fn total_policy_calls(&self) -> u64 {
        self.policy_calls + self.answer_calls + self.rollout_policy_calls
    }

    pub fn add(&mut self, other: &ExpansionLedger) {
        self.policy_calls += other.policy_calls;
        self.answer_calls += other.answer_calls;
        self.rollouts += other.rollouts;
        self.rollout_policy_calls += other.rollout_policy_calls;
        self.retrieval_calls += other.retrieval_calls;
        self.rollout_retrieval_calls += other.rollout_retrieval_calls;
        self.nodes_expanded += other.nodes_expanded;
        self.leaf_nodes += other.leaf_nodes;
        self.wall_time_secs += other.wall_time_secs;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub depth: Option<usize>,
    pub reason: String,
}

/// Everything recorded for one question; the sole input to export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub schema_version: u32,
    pub question: Question,
    pub config: ExpansionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Box<TreeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
    pub ledger: ExpansionLedger,
}

impl TreeSnapshot {
    pub fn strategy(&self) -> Strategy {
        self.config.strategy
    }

    pub fn is_ok(&self) -> bool {
        self.tree.is_some() && self.failure.is_none()
    }
}

//! SFT chains and DPO preference pairs from tree snapshots.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::expansion::{argmax, Candidate, CandidateKind, Strategy, TreeNode, TreeSnapshot};
use crate::mdp::{render_step, serialize_state, HistoryTemplate, State};
use crate::metrics::Score;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExportError {
    #[error("snapshot records a failed expansion: {0}")]
    Failed(String),
    #[error("snapshot has no tree")]
    NoTree,
    #[error("retained path does not end in a terminal answer")]
    Unterminated,
    #[error("path selection needs alternative chains; this snapshot was built with pruning")]
    RequiresAlternatives,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStrategy {
    #[default]
    Retained,
    MostRetrievalCost,
    LeastRetrievalCost,
}

/// A root-to-terminal path as a terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub state: State,
    pub score: Score,
    /// Some layer on the path had only zero-reward candidates.
    pub flagged: bool,
}

fn tree_of(snapshot: &TreeSnapshot) -> Result<&TreeNode, ExportError> {
    if let Some(f) = &snapshot.failure {
        return Err(ExportError::Failed(f.reason.clone()));
    }
    snapshot.tree.as_deref().ok_or(ExportError::NoTree)
}

fn chain_from(snapshot: &TreeSnapshot, path: &[&TreeNode]) -> Option<Chain> {
    let mut state = State::initial(snapshot.question.clone());
    for node in &path[1..] {
        state = state.with_step(node.step.clone()?);
    }
    let last = path.last()?;
    let terminal = last.terminal.as_ref()?;
    Some(Chain {
        state: state.terminated(terminal.answer.clone()),
        score: terminal.score,
        flagged: path.iter().any(|n| n.zero_reward),
    })
}

/// The retained path of the tree.
pub fn extract_chain(snapshot: &TreeSnapshot) -> Result<Chain, ExportError> {
    let root = tree_of(snapshot)?;
    chain_from(snapshot, &root.retained_path()).ok_or(ExportError::Unterminated)
}

/// Every root-to-terminal path, in pre-order.
pub fn complete_chains(snapshot: &TreeSnapshot) -> Result<Vec<Chain>, ExportError> {
    fn visit<'t>(snapshot: &TreeSnapshot, node: &'t TreeNode, path: &mut Vec<&'t TreeNode>, out: &mut Vec<Chain>) {
        path.push(node);
        if let Some(c) = chain_from(snapshot, path).filter(|_| node.terminal.is_some()) {
            out.push(c);
        }
        for child in &node.children {
            visit(snapshot, child, path, out);
        }
        path.pop();
    }
    let root = tree_of(snapshot)?;
    let mut out = Vec::new();
    visit(snapshot, root, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Picks the chain to train on.
pub fn select_chain(snapshot: &TreeSnapshot, strategy: PathStrategy) -> Result<Chain, ExportError> {
    if strategy == PathStrategy::Retained {
        return extract_chain(snapshot);
    }
    if snapshot.strategy() == Strategy::Pruning {
        tree_of(snapshot)?;
        return Err(ExportError::RequiresAlternatives);
    }
    let chains = complete_chains(snapshot)?;
    let best = chains.iter().map(|c| c.score.value()).fold(f64::NEG_INFINITY, f64::max);
    let mut pick: Option<&Chain> = None;
    for c in chains.iter().filter(|c| c.score.value() == best) {
        let n = c.state.retrieval_count();
        let better = match pick {
            None => true,
            Some(p) if strategy == PathStrategy::MostRetrievalCost => n > p.state.retrieval_count(),
            Some(p) => n < p.state.retrieval_count(),
        };
        if better {
            pick = Some(c);
        }
    }
    pick.cloned().ok_or(ExportError::Unterminated)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub question_id: String,
    pub segment_index: usize,
    pub input: String,
    pub output: String,
}

/// Splits a terminal state at its retrieval steps. Each output runs up to and
/// including a sub-query line (or to the final answer); the next input adds
/// that output and the retrieved documents.
pub fn segment_chain(state: &State, template: &HistoryTemplate) -> Vec<(String, String)> {
    let mut segments = Vec::new();
    let mut input = template.question_block(&state.question.text);
    let mut output = String::new();
    for (i, step) in state.steps.iter().enumerate() {
        let (head, docs) = render_step(template, i + 1, step);
        output.push_str(&head);
        if step.resolution.is_retrieval() {
            let next = alloc::format!("{input}{output}{docs}");
            segments.push((core::mem::replace(&mut input, next), core::mem::take(&mut output)));
        }
    }
    if let Some(answer) = &state.final_answer {
        output.push_str(&template.final_answer_line(answer));
    }
    segments.push((input, output));
    segments
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftOptions {
    pub strategy: PathStrategy,
    /// Chains whose final score is not above this are dropped.
    pub min_final_reward: f64,
}

impl Default for SftOptions {
    fn default() -> Self {
        SftOptions { strategy: PathStrategy::Retained, min_final_reward: 0.0 }
    }
}

/// SFT segments of the selected chain; empty when the chain falls at or below
/// the reward floor.
pub fn export_sft(snapshot: &TreeSnapshot, options: &SftOptions, template: &HistoryTemplate) -> Result<Vec<SftExample>, ExportError> {
    let chain = select_chain(snapshot, options.strategy)?;
    if chain.score.value() <= options.min_final_reward {
        return Ok(Vec::new());
    }
    Ok(segment_chain(&chain.state, template)
        .into_iter()
        .enumerate()
        .map(|(i, (input, output))| SftExample {
            question_id: snapshot.question.id.clone(),
            segment_index: i,
            input,
            output,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    Decision,
    Execution,
}

/// What the two sides of a pair disagree on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairTarget {
    Termination,
    Retrieval,
    SubQuestion,
    SelfAnswer,
    SubQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoPair {
    pub question_id: String,
    pub layer: usize,
    pub pair_type: PairType,
    pub target: PairTarget,
    pub prefix: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_reward: Score,
    pub rejected_reward: Score,
}

struct PairSink<'a> {
    question_id: &'a str,
    margin: f64,
    out: Vec<DpoPair>,
}

impl PairSink<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        layer: usize,
        pair_type: PairType,
        target: PairTarget,
        prefix: &str,
        chosen: (String, Score),
        rejected: (String, Score),
    ) {
        let gap = chosen.1.value() - rejected.1.value();
        if gap > 0.0 && gap >= self.margin {
            self.out.push(DpoPair {
                question_id: self.question_id.into(),
                layer,
                pair_type,
                target,
                prefix: prefix.into(),
                chosen: chosen.0,
                rejected: rejected.0,
                chosen_reward: chosen.1,
                rejected_reward: rejected.1,
            });
        }
    }

    /// Best candidate of the set against each scored sibling.
    fn executions(&mut self, layer: usize, target: PairTarget, prefix: &str, set: &[Candidate], render: impl Fn(&Candidate) -> String) {
        let Some(best) = argmax(set) else { return };
        let Some(best_reward) = set[best].reward else { return };
        for (i, c) in set.iter().enumerate() {
            if let (true, Some(r)) = (i != best, c.reward) {
                self.push(layer, PairType::Execution, target, prefix, (render(&set[best]), best_reward), (render(c), r));
            }
        }
    }
}

fn best_scored(set: &[Candidate]) -> Option<&Candidate> {
    argmax(set).map(|i| &set[i]).filter(|c| c.reward.is_some())
}

/// Preference pairs from every node: executions against their best sibling,
/// and opposing decision branches where both were scored.
pub fn export_dpo(snapshot: &TreeSnapshot, margin: f64, template: &HistoryTemplate) -> Vec<DpoPair> {
    let Ok(root) = tree_of(snapshot) else { return Vec::new() };
    let mut sink = PairSink { question_id: &snapshot.question.id, margin, out: Vec::new() };
    let state = State::initial(snapshot.question.clone());
    dpo_node(&mut sink, root, &state, template);
    sink.out
}

fn dpo_node(sink: &mut PairSink<'_>, node: &TreeNode, state: &State, template: &HistoryTemplate) {
    let layer = node.depth;
    let index = state.steps.len() + 1;
    let mut prefix = template.question_block(&state.question.text);
    prefix.push_str(&serialize_state(state, template));

    if let (Some(t), Some(best)) = (node.terminal.as_ref().filter(|t| !t.forced), best_scored(&node.sub_questions)) {
        let stop = (template.final_answer_line(&t.answer), t.score);
        let go = (template.sub_question_line(index, &best.content), best.reward.unwrap_or(Score::ZERO));
        let (chosen, rejected) = if stop.1.value() >= go.1.value() { (stop, go) } else { (go, stop) };
        sink.push(layer, PairType::Decision, PairTarget::Termination, &prefix, chosen, rejected);
    }
    sink.executions(layer, PairTarget::SubQuestion, &prefix, &node.sub_questions, |c| template.sub_question_line(index, &c.content));

    for branch in &node.branches {
        let pending = alloc::format!("{prefix}{}", template.sub_question_line(index, &branch.sub_question));
        let answer_line = |c: &Candidate| template.self_answer_line(index, &c.content);
        let query_line = |c: &Candidate| template.sub_query_line(index, &c.content);
        if let (Some(a), Some(q)) = (best_scored(&branch.self_answers), best_scored(&branch.sub_queries)) {
            let a = (answer_line(a), a.reward.unwrap_or(Score::ZERO));
            let q = (query_line(q), q.reward.unwrap_or(Score::ZERO));
            let (chosen, rejected) = if a.1.value() >= q.1.value() { (a, q) } else { (q, a) };
            sink.push(layer, PairType::Decision, PairTarget::Retrieval, &pending, chosen, rejected);
        }
        sink.executions(layer, PairTarget::SelfAnswer, &pending, &branch.self_answers, answer_line);
        sink.executions(layer, PairTarget::SubQuery, &pending, &branch.sub_queries, query_line);
    }

    for child in &node.children {
        if let Some(step) = &child.step {
            dpo_node(sink, child, &state.with_step(step.clone()), template);
        }
    }
}

/// Which decision pairs a snapshot can yield.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecisionAvailability {
    /// Branches where both retrieval options were scored.
    pub retrieval_scored: usize,
    /// Branches where the self-answer gate skipped retrieval.
    pub retrieval_skipped: usize,
    /// Nodes where both termination options were scored.
    pub termination_scored: usize,
}

pub fn decision_availability(snapshot: &TreeSnapshot) -> DecisionAvailability {
    let mut a = DecisionAvailability::default();
    if let Ok(root) = tree_of(snapshot) {
        root.walk(&mut |node| {
            for b in &node.branches {
                if b.retrieval_skipped {
                    a.retrieval_skipped += 1;
                } else if best_scored(&b.self_answers).is_some() && best_scored(&b.sub_queries).is_some() {
                    a.retrieval_scored += 1;
                }
            }
            let continued = best_scored(&node.sub_questions).is_some();
            if continued && node.terminal.as_ref().is_some_and(|t| !t.forced) {
                a.termination_scored += 1;
            }
        });
    }
    a
}

/// Number of candidates of `kind` across the tree.
pub fn candidate_count(root: &TreeNode, kind: CandidateKind) -> usize {
    let mut n = 0;
    root.walk(&mut |node| {
        n += match kind {
            CandidateKind::SubQuestion => node.sub_questions.len(),
            CandidateKind::SelfAnswer => node.branches.iter().map(|b| b.self_answers.len()).sum(),
            CandidateKind::SubQuery => node.branches.iter().map(|b| b.sub_queries.len()).sum(),
        };
    });
    n
}

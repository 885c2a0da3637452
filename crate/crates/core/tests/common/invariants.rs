//! Independent checks of the pruning contract on a built tree.

use ragtree_core::expansion::{Candidate, CandidateKind, ExpansionConfig, ExpansionLedger, TreeNode};
use ragtree_core::Resolution;

/// First index holding the maximum reward.
fn first_max(set: &[Candidate]) -> Option<usize> {
    let rewards: Vec<f64> = set.iter().map(|c| c.reward.map(|r| r.value()).unwrap_or(f64::NEG_INFINITY)).collect();
    let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rewards.iter().position(|r| *r == max)
}

fn retained(set: &[Candidate]) -> Vec<usize> {
    set.iter().enumerate().filter(|(_, c)| c.retained).map(|(i, _)| i).collect()
}

/// Reward is the mean of the rollout scores and everything lies in [0, 1].
pub fn check_reward(c: &Candidate, n: usize) -> Result<(), String> {
    if c.rollouts.len() != n {
        return Err(format!("{} has {} rollouts, expected {n}", c.content, c.rollouts.len()));
    }
    let mean = c.rollouts.iter().map(|r| r.score.value()).sum::<f64>() / n as f64;
    let reward = c.reward.ok_or("unscored candidate")?.value();
    if (reward - mean).abs() > 1e-12 || !(0.0..=1.0).contains(&reward) {
        return Err(format!("reward {reward} vs mean {mean}"));
    }
    for r in &c.rollouts {
        if !(0.0..=1.0).contains(&r.score.value()) {
            return Err("rollout score out of range".into());
        }
        if r.final_answer.is_none() && r.score.value() != 0.0 {
            return Err("unanswered rollout scored".into());
        }
    }
    Ok(())
}

pub fn check_pruning(root: &TreeNode, cfg: &ExpansionConfig, ledger: &ExpansionLedger) -> Result<(), String> {
    let mut retrievals = 0u64;
    check_node(root, cfg, &mut retrievals)?;
    if retrievals != ledger.retrieval_calls {
        return Err(format!("ledger counts {} retrievals, tree holds {retrievals}", ledger.retrieval_calls));
    }
    let path = root.retained_path();
    let last = path.last().unwrap();
    let t = last.terminal.as_ref().ok_or("retained path does not terminate")?;
    let majority = last.votes.is_some_and(|v| 2 * v.terminate > v.total());
    if !(majority || last.depth == cfg.t_max) {
        return Err("terminated without majority or depth cap".into());
    }
    if t.forced != (last.depth == cfg.t_max) {
        return Err("forced flag disagrees with depth".into());
    }
    Ok(())
}

fn check_node(node: &TreeNode, cfg: &ExpansionConfig, retrievals: &mut u64) -> Result<(), String> {
    let d = node.depth;
    if d == cfg.t_max {
        let t = node.terminal.as_ref().ok_or("no answer at depth cap")?;
        if !t.forced || node.votes.is_some() || !node.children.is_empty() {
            return Err(format!("depth-cap node at {d} malformed"));
        }
        return Ok(());
    }
    let votes = node.votes.ok_or("missing votes")?;
    if votes.total() != cfg.majority_samples {
        return Err(format!("{} votes, expected {}", votes.total(), cfg.majority_samples));
    }
    let majority = 2 * votes.terminate > votes.total();
    if majority {
        if node.terminal.as_ref().is_none_or(|t| t.forced) || !node.children.is_empty() || !node.sub_questions.is_empty() {
            return Err(format!("majority at depth {d} did not terminate cleanly"));
        }
        return Ok(());
    }
    if node.terminal.is_some() || node.children.len() != 1 || node.retained_child != Some(0) {
        return Err(format!("continuing node at depth {d} has wrong shape"));
    }
    for c in &node.sub_questions {
        check_reward(c, cfg.n)?;
    }
    let sq = first_max(&node.sub_questions).ok_or("no sub-questions")?;
    if retained(&node.sub_questions) != vec![sq] {
        return Err(format!("sub-question retention {:?} != argmax {sq}", retained(&node.sub_questions)));
    }
    if node.branches.len() != 1 {
        return Err("expected one retrieval branch".into());
    }
    let b = &node.branches[0];
    if b.sub_question != node.sub_questions[sq].content {
        return Err("branch is not for the retained sub-question".into());
    }
    for c in b.self_answers.iter().chain(&b.sub_queries) {
        check_reward(c, cfg.n)?;
    }
    let best_self = first_max(&b.self_answers);
    let best_self_reward = best_self.map(|i| b.self_answers[i].reward.unwrap().value());
    let confident = best_self_reward.is_some_and(|r| r >= cfg.tau);
    if confident != b.retrieval_skipped || confident != b.sub_queries.is_empty() {
        return Err(format!("gate mismatch at depth {d}: best self-answer {best_self_reward:?}"));
    }
    let child = &node.children[0];
    let step = child.step.as_ref().ok_or("child without step")?;
    let origin = child.origin.ok_or("child without origin")?;
    if confident {
        if retained(&b.self_answers) != vec![best_self.unwrap()] {
            return Err("self-answer retention is not the argmax".into());
        }
        if origin.kind != CandidateKind::SelfAnswer
            || step.resolution != (Resolution::SelfAnswer { answer: b.self_answers[best_self.unwrap()].content.clone() })
        {
            return Err("child does not follow the retained self-answer".into());
        }
    } else {
        *retrievals += b.sub_queries.len() as u64;
        let best = first_max(&b.sub_queries).ok_or("no sub-queries")?;
        if !retained(&b.self_answers).is_empty() || retained(&b.sub_queries) != vec![best] {
            return Err("sub-query retention is not the argmax".into());
        }
        match &step.resolution {
            Resolution::Retrieved { sub_query, documents } if *sub_query == b.sub_queries[best].content => {
                if documents.len() > cfg.top_k {
                    return Err("too many documents".into());
                }
            }
            _ => return Err("child does not follow the retained sub-query".into()),
        }
    }
    check_node(child, cfg, retrievals)
}

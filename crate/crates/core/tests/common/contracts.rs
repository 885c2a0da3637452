//! Export contracts checked against an independent walk of the tree.

use std::collections::BTreeSet;

use ragtree_core::expansion::{TreeNode, TreeSnapshot};
use ragtree_core::export::{export_dpo, export_sft, segment_chain, select_chain, DpoPair, PathStrategy, SftOptions};
use ragtree_core::mdp::{serialize_chain, serialize_state, HistoryTemplate, State};

/// Every prefix a pair may legally carry: each node's serialized state, and
/// that state with each of its pending sub-questions.
pub fn legal_prefixes(snapshot: &TreeSnapshot, template: &HistoryTemplate) -> BTreeSet<String> {
    fn visit(node: &TreeNode, state: &State, t: &HistoryTemplate, out: &mut BTreeSet<String>) {
        let base = format!("{}{}", t.question_block(&state.question.text), serialize_state(state, t));
        for b in &node.branches {
            out.insert(format!("{base}{}", t.sub_question_line(state.steps.len() + 1, &b.sub_question)));
        }
        out.insert(base);
        for c in &node.children {
            visit(c, &state.with_step(c.step.clone().unwrap()), t, out);
        }
    }
    let mut out = BTreeSet::new();
    if let Some(root) = snapshot.tree.as_deref() {
        visit(root, &State::initial(snapshot.question.clone()), template, &mut out);
    }
    out
}

pub fn check_dpo(pairs: &[DpoPair], snapshot: &TreeSnapshot, margin: f64, template: &HistoryTemplate) -> Result<(), String> {
    let legal = legal_prefixes(snapshot, template);
    for p in pairs {
        let gap = p.chosen_reward.value() - p.rejected_reward.value();
        if gap < margin || gap <= 0.0 {
            return Err(format!("pair gap {gap} below margin {margin}"));
        }
        if !legal.contains(&p.prefix) {
            return Err(format!("prefix is not a shared state: {:?}", p.prefix));
        }
        if p.chosen == p.rejected {
            return Err("chosen equals rejected".into());
        }
    }
    Ok(())
}

/// Segments chain into each other and the last one closes the full chain.
pub fn check_sft(snapshot: &TreeSnapshot, strategy: PathStrategy, template: &HistoryTemplate) -> Result<usize, String> {
    let chain = select_chain(snapshot, strategy).map_err(|e| e.to_string())?;
    let options = SftOptions { strategy, min_final_reward: -1.0 };
    let segs = export_sft(snapshot, &options, template).map_err(|e| e.to_string())?;
    if segs.is_empty() {
        return Err("no segments".into());
    }
    for w in segs.windows(2) {
        if !w[1].input.starts_with(&format!("{}{}", w[0].input, w[0].output)) {
            return Err("segment input does not extend the previous segment".into());
        }
    }
    let last = segs.last().unwrap();
    let full = serialize_chain(&chain.state, template);
    if format!("{}{}", last.input, last.output) != full {
        return Err("segments do not reconstruct the chain".into());
    }
    let retrievals = chain.state.retrieval_count();
    if segs.len() != retrievals + 1 {
        return Err(format!("{} segments for {retrievals} retrievals", segs.len()));
    }
    if segment_chain(&chain.state, template).len() != segs.len() {
        return Err("segment count mismatch".into());
    }
    Ok(segs.len())
}

/// Exporting twice gives identical bytes.
pub fn check_reexport(snapshot: &TreeSnapshot, template: &HistoryTemplate) -> Result<(), String> {
    let options = SftOptions { min_final_reward: -1.0, ..SftOptions::default() };
    let a = serde_json::to_string(&(export_sft(snapshot, &options, template).ok(), export_dpo(snapshot, 0.1, template))).unwrap();
    let b = serde_json::to_string(&(export_sft(snapshot, &options, template).ok(), export_dpo(snapshot, 0.1, template))).unwrap();
    if a != b {
        return Err("re-export differs".into());
    }
    Ok(())
}

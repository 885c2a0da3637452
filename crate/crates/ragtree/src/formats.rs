//! Line formats of the SFT and DPO exports and the bench CSV.

use ragtree_core::export::{DpoPair, PairType, SftExample};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub segment: usize,
    pub input: String,
    pub output: String,
}

impl From<SftExample> for SftRecord {
    fn from(e: SftExample) -> Self {
        SftRecord { id: e.question_id, segment: e.segment_index, input: e.input, output: e.output }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoRecord {
    pub id: String,
    pub layer: usize,
    pub pair_type: PairType,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
}

impl From<DpoPair> for DpoRecord {
    fn from(p: DpoPair) -> Self {
        DpoRecord {
            id: p.question_id,
            layer: p.layer,
            pair_type: p.pair_type,
            prompt: p.prefix,
            chosen: p.chosen,
            rejected: p.rejected,
            chosen_reward: p.chosen_reward.value(),
            rejected_reward: p.rejected_reward.value(),
        }
    }
}

/// Per-snapshot note on which decision pairs could exist at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoMeta {
    pub id: String,
    pub strategy: String,
    pub retrieval_scored: usize,
    pub retrieval_skipped: usize,
    pub termination_scored: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: String,
    pub status: String,
    pub k: usize,
    pub n: usize,
    pub t_max: usize,
    pub questions: usize,
    pub failed: usize,
    /// Per question: policy samples plus rollout turns, or leaves for full-node.
    pub count_per_question: u128,
    pub theoretical: u128,
    pub policy_calls: u64,
    pub rollout_policy_calls: u64,
    pub answer_calls: u64,
    pub retrieval_calls: u64,
    pub leaf_nodes: u64,
    pub wall_secs_total: f64,
    pub wall_secs_per_question: f64,
}

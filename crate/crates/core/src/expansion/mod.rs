//! Search-tree expansion over termination and retrieval decisions.
//!
//! Three strategies share the same building blocks:
//!
//! * [`Strategy::Pruning`] keeps only the best-rewarded execution per decision
//!   and skips retrieval when a self-answer already reaches `tau`.
//! * [`Strategy::NoPruning`] keeps the best execution of *each* branch of both
//!   decisions (terminate / continue, self-knowledge / retrieve).
//! * [`Strategy::FullNode`] keeps every execution and runs no rollouts.
//!
//! Rewards are rollout means; see [`Session::run_rollout`].

mod config;
mod counts;
mod engine;
mod tree;

pub use config::{ConfigError, ExpansionConfig, Strategy};
pub use counts::theoretical_counts;
pub use engine::{ExpansionError, Expander, RetrievalOutcome, Session, TerminationOutcome};
pub use tree::{
    argmax, Candidate, CandidateKind, ChildOrigin, ExpansionLedger, FailureRecord, RetrievalBranch,
    RolloutResult, TerminalAnswer, TerminationVotes, TreeNode, TreeSnapshot, SNAPSHOT_SCHEMA_VERSION,
};

//! Process-supervised data construction for agentic retrieval-augmented
//! generation.
//!
//! A question is solved as a sequence of decisions: at every step the policy
//! either terminates with a final answer or poses a sub-question, and each
//! sub-question is resolved from the model's own knowledge or through a
//! retrieval call. [`expansion`] grows a search tree over those decisions,
//! scores every candidate with rollout-averaged correctness, and prunes all
//! but the best branch. [`export`] turns finished trees into SFT chains and
//! DPO preference pairs, and [`agent`] runs the `<search>`/`<answer>` loop used
//! both for rollouts and for evaluation.
//!
//! The crate is `no_std` (with `alloc`). Backends are plain traits
//! ([`policy::Policy`], [`retrieval::Retriever`]); the `ragtree` crate provides
//! HTTP implementations, file formats and the command line.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod expansion;
pub mod export;
pub mod mdp;
pub mod metrics;
pub mod parse;
pub mod policy;
pub mod prompts;
pub mod retrieval;
pub mod scripted;
pub mod seed;

pub use mdp::{Document, Question, Resolution, State, Step};
pub use metrics::{exact_match, f1_score, normalize_answer, MetricError, Score, ScoreMetric};

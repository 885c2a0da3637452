use serde::{Deserialize, Serialize};

use crate::metrics::ScoreMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Pruning,
    NoPruning,
    FullNode,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Pruning, Strategy::NoPruning, Strategy::FullNode];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Pruning => "pruning",
            Strategy::NoPruning => "no_pruning",
            Strategy::FullNode => "full_node",
        }
    }
}

impl core::str::FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pruning" => Ok(Strategy::Pruning),
            "no_pruning" | "no-pruning" => Ok(Strategy::NoPruning),
            "full_node" | "full-node" => Ok(Strategy::FullNode),
            _ => Err(ConfigError::UnknownStrategy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    /// Candidate executions sampled per decision.
    pub k: usize,
    /// Rollouts per candidate.
    pub n: usize,
    /// Maximum number of decision iterations.
    pub t_max: usize,
    /// Self-answer reward at or above which retrieval is skipped.
    pub tau: f64,
    pub score_metric: ScoreMetric,
    pub strategy: Strategy,
    pub seed: u64,
    /// Termination votes drawn per node.
    pub majority_samples: usize,
    pub top_k: usize,
    /// Retrieved document text is cut to this many characters.
    pub doc_char_budget: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k: 3,
            n: 4,
            t_max: 4,
            tau: 0.7,
            score_metric: ScoreMetric::F1,
            strategy: Strategy::Pruning,
            seed: 0,
            majority_samples: 5,
            top_k: 3,
            doc_char_budget: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("tau must lie in (0, 1]")]
    TauOutOfRange,
    #[error("unknown strategy (expected pruning, no_pruning or full_node)")]
    UnknownStrategy,
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("k", self.k),
            ("n", self.n),
            ("t_max", self.t_max),
            ("majority_samples", self.majority_samples),
            ("top_k", self.top_k),
            ("doc_char_budget", self.doc_char_budget),
        ] {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::TauOutOfRange);
        }
        Ok(())
    }
}

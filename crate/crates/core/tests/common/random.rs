//! Randomized fixture trees driven by a single seed.

use ragtree_core::policy::PolicyRole;
use ragtree_core::seed::{derive, hash_str};

use super::{rollout, tagged, SequencedPolicy, GOLD};

#[derive(Debug, Clone, Copy)]
pub struct RandomPlan {
    pub seed: u64,
    pub n: usize,
    /// Percent chance that a vote terminates.
    pub terminate_pct: u64,
    /// Percent chance that a sample is malformed.
    pub malformed_pct: u64,
    /// Distinct contents per set; small values force duplicates.
    pub variety: u64,
}

impl RandomPlan {
    pub fn into_policy(self) -> SequencedPolicy {
        SequencedPolicy::new(move |req, index| {
            let prompt = req.rendered_prompt.as_str();
            let h = derive(self.seed, &[hash_str(req.role.as_str()), hash_str(prompt), index as u64]);
            let roll = |salt: u64| derive(h, &[salt]) % 100;
            let content = |prefix: &str| {
                let id = derive(h, &[1]) % self.variety;
                // Reward depends on the content so duplicates agree.
                let r = derive(self.seed, &[hash_str(prefix), id, hash_str(prompt)]) % (self.n as u64 + 1);
                format!("{prefix}{id} [[{}]]", r as f64 / self.n as f64)
            };
            if req.role != PolicyRole::Rollout && req.temperature > 0.0 && roll(2) < self.malformed_pct {
                return "unparseable".into();
            }
            match req.role {
                PolicyRole::TerminationDecision => {
                    if req.temperature == 0.0 || roll(3) < self.terminate_pct {
                        let answer = if roll(4) < 50 { GOLD } else { "not her" };
                        tagged("answer", answer)
                    } else {
                        tagged("question", "unused")
                    }
                }
                PolicyRole::SubQuestionGen => tagged("question", &content("subq")),
                PolicyRole::SelfAnswer => tagged("answer", &content("ans")),
                PolicyRole::SubQueryGen => content("curie query "),
                PolicyRole::Rollout => rollout(prompt, index, self.n),
            }
        })
    }
}

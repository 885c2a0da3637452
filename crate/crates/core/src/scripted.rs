//! Deterministic policies for tests, fixtures and benchmarks.
//!
//! A [`ScriptedPolicy`] is a pure function of the request, so reruns with the
//! same seeds are byte-identical.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::policy::{BackendError, Policy, PolicyRequest, PolicyResponse, PolicyRole};

/// Marker that ends every template; text after the last one is the part
/// written by the model (or the agent loop) so far.
pub const OUTPUT_MARKER: &str = "### Your Output";

type Responder = dyn Fn(&PolicyRequest) -> String + Send + Sync;

pub struct ScriptedPolicy {
    respond: Box<Responder>,
}

impl core::fmt::Debug for ScriptedPolicy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("ScriptedPolicy")
    }
}

impl ScriptedPolicy {
    pub fn new(respond: impl Fn(&PolicyRequest) -> String + Send + Sync + 'static) -> Self {
        ScriptedPolicy { respond: Box::new(respond) }
    }

    pub fn from_script(script: Script) -> Self {
        ScriptedPolicy::new(move |req| script.respond(req))
    }

    /// The benchmark regime used to check expansion counts: votes always
    /// continue below `t_max`, every sample is distinct, each rollout searches
    /// `t_max - 1` times and then answers wrongly (so no retrieval is skipped).
    /// Final-answer requests (temperature 0) always answer.
    pub fn counting(t_max: usize) -> Self {
        ScriptedPolicy::from_script(Script::counting(t_max))
    }
}

impl Policy for ScriptedPolicy {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        Ok(PolicyResponse::text((self.respond)(request)))
    }
}

/// Number of completed searches in the model-written part of a prompt.
pub fn searches_in_output(prompt: &str) -> usize {
    let tail = match prompt.rfind(OUTPUT_MARKER) {
        Some(i) => &prompt[i..],
        None => prompt,
    };
    tail.matches("</information>").count()
}

/// Ordered response rules; the first matching rule answers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Script {
    pub rules: Vec<Rule>,
    /// Returned when no rule matches.
    #[serde(default)]
    pub fallback: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Rule {
    pub role: Option<PolicyRole>,
    /// Substring the rendered prompt must contain.
    pub contains: Option<String>,
    /// Substring the rendered prompt must not contain.
    pub excludes: Option<String>,
    pub min_searches: Option<usize>,
    pub max_searches: Option<usize>,
    /// Matches only requests sampled at or below this temperature.
    pub max_temperature: Option<f64>,
    /// Chosen by `seed % len`; `{seed}` is replaced with the request seed.
    pub responses: Vec<String>,
}

impl Rule {
    pub fn for_role(role: PolicyRole, responses: Vec<String>) -> Self {
        Rule { role: Some(role), responses, ..Rule::default() }
    }

    fn matches(&self, req: &PolicyRequest) -> bool {
        if self.role.is_some_and(|r| r != req.role) {
            return false;
        }
        if self.contains.as_deref().is_some_and(|c| !req.rendered_prompt.contains(c)) {
            return false;
        }
        if self.excludes.as_deref().is_some_and(|c| req.rendered_prompt.contains(c)) {
            return false;
        }
        if self.max_temperature.is_some_and(|t| req.temperature > t) {
            return false;
        }
        if self.min_searches.is_some() || self.max_searches.is_some() {
            let s = searches_in_output(&req.rendered_prompt);
            if self.min_searches.is_some_and(|m| s < m) || self.max_searches.is_some_and(|m| s > m) {
                return false;
            }
        }
        !self.responses.is_empty()
    }
}

impl Script {
    pub fn respond(&self, req: &PolicyRequest) -> String {
        let seed = req.seed.unwrap_or(0);
        match self.rules.iter().find(|r| r.matches(req)) {
            Some(rule) => {
                let i = (seed % rule.responses.len() as u64) as usize;
                rule.responses[i].replace("{seed}", &seed.to_string())
            }
            None => self.fallback.clone(),
        }
    }

    pub fn counting(t_max: usize) -> Self {
        let last_step = format!("Sub-question {t_max}: ");
        let one = |s: &str| vec![s.to_string()];
        let mut script = Script {
            rules: vec![
                Rule {
                    role: Some(PolicyRole::TerminationDecision),
                    max_temperature: Some(0.0),
                    responses: one("<reasoning> enough </reasoning> <answer> final {seed} </answer>"),
                    ..Rule::default()
                },
                Rule {
                    role: Some(PolicyRole::TerminationDecision),
                    contains: Some(last_step),
                    responses: one("<reasoning> enough </reasoning> <answer> final {seed} </answer>"),
                    ..Rule::default()
                },
                Rule::for_role(
                    PolicyRole::TerminationDecision,
                    one("<reasoning> more needed </reasoning> <question> follow up {seed} </question>"),
                ),
                Rule::for_role(
                    PolicyRole::SubQuestionGen,
                    one("<reasoning> split </reasoning> <question> part {seed} </question>"),
                ),
                Rule::for_role(PolicyRole::SelfAnswer, one("<reasoning> guess </reasoning> <answer> guess {seed} </answer>")),
                Rule::for_role(PolicyRole::SubQueryGen, one("lookup {seed}")),
                Rule::for_role(PolicyRole::Rollout, one("<think> done </think> <answer> wrong {seed} </answer>")),
            ],
            fallback: String::new(),
        };
        if t_max >= 2 {
            let search = Rule {
                role: Some(PolicyRole::Rollout),
                max_searches: Some(t_max - 2),
                responses: one("<think> search more </think> <search> probe {seed} </search>"),
                ..Rule::default()
            };
            let at = script.rules.len() - 1;
            script.rules.insert(at, search);
        }
        script
    }
}

//! The language-model interface.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// The five prompt roles used while growing a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRole {
    TerminationDecision,
    SubQuestionGen,
    SelfAnswer,
    SubQueryGen,
    Rollout,
}

impl PolicyRole {
    pub const ALL: [PolicyRole; 5] = [
        PolicyRole::TerminationDecision,
        PolicyRole::SubQuestionGen,
        PolicyRole::SelfAnswer,
        PolicyRole::SubQueryGen,
        PolicyRole::Rollout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyRole::TerminationDecision => "termination_decision",
            PolicyRole::SubQuestionGen => "sub_question_gen",
            PolicyRole::SelfAnswer => "self_answer",
            PolicyRole::SubQueryGen => "sub_query_gen",
            PolicyRole::Rollout => "rollout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub role: PolicyRole,
    pub rendered_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Generation stops after any of these strings; backends must keep the
    /// stop string at the end of the returned text.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResponse {
    pub raw_text: String,
    #[serde(default)]
    pub usage: Usage,
}

impl PolicyResponse {
    pub fn text(raw_text: impl Into<String>) -> Self {
        PolicyResponse { raw_text: raw_text.into(), usage: Usage::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Transport failures that outlived the retry budget.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The backend rejected the request (HTTP 4xx and similar).
    #[error("backend configuration error: {0}")]
    Configuration(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

pub trait Policy {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<P: Policy + ?Sized> Policy for alloc::boxed::Box<P> {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<P: Policy + ?Sized> Policy for alloc::sync::Arc<P> {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Sampling parameters per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Temperature for votes, candidate generation and rollouts.
    pub sampling_temperature: f64,
    /// Temperature for final-answer completions.
    pub answer_temperature: f64,
    pub decision_max_tokens: u32,
    pub rollout_max_tokens: u32,
    /// Extra attempts for a sample whose output does not parse.
    pub malformed_retries: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            sampling_temperature: 0.7,
            answer_temperature: 0.0,
            decision_max_tokens: 512,
            rollout_max_tokens: 1024,
            malformed_retries: 2,
        }
    }
}

/// Routes requests by role: self-answers go to the decision model, every
/// other role to the main model.
pub struct PolicySet<'a> {
    pub main: &'a dyn Policy,
    pub self_answer: &'a dyn Policy,
}

impl<'a> PolicySet<'a> {
    pub fn single(policy: &'a dyn Policy) -> Self {
        PolicySet { main: policy, self_answer: policy }
    }

    pub fn for_role(&self, role: PolicyRole) -> &'a dyn Policy {
        match role {
            PolicyRole::SelfAnswer => self.self_answer,
            _ => self.main,
        }
    }

    pub fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, BackendError> {
        self.for_role(request.role).complete(request)
    }
}

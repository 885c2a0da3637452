use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tree::{
    argmax, Candidate, CandidateKind, ChildOrigin, ExpansionLedger, FailureRecord, RetrievalBranch, RolloutResult,
    TerminalAnswer, TerminationVotes, TreeNode, TreeSnapshot, SNAPSHOT_SCHEMA_VERSION,
};
use super::{ConfigError, ExpansionConfig, Strategy};
use crate::agent::{events_for, AgentCaps, AgentRunner, AgentSettings};
use crate::mdp::{
    serialize_state, serialize_with_pending, Document, HistoryTemplate, Question, Resolution, State, Step,
};
use crate::metrics::{normalize_answer, MetricError, Score};
use crate::parse::{parse_self_answer, parse_sub_query, parse_sub_question, parse_termination};
use crate::parse::{AnswerParse, QueryParse, TerminationParse};
use crate::policy::{BackendError, GenerationSettings, PolicyRequest, PolicyRole, PolicySet};
use crate::prompts::{PromptTemplateSet, TemplateKind};
use crate::retrieval::{RetrievalRequest, Retriever};
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpansionError {
    #[error("node expansion failed at depth {depth}: {reason}")]
    NodeExpansionFailed { depth: usize, reason: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("rollout failed: {0}")]
    Rollout(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl ExpansionError {
    pub fn to_record(&self) -> FailureRecord {
        let depth = match self {
            ExpansionError::NodeExpansionFailed { depth, .. } => Some(*depth),
            _ => None,
        };
        FailureRecord { depth, reason: format!("{self}") }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminationOutcome {
    Terminated { votes: TerminationVotes, answer: TerminalAnswer },
    SubQuestionChosen { votes: TerminationVotes, candidates: Vec<Candidate>, chosen: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetrievalOutcome {
    SelfAnswerChosen { branch: RetrievalBranch, chosen: usize },
    SubQueryChosen { branch: RetrievalBranch, chosen: usize },
}

impl RetrievalOutcome {
    pub fn branch(&self) -> &RetrievalBranch {
        match self {
            RetrievalOutcome::SelfAnswerChosen { branch, .. } | RetrievalOutcome::SubQueryChosen { branch, .. } => branch,
        }
    }
}

/// Seed tags, one per kind of request.
const TAG_VOTE: u64 = 1;
const TAG_SUB_QUESTION: u64 = 2;
const TAG_SELF_ANSWER: u64 = 3;
const TAG_SUB_QUERY: u64 = 4;
const TAG_FINAL: u64 = 5;
const TAG_ROLLOUT: u64 = 6;

fn kind_tag(kind: CandidateKind) -> u64 {
    match kind {
        CandidateKind::SubQuestion => TAG_SUB_QUESTION,
        CandidateKind::SelfAnswer => TAG_SELF_ANSWER,
        CandidateKind::SubQuery => TAG_SUB_QUERY,
    }
}

/// Backends, templates and settings shared by every question of a run.
pub struct Expander<'a> {
    pub config: ExpansionConfig,
    pub policies: PolicySet<'a>,
    pub retriever: &'a dyn Retriever,
    pub templates: &'a PromptTemplateSet,
    pub history: &'a HistoryTemplate,
    pub generation: GenerationSettings,
}

impl<'a> Expander<'a> {
    pub fn session<'s>(&'s self, question: &'s Question) -> Session<'s, 'a> {
        Session { ex: self, question, ledger: ExpansionLedger::default() }
    }

    /// Grows the full tree for one question under the configured strategy.
    pub fn build_tree(&self, question: &Question) -> (Result<TreeNode, ExpansionError>, ExpansionLedger) {
        if let Err(e) = self.config.validate() {
            return (Err(e.into()), ExpansionLedger::default());
        }
        let mut session = self.session(question);
        let mut root = TreeNode::new(0, None, None);
        let state = State::initial(question.clone());
        let key = seed::derive(self.config.seed, &[seed::hash_str(&question.id)]);
        let result = session.grow(&state, &mut root, key);
        (result.map(|_| root), session.ledger)
    }

    pub fn snapshot(&self, question: &Question) -> TreeSnapshot {
        let (tree, ledger) = self.build_tree(question);
        let (tree, failure) = match tree {
            Ok(t) => (Some(Box::new(t)), None),
            Err(e) => (None, Some(e.to_record())),
        };
        TreeSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            question: question.clone(),
            config: self.config.clone(),
            tree,
            failure,
            ledger,
        }
    }
}

enum Counter {
    Sampling,
    Answer,
}

/// Expansion state for one question: the backends plus its ledger.
pub struct Session<'s, 'a> {
    ex: &'s Expander<'a>,
    question: &'s Question,
    pub ledger: ExpansionLedger,
}

impl<'s, 'a> Session<'s, 'a> {
    fn cfg(&self) -> &ExpansionConfig {
        &self.ex.config
    }

    fn failed(depth: usize, reason: &str) -> ExpansionError {
        ExpansionError::NodeExpansionFailed { depth, reason: reason.into() }
    }

    fn complete(&mut self, role: PolicyRole, prompt: &str, temperature: f64, seed: u64, counter: &Counter) -> Result<String, ExpansionError> {
        let request = PolicyRequest {
            role,
            rendered_prompt: prompt.into(),
            temperature,
            max_tokens: self.ex.generation.decision_max_tokens,
            seed: Some(seed),
            stop: Vec::new(),
        };
        match counter {
            Counter::Sampling => self.ledger.policy_calls += 1,
            Counter::Answer => self.ledger.answer_calls += 1,
        }
        Ok(self.ex.policies.complete(&request)?.raw_text)
    }

    /// One sample, resampled while `parse` rejects it. `None` once the retry
    /// budget is spent.
    fn sample_parsed<T>(
        &mut self,
        role: PolicyRole,
        prompt: &str,
        base_seed: u64,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, ExpansionError> {
        let temperature = self.ex.generation.sampling_temperature;
        for attempt in 0..=self.ex.generation.malformed_retries {
            let s = seed::derive(base_seed, &[u64::from(attempt)]);
            let text = self.complete(role, prompt, temperature, s, &Counter::Sampling)?;
            if let Some(v) = parse(&text) {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    fn termination_prompt(&self, state: &State) -> String {
        let history = serialize_state(state, self.ex.history);
        self.ex.templates.render(TemplateKind::TerminationDecision, &self.question.text, &history)
    }

    /// Draws `count` termination votes. Also returns the sub-questions that
    /// continuing votes proposed, in sample order.
    pub fn sample_votes(&mut self, state: &State, key: u64, count: usize) -> Result<(TerminationVotes, Vec<TerminationParse>), ExpansionError> {
        let prompt = self.termination_prompt(state);
        let mut votes = TerminationVotes::default();
        let mut parsed = Vec::with_capacity(count);
        for i in 0..count {
            let base = seed::derive(key, &[TAG_VOTE, i as u64]);
            let p = self.sample_parsed(PolicyRole::TerminationDecision, &prompt, base, |t| match parse_termination(t) {
                TerminationParse::Malformed => None,
                other => Some(other),
            })?;
            match &p {
                Some(TerminationParse::Terminate(_)) => votes.terminate += 1,
                Some(TerminationParse::Continue(_)) => votes.continue_ += 1,
                _ => votes.abstain += 1,
            }
            parsed.push(p.unwrap_or(TerminationParse::Malformed));
        }
        Ok((votes, parsed))
    }

    /// Final answer for `state`: the termination prompt at answer temperature,
    /// resampled at sampling temperature while it does not answer.
    pub fn final_answer(&mut self, state: &State, key: u64, forced: bool) -> Result<TerminalAnswer, ExpansionError> {
        let prompt = self.termination_prompt(state);
        let generation = &self.ex.generation;
        let (t0, t1, retries) = (generation.answer_temperature, generation.sampling_temperature, generation.malformed_retries);
        for attempt in 0..=retries {
            let temperature = if attempt == 0 { t0 } else { t1 };
            let s = seed::derive(key, &[TAG_FINAL, u64::from(attempt)]);
            let text = self.complete(PolicyRole::TerminationDecision, &prompt, temperature, s, &Counter::Answer)?;
            if let TerminationParse::Terminate(answer) = parse_termination(&text) {
                let score = self.score(&answer)?;
                return Ok(TerminalAnswer { answer, score, forced });
            }
        }
        Err(Self::failed(state.depth(), "no final answer after retries"))
    }

    fn score(&self, answer: &str) -> Result<Score, ExpansionError> {
        Ok(self.cfg().score_metric.score(answer, &self.question.gold_answers)?)
    }

    /// Samples up to `k` candidates, dropping malformed ones and duplicates
    /// under answer normalization. `seeded` contents come first.
    fn generate(
        &mut self,
        kind: CandidateKind,
        role: PolicyRole,
        prompt: &str,
        base: u64,
        seeded: Vec<String>,
        parse: impl Fn(&str) -> Option<String> + Copy,
    ) -> Result<Vec<Candidate>, ExpansionError> {
        let mut out: Vec<Candidate> = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        let mut push = |content: String, out: &mut Vec<Candidate>| {
            let norm = normalize_answer(&content);
            if !seen.contains(&norm) {
                seen.push(norm);
                out.push(Candidate::new(kind, content));
            }
        };
        for c in seeded {
            push(c, &mut out);
        }
        for i in 0..self.cfg().k {
            let s = seed::derive(base, &[kind_tag(kind), i as u64]);
            if let Some(c) = self.sample_parsed(role, prompt, s, parse)? {
                push(c, &mut out);
            }
        }
        Ok(out)
    }

    /// Sub-question candidates for `state`. The first layer uses the
    /// sub-question prompt; deeper layers use the termination prompt, whose
    /// continuing output carries the next sub-question.
    pub fn sub_question_candidates(&mut self, state: &State, key: u64, seeded: Vec<String>) -> Result<Vec<Candidate>, ExpansionError> {
        let cands = if state.steps.is_empty() {
            let prompt = self.ex.templates.render(TemplateKind::SubQuestion, &self.question.text, "");
            self.generate(CandidateKind::SubQuestion, PolicyRole::SubQuestionGen, &prompt, key, seeded, parse_sub_question)?
        } else {
            let prompt = self.termination_prompt(state);
            self.generate(CandidateKind::SubQuestion, PolicyRole::SubQuestionGen, &prompt, key, seeded, |t| match parse_termination(t) {
                TerminationParse::Continue(q) => Some(q),
                _ => None,
            })?
        };
        if cands.is_empty() {
            return Err(Self::failed(state.depth(), "every sub-question sample was malformed"));
        }
        Ok(cands)
    }

    pub fn self_answer_candidates(&mut self, sub_question: &str, key: u64) -> Result<Vec<Candidate>, ExpansionError> {
        let prompt = self.ex.templates.render(TemplateKind::SelfAnswer, sub_question, "");
        self.generate(CandidateKind::SelfAnswer, PolicyRole::SelfAnswer, &prompt, key, Vec::new(), |t| match parse_self_answer(t) {
            AnswerParse::Answer(a) => Some(a),
            AnswerParse::Malformed => None,
        })
    }

    /// Sub-query candidates with their retrieved documents attached.
    pub fn sub_query_candidates(&mut self, sub_question: &str, key: u64) -> Result<Vec<Candidate>, ExpansionError> {
        let prompt = self.ex.templates.render(TemplateKind::SubQuery, sub_question, "");
        let mut cands = self.generate(CandidateKind::SubQuery, PolicyRole::SubQueryGen, &prompt, key, Vec::new(), |t| match parse_sub_query(t) {
            QueryParse::Query(q) => Some(q),
            QueryParse::Malformed => None,
        })?;
        for c in &mut cands {
            c.documents = self.retrieve(&c.content)?;
        }
        Ok(cands)
    }

    fn retrieve(&mut self, query: &str) -> Result<Vec<Document>, ExpansionError> {
        let request = RetrievalRequest::new(query, self.cfg().top_k)
            .map_err(|e| BackendError::Protocol(format!("{e}")))?;
        self.ledger.retrieval_calls += 1;
        let docs = self.ex.retriever.retrieve(&request)?;
        let budget = self.cfg().doc_char_budget;
        Ok(docs.iter().map(|d| d.truncated(budget)).collect())
    }

    /// One simulated completion from a rendered history, scored against the
    /// gold answers. A rollout that never answers scores zero.
    pub fn run_rollout(&mut self, history: &str, seed: u64) -> Result<RolloutResult, ExpansionError> {
        let t_max = self.cfg().t_max;
        let runner = AgentRunner {
            policy: self.ex.policies.main,
            retriever: self.ex.retriever,
            templates: self.ex.templates,
            history: self.ex.history,
            settings: AgentSettings {
                temperature: self.ex.generation.sampling_temperature,
                max_tokens: self.ex.generation.rollout_max_tokens,
                top_k: self.cfg().top_k,
                doc_char_budget: self.cfg().doc_char_budget,
            },
        };
        let caps = AgentCaps { max_searches: t_max, max_steps: events_for(t_max) };
        let transcript = runner.run_from_history(self.question, history, caps, seed);
        self.ledger.rollouts += 1;
        self.ledger.rollout_policy_calls += transcript.policy_calls as u64;
        self.ledger.rollout_retrieval_calls += transcript.searches_used as u64;
        if let Some(f) = transcript.failure {
            return Err(ExpansionError::Rollout(f));
        }
        let final_answer = transcript.final_answer().map(String::from);
        let score = match &final_answer {
            Some(a) => self.score(a)?,
            None => Score::ZERO,
        };
        Ok(RolloutResult {
            transcript: transcript.render(),
            final_answer,
            score,
            steps_taken: transcript.policy_calls,
            searches: transcript.searches_used,
        })
    }

    /// Runs `n` rollouts from `history` and sets the candidate reward to their mean.
    fn score_candidate(&mut self, candidate: Candidate, history: &str, key: u64, branch: usize, index: usize) -> Result<Candidate, ExpansionError> {
        let mut rollouts = Vec::with_capacity(self.cfg().n);
        for i in 0..self.cfg().n {
            let s = seed::derive(key, &[TAG_ROLLOUT, kind_tag(candidate.kind), branch as u64, index as u64, i as u64]);
            rollouts.push(self.run_rollout(history, s)?);
        }
        Ok(candidate.with_rollouts(rollouts))
    }

    fn score_sub_questions(&mut self, state: &State, cands: Vec<Candidate>, key: u64) -> Result<Vec<Candidate>, ExpansionError> {
        let mut out = Vec::with_capacity(cands.len());
        for (i, c) in cands.into_iter().enumerate() {
            let history = serialize_with_pending(state, &c.content, self.ex.history);
            out.push(self.score_candidate(c, &history, key, 0, i)?);
        }
        Ok(out)
    }

    fn score_executions(&mut self, state: &State, sub_question: &str, cands: Vec<Candidate>, key: u64, branch: usize) -> Result<Vec<Candidate>, ExpansionError> {
        let mut out = Vec::with_capacity(cands.len());
        for (i, c) in cands.into_iter().enumerate() {
            let next = state.with_step(step_for(sub_question, &c));
            let history = serialize_state(&next, self.ex.history);
            out.push(self.score_candidate(c, &history, key, branch, i)?);
        }
        Ok(out)
    }

    /// Termination decision by strict-majority vote; when continuing, the
    /// rollout-scored sub-question candidates and the best of them.
    pub fn expand_termination(&mut self, state: &State, key: u64) -> Result<TerminationOutcome, ExpansionError> {
        let (votes, _) = self.sample_votes(state, key, self.cfg().majority_samples)?;
        if votes.majority_terminate() {
            let answer = self.final_answer(state, key, false)?;
            return Ok(TerminationOutcome::Terminated { votes, answer });
        }
        let cands = self.sub_question_candidates(state, key, Vec::new())?;
        let candidates = self.score_sub_questions(state, cands, key)?;
        let chosen = argmax(&candidates).unwrap_or(0);
        Ok(TerminationOutcome::SubQuestionChosen { votes, candidates, chosen })
    }

    /// Retrieval decision for `sub_question`. With `gate`, sub-queries are only
    /// generated when no self-answer reaches `tau`; without it both branches
    /// are always scored and the better one is chosen.
    pub fn expand_retrieval(&mut self, state: &State, sub_question: &str, key: u64, branch: usize, gate: bool) -> Result<RetrievalOutcome, ExpansionError> {
        let bkey = seed::derive(key, &[branch as u64]);
        let cands = self.self_answer_candidates(sub_question, bkey)?;
        let self_answers = self.score_executions(state, sub_question, cands, key, branch)?;
        let best_self = argmax(&self_answers);
        let best_self_reward = best_self.and_then(|i| self_answers[i].reward).map(Score::value);
        if gate && best_self_reward.is_some_and(|r| r >= self.cfg().tau) {
            let branch = RetrievalBranch {
                sub_question: sub_question.into(),
                self_answers,
                sub_queries: Vec::new(),
                retrieval_skipped: true,
            };
            return Ok(RetrievalOutcome::SelfAnswerChosen { branch, chosen: best_self.unwrap_or(0) });
        }
        let cands = self.sub_query_candidates(sub_question, bkey)?;
        let sub_queries = self.score_executions(state, sub_question, cands, key, branch)?;
        let best_query = argmax(&sub_queries);
        let branch_out = RetrievalBranch { sub_question: sub_question.into(), self_answers, sub_queries, retrieval_skipped: false };
        match (best_self, best_query) {
            (_, Some(q)) if gate => Ok(RetrievalOutcome::SubQueryChosen { branch: branch_out, chosen: q }),
            (Some(s), Some(q)) => {
                let rs = branch_out.self_answers[s].reward.map_or(0.0, Score::value);
                let rq = branch_out.sub_queries[q].reward.map_or(0.0, Score::value);
                if rs >= rq {
                    Ok(RetrievalOutcome::SelfAnswerChosen { branch: branch_out, chosen: s })
                } else {
                    Ok(RetrievalOutcome::SubQueryChosen { branch: branch_out, chosen: q })
                }
            }
            (None, Some(q)) => Ok(RetrievalOutcome::SubQueryChosen { branch: branch_out, chosen: q }),
            (Some(s), None) if !gate => Ok(RetrievalOutcome::SelfAnswerChosen { branch: branch_out, chosen: s }),
            _ => Err(Self::failed(state.depth(), "every sub-query sample was malformed")),
        }
    }

    fn grow(&mut self, state: &State, node: &mut TreeNode, key: u64) -> Result<(), ExpansionError> {
        if state.depth() >= self.cfg().t_max {
            node.terminal = Some(self.final_answer(state, key, true)?);
            self.ledger.leaf_nodes += 1;
            return Ok(());
        }
        self.ledger.nodes_expanded += 1;
        match self.cfg().strategy {
            Strategy::Pruning => self.grow_pruning(state, node, key),
            Strategy::NoPruning => self.grow_no_pruning(state, node, key),
            Strategy::FullNode => self.grow_full(state, node, key),
        }
    }

    fn attach_child(&mut self, state: &State, node: &mut TreeNode, key: u64, step: Step, origin: ChildOrigin) -> Result<(), ExpansionError> {
        let index = node.children.len();
        let mut child = TreeNode::new(node.depth + 1, Some(step.clone()), Some(origin));
        let next = state.with_step(step);
        self.grow(&next, &mut child, seed::derive(key, &[index as u64]))?;
        node.children.push(child);
        Ok(())
    }

    fn grow_pruning(&mut self, state: &State, node: &mut TreeNode, key: u64) -> Result<(), ExpansionError> {
        let (votes, mut candidates, chosen) = match self.expand_termination(state, key)? {
            TerminationOutcome::Terminated { votes, answer } => {
                node.votes = Some(votes);
                node.terminal = Some(answer);
                self.ledger.leaf_nodes += 1;
                return Ok(());
            }
            TerminationOutcome::SubQuestionChosen { votes, candidates, chosen } => (votes, candidates, chosen),
        };
        node.votes = Some(votes);
        candidates[chosen].retained = true;
        let sub_question = candidates[chosen].content.clone();
        node.zero_reward = all_zero(&candidates);
        node.sub_questions = candidates;

        let (mut branch, kind, index) = match self.expand_retrieval(state, &sub_question, key, 0, true)? {
            RetrievalOutcome::SelfAnswerChosen { branch, chosen } => (branch, CandidateKind::SelfAnswer, chosen),
            RetrievalOutcome::SubQueryChosen { branch, chosen } => (branch, CandidateKind::SubQuery, chosen),
        };
        let set = match kind {
            CandidateKind::SelfAnswer => &mut branch.self_answers,
            _ => &mut branch.sub_queries,
        };
        set[index].retained = true;
        node.zero_reward |= all_zero(set);
        let step = step_for(&sub_question, &set[index]);
        node.branches = vec![branch];
        self.attach_child(state, node, key, step, ChildOrigin { branch: 0, kind, candidate: index })?;
        node.retained_child = Some(0);
        Ok(())
    }

    /// Both termination outcomes and both retrieval outcomes stay alive;
    /// executions are still pruned to the best of each.
    fn grow_no_pruning(&mut self, state: &State, node: &mut TreeNode, key: u64) -> Result<(), ExpansionError> {
        let (votes, _) = self.sample_votes(state, key, self.cfg().majority_samples)?;
        node.votes = Some(votes);
        let terminal = self.final_answer(state, key, false)?;

        let cands = self.sub_question_candidates(state, key, Vec::new())?;
        let mut candidates = self.score_sub_questions(state, cands, key)?;
        let chosen = argmax(&candidates).unwrap_or(0);
        candidates[chosen].retained = true;
        let sub_question = candidates[chosen].content.clone();
        node.zero_reward = all_zero(&candidates);
        node.sub_questions = candidates;

        let mut branch = match self.expand_retrieval(state, &sub_question, key, 0, false)? {
            RetrievalOutcome::SelfAnswerChosen { branch, .. } | RetrievalOutcome::SubQueryChosen { branch, .. } => branch,
        };
        let mut children: Vec<(CandidateKind, usize, f64)> = Vec::new();
        if let Some(i) = argmax(&branch.self_answers) {
            branch.self_answers[i].retained = true;
            children.push((CandidateKind::SelfAnswer, i, reward_of(&branch.self_answers[i])));
        }
        if let Some(i) = argmax(&branch.sub_queries) {
            branch.sub_queries[i].retained = true;
            children.push((CandidateKind::SubQuery, i, reward_of(&branch.sub_queries[i])));
        }
        node.branches = vec![branch];
        for &(kind, index, _) in &children {
            let b = &node.branches[0];
            let c = match kind {
                CandidateKind::SelfAnswer => &b.self_answers[index],
                _ => &b.sub_queries[index],
            };
            let step = step_for(&sub_question, c);
            self.attach_child(state, node, key, step, ChildOrigin { branch: 0, kind, candidate: index })?;
        }
        // Retained path: the better child (self-answer first on ties), unless
        // answering here scores at least as well.
        let mut best: Option<(usize, f64)> = None;
        for (i, &(_, _, r)) in children.iter().enumerate() {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        node.retained_child = match best {
            Some((i, r)) if r > terminal.score.value() => Some(i),
            _ => None,
        };
        node.terminal = Some(terminal);
        Ok(())
    }

    /// Every execution of every decision becomes a child; no rollouts.
    fn grow_full(&mut self, state: &State, node: &mut TreeNode, key: u64) -> Result<(), ExpansionError> {
        let (votes, parsed) = self.sample_votes(state, key, 1)?;
        node.votes = Some(votes);
        let mut seeded = Vec::new();
        match parsed.into_iter().next() {
            Some(TerminationParse::Terminate(answer)) => {
                let score = self.score(&answer)?;
                node.terminal = Some(TerminalAnswer { answer, score, forced: false });
                self.ledger.leaf_nodes += 1;
                return Ok(());
            }
            Some(TerminationParse::Continue(q)) => seeded.push(q),
            _ => {}
        }
        let mut sub_questions = self.sub_question_candidates(state, key, seeded)?;
        for c in &mut sub_questions {
            c.retained = true;
        }
        let mut branches = Vec::with_capacity(sub_questions.len());
        for (b, sq) in sub_questions.iter().enumerate() {
            let bkey = seed::derive(key, &[b as u64]);
            let mut self_answers = self.self_answer_candidates(&sq.content, bkey)?;
            let mut sub_queries = self.sub_query_candidates(&sq.content, bkey)?;
            for c in self_answers.iter_mut().chain(sub_queries.iter_mut()) {
                c.retained = true;
            }
            branches.push(RetrievalBranch { sub_question: sq.content.clone(), self_answers, sub_queries, retrieval_skipped: false });
        }
        node.sub_questions = sub_questions;
        let mut steps = Vec::new();
        for (b, branch) in branches.iter().enumerate() {
            for (i, c) in branch.self_answers.iter().enumerate() {
                steps.push((step_for(&branch.sub_question, c), ChildOrigin { branch: b, kind: CandidateKind::SelfAnswer, candidate: i }));
            }
            for (i, c) in branch.sub_queries.iter().enumerate() {
                steps.push((step_for(&branch.sub_question, c), ChildOrigin { branch: b, kind: CandidateKind::SubQuery, candidate: i }));
            }
        }
        node.branches = branches;
        if steps.is_empty() {
            return Err(Self::failed(state.depth(), "no executions for any sub-question"));
        }
        for (step, origin) in steps {
            self.attach_child(state, node, key, step, origin)?;
        }
        Ok(())
    }
}

fn reward_of(c: &Candidate) -> f64 {
    c.reward.map_or(0.0, Score::value)
}

fn all_zero(cands: &[Candidate]) -> bool {
    cands.iter().all(|c| c.reward.is_some_and(|r| r.value() == 0.0))
}

/// The step taken by executing `candidate` for `sub_question`.
pub(crate) fn step_for(sub_question: &str, candidate: &Candidate) -> Step {
    let resolution = match candidate.kind {
        CandidateKind::SubQuery => Resolution::Retrieved {
            sub_query: candidate.content.clone(),
            documents: candidate.documents.clone(),
        },
        _ => Resolution::SelfAnswer { answer: candidate.content.clone() },
    };
    Step { sub_question: sub_question.into(), resolution }
}

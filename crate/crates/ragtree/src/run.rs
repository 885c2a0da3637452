//! Batch orchestration: expansion with resume, exports, evaluation, bench.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use ragtree_core::agent::{aggregate, AgentRunner, AgentTranscript, EvalItem, EvalReport};
use ragtree_core::expansion::{theoretical_counts, ExpansionConfig, Expander, ExpansionLedger, Strategy, TreeSnapshot};
use ragtree_core::export::{decision_availability, export_dpo, export_sft, SftOptions};
use ragtree_core::mdp::HistoryTemplate;
use ragtree_core::policy::{GenerationSettings, PolicySet};
use ragtree_core::seed;
use ragtree_core::Question;

use crate::config::{Backends, EvaluateConfig};
use crate::formats::{BenchRow, DpoMeta, DpoRecord, SftRecord};
use crate::store::{reusable_snapshot, snapshot_path, write_snapshot, Manifest, ManifestEntry, Status};

fn pool(concurrency: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(concurrency.max(1)).build()?)
}

/// Grows one tree and measures its wall time.
pub fn expand_one(
    backends: &Backends,
    config: &ExpansionConfig,
    generation: &GenerationSettings,
    question: &Question,
) -> TreeSnapshot {
    let policies = PolicySet {
        main: &*backends.policy,
        self_answer: backends.decision.as_deref().unwrap_or(&*backends.policy),
    };
    let expander = Expander {
        config: config.clone(),
        policies,
        retriever: &*backends.retriever,
        templates: &backends.templates,
        history: &backends.history,
        generation: generation.clone(),
    };
    let start = Instant::now();
    let mut snap = expander.snapshot(question);
    snap.ledger.wall_time_secs = start.elapsed().as_secs_f64();
    snap
}

pub struct ExpandOptions<'a> {
    pub config: &'a ExpansionConfig,
    pub generation: &'a GenerationSettings,
    pub concurrency: usize,
    pub resume: bool,
}

/// Expands every question into `<out>/snapshots` and writes the manifest.
/// Each question appears in the manifest exactly once.
pub fn expand_all(backends: &Backends, questions: &[Question], out: &Path, opts: &ExpandOptions) -> Result<Manifest> {
    let start = Instant::now();
    let entries: Vec<Result<ManifestEntry>> = pool(opts.concurrency)?.install(|| {
        questions
            .par_iter()
            .map(|q| {
                let file = snapshot_path(out, &q.id)
                    .strip_prefix(out)
                    .map(|p| p.to_string_lossy().replace('\\', "/"))
                    .unwrap_or_default();
                if opts.resume {
                    if let Some(snap) = reusable_snapshot(out, q, opts.config) {
                        tracing::debug!(id = %q.id, "resumed");
                        return Ok(ManifestEntry {
                            id: q.id.clone(),
                            file,
                            status: Status::Skipped,
                            error: None,
                            wall_time_secs: 0.0,
                            ledger: snap.ledger,
                        });
                    }
                }
                let snap = expand_one(backends, opts.config, opts.generation, q);
                write_snapshot(out, &snap)?;
                let (status, error) = match &snap.failure {
                    None => (Status::Ok, None),
                    Some(f) => {
                        tracing::warn!(id = %q.id, reason = %f.reason, "expansion failed");
                        (Status::Failed, Some(f.reason.clone()))
                    }
                };
                Ok(ManifestEntry {
                    id: q.id.clone(),
                    file,
                    status,
                    error,
                    wall_time_secs: snap.ledger.wall_time_secs,
                    ledger: snap.ledger,
                })
            })
            .collect()
    });
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(opts.config.clone(), entries, start.elapsed().as_secs_f64());
    manifest.write(out)?;
    Ok(manifest)
}

/// Snapshots that carry a failure record are skipped and counted.
pub struct ExportOutcome<T> {
    pub records: Vec<T>,
    pub skipped: Vec<String>,
}

pub fn export_sft_records(snaps: &[TreeSnapshot], options: &SftOptions, template: &HistoryTemplate) -> Result<ExportOutcome<SftRecord>> {
    let mut out = ExportOutcome { records: Vec::new(), skipped: Vec::new() };
    for snap in snaps {
        if !snap.is_ok() {
            out.skipped.push(snap.question.id.clone());
            continue;
        }
        let examples = export_sft(snap, options, template).with_context(|| format!("question {}", snap.question.id))?;
        out.records.extend(examples.into_iter().map(SftRecord::from));
    }
    Ok(out)
}

/// Pairs ordered by question id, then layer; the order within a layer is
/// the tree's own.
pub fn export_dpo_records(
    snaps: &[TreeSnapshot],
    margin: f64,
    template: &HistoryTemplate,
) -> (ExportOutcome<DpoRecord>, Vec<DpoMeta>) {
    let mut out = ExportOutcome { records: Vec::new(), skipped: Vec::new() };
    let mut meta = Vec::new();
    for snap in snaps {
        if !snap.is_ok() {
            out.skipped.push(snap.question.id.clone());
            continue;
        }
        let pairs = export_dpo(snap, margin, template);
        let avail = decision_availability(snap);
        meta.push(DpoMeta {
            id: snap.question.id.clone(),
            strategy: snap.strategy().as_str().into(),
            retrieval_scored: avail.retrieval_scored,
            retrieval_skipped: avail.retrieval_skipped,
            termination_scored: avail.termination_scored,
            pairs: pairs.len(),
        });
        out.records.extend(pairs.into_iter().map(DpoRecord::from));
    }
    out.records.sort_by(|a, b| a.id.cmp(&b.id).then(a.layer.cmp(&b.layer)));
    (out, meta)
}

/// Runs the agent on every question; rollout-style seeds are derived from the
/// question id so results do not depend on scheduling.
pub fn evaluate_all(
    backends: &Backends,
    questions: &[Question],
    dataset: &str,
    config: &EvaluateConfig,
    seed: u64,
    concurrency: usize,
) -> Result<(EvalReport, Vec<AgentTranscript>)> {
    let results: Vec<(EvalItem, AgentTranscript)> = pool(concurrency)?.install(|| {
        questions
            .par_iter()
            .map(|q| {
                let runner = AgentRunner {
                    policy: &*backends.policy,
                    retriever: &*backends.retriever,
                    templates: &backends.templates,
                    history: &backends.history,
                    settings: config.agent.clone(),
                };
                let t = runner.run_agent(q, None, config.caps, seed::derive(seed, &[seed::hash_str(&q.id)]));
                if let Some(f) = &t.failure {
                    tracing::warn!(id = %q.id, reason = %f, "agent failed");
                }
                Ok((EvalItem::score(q, &t)?, t))
            })
            .collect::<Result<_>>()
    })?;
    let (items, transcripts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((aggregate(dataset, &items, config.exclude_failures), transcripts))
}

pub struct BenchOptions {
    pub strategies: Vec<Strategy>,
    pub concurrency: usize,
    /// Full-node runs whose predicted leaf count exceeds this are skipped.
    pub max_full_node_leaves: u128,
}

/// Expands the question set once per strategy and reports costs.
pub fn bench(
    backends: &Backends,
    questions: &[Question],
    base: &ExpansionConfig,
    generation: &GenerationSettings,
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    if questions.is_empty() {
        bail!("bench needs at least one question");
    }
    let mut rows = Vec::new();
    for &strategy in &opts.strategies {
        let config = ExpansionConfig { strategy, ..base.clone() };
        let theoretical = theoretical_counts(strategy, config.k as u64, config.n as u64, config.t_max as u64);
        let mut row = BenchRow {
            strategy: strategy.as_str().into(),
            status: "ok".into(),
            k: config.k,
            n: config.n,
            t_max: config.t_max,
            questions: questions.len(),
            failed: 0,
            count_per_question: 0,
            theoretical,
            policy_calls: 0,
            rollout_policy_calls: 0,
            answer_calls: 0,
            retrieval_calls: 0,
            leaf_nodes: 0,
            wall_secs_total: 0.0,
            wall_secs_per_question: 0.0,
        };
        if strategy == Strategy::FullNode && theoretical > opts.max_full_node_leaves {
            tracing::warn!(theoretical, "full-node bench skipped");
            row.status = "skipped".into();
            rows.push(row);
            continue;
        }
        let snaps: Vec<TreeSnapshot> = pool(opts.concurrency)?
            .install(|| questions.par_iter().map(|q| expand_one(backends, &config, generation, q)).collect());
        let mut total = ExpansionLedger::default();
        let mut counts = Vec::new();
        for s in &snaps {
            total.add(&s.ledger);
            row.wall_secs_total += s.ledger.wall_time_secs;
            if s.is_ok() {
                counts.push(s.ledger.comparable_count(strategy));
            } else {
                row.failed += 1;
            }
        }
        row.policy_calls = total.policy_calls;
        row.rollout_policy_calls = total.rollout_policy_calls;
        row.answer_calls = total.answer_calls;
        row.retrieval_calls = total.retrieval_calls;
        row.leaf_nodes = total.leaf_nodes;
        row.wall_secs_per_question = row.wall_secs_total / snaps.len() as f64;
        if !counts.is_empty() {
            row.count_per_question = counts.iter().sum::<u128>() / counts.len() as u128;
            if counts.iter().any(|c| *c != counts[0]) {
                row.status = "varied".into();
            }
        }
        if row.failed > 0 {
            row.status = "failed".into();
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

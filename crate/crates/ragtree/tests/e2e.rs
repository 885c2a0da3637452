mod common;

use std::path::Path;
use std::process::Command;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{fixture, policy_stub, questions, retriever_stub, OracleModel};
use ragtree::data::read_jsonl;
use ragtree::formats::{DpoRecord, SftRecord};
use ragtree::store::Manifest;
use serde_json::Value;

pub fn ragtree(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ragtree")).args(args).output().unwrap();
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.success(), text)
}

fn write_config(dir: &Path, policy_url: &str, retriever_url: &str) -> String {
    let text = format!(
        r#"concurrency = 4

[expansion]
k = 3
n = 2
t_max = 3
seed = 11

[paths]
dataset = "{dataset}"
output = "out"

[backends.policy]
kind = "http"
base_url = "{policy_url}/v1"
model = "stub"

[backends.policy.retry]
max_retries = 2
base_delay_ms = 10

[backends.retriever]
kind = "http"
base_url = "{retriever_url}"
"#,
        dataset = fixture("questions.jsonl").display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn expand_export_evaluate_against_http_stubs() {
    let model = Arc::new(OracleModel::new(questions()));
    let policy = policy_stub(model.clone());
    let retriever = retriever_stub();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &policy.url, &retriever.url);
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let start = Instant::now();

    let (ok, log) = ragtree(&["expand", "--config", &config]);
    assert!(ok, "{log}");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!((manifest.ok, manifest.failed, manifest.entries.len()), (10, 0, 10));

    let (ok, log) = ragtree(&["export-sft", "--config", &config, "--out", &p("sft.jsonl")]);
    assert!(ok, "{log}");
    let (ok, log) = ragtree(&["export-dpo", "--config", &config, "--out", &p("dpo.jsonl"), "--meta", &p("dpo_meta.jsonl")]);
    assert!(ok, "{log}");
    let (ok, log) = ragtree(&[
        "evaluate", "--config", &config, "--out", &p("report.json"), "--transcripts", &p("transcripts.jsonl"),
    ]);
    assert!(ok, "{log}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");

    // every question yields a correct chain once the right document is fetched
    let sft: Vec<SftRecord> = read_jsonl(Path::new(&p("sft.jsonl"))).unwrap().into_iter().map(|(_, r)| r).collect();
    let ids: std::collections::BTreeSet<_> = sft.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids.len(), 10);
    assert!(sft.iter().any(|r| r.segment == 1), "no chain crossed a retrieval");

    let dpo: Vec<DpoRecord> = read_jsonl(Path::new(&p("dpo.jsonl"))).unwrap().into_iter().map(|(_, r)| r).collect();
    assert!(!dpo.is_empty());
    assert!(dpo.iter().all(|r| r.chosen_reward - r.rejected_reward >= 0.1 - 1e-12));
    assert!(dpo.windows(2).all(|w| (&w[0].id, w[0].layer) <= (&w[1].id, w[1].layer)));
    assert!(dpo.iter().any(|r| r.chosen.starts_with("Sub-query") && r.rejected.starts_with("Answer")));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["dataset"], "questions");
    assert_eq!(report["n"], 10);
    assert_eq!(report["failures"], 0);
    assert_eq!(report["em"], 1.0);
    assert_eq!(report["avg_searches"], 1.0);
    let transcripts = std::fs::read_to_string(p("transcripts.jsonl")).unwrap();
    assert_eq!(transcripts.lines().count(), 10);

    // a second expand is served from disk
    let before = model.calls.load(Ordering::SeqCst);
    let (ok, log) = ragtree(&["expand", "--config", &config]);
    assert!(ok, "{log}");
    assert!(log.contains("skipped 10"), "{log}");
    assert_eq!(model.calls.load(Ordering::SeqCst), before);
}

#[test]
fn unreachable_policy_fails_the_run() {
    let retriever = retriever_stub();
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "http://127.0.0.1:9", &retriever.url);
    let (ok, log) = ragtree(&["expand", "--config", &config, "--tmax", "1"]);
    assert!(!ok);
    assert!(log.contains("failed 10"), "{log}");
}

//! Byte-level checks of every file format against `tests/golden/expected`.
//! Run with `UPDATE_GOLDEN=1` to regenerate after an intended format change.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn ragtree(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_ragtree")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn check(name: &str, actual: &str) {
    let path = golden().join("expected").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden file\n--- expected\n{expected}\n--- actual\n{actual}");
}

fn zero_wall_times(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if k == "wall_time_secs" {
                    *x = Value::from(0.0);
                } else {
                    zero_wall_times(x);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(zero_wall_times),
        _ => {}
    }
}

#[test]
fn scripted_run_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    let config = golden().join("input/run.toml").to_string_lossy().into_owned();
    let out_s = out.to_string_lossy().into_owned();

    ragtree(&["expand", "--config", &config, "--out", &out_s]);
    ragtree(&["export-sft", "--config", &config, "--snapshots", &out_s, "--out", &o("sft.jsonl")]);
    ragtree(&["export-dpo", "--config", &config, "--snapshots", &out_s, "--out", &o("dpo.jsonl"), "--meta", &o("dpo_meta.jsonl")]);
    ragtree(&["evaluate", "--config", &config, "--out", &o("report.json"), "--transcripts", &o("transcripts.jsonl")]);

    for id in ["q01", "q05"] {
        check(&format!("snapshots/{id}.json"), &std::fs::read_to_string(out.join(format!("snapshots/{id}.json"))).unwrap());
    }
    let mut manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    zero_wall_times(&mut manifest);
    check("manifest.json", &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"));
    for f in ["sft.jsonl", "dpo.jsonl", "dpo_meta.jsonl", "report.json", "transcripts.jsonl"] {
        check(f, &std::fs::read_to_string(o(f)).unwrap());
    }
}

#[test]
fn bench_csv_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bench.csv");
    ragtree(&["bench-expansion", "--counting", "--k", "2", "--n", "2", "--tmax", "2", "--questions", "2", "--out", path.to_str().unwrap()]);
    let text = std::fs::read_to_string(&path).unwrap();
    // the two trailing columns are wall-clock seconds
    let normalized: String = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let mut cells: Vec<&str> = line.split(',').collect();
            if i > 0 {
                let n = cells.len();
                cells[n - 2] = "0";
                cells[n - 1] = "0";
            }
            cells.join(",") + "\n"
        })
        .collect();
    check("bench.csv", &normalized);
}

#[test]
fn default_config_matches_golden_file() {
    check("config.toml", &ragtree(&["show-config"]));
}

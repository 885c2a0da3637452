//! Snapshot directory: one JSON file per question plus a run manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ragtree_core::expansion::{ExpansionConfig, ExpansionLedger, TreeSnapshot, SNAPSHOT_SCHEMA_VERSION};
use ragtree_core::seed::hash_str;
use ragtree_core::Question;
use serde::{Deserialize, Serialize};

use crate::data::write_atomic;

pub const SNAPSHOT_DIR: &str = "snapshots";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File stem for a question id. Ids that are not already plain
/// `[A-Za-z0-9._-]` get a hash suffix so distinct ids never collide.
pub fn file_stem(id: &str) -> String {
    let clean: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect();
    if clean == id && !id.starts_with('.') {
        clean
    } else {
        format!("{}-{:016x}", clean.trim_start_matches('.'), hash_str(id))
    }
}

pub fn snapshot_path(out: &Path, id: &str) -> PathBuf {
    out.join(SNAPSHOT_DIR).join(format!("{}.json", file_stem(id)))
}

pub fn write_snapshot(out: &Path, snap: &TreeSnapshot) -> Result<PathBuf> {
    let path = snapshot_path(out, &snap.question.id);
    std::fs::create_dir_all(path.parent().unwrap())?;
    let mut bytes = serde_json::to_vec_pretty(snap)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<TreeSnapshot> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A finished snapshot for exactly this question and configuration, if any.
pub fn reusable_snapshot(out: &Path, question: &Question, config: &ExpansionConfig) -> Option<TreeSnapshot> {
    let snap = read_snapshot(&snapshot_path(out, &question.id)).ok()?;
    (snap.schema_version == SNAPSHOT_SCHEMA_VERSION && snap.is_ok() && &snap.question == question && &snap.config == config)
        .then_some(snap)
}

/// All snapshots in `<out>/snapshots`, ordered by question id.
pub fn load_snapshots(dir: &Path) -> Result<Vec<TreeSnapshot>> {
    let dir = if dir.join(SNAPSHOT_DIR).is_dir() { dir.join(SNAPSHOT_DIR) } else { dir.to_path_buf() };
    let mut snaps = Vec::new();
    for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            snaps.push(read_snapshot(&path)?);
        }
    }
    snaps.sort_by(|a, b| a.question.id.cmp(&b.question.id));
    Ok(snaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time_secs: f64,
    pub ledger: ExpansionLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExpansionConfig,
    pub ok: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Sum over the questions expanded in this run (skipped ones excluded).
    pub totals: ExpansionLedger,
    pub wall_time_secs: f64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(config: ExpansionConfig, entries: Vec<ManifestEntry>, wall_time_secs: f64) -> Self {
        let count = |s| entries.iter().filter(|e| e.status == s).count();
        let mut totals = ExpansionLedger::default();
        for e in entries.iter().filter(|e| e.status != Status::Skipped) {
            totals.add(&e.ledger);
        }
        Manifest {
            config,
            ok: count(Status::Ok),
            failed: count(Status::Failed),
            skipped: count(Status::Skipped),
            totals,
            wall_time_secs,
            entries,
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&out.join(MANIFEST_FILE), &bytes)?;
        Ok(())
    }
}

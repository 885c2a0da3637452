//! TOML run configuration and backend construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ragtree_core::agent::{AgentCaps, AgentSettings};
use ragtree_core::expansion::ExpansionConfig;
use ragtree_core::export::SftOptions;
use ragtree_core::mdp::HistoryTemplate;
use ragtree_core::policy::{GenerationSettings, Policy};
use ragtree_core::prompts::{PromptTemplateSet, TemplateKind};
use ragtree_core::retrieval::{LexicalIndex, Retriever};
use ragtree_core::scripted::{Script, ScriptedPolicy};
use serde::{Deserialize, Serialize};

use crate::data::load_corpus;
use crate::http::{HttpPolicy, HttpPolicyConfig, HttpRetriever, HttpRetrieverConfig};

pub type SharedPolicy = Arc<dyn Policy + Send + Sync>;
pub type SharedRetriever = Arc<dyn Retriever + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyBackend {
    Http(HttpPolicyConfig),
    /// Rule file (TOML, or JSON when the extension is `.json`).
    Scripted { script: PathBuf },
    /// Synthetic policy that never terminates early, never collides and
    /// never clears the skip gate; used for cost benchmarks.
    Counting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrieverBackend {
    Http(HttpRetrieverConfig),
    /// In-memory lexical index over a `{"title","text"}` JSONL file; no file
    /// means an empty index.
    Lexical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub policy: PolicyBackend,
    /// Answers self-answer requests; defaults to `policy`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision_policy: Option<PolicyBackend>,
    pub retriever: RetrieverBackend,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        BackendsConfig {
            policy: PolicyBackend::Counting,
            decision_policy: None,
            retriever: RetrieverBackend::Lexical { corpus: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Directory of template overrides, one file per role.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { dataset: None, templates: None, output: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub margin: f64,
    pub sft: SftOptions,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig { margin: 0.1, sft: SftOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub caps: AgentCaps,
    pub agent: AgentSettings,
    pub exclude_failures: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub concurrency: usize,
    /// Skip questions whose snapshot already exists and matches.
    pub resume: bool,
    pub expansion: ExpansionConfig,
    pub generation: GenerationSettings,
    pub export: ExportConfig,
    pub evaluate: EvaluateConfig,
    pub history: HistoryTemplate,
    pub paths: PathsConfig,
    pub backends: BackendsConfig,
    /// Relative paths resolve against this directory (the config file's).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            concurrency: 4,
            resume: true,
            expansion: ExpansionConfig::default(),
            generation: GenerationSettings::default(),
            export: ExportConfig::default(),
            evaluate: EvaluateConfig::default(),
            history: HistoryTemplate::default(),
            paths: PathsConfig::default(),
            backends: BackendsConfig::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Parses and validates; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output)
    }

    /// Every referenced input path must exist; output paths are created on
    /// demand.
    pub fn validate(&self) -> Result<()> {
        if self.concurrency == 0 {
            bail!("concurrency must be at least 1");
        }
        self.expansion.validate()?;
        if self.export.margin.is_nan() || self.export.margin < 0.0 {
            bail!("export margin must be non-negative");
        }
        let mut inputs: Vec<&Path> = Vec::new();
        inputs.extend(self.paths.dataset.as_deref());
        inputs.extend(self.paths.templates.as_deref());
        for b in [Some(&self.backends.policy), self.backends.decision_policy.as_ref()].into_iter().flatten() {
            if let PolicyBackend::Scripted { script } = b {
                inputs.push(script);
            }
        }
        if let RetrieverBackend::Lexical { corpus: Some(c) } = &self.backends.retriever {
            inputs.push(c);
        }
        for p in inputs {
            let full = self.resolve(p);
            if !full.exists() {
                bail!("configured path {} does not exist", full.display());
            }
        }
        Ok(())
    }

    pub fn templates(&self) -> Result<PromptTemplateSet> {
        let mut set = PromptTemplateSet::default();
        if let Some(dir) = &self.paths.templates {
            let dir = self.resolve(dir);
            for kind in TemplateKind::ALL {
                let file = dir.join(kind.file_name());
                if file.exists() {
                    set.set(kind, std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?);
                }
            }
        }
        set.validate()?;
        Ok(set)
    }

    fn policy(&self, backend: &PolicyBackend) -> Result<SharedPolicy> {
        Ok(match backend {
            PolicyBackend::Http(c) => Arc::new(HttpPolicy::new(c)?),
            PolicyBackend::Scripted { script } => Arc::new(ScriptedPolicy::from_script(load_script(&self.resolve(script))?)),
            PolicyBackend::Counting => Arc::new(ScriptedPolicy::counting(self.expansion.t_max)),
        })
    }

    pub fn backends(&self) -> Result<Backends> {
        let policy = self.policy(&self.backends.policy)?;
        let decision = match &self.backends.decision_policy {
            Some(b) => Some(self.policy(b)?),
            None => None,
        };
        let retriever: SharedRetriever = match &self.backends.retriever {
            RetrieverBackend::Http(c) => Arc::new(HttpRetriever::new(c)?),
            RetrieverBackend::Lexical { corpus } => {
                let entries = match corpus {
                    Some(p) => load_corpus(&self.resolve(p))?,
                    None => Vec::new(),
                };
                Arc::new(LexicalIndex::new(entries))
            }
        };
        Ok(Backends { policy, decision, retriever, templates: self.templates()?, history: self.history.clone() })
    }
}

pub fn load_script(path: &Path) -> Result<Script> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        Ok(toml::from_str(&text)?)
    }
}

/// Everything a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub policy: SharedPolicy,
    pub decision: Option<SharedPolicy>,
    pub retriever: SharedRetriever,
    pub templates: PromptTemplateSet,
    pub history: HistoryTemplate,
}

impl Backends {
    pub fn new(policy: SharedPolicy, retriever: SharedRetriever) -> Self {
        Backends {
            policy,
            decision: None,
            retriever,
            templates: PromptTemplateSet::default(),
            history: HistoryTemplate::default(),
        }
    }
}

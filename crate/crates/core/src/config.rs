//! TOML workspace configuration and task files.
//!
//! Relative paths are resolved against the directory of the file that names
//! them. API keys are never stored in configuration, only the names of the
//! environment variables that hold them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::backend::{
    ChatModel, Decoding, Embedder, HashEmbedder, HttpChatModel, HttpEmbedder, HttpSettings, PriceTable, RetryPolicy,
    ScriptFile, ScriptedModel, DEFAULT_SYSTEM_PREAMBLE, HASH_EMBEDDER_DIMENSION,
};
use crate::engine::{CandidatePolicy, EngineConfig};
use crate::knowledge::DEFAULT_TOP_K;
use crate::par::Exec;
use crate::quality::{Dimension, Normalization, ScoringConfig, Weights};
use crate::sandbox::{SandboxConfig, DEFAULT_GRACE};
use crate::score::{parse_decimal, Fraction};
use crate::state::{TaskSpec, DEFAULT_ATTEMPT_BUDGET, DEFAULT_INTERNAL_ITERATIONS, DEFAULT_TIMEOUT_SECONDS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("environment variable `{0}` named by the configuration is not set")]
    MissingEnv(String),
}

/// A decimal written either as a TOML number or as a string (`"0.4"`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Decimal {
    Text(String),
    Integer(u64),
    Float(f64),
}

impl Decimal {
    fn text(&self) -> String {
        match self {
            Decimal::Text(t) => t.clone(),
            Decimal::Integer(i) => i.to_string(),
            Decimal::Float(f) => format!("{f}"),
        }
    }

    pub fn fraction(&self) -> Result<Fraction, ConfigError> {
        parse_decimal(&self.text()).ok_or_else(|| ConfigError::Invalid(format!("`{}` is not a decimal", self.text())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    pub input_per_million: Decimal,
    pub output_per_million: Decimal,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub timeout_seconds: Option<u64>,
    pub max_retries: Option<u32>,
    pub initial_backoff_ms: Option<u64>,
    pub prices: Option<PriceConfig>,
    pub system_preamble: Option<String>,
    /// Script for the scripted backend; task files may override it.
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dimension: Option<usize>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_seconds: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Defaults {
    pub attempt_budget: u32,
    pub internal_iteration_budget: u32,
    pub timeout_seconds: u64,
    pub top_k: usize,
    pub candidate_policy: CandidatePolicy,
    pub knowledge_cap: Option<usize>,
    pub full_score: Option<Decimal>,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            attempt_budget: DEFAULT_ATTEMPT_BUDGET,
            internal_iteration_budget: DEFAULT_INTERNAL_ITERATIONS,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            top_k: DEFAULT_TOP_K,
            candidate_policy: CandidatePolicy::Best,
            knowledge_cap: None,
            full_score: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxSection {
    pub env_allow: Option<Vec<String>>,
    pub env: BTreeMap<String, String>,
    pub grace_seconds: Option<u64>,
    pub log_cap_bytes: Option<usize>,
    pub scratch_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    pub enabled: bool,
    pub weights: BTreeMap<String, Decimal>,
    pub normalization: BTreeMap<String, NormalizationConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub workspace_dir: PathBuf,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub scoring: ScoringSection,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn env_key(var: &Option<String>) -> Result<Option<String>, ConfigError> {
    match var {
        None => Ok(None),
        Some(name) => std::env::var(name).map(Some).map_err(|_| ConfigError::MissingEnv(name.clone())),
    }
}

impl WorkspaceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: WorkspaceConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.workspace_dir = resolve(base, &config.workspace_dir);
        config.backend.script = config.backend.script.map(|s| resolve(base, &s));
        config.sandbox.scratch_dir = config.sandbox.scratch_dir.map(|s| resolve(base, &s));
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.defaults;
        if d.attempt_budget == 0 || d.internal_iteration_budget == 0 || d.timeout_seconds == 0 || d.top_k == 0 {
            return Err(ConfigError::Invalid("numeric defaults must be positive".into()));
        }
        if d.knowledge_cap == Some(0) {
            return Err(ConfigError::Invalid("knowledge_cap must be positive".into()));
        }
        if let Some(t) = self.backend.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::Invalid(format!("temperature {t} must be a non-negative number")));
            }
        }
        if self.backend.kind == BackendKind::Http && (self.backend.model.is_none() || self.backend.endpoint.is_none()) {
            return Err(ConfigError::Invalid("the http backend needs `model` and `endpoint`".into()));
        }
        if self.embedding.kind == EmbeddingKind::Http
            && (self.embedding.model.is_none() || self.embedding.endpoint.is_none() || self.embedding.dimension.is_none())
        {
            return Err(ConfigError::Invalid("the http embedder needs `model`, `endpoint` and `dimension`".into()));
        }
        self.prices()?;
        self.scoring()?;
        Ok(())
    }

    pub fn prices(&self) -> Result<PriceTable, ConfigError> {
        match &self.backend.prices {
            None => Ok(PriceTable::default()),
            Some(p) => PriceTable::per_million(&p.input_per_million.text(), &p.output_per_million.text())
                .map_err(|e| ConfigError::Invalid(e.to_string())),
        }
    }

    pub fn scoring(&self) -> Result<Option<ScoringConfig>, ConfigError> {
        let s = &self.scoring;
        if !s.enabled {
            return Ok(None);
        }
        let dimension = |name: &str| {
            name.parse::<Dimension>().map_err(|_| ConfigError::Invalid(format!("unknown quality dimension `{name}`")))
        };
        let weights = if s.weights.is_empty() {
            Weights::uniform()
        } else {
            let mut map = BTreeMap::new();
            for (name, w) in &s.weights {
                map.insert(dimension(name)?, w.fraction()?);
            }
            Weights(map)
        };
        weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut normalization = BTreeMap::new();
        for (name, n) in &s.normalization {
            if !(n.min.is_finite() && n.max.is_finite()) || n.min == n.max {
                return Err(ConfigError::Invalid(format!("normalization range for `{name}` is degenerate")));
            }
            normalization.insert(dimension(name)?, Normalization { min: n.min, max: n.max });
        }
        Ok(Some(ScoringConfig { weights, normalization }))
    }

    pub fn engine_config(&self, verbose: bool, exec: Exec) -> Result<EngineConfig, ConfigError> {
        let b = &self.backend;
        let base = Decoding::default();
        let retry = RetryPolicy::default();
        Ok(EngineConfig {
            top_k: self.defaults.top_k,
            candidate_policy: self.defaults.candidate_policy,
            decoding: Decoding {
                temperature: b.temperature.unwrap_or(base.temperature),
                max_output_tokens: b.max_output_tokens.unwrap_or(base.max_output_tokens),
            },
            retry: RetryPolicy {
                max_retries: b.max_retries.unwrap_or(retry.max_retries),
                initial_backoff: b.initial_backoff_ms.map(Duration::from_millis).unwrap_or(retry.initial_backoff),
            },
            knowledge_cap: self.defaults.knowledge_cap,
            prices: self.prices()?,
            scoring: self.scoring()?,
            system_preamble: b.system_preamble.clone().unwrap_or_else(|| DEFAULT_SYSTEM_PREAMBLE.to_string()),
            verbose,
            exec,
        })
    }

    pub fn sandbox_config(&self) -> SandboxConfig {
        let s = &self.sandbox;
        let base = SandboxConfig::default();
        SandboxConfig {
            grace: s.grace_seconds.map(Duration::from_secs).unwrap_or(DEFAULT_GRACE),
            env_allow: s.env_allow.clone().unwrap_or(base.env_allow),
            extra_env: s.env.clone(),
            log_cap_bytes: s.log_cap_bytes.unwrap_or(base.log_cap_bytes),
            scratch_root: s.scratch_dir.clone(),
        }
    }

    /// A fresh model for one task. `task_script` overrides the configured script.
    pub fn build_model(&self, task_script: Option<&Path>) -> Result<Box<dyn ChatModel>, ConfigError> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Scripted => {
                let path = task_script
                    .map(Path::to_path_buf)
                    .or_else(|| b.script.clone())
                    .ok_or_else(|| ConfigError::Invalid("the scripted backend needs a `script`".into()))?;
                let script = ScriptFile::load(&path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Box::new(ScriptedModel::from_script(script)))
            }
            BackendKind::Http => Ok(Box::new(HttpChatModel::new(HttpSettings {
                endpoint: b.endpoint.clone().unwrap_or_default(),
                model: b.model.clone().unwrap_or_default(),
                api_key: env_key(&b.api_key_env)?,
                timeout: Duration::from_secs(b.timeout_seconds.unwrap_or(600)),
            }))),
        }
    }

    pub fn build_embedder(&self) -> Result<Box<dyn Embedder>, ConfigError> {
        let e = &self.embedding;
        match e.kind {
            EmbeddingKind::Hash => Ok(Box::new(HashEmbedder::new(e.dimension.unwrap_or(HASH_EMBEDDER_DIMENSION)))),
            EmbeddingKind::Http => Ok(Box::new(HttpEmbedder::new(
                e.endpoint.clone().unwrap_or_default(),
                e.model.clone().unwrap_or_default(),
                env_key(&e.api_key_env)?,
                e.dimension.unwrap_or(HASH_EMBEDDER_DIMENSION),
                Duration::from_secs(e.timeout_seconds.unwrap_or(60)),
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFileRaw {
    task_id: String,
    requirement: Option<String>,
    requirement_file: Option<PathBuf>,
    test_command: String,
    full_score: Option<Decimal>,
    attempt_budget: Option<u32>,
    internal_iteration_budget: Option<u32>,
    timeout_seconds: Option<u64>,
    script: Option<PathBuf>,
}

/// A task definition plus its optional scripted-backend override.
#[derive(Debug, Clone)]
pub struct TaskFile {
    pub spec: TaskSpec,
    pub script: Option<PathBuf>,
}

impl TaskFile {
    pub fn load(path: &Path, defaults: &Defaults) -> Result<Self, ConfigError> {
        let raw: TaskFileRaw = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let requirement = match (raw.requirement, raw.requirement_file) {
            (Some(text), None) => text,
            (None, Some(file)) => {
                let file = resolve(base, &file);
                fs::read_to_string(&file).map_err(|source| ConfigError::Read { path: file, source })?
            }
            _ => return Err(ConfigError::Invalid("a task needs exactly one of `requirement` or `requirement_file`".into())),
        };
        let full_score = match raw.full_score.as_ref().or(defaults.full_score.as_ref()) {
            Some(d) => d.fraction()?,
            None => Fraction::from_integer(1),
        };
        let spec = TaskSpec {
            task_id: raw.task_id,
            requirement,
            full_score,
            attempt_budget: raw.attempt_budget.unwrap_or(defaults.attempt_budget),
            test_command: raw.test_command,
            internal_iteration_budget: raw.internal_iteration_budget.unwrap_or(defaults.internal_iteration_budget),
            timeout_seconds: raw.timeout_seconds.unwrap_or(defaults.timeout_seconds),
        };
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(TaskFile { spec, script: raw.script.map(|s| resolve(base, &s)) })
    }
}

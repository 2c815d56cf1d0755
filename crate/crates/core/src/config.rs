//! Run configuration: one TOML document with a section per subsystem.
//!
//! Unknown keys are rejected. Parse errors carry the line and column of the
//! offending key.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{AggConfig, AggMode};
use crate::classifier::TrainConfig;
use crate::data::{DatasetSpec, PartitionSpec};
use crate::diffusion::DiffusionConfig;
use crate::mixup::{MixConfig, MixMode};
use crate::pseudolabel::{PlConfig, PlMode};
use crate::topology::{Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid topology: {0}")]
    Topology(#[from] TopologyError),
    /// A semantic error pinned to the line of the key that caused it.
    #[error("{line}: {source}")]
    At { line: usize, source: Box<ConfigError> },
    #[error("{path}:{source}")]
    InFile { path: String, source: Box<ConfigError> },
}

impl ConfigError {
    /// The error with location wrappers removed.
    pub fn root(&self) -> &ConfigError {
        match self {
            ConfigError::At { source, .. } | ConfigError::InFile { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Topology section: either a preset name or explicit roles and edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Preset(String),
    Explicit(ExplicitTopology),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitTopology {
    /// One of `"L"`, `"U"`, `"M"` per node.
    pub roles: Vec<String>,
    /// Undirected edges as `[a, b]` node-id pairs.
    pub edges: Vec<(usize, usize)>,
}

impl TopologySpec {
    pub fn load(&self) -> Result<Topology, TopologyError> {
        match self {
            TopologySpec::Preset(name) => Topology::preset(name),
            TopologySpec::Explicit(t) => Topology::from_labels(&t.roles, &t.edges),
        }
    }
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Preset("topo1".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_sizes: Vec<usize>,
    /// Start every client from the same classifier and diffusion weights.
    pub identical_init: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_sizes: vec![32, 32], identical_init: true }
    }
}

/// What a run trains. The ablation names switch one component of the full
/// method and leave the rest as configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The configured pipeline as-is.
    Semidfl,
    /// Supervised DFL on the labeled data only.
    DflLb,
    /// Supervised DFL with every sample labeled.
    DflUb,
    VanillaPl,
    Apl,
    Npl,
    LMixup,
    CMixup,
    Constant,
    Adatest,
    Adagen,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Semidfl,
        Method::DflLb,
        Method::DflUb,
        Method::VanillaPl,
        Method::Apl,
        Method::Npl,
        Method::LMixup,
        Method::CMixup,
        Method::Constant,
        Method::Adatest,
        Method::Adagen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Semidfl => "semidfl",
            Method::DflLb => "dfl_lb",
            Method::DflUb => "dfl_ub",
            Method::VanillaPl => "vanilla_pl",
            Method::Apl => "apl",
            Method::Npl => "npl",
            Method::LMixup => "l_mixup",
            Method::CMixup => "c_mixup",
            Method::Constant => "constant",
            Method::Adatest => "adatest",
            Method::Adagen => "adagen",
        }
    }

    /// Applies the method's override to the component configs.
    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Method::Semidfl | Method::DflLb | Method::DflUb => {}
            Method::VanillaPl => cfg.pl.mode = PlMode::Vanilla,
            Method::Apl => cfg.pl.mode = PlMode::Apl,
            Method::Npl => cfg.pl.mode = PlMode::Npl,
            Method::LMixup => cfg.mixup.mode = MixMode::LMixup,
            Method::CMixup => cfg.mixup.mode = MixMode::CMixup,
            Method::Constant => cfg.agg.mode = AggMode::Constant,
            Method::Adatest => cfg.agg.mode = AggMode::Adatest,
            Method::Adagen => cfg.agg.mode = AggMode::Adagen,
        }
    }

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            Method::DflLb => Some(Baseline::LowerBound),
            Method::DflUb => Some(Baseline::UpperBound),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    LowerBound,
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alpha: Vec<f64>,
    pub r: Vec<f64>,
    pub methods: Vec<Method>,
    /// Explicit seeds; when empty, `repeats` consecutive seeds starting at
    /// the run seed are used.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Global rounds `T`.
    pub rounds: usize,
    pub method: Method,
    pub repeats: usize,
    pub topology: TopologySpec,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub diffusion: DiffusionConfig,
    pub pl: PlConfig,
    pub mixup: MixConfig,
    pub agg: AggConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rounds: 500,
            method: Method::Semidfl,
            repeats: 1,
            topology: TopologySpec::default(),
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            diffusion: DiffusionConfig::default(),
            pl: PlConfig::default(),
            mixup: MixConfig::default(),
            agg: AggConfig::default(),
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(describe_toml_error(text, &e)))?;
        cfg.validate().map_err(|e| locate(text, e))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(_) | ConfigError::At { .. } => {
                ConfigError::InFile { path: path.display().to_string(), source: Box::new(e) }
            }
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The config with the method's overrides applied.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        self.method.apply(&mut cfg);
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.rounds == 0 {
            return invalid("rounds must be >= 1".into());
        }
        if self.diffusion.warmup > self.rounds {
            return invalid(format!("diffusion.warmup_R = {} exceeds rounds = {}", self.diffusion.warmup, self.rounds));
        }
        if self.diffusion.gen_period_rounds == 0 {
            return invalid("diffusion.gen_period_rounds must be >= 1".into());
        }
        if self.diffusion.steps == 0 || self.diffusion.sample_steps == 0 || self.diffusion.sample_steps > self.diffusion.steps {
            return invalid("diffusion.sample_steps must be in 1..=diffusion.H".into());
        }
        if let Some(c) = self.diffusion.clip_sample {
            if !(c > 0.0) {
                return invalid(format!("diffusion.clip_sample must be > 0, got {c}"));
            }
        }
        if !(0.0..=1.0).contains(&self.diffusion.p_uncond) {
            return invalid("diffusion.p_uncond must be in [0, 1]".into());
        }
        if self.train.batch == 0 {
            return invalid("train.batch must be >= 1".into());
        }
        if self.dataset.classes < 2 || self.dataset.dim == 0 {
            return invalid("dataset needs at least 2 classes and 1 dimension".into());
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return invalid("dataset.test_fraction must be in [0, 1)".into());
        }
        self.partition.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pl.validate().map_err(ConfigError::Invalid)?;
        self.mixup.validate().map_err(ConfigError::Invalid)?;
        self.topology.load()?;
        if let Some(sweep) = &self.sweep {
            for &a in &sweep.alpha {
                if !(a > 0.0) {
                    return invalid(format!("sweep.alpha entries must be > 0, got {a}"));
                }
            }
            for &r in &sweep.r {
                if !(r > 0.0 && r <= 1.0) {
                    return invalid(format!("sweep.r entries must be in (0, 1], got {r}"));
                }
            }
        }
        Ok(())
    }

    /// Seeds used by a sweep.
    pub fn sweep_seeds(&self) -> Vec<u64> {
        match &self.sweep {
            Some(s) if !s.seeds.is_empty() => s.seeds.clone(),
            _ => (0..self.repeats.max(1) as u64).map(|k| self.seed + k).collect(),
        }
    }
}

/// Line of `key` (dotted, e.g. `diffusion.warmup_R`) in the document.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = key.rsplit_once('.').unwrap_or(("", key));
    let mut current = "";
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(header) = t.strip_prefix('[') {
            let name = header.trim_end_matches(']').trim();
            if name == key {
                return Some(n + 1);
            }
            current = name;
        } else if current == table {
            if let Some(rest) = t.strip_prefix(leaf) {
                if rest.trim_start().starts_with('=') {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

fn locate(text: &str, err: ConfigError) -> ConfigError {
    let line = match &err {
        ConfigError::Invalid(msg) => {
            let words: Vec<&str> = msg
                .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
                .filter(|w| w.chars().next().is_some_and(|c| c.is_alphabetic()))
                .collect();
            // Dotted keys are more specific than bare table names.
            let dotted = words.iter().filter(|w| w.contains('.'));
            dotted.chain(words.iter()).find_map(|w| key_line(text, w))
        }
        ConfigError::Topology(_) => key_line(text, "topology"),
        _ => None,
    };
    match line {
        Some(line) => ConfigError::At { line, source: Box::new(err) },
        None => err,
    }
}

fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message().trim().to_string();
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            format!("{line}:{col}: {msg}")
        }
        None => msg,
    }
}

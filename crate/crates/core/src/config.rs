//! Pipeline configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::CampaignLimits;
use crate::ir::ErrorPatterns;
use crate::pipeline::{ExtractConfig, Mode};
use crate::solve::SolverConfig;
use crate::symprop::{PropagateOptions, SizeBounds};
use crate::testgen::GenConfig;
use crate::valpath::{PathLimits, DEFAULT_BUDGET};

/// Callee name patterns treated as error handlers.
pub const DEFAULT_ERROR_PATTERNS: [&str; 2] = ["*_failure", "check_*"];

/// The shipped defaults document.
pub const DEFAULTS_TOML: &str = include_str!("../../../defaults.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Constrained,
    BaselineRandom,
    Both,
}

impl RunMode {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            RunMode::Constrained => vec![Mode::Constrained],
            RunMode::BaselineRandom => vec![Mode::BaselineRandom],
            RunMode::Both => vec![Mode::Constrained, Mode::BaselineRandom],
        }
    }

    pub fn parse(s: &str) -> Option<RunMode> {
        match s {
            "constrained" => Some(RunMode::Constrained),
            "baseline-random" => Some(RunMode::BaselineRandom),
            "both" => Some(RunMode::Both),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValPathConfig {
    /// Backward edge expansions allowed while identifying validation blocks.
    pub budget: u64,
    pub max_paths: usize,
    pub max_inline_depth: usize,
    pub max_len: usize,
}

impl Default for ValPathConfig {
    fn default() -> Self {
        let l = PathLimits::default();
        ValPathConfig {
            budget: DEFAULT_BUDGET,
            max_paths: l.max_paths,
            max_inline_depth: l.max_inline_depth,
            max_len: l.max_len,
        }
    }
}

impl ValPathConfig {
    pub fn limits(&self) -> PathLimits {
        PathLimits { max_paths: self.max_paths, max_inline_depth: self.max_inline_depth, max_len: self.max_len }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub mode: RunMode,
    /// Operators processed in parallel; 0 uses every core.
    pub jobs: usize,
    pub error_patterns: Vec<String>,
    pub valpath: ValPathConfig,
    pub bounds: SizeBounds,
    pub solver: SolverConfig,
    pub gen: GenConfig,
    pub campaign: CampaignLimits,
    /// External SMT solver for cross-checking emitted scripts.
    #[serde(skip)]
    pub smt_solver: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus"),
            output: PathBuf::from("out"),
            seed: 0,
            mode: RunMode::Both,
            jobs: 0,
            error_patterns: DEFAULT_ERROR_PATTERNS.iter().map(|s| s.to_string()).collect(),
            valpath: ValPathConfig::default(),
            bounds: SizeBounds::default(),
            solver: SolverConfig::default(),
            gen: GenConfig::default(),
            campaign: CampaignLimits::default(),
            smt_solver: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = ConfigError::Invalid;
        if self.valpath.budget == 0 {
            return Err(invalid("valpath.budget must be positive".into()));
        }
        if self.valpath.max_paths == 0 || self.valpath.max_len == 0 {
            return Err(invalid("valpath.max_paths and valpath.max_len must be positive".into()));
        }
        if self.solver.max_samples == 0 {
            return Err(invalid("solver.max_samples must be positive".into()));
        }
        if self.solver.node_budget == 0 {
            return Err(invalid("solver.node_budget must be positive".into()));
        }
        ErrorPatterns::new(&self.error_patterns).map_err(|e| invalid(format!("error_patterns: {e}")))?;
        self.bounds.validate().map_err(invalid)?;
        self.gen.validate().map_err(invalid)?;
        self.campaign.validate().map_err(invalid)?;
        Ok(())
    }

    pub fn extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            patterns: ErrorPatterns::new(&self.error_patterns).expect("validated patterns"),
            budget: self.valpath.budget,
            limits: self.valpath.limits(),
            bounds: self.bounds,
            propagate: PropagateOptions { solver: self.solver.clone(), ..PropagateOptions::default() },
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig { seed, ..self.solver.clone() }
    }

    pub fn gen_config(&self, seed: u64) -> GenConfig {
        GenConfig { bounds: self.bounds, seed, ..self.gen.clone() }
    }
}

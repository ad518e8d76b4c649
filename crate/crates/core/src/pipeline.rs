//! Stage composition for one operator and for a whole corpus.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::ir::{build_cfg, find_error_sites, ErrorPatterns, ErrorSite, IRModule};
use crate::solve::{sample_solutions, Samples, SolverConfig};
use crate::symprop::{
    constrained_props, propagate_path, seed_controllable, ConstraintSet, PropagateOptions, PropertyRef, SatStatus,
    SizeBounds, SymError, UnsatCache,
};
use crate::testgen::{mutate_extremes, random_baseline, realize, GenConfig, TestCase};
use crate::valpath::{
    extract_valid_paths, identify_validation_blocks, validation_anchors, PathLimits, PathSet, ValPathError,
    ValidationSet,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    ValPath(#[from] ValPathError),
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Clone, Debug)]
pub struct ExtractConfig {
    pub patterns: ErrorPatterns,
    pub budget: u64,
    pub limits: PathLimits,
    pub bounds: SizeBounds,
    pub propagate: PropagateOptions,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            patterns: ErrorPatterns::new(&crate::config::DEFAULT_ERROR_PATTERNS).expect("default patterns are valid"),
            budget: crate::valpath::DEFAULT_BUDGET,
            limits: PathLimits::default(),
            bounds: SizeBounds::default(),
            propagate: PropagateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Extraction {
    pub op_name: String,
    pub sites: Vec<ErrorSite>,
    pub vset: ValidationSet,
    pub paths: PathSet,
    /// One set per retained path, in path order.
    pub sets: Vec<ConstraintSet>,
    /// Paths skipped through the unsat-prefix cache.
    pub cache_hits: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Extraction {
    pub fn sat_sets(&self) -> impl Iterator<Item = &ConstraintSet> {
        self.sets.iter().filter(|s| s.status == SatStatus::Sat)
    }
}

/// Validation paths and their constraint sets for one operator.
pub fn extract(module: &IRModule, cfg: &ExtractConfig) -> Result<Extraction, PipelineError> {
    let start = Instant::now();
    let sites = find_error_sites(module, &cfg.patterns);
    let cfg_main = build_cfg(module.main());
    let anchors = validation_anchors(module, &sites);
    let vset = identify_validation_blocks(&cfg_main, &anchors, cfg.budget)?;
    let paths = extract_valid_paths(module, &vset, &cfg.patterns, &cfg.limits);
    let cache = UnsatCache::new();
    let mut sets = Vec::with_capacity(paths.retained.len());
    let mut cache_hits = 0;
    for p in &paths.retained {
        if cache.lookup(&p.steps).is_some() {
            cache_hits += 1;
        }
        let state = seed_controllable(module, p, &cfg.bounds)?;
        sets.push(propagate_path(module, p, &state, &cache, &cfg.propagate));
    }
    Ok(Extraction {
        op_name: module.meta.op_name.clone(),
        sites,
        vset,
        paths,
        sets,
        cache_hits,
        elapsed: start.elapsed(),
    })
}

/// Mixes two seeds into one (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one operator, stable under corpus reordering.
pub fn operator_seed(seed: u64, op_name: &str) -> u64 {
    op_name.bytes().fold(mix_seed(seed, 0x6f70), |acc, b| mix_seed(acc, b as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Constrained,
    BaselineRandom,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Constrained => "constrained",
            Mode::BaselineRandom => "baseline-random",
        }
    }
}

/// Sampled solutions of one satisfiable path.
#[derive(Clone, Debug, Serialize)]
pub struct PathSamples {
    pub path_id: String,
    pub constrained: BTreeSet<PropertyRef>,
    pub samples: Samples,
}

/// Samples up to `cfg.max_samples` solutions for every satisfiable set.
pub fn sample_paths(ex: &Extraction, cfg: &SolverConfig) -> Vec<PathSamples> {
    ex.sat_sets()
        .enumerate()
        .map(|(i, cs)| {
            let c = SolverConfig { seed: mix_seed(cfg.seed, i as u64), ..cfg.clone() };
            PathSamples {
                path_id: cs.path_id.clone(),
                constrained: constrained_props(cs),
                samples: sample_solutions(cs, cfg.max_samples, &c),
            }
        })
        .collect()
}

/// Constrained test cases: solutions are visited round-robin across paths and
/// re-realized with fresh seeds once every solution has been used. Without any
/// solution the stream falls back to unconstrained cases.
pub fn constrained_cases<'a>(
    module: &'a IRModule,
    paths: &'a [PathSamples],
    gen: &'a GenConfig,
) -> impl Iterator<Item = TestCase> + 'a {
    let mut order: Vec<(usize, usize)> = Vec::new();
    let deepest = paths.iter().map(|p| p.samples.solutions.len()).max().unwrap_or(0);
    for j in 0..deepest {
        for (i, p) in paths.iter().enumerate() {
            if j < p.samples.solutions.len() {
                order.push((i, j));
            }
        }
    }
    (0u64..).map(move |round| {
        let cfg = gen.with_seed(mix_seed(gen.seed, round));
        let tc = if order.is_empty() {
            random_baseline(&module.meta, &module.literals, &cfg)
        } else {
            let (i, j) = order[round as usize % order.len()];
            let p = &paths[i];
            realize(&p.samples.solutions[j], &p.constrained, &module.meta, &module.literals, &cfg)
                .expect("solver output lies within the natural bounds")
        };
        mutate_extremes(&tc, &cfg)
    })
}

/// Unconstrained test cases with the same seeds and mutation as [`constrained_cases`].
pub fn baseline_cases<'a>(module: &'a IRModule, gen: &'a GenConfig) -> impl Iterator<Item = TestCase> + 'a {
    (0u64..).map(move |round| {
        let cfg = gen.with_seed(mix_seed(gen.seed, round));
        mutate_extremes(&random_baseline(&module.meta, &module.literals, &cfg), &cfg)
    })
}

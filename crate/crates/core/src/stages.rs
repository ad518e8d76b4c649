//! On-disk stages of a pipeline run. Every stage recomputes what it needs from
//! the corpus and writes only its own artifacts, so running the stages one by
//! one leaves the same output tree as a full run.
//!
//! Layout under the output directory:
//!
//! ```text
//! corpus_index.json
//! <op>/paths.json
//! <op>/constraints.json
//! <op>/<path_id>.smt2              constrained modes only
//! <op>/crosscheck.json             with an external solver
//! <op>/solutions.json              constrained modes only
//! <op>/<mode>/cases.jsonl
//! <op>/<mode>/campaign.json
//! bugs/<op>/<bug_key>/repro.jsonl
//! cnp.json, report.json, report.md
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::harness::{run_campaign, Bug, HarnessError, OperatorReport};
use crate::ir::{parse_module, IRModule};
use crate::pipeline::{
    baseline_cases, constrained_cases, extract, operator_seed, sample_paths, Extraction, Mode, PathSamples,
    PipelineError,
};
use crate::registry::{scan_corpus, CorpusIndex, OperatorMeta, ScanError};
use crate::solve::{check_sat, emit_smtlib, run_external, ExternalVerdict, SatResult};
use crate::symprop::{tabulate_cnp, CnpTable, ConstraintKind, SatStatus};
use crate::testgen::TestCase;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("corpus {0} contains no operators")]
    EmptyCorpus(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("no operator named {0:?} in the corpus")]
    UnknownOperator(String),
    #[error("{op}: {source}")]
    Pipeline { op: String, source: PipelineError },
    #[error("{op}: {source}")]
    Harness { op: String, source: HarnessError },
    #[error("{path}: {message}")]
    BadArtifact { path: String, message: String },
    #[error("missing artifact {0}; run the `test` stage first")]
    MissingArtifact(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, text: &str) -> Result<(), StageError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StageError> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    write_file(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StageError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => StageError::MissingArtifact(path.display().to_string()),
        _ => StageError::Io { path: path.display().to_string(), source: e },
    })?;
    serde_json::from_str(&text)
        .map_err(|e| StageError::BadArtifact { path: path.display().to_string(), message: e.to_string() })
}

/// A scanned and parsed corpus.
pub struct Corpus {
    pub index: CorpusIndex,
    pub modules: Vec<IRModule>,
    /// Files that failed to scan or parse; they take no further part in the run.
    pub failures: Vec<StageError>,
}

impl Corpus {
    /// Position of an operator, looked up by name or by source file stem.
    pub fn position(&self, name: &str) -> Result<usize, StageError> {
        let by_stem = |m: &OperatorMeta| Path::new(&m.source_path).file_stem().is_some_and(|s| s == name);
        self.index
            .operators
            .iter()
            .position(|m| m.op_name == name || by_stem(m))
            .ok_or_else(|| StageError::UnknownOperator(name.to_string()))
    }

    pub fn find(&self, name: &str) -> Result<&IRModule, StageError> {
        Ok(&self.modules[self.position(name)?])
    }
}

/// Scans and parses the corpus without writing anything.
pub fn load_corpus(root: &Path) -> Result<Corpus, StageError> {
    let scan = scan_corpus(root)?;
    let mut failures: Vec<StageError> = scan
        .failures
        .iter()
        .map(|f| StageError::Parse { path: f.path.clone(), message: f.diagnostic.to_string() })
        .collect();
    let mut index = scan.index;
    let mut modules = Vec::new();
    let mut kept = Vec::new();
    for meta in &index.operators {
        let file = index.source_file(meta);
        let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
        match parse_module(&text) {
            Ok(mut m) => {
                m.meta.source_path = meta.source_path.clone();
                modules.push(m);
                kept.push(meta.clone());
            }
            Err(d) => failures.push(StageError::Parse { path: meta.source_path.clone(), message: d.to_string() }),
        }
    }
    if kept.is_empty() {
        return Err(StageError::EmptyCorpus(root.display().to_string()));
    }
    index.operators = kept;
    Ok(Corpus { index, modules, failures })
}

fn op_dir(cfg: &PipelineConfig, m: &IRModule) -> PathBuf {
    cfg.output.join(&m.meta.op_name)
}

fn mode_dir(cfg: &PipelineConfig, m: &IRModule, mode: Mode) -> PathBuf {
    op_dir(cfg, m).join(mode.as_str())
}

fn constrained_enabled(cfg: &PipelineConfig) -> bool {
    cfg.mode.modes().contains(&Mode::Constrained)
}

pub fn stage_scan(cfg: &PipelineConfig) -> Result<Corpus, StageError> {
    let corpus = load_corpus(&cfg.corpus)?;
    write_file(&cfg.output.join("corpus_index.json"), &corpus.index.to_json())?;
    Ok(corpus)
}

pub fn extraction(cfg: &PipelineConfig, m: &IRModule) -> Result<Extraction, StageError> {
    extract(m, &cfg.extract_config()).map_err(|source| StageError::Pipeline { op: m.meta.op_name.clone(), source })
}

#[derive(Serialize)]
struct PathDump {
    id: String,
    exit: crate::valpath::PathExit,
    blocks: Vec<String>,
    directions: Vec<String>,
    back_edges: usize,
}

#[derive(Serialize)]
struct PathsDump {
    op_name: String,
    validation_blocks: Vec<String>,
    budget_hit: bool,
    expansions: u64,
    truncated: bool,
    pruned: usize,
    ejected_count: usize,
    retained: Vec<PathDump>,
    ejected: Vec<PathDump>,
}

fn dump_path(m: &IRModule, p: &crate::valpath::Path) -> PathDump {
    let label = |f: crate::ir::FuncId, b: crate::ir::BlockId| {
        let func = &m.functions[f];
        format!("@{}/{}", func.name, func.blocks[b].label)
    };
    PathDump {
        id: p.id.clone(),
        exit: p.exit,
        blocks: p.steps.iter().map(|s| label(s.func, s.block)).collect(),
        directions: p
            .taken_dirs()
            .into_iter()
            .map(|(f, b, d)| format!("{}:{}", label(f, b), if d { "T" } else { "F" }))
            .collect(),
        back_edges: p.back_edges_taken(),
    }
}

pub fn stage_paths(cfg: &PipelineConfig, m: &IRModule) -> Result<Extraction, StageError> {
    let ex = extraction(cfg, m)?;
    let main = m.main();
    let dump = PathsDump {
        op_name: m.meta.op_name.clone(),
        validation_blocks: ex.vset.blocks.iter().map(|&b| main.blocks[b].label.clone()).collect(),
        budget_hit: ex.vset.budget_hit,
        expansions: ex.vset.expansions,
        truncated: ex.paths.truncated,
        pruned: ex.paths.pruned,
        ejected_count: ex.paths.ejected_count,
        retained: ex.paths.retained.iter().map(|p| dump_path(m, p)).collect(),
        ejected: ex.paths.ejected.iter().map(|p| dump_path(m, p)).collect(),
    };
    write_json(&op_dir(cfg, m).join("paths.json"), &dump)?;
    Ok(ex)
}

/// Internal and external verdicts on one emitted script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub path_id: String,
    pub internal: String,
    pub external: String,
    pub agree: bool,
}

#[derive(Serialize)]
struct ConstraintsDump<'a> {
    op_name: &'a str,
    counts: Vec<CountRow<'a>>,
    sets: &'a [crate::symprop::ConstraintSet],
}

#[derive(Serialize)]
struct CountRow<'a> {
    path_id: &'a str,
    status: SatStatus,
    natural: usize,
    propagation: usize,
    branch: usize,
}

fn verdict_name(r: &SatResult) -> &'static str {
    match r {
        SatResult::Sat(_) => "sat",
        SatResult::Unsat => "unsat",
        SatResult::Unknown => "unknown",
    }
}

/// Writes constraint sets and, in constrained modes, one SMT-LIB2 script per
/// path. With `cfg.smt_solver` set, each script is also checked externally.
pub fn stage_constraints(cfg: &PipelineConfig, m: &IRModule) -> Result<(Extraction, Vec<CrossCheck>), StageError> {
    let ex = extraction(cfg, m)?;
    let dir = op_dir(cfg, m);
    let dump = ConstraintsDump {
        op_name: &m.meta.op_name,
        counts: ex
            .sets
            .iter()
            .map(|cs| CountRow {
                path_id: &cs.path_id,
                status: cs.status,
                natural: cs.count_kind(ConstraintKind::Natural),
                propagation: cs.count_kind(ConstraintKind::Propagation),
                branch: cs.count_kind(ConstraintKind::Branch),
            })
            .collect(),
        sets: &ex.sets,
    };
    write_json(&dir.join("constraints.json"), &dump)?;
    let mut checks = Vec::new();
    if constrained_enabled(cfg) {
        for cs in &ex.sets {
            let script = emit_smtlib(cs);
            let path = dir.join(format!("{}.smt2", cs.path_id));
            write_file(&path, &script)?;
            if let Some(solver) = &cfg.smt_solver {
                let internal = check_sat(cs, &cfg.solver_config(0));
                let external = run_external(solver, &script).map_err(io_err(solver))?;
                let ext = match &external {
                    ExternalVerdict::Sat(_) => "sat".to_string(),
                    ExternalVerdict::Unsat => "unsat".to_string(),
                    ExternalVerdict::Unknown(s) => format!("unknown: {s}"),
                };
                let agree = matches!(
                    (&internal, &external),
                    (SatResult::Sat(_), ExternalVerdict::Sat(_)) | (SatResult::Unsat, ExternalVerdict::Unsat)
                );
                checks.push(CrossCheck { path_id: cs.path_id.clone(), internal: verdict_name(&internal).into(), external: ext, agree });
            }
        }
        if cfg.smt_solver.is_some() {
            write_json(&dir.join("crosscheck.json"), &checks)?;
        }
    }
    Ok((ex, checks))
}

pub fn solutions(cfg: &PipelineConfig, m: &IRModule, ex: &Extraction) -> Vec<PathSamples> {
    let seed = operator_seed(cfg.seed, &m.meta.op_name);
    sample_paths(ex, &cfg.solver_config(seed))
}

pub fn stage_solve(cfg: &PipelineConfig, m: &IRModule) -> Result<Vec<PathSamples>, StageError> {
    let ex = extraction(cfg, m)?;
    let samples = solutions(cfg, m, &ex);
    write_json(&op_dir(cfg, m).join("solutions.json"), &samples)?;
    Ok(samples)
}

/// The first `rounds` cases of a mode's stream.
pub fn cases(cfg: &PipelineConfig, m: &IRModule, mode: Mode) -> Result<Vec<TestCase>, StageError> {
    let gen = cfg.gen_config(operator_seed(cfg.seed, &m.meta.op_name));
    let n = cfg.campaign.rounds;
    Ok(match mode {
        Mode::Constrained => {
            let ex = extraction(cfg, m)?;
            let samples = solutions(cfg, m, &ex);
            constrained_cases(m, &samples, &gen).take(n).collect()
        }
        Mode::BaselineRandom => baseline_cases(m, &gen).take(n).collect(),
    })
}

pub fn stage_gen(cfg: &PipelineConfig, m: &IRModule) -> Result<(), StageError> {
    for mode in cfg.mode.modes() {
        let cs = cases(cfg, m, mode)?;
        let mut text = String::new();
        for tc in &cs {
            text.push_str(&tc.to_json_line());
            text.push('\n');
        }
        write_file(&mode_dir(cfg, m, mode).join("cases.jsonl"), &text)?;
    }
    Ok(())
}

pub fn read_cases(path: &Path) -> Result<Vec<TestCase>, StageError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StageError::BadArtifact {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs one campaign per mode over `cases.jsonl` when present, otherwise over
/// freshly generated cases.
pub fn stage_test(cfg: &PipelineConfig, m: &IRModule) -> Result<Vec<OperatorReport>, StageError> {
    let mut out = Vec::new();
    for mode in cfg.mode.modes() {
        let dir = mode_dir(cfg, m, mode);
        let file = dir.join("cases.jsonl");
        let cs = if file.is_file() { read_cases(&file)? } else { cases(cfg, m, mode)? };
        let mut rep = run_campaign(m, cs, &cfg.campaign)
            .map_err(|source| StageError::Harness { op: m.meta.op_name.clone(), source })?;
        rep.mode = mode.as_str().to_string();
        write_json(&dir.join("campaign.json"), &rep)?;
        out.push(rep);
    }
    Ok(out)
}

/// Totals of one mode over the corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub operators: usize,
    pub rounds: usize,
    pub passes: usize,
    /// Passes over rounds, pooled across operators.
    pub pass_rate: f64,
    pub mean_pass_rate: f64,
    pub mean_final_coverage: f64,
    pub bugs: usize,
    pub unreproduced: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Constrained pooled pass rate over the baseline one.
    pub pass_rate_ratio: Option<f64>,
    /// Operators whose final constrained coverage is strictly higher.
    pub coverage_wins: usize,
    pub operators: usize,
    pub constrained_only_bugs: usize,
    pub baseline_only_bugs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorEntry {
    pub op_name: String,
    pub source_path: String,
    pub retained_paths: usize,
    pub ejected_paths: usize,
    pub sat_paths: usize,
    pub campaigns: Vec<OperatorReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema: u32,
    pub seed: u64,
    pub modes: Vec<String>,
    pub operators: Vec<OperatorEntry>,
    pub aggregates: BTreeMap<String, ModeAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl CampaignReport {
    pub fn campaign(&self, op: &str, mode: Mode) -> Option<&OperatorReport> {
        self.operators
            .iter()
            .find(|o| o.op_name == op)?
            .campaigns
            .iter()
            .find(|c| c.mode == mode.as_str())
    }
}

fn aggregate(reps: &[&OperatorReport]) -> ModeAggregate {
    let n = reps.len();
    let rounds: usize = reps.iter().map(|r| r.rounds).sum();
    let passes: usize = reps.iter().map(|r| r.passes).sum();
    let mean = |f: &dyn Fn(&OperatorReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reps.iter().map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    ModeAggregate {
        operators: n,
        rounds,
        passes,
        pass_rate: if rounds == 0 { 0.0 } else { passes as f64 / rounds as f64 },
        mean_pass_rate: mean(&|r| r.pass_rate),
        mean_final_coverage: mean(&|r| r.final_coverage),
        bugs: reps.iter().map(|r| r.bugs.len()).sum(),
        unreproduced: reps.iter().map(|r| r.unreproduced.len()).sum(),
    }
}

fn bug_keys(r: &OperatorReport) -> std::collections::BTreeSet<String> {
    r.bugs.iter().map(Bug::key).collect()
}

/// Assembles the corpus report from the campaign artifacts; writes the CNP
/// table, `report.json`, `report.md` and the bug repro directories.
pub fn stage_report(cfg: &PipelineConfig, corpus: &Corpus) -> Result<CampaignReport, StageError> {
    let modes = cfg.mode.modes();
    let mut operators = Vec::new();
    let mut all_sets = Vec::new();
    for m in &corpus.modules {
        let ex = extraction(cfg, m)?;
        let mut campaigns = Vec::new();
        for &mode in &modes {
            let rep: OperatorReport = read_json(&mode_dir(cfg, m, mode).join("campaign.json"))?;
            campaigns.push(rep);
        }
        operators.push(OperatorEntry {
            op_name: m.meta.op_name.clone(),
            source_path: m.meta.source_path.clone(),
            retained_paths: ex.paths.retained.len(),
            ejected_paths: ex.paths.ejected_count,
            sat_paths: ex.sat_sets().count(),
            campaigns,
        });
        all_sets.extend(ex.sets);
    }
    let cnp = tabulate_cnp(&all_sets, &corpus.index);
    write_json(&cfg.output.join("cnp.json"), &cnp)?;

    let mut aggregates = BTreeMap::new();
    for &mode in &modes {
        let reps: Vec<&OperatorReport> =
            operators.iter().flat_map(|o| o.campaigns.iter().filter(|c| c.mode == mode.as_str())).collect();
        aggregates.insert(mode.as_str().to_string(), aggregate(&reps));
    }
    let comparison = (modes.len() == 2).then(|| {
        let mut c = Comparison { operators: operators.len(), ..Comparison::default() };
        for o in &operators {
            let (con, base) = (&o.campaigns[0], &o.campaigns[1]);
            if con.coverage.last() > base.coverage.last() {
                c.coverage_wins += 1;
            }
            let (kc, kb) = (bug_keys(con), bug_keys(base));
            c.constrained_only_bugs += kc.difference(&kb).count();
            c.baseline_only_bugs += kb.difference(&kc).count();
        }
        let base = aggregates["baseline-random"].pass_rate;
        if base > 0.0 {
            c.pass_rate_ratio = Some(aggregates["constrained"].pass_rate / base);
        }
        c
    });
    let report = CampaignReport {
        schema: REPORT_SCHEMA,
        seed: cfg.seed,
        modes: modes.iter().map(|m| m.as_str().to_string()).collect(),
        operators,
        aggregates,
        comparison,
    };

    let bugs_dir = cfg.output.join("bugs");
    if bugs_dir.exists() {
        std::fs::remove_dir_all(&bugs_dir).map_err(io_err(&bugs_dir))?;
    }
    for o in &report.operators {
        // One repro per key; earlier modes take precedence.
        let mut seen = std::collections::BTreeSet::new();
        for bug in o.campaigns.iter().flat_map(|c| c.bugs.iter()) {
            if seen.insert(bug.key()) {
                let line = format!("{}\n", bug.repro.to_json_line());
                write_file(&bugs_dir.join(&o.op_name).join(bug.key()).join("repro.jsonl"), &line)?;
            }
        }
    }
    write_json(&cfg.output.join("report.json"), &report)?;
    write_file(&cfg.output.join("report.md"), &render_markdown(&report, &cnp))?;
    Ok(report)
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn render_markdown(r: &CampaignReport, cnp: &CnpTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Campaign report\n\nSeed {}; modes: {}.\n", r.seed, r.modes.join(", "));
    let _ = writeln!(s, "## Operators\n");
    let mut head = String::from("| operator | paths (kept/ejected) |");
    let mut rule = String::from("|---|---|");
    for m in &r.modes {
        let _ = write!(head, " {m} pass | {m} coverage | {m} bugs |");
        rule.push_str("---|---|---|");
    }
    let _ = writeln!(s, "{head}\n{rule}");
    for o in &r.operators {
        let _ = write!(s, "| {} | {}/{} |", o.op_name, o.retained_paths, o.ejected_paths);
        for c in &o.campaigns {
            let bugs: Vec<String> = c.bugs.iter().map(|b| format!("{} {}", b.kind.as_str(), b.site)).collect();
            let _ = write!(
                s,
                " {} | {}/{} | {} |",
                pct(c.pass_rate),
                c.coverage.last().copied().unwrap_or(0),
                c.edges_total,
                if bugs.is_empty() { "-".to_string() } else { bugs.join("<br>") }
            );
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\n## Totals\n\n| mode | rounds | pass rate | mean coverage | bugs | unreproduced |\n|---|---|---|---|---|---|");
    for (m, a) in &r.aggregates {
        let _ = writeln!(
            s,
            "| {m} | {} | {} | {} | {} | {} |",
            a.rounds,
            pct(a.pass_rate),
            pct(a.mean_final_coverage),
            a.bugs,
            a.unreproduced
        );
    }
    if let Some(c) = &r.comparison {
        let ratio = c.pass_rate_ratio.map(|x| format!("{x:.2}x")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            "\nConstrained over baseline: pass rate {ratio}; higher coverage on {}/{} operators; bugs found only by constrained {}, only by baseline {}.",
            c.coverage_wins, c.operators, c.constrained_only_bugs, c.baseline_only_bugs
        );
    }
    let _ = writeln!(
        s,
        "\n## Constrained properties\n\n| operator | base value | list dtype | list length | list value | tensor dtype | tensor dim | tensor shape | sum |\n|---|---|---|---|---|---|---|---|---|"
    );
    for row in cnp.rows.iter().chain([&cnp.total]) {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            row.op_name,
            row.base_value,
            row.list_dtype,
            row.list_length,
            row.list_value,
            row.tensor_dtype,
            row.tensor_dim,
            row.tensor_shape,
            row.sum()
        );
    }
    s
}

/// Per-operator result of [`run`].
pub struct OpRun {
    pub op_name: String,
    pub crosscheck: Vec<CrossCheck>,
    pub error: Option<StageError>,
}

pub struct RunSummary {
    pub report: Option<CampaignReport>,
    pub ops: Vec<OpRun>,
    pub errors: Vec<StageError>,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        !self.errors.is_empty() || self.ops.iter().any(|o| o.error.is_some())
    }
}

fn run_operator(cfg: &PipelineConfig, m: &IRModule) -> Result<Vec<CrossCheck>, StageError> {
    stage_paths(cfg, m)?;
    let (_, checks) = stage_constraints(cfg, m)?;
    if constrained_enabled(cfg) {
        stage_solve(cfg, m)?;
    }
    stage_gen(cfg, m)?;
    stage_test(cfg, m)?;
    Ok(checks)
}

/// Runs `f` on a pool of `jobs` threads, or one per core when 0.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Every stage over the whole corpus. Operators run in parallel; failures are
/// collected per operator and the report covers the operators that finished.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary, StageError> {
    let corpus = stage_scan(cfg)?;
    let ops: Vec<OpRun> = with_jobs(cfg.jobs, || {
        corpus
            .modules
            .par_iter()
            .map(|m| match run_operator(cfg, m) {
                Ok(crosscheck) => OpRun { op_name: m.meta.op_name.clone(), crosscheck, error: None },
                Err(e) => OpRun { op_name: m.meta.op_name.clone(), crosscheck: Vec::new(), error: Some(e) },
            })
            .collect()
    });
    let mut errors = Vec::new();
    let report = if ops.iter().all(|o| o.error.is_none()) {
        match stage_report(cfg, &corpus) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(e);
                None
            }
        }
    } else {
        None
    };
    errors.extend(corpus.failures);
    Ok(RunSummary { report, ops, errors })
}

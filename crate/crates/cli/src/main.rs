use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opforge_core::config::{PipelineConfig, RunMode};
use opforge_core::registry::ScanError;
use opforge_core::stages::{self, CrossCheck, StageError};

/// Constraint extraction and constraint-guided testing for OVIR operators.
#[derive(Parser)]
#[command(name = "opforge", version)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Operators processed in parallel (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Campaign rounds per operator and mode.
    #[arg(long, global = true)]
    rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Constrained,
    BaselineRandom,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// All stages over the whole corpus.
    Run,
    /// Index the corpus.
    Scan,
    /// Validation blocks and paths of one operator.
    Paths { op: String },
    /// Constraint sets and SMT-LIB2 scripts of one operator.
    Constraints { op: String },
    /// Sampled solutions of one operator.
    Solve { op: String },
    /// Test cases of one operator.
    Gen { op: String },
    /// Campaigns of one operator.
    Test { op: String },
    /// Corpus report from the campaign artifacts.
    Report,
}

fn config(opts: &Opts) -> Result<PipelineConfig, String> {
    let mut cfg = match &opts.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| e.to_string())?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = &opts.corpus {
        cfg.corpus = c.clone();
    }
    if let Some(m) = opts.mode {
        cfg.mode = match m {
            ModeArg::Constrained => RunMode::Constrained,
            ModeArg::BaselineRandom => RunMode::BaselineRandom,
            ModeArg::Both => RunMode::Both,
        };
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(o) = &opts.output {
        cfg.output = o.clone();
    }
    if let Some(j) = opts.jobs {
        cfg.jobs = j;
    }
    if let Some(r) = opts.rounds {
        cfg.campaign.rounds = r;
    }
    cfg.smt_solver = std::env::var_os("OPFORGE_SMT_SOLVER").filter(|s| !s.is_empty()).map(PathBuf::from);
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Usage problems exit with 2, failed stages with 1.
fn status(e: &StageError) -> u8 {
    match e {
        StageError::EmptyCorpus(_) | StageError::UnknownOperator(_) | StageError::Scan(ScanError::MissingRoot(_)) => 2,
        _ => 1,
    }
}

fn report_crosscheck(op: &str, checks: &[CrossCheck]) -> bool {
    let bad: Vec<&CrossCheck> = checks.iter().filter(|c| !c.agree).collect();
    for c in &bad {
        eprintln!("{op}: path {} internal {} vs external {}", c.path_id, c.internal, c.external);
    }
    if !checks.is_empty() {
        println!("{op}: solver cross-check {}/{} agree", checks.len() - bad.len(), checks.len());
    }
    bad.is_empty()
}

fn execute(cfg: &PipelineConfig, cmd: &Cmd) -> Result<bool, StageError> {
    let op_stage = |op: &str| -> Result<(stages::Corpus, usize), StageError> {
        let corpus = stages::load_corpus(&cfg.corpus)?;
        let i = corpus.position(op)?;
        Ok((corpus, i))
    };
    match cmd {
        Cmd::Run => {
            let summary = stages::run(cfg)?;
            let mut ok = true;
            for o in &summary.ops {
                if let Some(e) = &o.error {
                    eprintln!("error: {e}");
                }
                ok &= report_crosscheck(&o.op_name, &o.crosscheck);
            }
            for e in &summary.errors {
                eprintln!("error: {e}");
            }
            if let Some(r) = &summary.report {
                for (mode, a) in &r.aggregates {
                    println!(
                        "{mode}: {} operators, pass rate {:.2}%, {} bugs",
                        a.operators,
                        100.0 * a.pass_rate,
                        a.bugs
                    );
                }
                println!("report: {}", cfg.output.join("report.json").display());
            }
            Ok(ok && !summary.failed())
        }
        Cmd::Scan => {
            let corpus = stages::stage_scan(cfg)?;
            for e in &corpus.failures {
                eprintln!("error: {e}");
            }
            println!("{} operators indexed", corpus.index.operators.len());
            Ok(corpus.failures.is_empty())
        }
        Cmd::Paths { op } => {
            let (corpus, i) = op_stage(op)?;
            let ex = stages::stage_paths(cfg, &corpus.modules[i])?;
            println!(
                "{}: {} retained, {} ejected{}",
                ex.op_name,
                ex.paths.retained.len(),
                ex.paths.ejected_count,
                if ex.paths.truncated { " (truncated)" } else { "" }
            );
            Ok(true)
        }
        Cmd::Constraints { op } => {
            let (corpus, i) = op_stage(op)?;
            let (ex, checks) = stages::stage_constraints(cfg, &corpus.modules[i])?;
            println!("{}: {} sets, {} satisfiable", ex.op_name, ex.sets.len(), ex.sat_sets().count());
            Ok(report_crosscheck(&ex.op_name, &checks))
        }
        Cmd::Solve { op } => {
            let (corpus, i) = op_stage(op)?;
            let samples = stages::stage_solve(cfg, &corpus.modules[i])?;
            let n: usize = samples.iter().map(|p| p.samples.solutions.len()).sum();
            println!("{}: {n} solutions over {} paths", corpus.modules[i].meta.op_name, samples.len());
            Ok(true)
        }
        Cmd::Gen { op } => {
            let (corpus, i) = op_stage(op)?;
            stages::stage_gen(cfg, &corpus.modules[i])?;
            println!("{}: {} cases per mode", corpus.modules[i].meta.op_name, cfg.campaign.rounds);
            Ok(true)
        }
        Cmd::Test { op } => {
            let (corpus, i) = op_stage(op)?;
            for r in stages::stage_test(cfg, &corpus.modules[i])? {
                println!(
                    "{} {}: {} rounds, pass rate {:.2}%, {} bugs",
                    r.op_name,
                    r.mode,
                    r.rounds,
                    100.0 * r.pass_rate,
                    r.bugs.len()
                );
            }
            Ok(true)
        }
        Cmd::Report => {
            let corpus = stages::load_corpus(&cfg.corpus)?;
            stages::stage_report(cfg, &corpus)?;
            println!("report: {}", cfg.output.join("report.json").display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli.opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg, &cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(status(&e))
        }
    }
}

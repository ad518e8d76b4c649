use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::interp::{CrashKind, HarnessError, Outcome, RunLimits, Verdict, Worker};
use crate::ir::IRModule;
use crate::testgen::TestCase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignLimits {
    pub rounds: usize,
    pub wall_clock_s: u64,
    /// Crashes plus timeouts before the campaign stops.
    pub crash_cap: usize,
    pub case_timeout_ms: u64,
    pub case_step_limit: u64,
}

impl Default for CampaignLimits {
    fn default() -> Self {
        CampaignLimits { rounds: 2000, wall_clock_s: 1800, crash_cap: 50, case_timeout_ms: 1000, case_step_limit: 1_000_000 }
    }
}

impl CampaignLimits {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("rounds", self.rounds as u64),
            ("wall_clock_s", self.wall_clock_s),
            ("crash_cap", self.crash_cap as u64),
            ("case_timeout_ms", self.case_timeout_ms),
            ("case_step_limit", self.case_step_limit),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(format!("campaign.{name} must be positive")),
            None => Ok(()),
        }
    }

    pub fn run_limits(&self) -> RunLimits {
        RunLimits { step_limit: self.case_step_limit, timeout: Duration::from_millis(self.case_timeout_ms) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Rounds,
    WallClock,
    CrashCap,
    StreamExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bug {
    pub kind: CrashKind,
    pub site: String,
    /// Block of `main` executing at the crash.
    pub main_block: usize,
    pub hits: usize,
    pub first_round: usize,
    pub repro: TestCase,
}

impl Bug {
    /// Directory-safe form of the (kind, site) key.
    pub fn key(&self) -> String {
        let site: String = self.site.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
        format!("{}-{}", self.kind.as_str(), site.trim_matches('_'))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Dedup {
    pub bugs: Vec<Bug>,
    pub unreproduced: Vec<Bug>,
}

/// Groups crashing outcomes by (kind, site) and replays the first case of each
/// group once; groups whose replay does not crash the same way are unreproduced.
pub fn dedup_crashes(module: &IRModule, outcomes: &[(usize, TestCase, Outcome)], limits: RunLimits) -> Dedup {
    let mut groups: BTreeMap<(CrashKind, String), Bug> = BTreeMap::new();
    for (round, tc, out) in outcomes {
        if let Verdict::Crash { kind, site, main_block } = &out.verdict {
            groups
                .entry((*kind, site.clone()))
                .and_modify(|b| b.hits += 1)
                .or_insert_with(|| Bug {
                    kind: *kind,
                    site: site.clone(),
                    main_block: *main_block,
                    hits: 1,
                    first_round: *round,
                    repro: tc.clone(),
                });
        }
    }
    let mut worker = Worker::new(module, limits);
    let mut out = Dedup::default();
    for ((kind, site), bug) in groups {
        let again = worker.run(&bug.repro);
        worker.reset();
        let same = matches!(&again, Ok(Outcome { verdict: Verdict::Crash { kind: k, site: s, .. }, .. }) if *k == kind && *s == site);
        if same {
            out.bugs.push(bug);
        } else {
            out.unreproduced.push(bug);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub op_name: String,
    pub mode: String,
    pub rounds: usize,
    pub passes: usize,
    pub rejects: usize,
    pub crashes: usize,
    pub timeouts: usize,
    /// |PASS| / rounds.
    pub pass_rate: f64,
    pub edges_total: usize,
    /// Cumulative covered edge count after each round.
    pub coverage: Vec<u32>,
    pub final_coverage: f64,
    pub bugs: Vec<Bug>,
    pub unreproduced: Vec<Bug>,
    pub stop_reason: StopReason,
    pub worker_resets: usize,
    pub wall_ms: u64,
}

impl OperatorReport {
    /// First round (1-based) at which the cumulative coverage reached its final value.
    pub fn last_new_edge_round(&self) -> usize {
        let last = self.coverage.last().copied().unwrap_or(0);
        self.coverage.iter().position(|&c| c == last).map(|i| i + 1).unwrap_or(0)
    }

    pub fn coverage_at(&self, round: usize) -> u32 {
        if round == 0 || self.coverage.is_empty() {
            return 0;
        }
        self.coverage[(round - 1).min(self.coverage.len() - 1)]
    }
}

/// Executes cases in one persistent worker until the round budget, the wall
/// clock or the crash cap runs out. The worker is reset after every crash or
/// timeout.
pub fn run_campaign(
    module: &IRModule,
    cases: impl IntoIterator<Item = TestCase>,
    limits: &CampaignLimits,
) -> Result<OperatorReport, HarnessError> {
    let start = Instant::now();
    let deadline = Duration::from_secs(limits.wall_clock_s);
    let run_limits = limits.run_limits();
    let mut worker = Worker::new(module, run_limits);
    let mut seen = vec![false; worker.edges().total];
    let mut covered = 0u32;
    let mut coverage = Vec::with_capacity(limits.rounds);
    let (mut passes, mut rejects, mut crashes, mut timeouts) = (0, 0, 0, 0);
    let mut crashing = Vec::new();
    let mut cases = cases.into_iter();
    let mut stop = StopReason::Rounds;
    let mut rounds = 0;
    while rounds < limits.rounds {
        if start.elapsed() >= deadline {
            stop = StopReason::WallClock;
            break;
        }
        let Some(tc) = cases.next() else {
            stop = StopReason::StreamExhausted;
            break;
        };
        let out = worker.run(&tc)?;
        rounds += 1;
        for &e in &out.covered_edges {
            if !seen[e as usize] {
                seen[e as usize] = true;
                covered += 1;
            }
        }
        coverage.push(covered);
        match out.verdict.crash_kind() {
            None if out.verdict.is_pass() => passes += 1,
            None => rejects += 1,
            Some(kind) => {
                if kind == CrashKind::Timeout {
                    timeouts += 1;
                } else {
                    crashes += 1;
                }
                worker.reset();
                crashing.push((rounds, tc, out));
                if crashes + timeouts >= limits.crash_cap {
                    stop = StopReason::CrashCap;
                    break;
                }
            }
        }
    }
    let dedup = dedup_crashes(module, &crashing, run_limits);
    let edges_total = seen.len();
    Ok(OperatorReport {
        op_name: module.meta.op_name.clone(),
        mode: String::new(),
        rounds,
        passes,
        rejects,
        crashes,
        timeouts,
        pass_rate: if rounds == 0 { 0.0 } else { passes as f64 / rounds as f64 },
        edges_total,
        final_coverage: if edges_total == 0 { 1.0 } else { covered as f64 / edges_total as f64 },
        coverage,
        bugs: dedup.bugs,
        unreproduced: dedup.unreproduced,
        stop_reason: stop,
        worker_resets: worker.resets(),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

//! Reference interpreter, persistent-worker campaigns and crash bookkeeping.

mod campaign;
mod interp;

pub use campaign::{dedup_crashes, run_campaign, Bug, CampaignLimits, Dedup, OperatorReport, StopReason};
pub use interp::{
    run_case, CrashKind, EdgeTable, HarnessError, Outcome, RunLimits, Verdict, Worker, RUNTIME_THREADS,
};

//! Input-validation constraint extraction and constraint-guided test generation
//! for operator programs written in OVIR.
//!
//! The pipeline stages map onto modules:
//! [`registry`] scans a corpus, [`ir`] parses modules and builds CFGs,
//! [`valpath`] finds validation code and enumerates paths through it,
//! [`symprop`] turns paths into constraint sets, [`solve`] samples solutions,
//! [`testgen`] realizes them into test cases and [`harness`] executes them.
//! [`stages`] writes each stage's artifacts and [`config`] loads settings.

pub mod config;
pub mod harness;
pub mod ir;
pub mod pipeline;
pub mod registry;
pub mod solve;
pub mod stages;
pub mod symprop;
pub mod testgen;
pub mod valpath;

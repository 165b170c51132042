//! Benchmark harness for the DEVStone families. Trials run in child
//! processes under time and memory caps, and results go to CSV or JSON.

pub mod config;
pub mod measure;
pub mod report;
pub mod runner;
pub mod sweep;
pub mod verify;

pub use config::{Profile, RunConfig, SweepConfig};
pub use report::{emit, Format};
pub use runner::{RunResult, Runner, Status, TrialResult};
pub use verify::{verify, VerifyOptions, VerifyReport};

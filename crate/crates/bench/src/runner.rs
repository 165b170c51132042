//! Trial execution. Only the simulation loop is timed; construction is not.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use devstone_core::devstone::{BuildError, DevstoneModel};
use devstone_core::dhrystone::{self, CALIBRATION_ENV};
use devstone_core::sim::RunOutcome;
use devstone_core::{
    injection_schedule, predict, AnalyticPrediction, BenchmarkSpec, Counts, SimulationContext,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::measure::{self, ChildPhase, ExitKind, MeasureError, PHASE_MARKER};

/// Extra run time granted to a child before the watchdog kills it. The
/// child checks its own deadline between simulation steps, so the watchdog
/// only matters when a single step overruns.
const WATCHDOG_GRACE: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    TimeExceeded,
    MemExceeded,
    BuildFailed,
    /// The run completed but the counters differ from the prediction.
    CountMismatch,
    /// The cell could not be run at all (spawn failure, bad child output).
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::TimeExceeded => "time_exceeded",
            Status::MemExceeded => "mem_exceeded",
            Status::BuildFailed => "build_failed",
            Status::CountMismatch => "count_mismatch",
            Status::Error => "error",
        }
    }

    pub fn is_truncated(self) -> bool {
        matches!(
            self,
            Status::TimeExceeded | Status::MemExceeded | Status::BuildFailed
        )
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    /// Seconds spent in the simulation loop, capped at the time cap.
    pub wall_time_s: f64,
    /// Peak resident memory, capped at the memory cap.
    pub peak_memory_bytes: u64,
    /// Counters at the end of the trial. Partial for time-truncated trials
    /// that stopped cleanly, absent when the child was killed.
    pub counts: Option<Counts>,
    /// `Ok` for a completed trial; counter checks happen per run.
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub spec: BenchmarkSpec,
    pub trials_requested: u32,
    pub time_cap: f64,
    pub mem_cap: u64,
    pub isolate: bool,
    pub trials: Vec<TrialResult>,
    pub mean_wall_time_s: f64,
    pub mean_peak_mem_bytes: f64,
    pub observed: Option<Counts>,
    pub predicted: Option<AnalyticPrediction>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunResult {
    /// A cell that never produced a trial.
    pub fn failed(cfg: &RunConfig, error: impl ToString) -> Self {
        RunResult {
            spec: cfg.spec,
            trials_requested: cfg.trials,
            time_cap: cfg.time_cap,
            mem_cap: cfg.mem_cap,
            isolate: cfg.isolate,
            trials: Vec::new(),
            mean_wall_time_s: 0.0,
            mean_peak_mem_bytes: 0.0,
            observed: None,
            predicted: predict(&cfg.spec).ok(),
            status: Status::Error,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot start trial process: {0}")]
    Spawn(#[source] MeasureError),
    #[error("trial process misbehaved: {0}")]
    ChildFailed(String),
}

/// What a trial child prints on standard output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChildReport {
    pub wall_time_s: f64,
    pub counts: Counts,
    pub timed_out: bool,
    pub peak_memory_bytes: u64,
}

/// Runs one trial in the calling process and reports it on stdout. This is
/// the body of the hidden `trial` subcommand.
pub fn child_main(
    spec: &BenchmarkSpec,
    time_cap: f64,
    mem_cap: u64,
    builder_sleep: Duration,
) -> i32 {
    if let Err(e) = measure::limit_address_space(mem_cap) {
        eprintln!("cannot apply memory cap: {e}");
        return 3;
    }
    eprintln!("{PHASE_MARKER}build");
    let built = build_sleeping(spec, builder_sleep);
    let model = match built {
        Ok(m) => m,
        Err(e) => {
            eprintln!("build failed: {e}");
            return 4;
        }
    };
    eprintln!("{PHASE_MARKER}run");
    let trial = match timed_run(spec, model, time_cap) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("simulation failed: {e}");
            return 5;
        }
    };
    eprintln!("{PHASE_MARKER}done");
    let report = ChildReport {
        wall_time_s: trial.wall_time_s,
        counts: trial.counts,
        timed_out: trial.timed_out,
        peak_memory_bytes: measure::self_peak_memory(),
    };
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    0
}

fn build_sleeping(spec: &BenchmarkSpec, sleep: Duration) -> Result<DevstoneModel, BuildError> {
    if !sleep.is_zero() {
        std::thread::sleep(sleep);
    }
    devstone_core::build(spec)
}

struct TimedRun {
    wall_time_s: f64,
    counts: Counts,
    timed_out: bool,
}

/// Initializes and runs `model`, timing only the simulation loop.
fn timed_run(
    spec: &BenchmarkSpec,
    model: DevstoneModel,
    time_cap: f64,
) -> Result<TimedRun, devstone_core::SimError> {
    let DevstoneModel { root, counters } = model;
    let mut ctx = SimulationContext::initialize(root, injection_schedule(spec))?;
    let cap = Duration::from_secs_f64(time_cap);
    let start = Instant::now();
    let outcome = ctx.run_while(|_| start.elapsed() < cap)?;
    let elapsed = start.elapsed().as_secs_f64();
    let timed_out = outcome == RunOutcome::Interrupted || elapsed > time_cap;
    Ok(TimedRun {
        wall_time_s: elapsed,
        counts: counters.snapshot(),
        timed_out,
    })
}

/// Runs a trial in the calling process using `builder` for construction.
/// Peak memory is the whole process's high-water mark and therefore only
/// indicative.
pub fn in_process_trial<F>(cfg: &RunConfig, builder: F) -> TrialResult
where
    F: FnOnce(&BenchmarkSpec) -> Result<DevstoneModel, BuildError>,
{
    let model = match builder(&cfg.spec) {
        Ok(m) => m,
        Err(_) => {
            return TrialResult {
                wall_time_s: 0.0,
                peak_memory_bytes: cfg.mem_cap,
                counts: None,
                status: Status::BuildFailed,
            }
        }
    };
    match timed_run(&cfg.spec, model, cfg.time_cap) {
        Ok(run) => finish_trial(
            cfg,
            run.wall_time_s,
            run.timed_out,
            Some(run.counts),
            measure::self_peak_memory(),
        ),
        Err(_) => TrialResult {
            wall_time_s: 0.0,
            peak_memory_bytes: measure::self_peak_memory().min(cfg.mem_cap),
            counts: None,
            status: Status::Error,
        },
    }
}

fn finish_trial(
    cfg: &RunConfig,
    wall: f64,
    timed_out: bool,
    counts: Option<Counts>,
    peak: u64,
) -> TrialResult {
    let over_mem = peak >= cfg.mem_cap;
    let status = if timed_out {
        Status::TimeExceeded
    } else if over_mem {
        Status::MemExceeded
    } else {
        Status::Ok
    };
    TrialResult {
        wall_time_s: if timed_out {
            cfg.time_cap
        } else {
            wall.min(cfg.time_cap)
        },
        peak_memory_bytes: if over_mem { cfg.mem_cap } else { peak },
        counts,
        status,
    }
}

/// Launches isolated trial children and aggregates their results.
#[derive(Debug, Clone)]
pub struct Runner {
    exe: PathBuf,
    builder_sleep: Duration,
}

impl Runner {
    /// `exe` must be the `devstone` binary (it provides the `trial`
    /// subcommand).
    pub fn new(exe: impl Into<PathBuf>) -> Self {
        Runner {
            exe: exe.into(),
            builder_sleep: Duration::ZERO,
        }
    }

    /// A runner that re-executes the current binary.
    pub fn current() -> std::io::Result<Self> {
        Ok(Self::new(std::env::current_exe()?))
    }

    pub fn exe(&self) -> &Path {
        &self.exe
    }

    /// Makes every trial sleep for `d` while building the model. Used to
    /// check that construction stays outside the timed region.
    pub fn with_builder_sleep(mut self, d: Duration) -> Self {
        self.builder_sleep = d;
        self
    }

    pub fn run_benchmark(&self, cfg: &RunConfig) -> Result<RunResult, RunError> {
        cfg.validate()?;
        let needs_burn = cfg.spec.int_delay > 0.0 || cfg.spec.ext_delay > 0.0;
        let calibration = needs_burn.then(|| dhrystone::calibration().iterations_per_second);
        let mut trials = Vec::with_capacity(cfg.trials as usize);
        for _ in 0..cfg.trials {
            let trial = if cfg.isolate {
                self.child_trial(cfg, calibration)?
            } else {
                let sleep = self.builder_sleep;
                in_process_trial(cfg, |spec| build_sleeping(spec, sleep))
            };
            let stop = trial.status != Status::Ok;
            trials.push(trial);
            if stop {
                break;
            }
        }
        Ok(aggregate(cfg, trials))
    }

    fn child_trial(
        &self,
        cfg: &RunConfig,
        calibration: Option<f64>,
    ) -> Result<TrialResult, RunError> {
        let spec = &cfg.spec;
        let mut cmd = Command::new(&self.exe);
        cmd.arg("trial")
            .arg("--family")
            .arg(spec.family.as_str())
            .arg("--width")
            .arg(spec.width.to_string())
            .arg("--depth")
            .arg(spec.depth.to_string())
            .arg("--delta-int")
            .arg(spec.int_delay.to_string())
            .arg("--delta-ext")
            .arg(spec.ext_delay.to_string())
            .arg("--events")
            .arg(spec.n_events.to_string())
            .arg("--time-cap")
            .arg(cfg.time_cap.to_string())
            .arg("--mem-cap")
            .arg(cfg.mem_cap.to_string());
        if !self.builder_sleep.is_zero() {
            cmd.arg("--builder-sleep")
                .arg(self.builder_sleep.as_secs_f64().to_string());
        }
        if let Some(ips) = calibration {
            cmd.env(CALIBRATION_ENV, ips.to_string());
        }
        let budget = Duration::from_secs_f64(cfg.time_cap) + WATCHDOG_GRACE;
        let out = measure::supervise(cmd, budget).map_err(RunError::Spawn)?;
        classify_child(cfg, out)
    }
}

fn is_memory_failure(out: &measure::ChildOutcome) -> bool {
    let oom_text = out.stderr.contains("memory allocation of")
        || out.stderr.contains("capacity overflow")
        || out.stderr.contains("out of memory");
    matches!(out.exit, ExitKind::Signal(s) if s == libc::SIGABRT || s == libc::SIGKILL || s == libc::SIGSEGV)
        && !out.watchdog_fired
        || oom_text
}

fn classify_child(cfg: &RunConfig, out: measure::ChildOutcome) -> Result<TrialResult, RunError> {
    if out.watchdog_fired {
        return Ok(TrialResult {
            wall_time_s: cfg.time_cap,
            peak_memory_bytes: out.peak_memory.min(cfg.mem_cap),
            counts: None,
            status: Status::TimeExceeded,
        });
    }
    if out.exit.success() {
        let report: ChildReport = out
            .stdout
            .lines()
            .rev()
            .find_map(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| RunError::ChildFailed(format!("unreadable report: {:?}", out.stdout)))?;
        let peak = out.peak_memory.max(report.peak_memory_bytes);
        return Ok(finish_trial(
            cfg,
            report.wall_time_s,
            report.timed_out,
            Some(report.counts),
            peak,
        ));
    }
    let in_build = matches!(out.phase, None | Some(ChildPhase::Build));
    if in_build && (out.exit == ExitKind::Code(4) || is_memory_failure(&out)) {
        return Ok(TrialResult {
            wall_time_s: 0.0,
            peak_memory_bytes: cfg.mem_cap,
            counts: None,
            status: Status::BuildFailed,
        });
    }
    if is_memory_failure(&out) {
        return Ok(TrialResult {
            wall_time_s: 0.0,
            peak_memory_bytes: cfg.mem_cap,
            counts: None,
            status: Status::MemExceeded,
        });
    }
    Err(RunError::ChildFailed(format!(
        "exit {:?} in phase {:?}: {}",
        out.exit,
        out.phase,
        out.stderr.trim()
    )))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Combines trials into a run. A truncated run reports the cap as its mean
/// for the truncated quantity.
fn aggregate(cfg: &RunConfig, trials: Vec<TrialResult>) -> RunResult {
    let predicted = predict(&cfg.spec).ok();
    let worst = trials
        .iter()
        .map(|t| t.status)
        .find(|s| *s != Status::Ok)
        .unwrap_or(Status::Ok);
    let completed: Vec<&TrialResult> = trials.iter().filter(|t| t.status == Status::Ok).collect();
    let observed = trials.iter().rev().find_map(|t| t.counts);
    let consistent = completed.windows(2).all(|w| w[0].counts == w[1].counts);

    let status = match worst {
        Status::Ok => match (predicted, observed) {
            (Some(p), Some(o)) if consistent && p.matches(&o) => Status::Ok,
            _ => Status::CountMismatch,
        },
        s => s,
    };

    let mut mean_wall = mean(trials.iter().map(|t| t.wall_time_s));
    let mut mean_peak = mean(trials.iter().map(|t| t.peak_memory_bytes as f64));
    match status {
        Status::TimeExceeded => mean_wall = cfg.time_cap,
        Status::MemExceeded | Status::BuildFailed => mean_peak = cfg.mem_cap as f64,
        _ => {}
    }

    RunResult {
        spec: cfg.spec,
        trials_requested: cfg.trials,
        time_cap: cfg.time_cap,
        mem_cap: cfg.mem_cap,
        isolate: cfg.isolate,
        trials,
        mean_wall_time_s: mean_wall,
        mean_peak_mem_bytes: mean_peak,
        observed,
        predicted,
        status,
        error: None,
    }
}

/// Runs every trial of `cfg` in-process with a custom builder.
pub fn run_in_process_with<F>(cfg: &RunConfig, mut builder: F) -> Result<RunResult, RunError>
where
    F: FnMut(&BenchmarkSpec) -> Result<DevstoneModel, BuildError>,
{
    cfg.validate()?;
    let mut trials = Vec::new();
    for _ in 0..cfg.trials {
        let t = in_process_trial(cfg, &mut builder);
        let stop = t.status != Status::Ok;
        trials.push(t);
        if stop {
            break;
        }
    }
    Ok(aggregate(cfg, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use devstone_core::Family;

    fn cfg(family: Family, w: u32, d: u32) -> RunConfig {
        let mut c = RunConfig::new(BenchmarkSpec::new(family, w, d));
        c.trials = 2;
        c.isolate = false;
        c
    }

    #[test]
    fn in_process_li_4_3_is_ok() {
        let r = run_in_process_with(&cfg(Family::Li, 4, 3), devstone_core::build).unwrap();
        assert_eq!(r.status, Status::Ok);
        assert_eq!(r.trials.len(), 2);
        let c = Counts {
            delta_int: 7,
            delta_ext: 7,
            events: 7,
        };
        assert_eq!(r.observed, Some(c));
        assert!(r.predicted.unwrap().matches(&c));
    }

    #[test]
    fn builder_failure_is_build_failed_with_capped_memory() {
        let c = cfg(Family::Li, 4, 3);
        let r = run_in_process_with(&c, |_| {
            Err(BuildError::Spec(devstone_core::devstone::SpecError::Width(
                0,
            )))
        })
        .unwrap();
        assert_eq!(r.status, Status::BuildFailed);
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.mean_peak_mem_bytes, c.mem_cap as f64);
    }

    #[test]
    fn wrong_counts_are_a_mismatch() {
        let r = run_in_process_with(&cfg(Family::Li, 4, 3), |spec| {
            devstone_core::build(&BenchmarkSpec {
                width: spec.width + 1,
                ..*spec
            })
        })
        .unwrap();
        assert_eq!(r.status, Status::CountMismatch);
    }

    #[test]
    fn time_truncation_reports_the_cap() {
        let mut c = cfg(Family::Li, 3, 3);
        c.spec = c.spec.with_delays(0.0, 0.02);
        c.time_cap = 0.01;
        let r = run_in_process_with(&c, devstone_core::build).unwrap();
        assert_eq!(r.status, Status::TimeExceeded);
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.mean_wall_time_s, 0.01);
        assert_eq!(r.trials[0].wall_time_s, 0.01);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = cfg(Family::Li, 4, 3);
        c.trials = 0;
        assert!(matches!(
            run_in_process_with(&c, devstone_core::build),
            Err(RunError::Config(ConfigError::Trials))
        ));
    }

    #[test]
    fn status_names() {
        assert_eq!(Status::TimeExceeded.to_string(), "time_exceeded");
        assert_eq!(Status::CountMismatch.as_str(), "count_mismatch");
        assert!(Status::BuildFailed.is_truncated());
        assert!(!Status::Ok.is_truncated());
    }
}

//! Child-process supervision with peak-memory readout and a run watchdog.

use std::io::{BufRead, BufReader, Read};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

/// Marker a trial child prints on stderr when it enters a phase.
pub const PHASE_MARKER: &str = "devstone-phase ";

const POLL_INTERVAL: Duration = Duration::from_millis(2);

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("failed to spawn child process: {0}")]
    Spawn(std::io::Error),
    #[error("wait4 failed: {0}")]
    Wait(std::io::Error),
    #[error("peak memory measurement is not supported on this platform")]
    Unsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Code(i32),
    Signal(i32),
}

impl ExitKind {
    pub fn success(self) -> bool {
        self == ExitKind::Code(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildPhase {
    Build,
    Run,
    Done,
}

impl ChildPhase {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "build" => Some(ChildPhase::Build),
            "run" => Some(ChildPhase::Run),
            "done" => Some(ChildPhase::Done),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChildOutcome {
    pub exit: ExitKind,
    /// Maximum resident set size of the child, bytes.
    pub peak_memory: u64,
    pub stdout: String,
    pub stderr: String,
    /// Last phase the child announced.
    pub phase: Option<ChildPhase>,
    /// The watchdog killed the child after its run phase overstayed.
    pub watchdog_fired: bool,
}

/// Restricts the calling process's address space to `bytes`.
pub fn limit_address_space(bytes: u64) -> std::io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: bytes as libc::rlim_t,
        rlim_max: bytes as libc::rlim_t,
    };
    // SAFETY: `lim` is a valid rlimit value.
    let rc = unsafe { libc::setrlimit(libc::RLIMIT_AS, &lim) };
    if rc == 0 {
        Ok(())
    } else {
        Err(std::io::Error::last_os_error())
    }
}

/// Peak RSS of the calling process so far, bytes.
pub fn self_peak_memory() -> u64 {
    // SAFETY: zeroed rusage is a valid out-parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    // SAFETY: `usage` is writable.
    unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    maxrss_bytes(&usage)
}

fn maxrss_bytes(usage: &libc::rusage) -> u64 {
    // Linux reports kilobytes; macOS reports bytes.
    let raw = usage.ru_maxrss.max(0) as u64;
    if cfg!(target_os = "macos") {
        raw
    } else {
        raw * 1024
    }
}

fn wait4(pid: libc::pid_t, nohang: bool) -> Result<Option<(ExitKind, u64)>, MeasureError> {
    let mut status: libc::c_int = 0;
    // SAFETY: zeroed rusage is a valid out-parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let flags = if nohang { libc::WNOHANG } else { 0 };
    loop {
        // SAFETY: pointers are valid for the duration of the call.
        let rc = unsafe { libc::wait4(pid, &mut status, flags, &mut usage) };
        if rc == 0 {
            return Ok(None);
        }
        if rc < 0 {
            let err = std::io::Error::last_os_error();
            if err.kind() == std::io::ErrorKind::Interrupted {
                continue;
            }
            return Err(MeasureError::Wait(err));
        }
        let exit = if libc::WIFEXITED(status) {
            ExitKind::Code(libc::WEXITSTATUS(status))
        } else {
            ExitKind::Signal(libc::WTERMSIG(status))
        };
        return Ok(Some((exit, maxrss_bytes(&usage))));
    }
}

/// Reads VmHWM (kernel high-water mark) of a live process, bytes.
fn sample_hwm(pid: u32) -> Option<u64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Waits for `child` to exit and returns its exit kind and OS-reported peak
/// resident set size in bytes.
pub fn measure_peak_memory(child: &mut Child) -> Result<(ExitKind, u64), MeasureError> {
    if !cfg!(unix) {
        return Err(MeasureError::Unsupported);
    }
    let pid = child.id() as libc::pid_t;
    let mut sampled = 0;
    loop {
        if let Some((exit, peak)) = wait4(pid, true)? {
            return Ok((exit, if peak > 0 { peak } else { sampled }));
        }
        if let Some(hwm) = sample_hwm(child.id()) {
            sampled = sampled.max(hwm);
        }
        thread::sleep(POLL_INTERVAL);
    }
}

enum Event {
    Phase(ChildPhase, Instant),
    Stderr(String),
}

/// Runs `cmd` to completion. Once the child announces its run phase, it is
/// killed if it is still alive `run_budget` later.
pub fn supervise(mut cmd: Command, run_budget: Duration) -> Result<ChildOutcome, MeasureError> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().map_err(MeasureError::Spawn)?;
    let pid = child.id() as libc::pid_t;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let stdout_thread = thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let stderr = child.stderr.take().expect("piped stderr");
    let (tx, rx) = mpsc::channel();
    let stderr_thread = thread::spawn(move || {
        for line in BufReader::new(stderr).lines() {
            let Ok(line) = line else { break };
            let event = match line.strip_prefix(PHASE_MARKER).and_then(ChildPhase::parse) {
                Some(p) => Event::Phase(p, Instant::now()),
                None => Event::Stderr(line),
            };
            if tx.send(event).is_err() {
                break;
            }
        }
    });

    let mut phase = None;
    let mut run_started = None;
    let mut stderr_text = String::new();
    let mut sampled = 0u64;
    let mut watchdog_fired = false;
    let drain =
        |phase: &mut Option<ChildPhase>, run_started: &mut Option<Instant>, text: &mut String| {
            for ev in rx.try_iter() {
                match ev {
                    Event::Phase(p, at) => {
                        if p == ChildPhase::Run {
                            *run_started = Some(at);
                        }
                        *phase = Some(p);
                    }
                    Event::Stderr(l) => {
                        text.push_str(&l);
                        text.push('\n');
                    }
                }
            }
        };
    let (exit, peak) = loop {
        if let Some(done) = wait4(pid, true)? {
            break done;
        }
        drain(&mut phase, &mut run_started, &mut stderr_text);
        if let Some(hwm) = sample_hwm(child.id()) {
            sampled = sampled.max(hwm);
        }
        if let Some(start) = run_started {
            if phase == Some(ChildPhase::Run) && start.elapsed() > run_budget {
                watchdog_fired = true;
                let _ = child.kill();
                break wait4(pid, false)?.expect("blocking wait returns a status");
            }
        }
        thread::sleep(POLL_INTERVAL);
    };
    let stdout = stdout_thread.join().unwrap_or_default();
    let _ = stderr_thread.join();
    drain(&mut phase, &mut run_started, &mut stderr_text);
    Ok(ChildOutcome {
        exit,
        peak_memory: if peak > 0 { peak } else { sampled },
        stdout,
        stderr: stderr_text,
        phase,
        watchdog_fired,
    })
}

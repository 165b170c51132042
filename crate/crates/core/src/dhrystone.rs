//! Calibrated synthetic CPU load used to give transitions a cost.
//!
//! The loop mixes integer arithmetic, small record copies and fixed-size
//! string comparisons in the spirit of Dhrystone. It is not Dhrystone 2.1.
//! Iterations per second are measured once per process against thread CPU
//! time, or taken from `DEVSTONE_DHRY_CALIB`.

use std::hint::black_box;
use std::sync::OnceLock;
use std::time::Duration;

pub const CALIBRATION_ENV: &str = "DEVSTONE_DHRY_CALIB";

const CALIBRATION_CPU: Duration = Duration::from_millis(60);

/// CPU time consumed so far by the calling thread.
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime(CLOCK_THREAD_CPUTIME_ID) failed");
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[derive(Clone, Copy)]
struct Record {
    discr: u32,
    enum_comp: u32,
    int_comp: i64,
    text: [u8; 30],
}

const TEXT_A: &[u8; 30] = b"DHRYSTONE PROGRAM, SOME STRING";
const TEXT_B: &[u8; 30] = b"DHRYSTONE PROGRAM, 2'ND STRING";

/// Runs `n` workload iterations.
pub fn run_iterations(n: u64) {
    let mut glob = Record {
        discr: 0,
        enum_comp: 2,
        int_comp: 40,
        text: *TEXT_A,
    };
    let mut int_glob: i64 = 0;
    let mut arr = [0i64; 16];
    for i in 0..n {
        let mut next = glob;
        next.int_comp = black_box(next.int_comp) + 5;
        let int_1 = 2i64;
        let mut int_2 = 3i64;
        let int_3 = 5 * int_1 - int_2;
        while int_2 < int_3 {
            int_2 += 1;
            arr[(int_2 as usize) & 15] = int_2 * int_1;
        }
        let text = if i & 1 == 0 { TEXT_A } else { TEXT_B };
        let bool_glob = black_box(&next.text[..]) > black_box(&text[..]);
        next.text.copy_from_slice(black_box(text));
        int_glob = int_glob.wrapping_add(int_3 * arr[(i as usize) & 15] / (int_1 + 1));
        next.enum_comp = if bool_glob {
            1
        } else {
            (next.enum_comp + 1) % 5
        };
        next.discr = next.discr.wrapping_add(1);
        glob = black_box(next);
    }
    black_box((glob.discr, glob.int_comp, int_glob));
}

/// Measures iterations per second of thread CPU time.
pub fn measure_rate(min_cpu: Duration) -> f64 {
    // warm up
    run_iterations(1_000);
    let mut batch = 10_000u64;
    let mut total = 0u64;
    let start = thread_cpu_time();
    loop {
        run_iterations(batch);
        total += batch;
        let spent = thread_cpu_time() - start;
        if spent >= min_cpu {
            return total as f64 / spent.as_secs_f64();
        }
        batch = batch.saturating_mul(2);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub iterations_per_second: f64,
    pub from_env: bool,
}

fn calibration_from_env() -> Option<f64> {
    let raw = std::env::var(CALIBRATION_ENV).ok()?;
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Some(v),
        _ => None,
    }
}

/// Process-wide calibration, computed on first use.
pub fn calibration() -> Calibration {
    static CAL: OnceLock<Calibration> = OnceLock::new();
    *CAL.get_or_init(|| match calibration_from_env() {
        Some(ips) => Calibration {
            iterations_per_second: ips,
            from_env: true,
        },
        None => Calibration {
            iterations_per_second: measure_rate(CALIBRATION_CPU),
            from_env: false,
        },
    })
}

/// Number of iterations that `seconds` of load maps to under `ips`.
pub fn iterations_for(seconds: f64, ips: f64) -> u64 {
    if seconds <= 0.0 {
        return 0;
    }
    (seconds * ips).round().max(1.0) as u64
}

/// Burns roughly `seconds` of CPU time and returns the iterations run.
/// Zero (or negative) durations do no work and never trigger calibration.
pub fn burn(seconds: f64) -> u64 {
    if seconds <= 0.0 {
        return 0;
    }
    let n = iterations_for(seconds, calibration().iterations_per_second);
    run_iterations(n);
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_burn_runs_nothing() {
        assert_eq!(burn(0.0), 0);
        assert_eq!(burn(-1.0), 0);
        assert_eq!(iterations_for(0.0, 1e9), 0);
    }

    #[test]
    fn iterations_scale_with_duration() {
        assert_eq!(iterations_for(0.5, 1000.0), 500);
        assert_eq!(iterations_for(1e-12, 1000.0), 1);
    }

    #[test]
    fn rate_is_positive() {
        assert!(measure_rate(Duration::from_millis(5)) > 0.0);
    }

    #[test]
    fn thread_cpu_time_advances_under_load() {
        let before = thread_cpu_time();
        run_iterations(200_000);
        assert!(thread_cpu_time() > before);
    }
}

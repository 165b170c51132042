//! CSV and JSON emission of run results.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::runner::{RunResult, TrialResult};

pub const CSV_HEADER: [&str; 14] = [
    "family",
    "width",
    "depth",
    "n_events",
    "trials",
    "mean_wall_time_s",
    "mean_peak_mem_bytes",
    "n_delta_int",
    "n_delta_ext",
    "n_event_count",
    "pred_delta_int",
    "pred_delta_ext",
    "pred_event_count",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("no results to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Formats `x` with 6 significant digits, like C's `%.6g`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One flat output row, shared by both formats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub family: String,
    pub width: u32,
    pub depth: u32,
    pub n_events: u32,
    pub trials: u32,
    pub mean_wall_time_s: String,
    pub mean_peak_mem_bytes: String,
    pub n_delta_int: Option<u64>,
    pub n_delta_ext: Option<u64>,
    pub n_event_count: Option<u64>,
    pub pred_delta_int: Option<String>,
    pub pred_delta_ext: Option<String>,
    pub pred_event_count: Option<String>,
    pub status: String,
}

impl Row {
    pub fn from_result(r: &RunResult) -> Self {
        let p = r.predicted;
        Row {
            family: r.spec.family.to_string(),
            width: r.spec.width,
            depth: r.spec.depth,
            n_events: r.spec.n_events,
            trials: r.trials_requested,
            mean_wall_time_s: sig6(r.mean_wall_time_s),
            mean_peak_mem_bytes: sig6(r.mean_peak_mem_bytes),
            n_delta_int: r.observed.map(|c| c.delta_int),
            n_delta_ext: r.observed.map(|c| c.delta_ext),
            n_event_count: r.observed.map(|c| c.events),
            pred_delta_int: p.map(|p| p.n_delta_int.to_string()),
            pred_delta_ext: p.map(|p| p.n_delta_ext.to_string()),
            pred_event_count: p.map(|p| p.n_events.to_string()),
            status: r.status.to_string(),
        }
    }

    fn fields(&self) -> [String; 14] {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.family.clone(),
            self.width.to_string(),
            self.depth.to_string(),
            self.n_events.to_string(),
            self.trials.to_string(),
            self.mean_wall_time_s.clone(),
            self.mean_peak_mem_bytes.clone(),
            opt(self.n_delta_int),
            opt(self.n_delta_ext),
            opt(self.n_event_count),
            self.pred_delta_int.clone().unwrap_or_default(),
            self.pred_delta_ext.clone().unwrap_or_default(),
            self.pred_event_count.clone().unwrap_or_default(),
            self.status.clone(),
        ]
    }
}

/// Results ordered by family, width, depth.
pub fn sorted(results: &[RunResult]) -> Vec<&RunResult> {
    let mut v: Vec<&RunResult> = results.iter().collect();
    v.sort_by_key(|r| (r.spec.family, r.spec.width, r.spec.depth));
    v
}

pub fn write_csv<W: Write>(results: &[RunResult], out: W) -> Result<(), EmitError> {
    if results.is_empty() {
        return Err(EmitError::Empty);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in sorted(results) {
        w.write_record(Row::from_result(r).fields())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct JsonTrial {
    wall_time_s: f64,
    peak_mem_bytes: u64,
    n_delta_int: Option<u64>,
    n_delta_ext: Option<u64>,
    n_event_count: Option<u64>,
    status: String,
}

impl JsonTrial {
    fn new(t: &TrialResult) -> Self {
        JsonTrial {
            wall_time_s: sig6_number(t.wall_time_s),
            peak_mem_bytes: t.peak_memory_bytes,
            n_delta_int: t.counts.map(|c| c.delta_int),
            n_delta_ext: t.counts.map(|c| c.delta_ext),
            n_event_count: t.counts.map(|c| c.events),
            status: t.status.to_string(),
        }
    }
}

#[derive(Serialize)]
struct JsonRow {
    family: String,
    width: u32,
    depth: u32,
    n_events: u32,
    trials: u32,
    mean_wall_time_s: f64,
    mean_peak_mem_bytes: f64,
    n_delta_int: Option<u64>,
    n_delta_ext: Option<u64>,
    n_event_count: Option<u64>,
    pred_delta_int: Option<u128>,
    pred_delta_ext: Option<u128>,
    pred_event_count: Option<u128>,
    status: String,
    delta_int_s: f64,
    delta_ext_s: f64,
    time_cap_s: f64,
    mem_cap_bytes: u64,
    isolated: bool,
    trial_results: Vec<JsonTrial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn sig6_number(x: f64) -> f64 {
    sig6(x).parse().unwrap_or(x)
}

pub fn write_json<W: Write>(results: &[RunResult], mut out: W) -> Result<(), EmitError> {
    if results.is_empty() {
        return Err(EmitError::Empty);
    }
    let rows: Vec<JsonRow> = sorted(results)
        .into_iter()
        .map(|r| {
            let p = r.predicted;
            JsonRow {
                family: r.spec.family.to_string(),
                width: r.spec.width,
                depth: r.spec.depth,
                n_events: r.spec.n_events,
                trials: r.trials_requested,
                mean_wall_time_s: sig6_number(r.mean_wall_time_s),
                mean_peak_mem_bytes: sig6_number(r.mean_peak_mem_bytes),
                n_delta_int: r.observed.map(|c| c.delta_int),
                n_delta_ext: r.observed.map(|c| c.delta_ext),
                n_event_count: r.observed.map(|c| c.events),
                pred_delta_int: p.map(|p| p.n_delta_int),
                pred_delta_ext: p.map(|p| p.n_delta_ext),
                pred_event_count: p.map(|p| p.n_events),
                status: r.status.to_string(),
                delta_int_s: r.spec.int_delay,
                delta_ext_s: r.spec.ext_delay,
                time_cap_s: r.time_cap,
                mem_cap_bytes: r.mem_cap,
                isolated: r.isolate,
                trial_results: r.trials.iter().map(JsonTrial::new).collect(),
                error: r.error.clone(),
            }
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &rows)?;
    writeln!(out).map_err(serde_json::Error::io)?;
    Ok(())
}

pub fn write<W: Write>(results: &[RunResult], format: Format, out: W) -> Result<(), EmitError> {
    match format {
        Format::Csv => write_csv(results, out),
        Format::Json => write_json(results, out),
    }
}

/// Writes `results` to `path`, replacing it atomically so a reader never sees
/// a half-written file.
pub fn emit(results: &[RunResult], format: Format, path: &Path) -> Result<(), EmitError> {
    if results.is_empty() {
        return Err(EmitError::Empty);
    }
    let io_err = |source| EmitError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write(results, format, &mut w)?;
    w.flush().map_err(io_err)?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.05, "0.05"),
            (1200.0, "1200"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (4294967296.0, "4.29497e+09"),
            (0.000123456789, "0.000123457"),
            (0.0000123456, "1.23456e-05"),
            (4.567891234, "4.56789"),
            (999999.5, "1e+06"),
            (-2.5, "-2.5"),
        ];
        for (x, want) in cases {
            assert_eq!(sig6(x), want, "sig6({x})");
        }
    }

    #[test]
    fn formats_parse() {
        assert_eq!("CSV".parse::<Format>().unwrap(), Format::Csv);
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn empty_results_are_rejected() {
        assert!(matches!(write_csv(&[], Vec::new()), Err(EmitError::Empty)));
        assert!(matches!(write_json(&[], Vec::new()), Err(EmitError::Empty)));
    }
}

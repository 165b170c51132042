//! Grid verification of simulated counters against the analytic model.

use std::fmt::Write as _;

use devstone_core::analytics::{homod_event_terms, HomodTerm};
use devstone_core::devstone::{BuildError, DevstoneModel};
use devstone_core::{
    injection_schedule, predict, AnalyticPrediction, BenchmarkSpec, Counts, Family,
    SimulationContext,
};

/// Cells whose predicted event count exceeds this are skipped by default.
pub const DEFAULT_EVENT_LIMIT: u128 = 50_000_000;

/// Largest width and depth verified by default for `family`.
pub fn default_max(family: Family) -> u32 {
    match family {
        Family::Li | Family::Hi | Family::Ho => 10,
        Family::HoMod | Family::HoMem => 6,
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub families: Vec<Family>,
    /// Applies to every family when set; otherwise [`default_max`].
    pub max_width: Option<u32>,
    pub max_depth: Option<u32>,
    pub events: u32,
    pub event_limit: u128,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            families: Family::ALL.to_vec(),
            max_width: None,
            max_depth: None,
            events: 1,
            event_limit: DEFAULT_EVENT_LIMIT,
        }
    }
}

impl VerifyOptions {
    pub fn grid(&self) -> Vec<BenchmarkSpec> {
        let mut fams = self.families.clone();
        fams.sort();
        fams.dedup();
        let mut out = Vec::new();
        for f in fams {
            let mw = self.max_width.unwrap_or_else(|| default_max(f));
            let md = self.max_depth.unwrap_or_else(|| default_max(f));
            for w in 2..=mw {
                for d in 1..=md {
                    out.push(BenchmarkSpec::new(f, w, d).with_events(self.events));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Match,
    Mismatch,
    /// Prediction exceeds the event limit; not simulated.
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub spec: BenchmarkSpec,
    pub predicted: Option<AnalyticPrediction>,
    pub observed: Option<Counts>,
    pub built_atomics: Option<u64>,
    pub outcome: Outcome,
}

impl CellReport {
    /// Human-readable breakdown of a mismatching cell.
    pub fn decomposition(&self) -> String {
        let s = &self.spec;
        let mut out = format!("{}({},{}) N={}:", s.family, s.width, s.depth, s.n_events);
        if let Outcome::Failed(msg) = &self.outcome {
            let _ = write!(out, " failed: {msg}");
            return out;
        }
        let (Some(p), Some(o)) = (self.predicted, self.observed) else {
            out.push_str(" no prediction or observation");
            return out;
        };
        let rows = [
            ("atomics", p.n_atomics, self.built_atomics.map(u128::from)),
            ("delta_int", p.n_delta_int, Some(o.delta_int.into())),
            ("delta_ext", p.n_delta_ext, Some(o.delta_ext.into())),
            ("events", p.n_events, Some(o.events.into())),
        ];
        for (name, pred, obs) in rows {
            match obs {
                Some(obs) => {
                    let diff = obs as i128 - pred as i128;
                    let _ = write!(
                        out,
                        "\n  {name:<9} predicted={pred} observed={obs} diff={diff:+}"
                    );
                }
                None => {
                    let _ = write!(out, "\n  {name:<9} predicted={pred} observed=?");
                }
            }
        }
        if s.family == Family::HoMod {
            if let Ok(terms) = homod_event_terms(s.width, s.depth) {
                out.push_str("\n  event terms (level, round, value per event):");
                for HomodTerm {
                    level,
                    round,
                    value,
                } in terms
                {
                    let _ = write!(out, " ({level},{round},{value})");
                }
                out.push_str(" +1");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub cells: Vec<CellReport>,
}

impl VerifyReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &CellReport> {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, Outcome::Mismatch | Outcome::Failed(_)))
    }

    pub fn count(&self, outcome: &Outcome) -> usize {
        self.cells
            .iter()
            .filter(|c| std::mem::discriminant(&c.outcome) == std::mem::discriminant(outcome))
            .count()
    }

    pub fn is_clean(&self) -> bool {
        self.mismatches().next().is_none()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in self.mismatches() {
            out.push_str("MISMATCH ");
            out.push_str(&c.decomposition());
            out.push('\n');
        }
        for c in self.cells.iter().filter(|c| c.outcome == Outcome::Skipped) {
            let ev = c
                .predicted
                .map(|p| p.n_events.to_string())
                .unwrap_or_else(|| "overflow".into());
            let _ = writeln!(
                out,
                "SKIPPED {}({},{}) predicted events {ev} above limit",
                c.spec.family, c.spec.width, c.spec.depth
            );
        }
        let _ = writeln!(
            out,
            "verified {} cells: {} match, {} mismatch, {} skipped",
            self.cells.len(),
            self.count(&Outcome::Match),
            self.mismatches().count(),
            self.count(&Outcome::Skipped)
        );
        out
    }
}

/// Verifies the grid with the standard builders.
pub fn verify(opts: &VerifyOptions) -> VerifyReport {
    verify_with(opts, devstone_core::build)
}

/// Verifies the grid using `builder` for every model, e.g. to check that a
/// deliberately broken topology is caught.
pub fn verify_with<F>(opts: &VerifyOptions, mut builder: F) -> VerifyReport
where
    F: FnMut(&BenchmarkSpec) -> Result<DevstoneModel, BuildError>,
{
    let cells = opts
        .grid()
        .into_iter()
        .map(|spec| verify_cell(spec, opts.event_limit, &mut builder))
        .collect();
    VerifyReport { cells }
}

fn verify_cell<F>(spec: BenchmarkSpec, event_limit: u128, builder: &mut F) -> CellReport
where
    F: FnMut(&BenchmarkSpec) -> Result<DevstoneModel, BuildError>,
{
    let predicted = predict(&spec).ok();
    let mut cell = CellReport {
        spec,
        predicted,
        observed: None,
        built_atomics: None,
        outcome: Outcome::Skipped,
    };
    match predicted {
        Some(p) if p.n_events <= event_limit => {}
        _ => return cell,
    }
    let model = match builder(&spec) {
        Ok(m) => m,
        Err(e) => {
            cell.outcome = Outcome::Failed(format!("build: {e}"));
            return cell;
        }
    };
    cell.built_atomics = Some(model.root.atomic_count());
    let DevstoneModel { root, counters } = model;
    let run = SimulationContext::initialize(root, injection_schedule(&spec))
        .and_then(|mut ctx| ctx.run_to_quiescence().map(|_| ()));
    if let Err(e) = run {
        cell.outcome = Outcome::Failed(format!("simulation: {e}"));
        return cell;
    }
    let observed = counters.snapshot();
    cell.observed = Some(observed);
    let p = predicted.expect("checked above");
    cell.outcome = if p.matches(&observed) && cell.built_atomics == Some(p.n_atomics as u64) {
        Outcome::Match
    } else {
        Outcome::Mismatch
    };
    cell
}

//! Sequential width x depth sweeps.

use std::time::Instant;

use crate::config::SweepConfig;
use crate::runner::{RunResult, Runner};

/// Every cell of `cfg`, in family, width, depth order.
pub fn cells(cfg: &SweepConfig) -> Vec<crate::config::RunConfig> {
    let mut out = Vec::with_capacity(cfg.cell_count());
    for fs in &cfg.families {
        for w in fs.width.values() {
            for d in fs.depth.values() {
                out.push(fs.run_config(w, d, cfg.isolate));
            }
        }
    }
    out
}

/// Runs every cell one after another. Progress goes to standard error and
/// `on_cell` sees the accumulated results after each cell, so callers can
/// flush partial output. Cell failures are recorded, never propagated.
pub fn sweep(
    cfg: &SweepConfig,
    runner: &Runner,
    mut on_cell: impl FnMut(&[RunResult]),
) -> Vec<RunResult> {
    let cells = cells(cfg);
    let total = cells.len();
    let started = Instant::now();
    let mut results = Vec::with_capacity(total);
    for (i, cell) in cells.iter().enumerate() {
        let s = &cell.spec;
        let r = runner
            .run_benchmark(cell)
            .unwrap_or_else(|e| RunResult::failed(cell, e));
        eprintln!(
            "[{}/{}] {}({},{}) {} mean_wall={:.6}s elapsed={:.1}s",
            i + 1,
            total,
            s.family,
            s.width,
            s.depth,
            r.status,
            r.mean_wall_time_s,
            started.elapsed().as_secs_f64()
        );
        results.push(r);
        on_cell(&results);
    }
    results
}

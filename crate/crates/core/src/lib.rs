//! Sequential Parallel-DEVS simulation kernel and the DEVStone synthetic
//! benchmark families.
//!
//! - [`model`]: ports, bags, atomic behaviors and validated coupled models.
//! - [`sim`]: the hierarchical abstract simulator.
//! - [`devstone`]: the instrumented atomic model and the five topology builders.
//! - [`analytics`]: predicted atomic, transition and event counts.
//! - [`dhrystone`]: calibrated CPU burn used for transition delays.

pub mod analytics;
pub mod devstone;
pub mod dhrystone;
pub mod model;
pub mod sim;

pub use analytics::{predict, AnalyticPrediction, AnalyticsError};
pub use devstone::{
    build, injection_schedule, BenchmarkSpec, Counts, DevstoneAtomic, DevstoneModel, Family,
    TransitionCounters,
};
pub use model::{
    AtomicBehavior, AtomicModel, Component, CoupledModel, CouplingClass, Endpoint, Time, Token,
};
pub use sim::{InjectionSchedule, SimError, SimulationContext};

/// Runs a freshly built `spec` model to quiescence and returns the
/// observed counters.
pub fn simulate(spec: &BenchmarkSpec) -> Result<Counts, Box<dyn std::error::Error + Send + Sync>> {
    let DevstoneModel { root, counters } = build(spec)?;
    let mut ctx = SimulationContext::initialize(root, injection_schedule(spec))?;
    ctx.run_to_quiescence()?;
    Ok(counters.snapshot())
}

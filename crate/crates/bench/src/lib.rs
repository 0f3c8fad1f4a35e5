//! Shared fixtures for the pipeline benchmarks in `benches/`.
//!
//! The fixtures use Example 1 (q = 1, gated input) on a shortened horizon
//! so that a single iteration of the slowest stage stays well under a
//! second.

use delobs_core::{simulate_plant, Example1Options, PlantRun, Result, Scenario};

/// Horizon of the benchmark scenario.
pub const HORIZON: f64 = 10.0;

/// Example 1 over [`HORIZON`] with the default certificate sampling.
pub fn example1() -> Result<Scenario> {
    let mut opts = Example1Options::default();
    opts.params.horizon = HORIZON;
    opts.build()
}

/// The scenario together with one plant run from `x0 = (0.6, 0.8)`.
pub fn example1_with_plant() -> Result<(Scenario, PlantRun)> {
    let sc = example1()?;
    let plant = simulate_plant(&sc, &[0.6, 0.8])?;
    Ok((sc, plant))
}

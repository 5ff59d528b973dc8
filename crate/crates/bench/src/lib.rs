//! Fixtures shared by the benchmarks.

use polar_ray_core::{builtin_scenario, Prepared, Scenario};

/// A builtin scenario with its prepared potential and convex function.
pub fn fixture(name: &str) -> (Scenario, Prepared) {
    let scenario = builtin_scenario(name).expect("builtin exists");
    let prepared = scenario.prepare(None).expect("builtin prepares");
    (scenario, prepared)
}

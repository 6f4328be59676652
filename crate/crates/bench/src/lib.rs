//! Shared fixtures for the benchmarks.

use nalgebra::{DMatrix, DVector};
use oirl_core::dynamics::{AffineDynamics, PlantModel};
use oirl_core::ScenarioConfig;

/// The tracking plant's error system with its true parameters.
pub fn tracking_plant() -> AffineDynamics {
    AffineDynamics::new(
        PlantModel::Linear {
            a_nominal: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b_nominal: DMatrix::zeros(2, 1),
        },
        DMatrix::from_row_slice(3, 2, &[0.0, -0.5, 0.0, -0.5, 0.0, 1.0]),
    )
    .expect("valid plant")
}

/// A stable `n`-state chain with one input, for oracle timings.
pub fn chain_system(n: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(n, n, |i, j| match j as isize - i as isize {
        0 => -0.5,
        1 => 1.0,
        _ => 0.0,
    });
    let mut b = DMatrix::zeros(n, 1);
    b[n - 1] = 1.0;
    (a, b, DMatrix::identity(n, n), DMatrix::from_element(1, 1, 10.0))
}

/// The shipped scenario shortened to `duration` seconds.
pub fn short_scenario(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        ..ScenarioConfig::tracking_default()
    }
}

/// Deterministic points on a spiral, a cheap stand-in for trajectory data.
pub fn spiral(k: usize) -> DVector<f64> {
    let t = k as f64 * 0.05;
    DVector::from_vec(vec![(-0.1 * t).exp() * t.cos(), (-0.1 * t).exp() * t.sin()])
}

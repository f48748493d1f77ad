//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use pcrlb::experiment::ExperimentConfig;
use pcrlb::model::{linear_gaussian_model, ungm_model, LinearGaussian, Ungm};
use pcrlb::{GaussianBelief, GaussianPrior};

/// Growth model with the default noise levels and prior.
pub fn ungm() -> Ungm {
    ungm_model(
        1.0,
        5.0,
        GaussianPrior::scalar(0.0, 20.0).expect("valid prior"),
    )
    .expect("valid model")
}

/// Scalar belief with the given mean and variance.
pub fn belief(mean: f64, var: f64) -> GaussianBelief {
    GaussianBelief::scalar(mean, var).expect("valid belief")
}

/// Stable `n`-dimensional linear model with full-state measurements.
pub fn linear(n: usize) -> LinearGaussian {
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.9
        } else {
            0.05 / (1 + i + j) as f64
        }
    });
    let prior =
        GaussianPrior::new(DVector::zeros(n), DMatrix::identity(n, n)).expect("valid prior");
    linear_gaussian_model(
        a,
        DMatrix::identity(n, n),
        DMatrix::identity(n, n) * 0.5,
        DMatrix::identity(n, n),
        prior,
    )
    .expect("valid model")
}

/// Growth-model experiment reduced to `runs` runs.
pub fn small_experiment(runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        runs,
        workers: Some(1),
        ..ExperimentConfig::default()
    }
}

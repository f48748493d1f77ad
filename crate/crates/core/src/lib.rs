//! Recursive posterior Cramér-Rao lower bounds for nonlinear state-space
//! models with additive Gaussian noise.
//!
//! The bound is computed from true states by Monte Carlo, from filter point
//! estimates (mean-only), and from filter means and covariances through a
//! second-order Taylor expansion (mean+covariance). The last one is also
//! split against the mean-only terms, which gives the gap between the two
//! approximations in closed form.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod fim;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod verify;

pub use error::{Error, Result};
pub use experiment::{
    run_experiment, AggregateResult, AveragingMode, BeliefSource, ExperimentConfig, ModelSpec,
    RunResult,
};
pub use filters::{EstimatorKind, FilterOutput, FilterSettings};
pub use fim::{BoundMethod, BoundSeries, DecomposedFim, FimTriple};
pub use model::{GaussianPrior, SystemModel, Trajectory};
pub use moments::GaussianBelief;

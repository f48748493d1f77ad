//! State estimators whose beliefs feed the approximate bounds.

mod pf;
mod ukf;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::derive_run_seed;
use crate::model::{SystemModel, Trajectory};
use crate::moments::GaussianBelief;

pub use pf::{particle_moments, pf_step, systematic_resample, ParticleSet, ResamplePolicy};
pub use ukf::{ukf_step, unscented_transform, SigmaPointSet, UtOutput, UtParams};

/// Beliefs on `x_k` before and after the measurement update at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub posterior: GaussianBelief,
    pub predicted: GaussianBelief,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ukf,
    Pf,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Ukf => "ukf",
            EstimatorKind::Pf => "pf",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    pub ut: UtParams,
    pub particles: usize,
    pub resample: ResamplePolicy,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            ut: UtParams::default(),
            particles: 1000,
            resample: ResamplePolicy::EveryStep,
        }
    }
}

/// Runs one estimator over a trajectory. Entry `k` of the result is the
/// output at time `k`; entry 0 is the prior (as both predicted and
/// posterior). Randomness is drawn from `seed` only.
pub fn run_filter<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    kind: EstimatorKind,
    settings: &FilterSettings,
    seed: u64,
) -> Result<Vec<FilterOutput>> {
    run_filter_tracked(model, trajectory, kind, settings, seed).map_err(|(k, e)| Error::Numeric {
        context: format!("{kind} step {k}"),
        detail: e.to_string(),
    })
}

/// [`run_filter`] reporting the failing step alongside the error.
pub(crate) fn run_filter_tracked<M: SystemModel + ?Sized>(
    model: &M,
    trajectory: &Trajectory,
    kind: EstimatorKind,
    settings: &FilterSettings,
    seed: u64,
) -> std::result::Result<Vec<FilterOutput>, (usize, Error)> {
    let prior = model.prior();
    let start = GaussianBelief {
        mean: prior.mean().clone(),
        cov: prior.cov().clone(),
    };
    let horizon = trajectory.horizon();
    let mut outputs = Vec::with_capacity(horizon + 1);
    outputs.push(FilterOutput {
        posterior: start.clone(),
        predicted: start,
    });
    match kind {
        EstimatorKind::Ukf => {
            for k in 1..=horizon {
                let out = ukf_step(
                    model,
                    k,
                    &outputs[k - 1].posterior,
                    trajectory.measurement(k),
                    &settings.ut,
                )
                .map_err(|e| (k, e))?;
                outputs.push(out);
            }
        }
        EstimatorKind::Pf => {
            let mut particles =
                ParticleSet::from_prior(prior, settings.particles, derive_run_seed(seed, 0))
                    .map_err(|e| (0, e))?;
            for k in 1..=horizon {
                let (next, out) = pf_step(
                    model,
                    k,
                    &particles,
                    trajectory.measurement(k),
                    derive_run_seed(seed, k as u64),
                    settings.resample,
                )
                .map_err(|e| (k, e))?;
                particles = next;
                outputs.push(out);
            }
        }
    }
    Ok(outputs)
}

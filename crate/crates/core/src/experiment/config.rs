use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{EstimatorKind, FilterSettings};
use crate::fim::BoundMethod;
use crate::model::{linear_gaussian_model, ungm_model, GaussianPrior, SystemModel};

/// Master seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_100_701;

/// Model selection plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Ungm {
        process_var: f64,
        meas_var: f64,
        prior_mean: f64,
        prior_var: f64,
    },
    Linear {
        a: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    },
}

impl ModelSpec {
    /// Growth model with `sigma_w^2 = 1`, `sigma_v^2 = 5` and prior `N(0, 20)`.
    pub fn ungm_default() -> Self {
        ModelSpec::Ungm {
            process_var: 1.0,
            meas_var: 5.0,
            prior_mean: 0.0,
            prior_var: 20.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ungm { .. } => "ungm",
            ModelSpec::Linear { .. } => "linear",
        }
    }

    pub fn build(&self) -> Result<Box<dyn SystemModel>> {
        Ok(match self {
            ModelSpec::Ungm {
                process_var,
                meas_var,
                prior_mean,
                prior_var,
            } => {
                let prior = GaussianPrior::scalar(*prior_mean, *prior_var)?;
                Box::new(ungm_model(*process_var, *meas_var, prior)?)
            }
            ModelSpec::Linear {
                a,
                h,
                q,
                r,
                prior_mean,
                prior_cov,
            } => {
                let prior = GaussianPrior::new(prior_mean.clone(), prior_cov.clone())?;
                Box::new(linear_gaussian_model(
                    a.clone(),
                    h.clone(),
                    q.clone(),
                    r.clone(),
                    prior,
                )?)
            }
        })
    }
}

/// How per-run bounds are combined into one curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingMode {
    /// Mean of `J_k^-1` over runs.
    #[default]
    AverageBounds,
    /// Inverse of the mean of `J_k` over runs.
    AverageFim,
}

/// Which filter belief feeds a channel of the approximate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefSource {
    Posterior,
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Any of `True`, `MeanOnly`, `MeanCov`; the gaps come with `MeanCov`.
    pub methods: Vec<BoundMethod>,
    pub filters: FilterSettings,
    pub averaging: AveragingMode,
    /// Belief on `x_k` used for the transition terms of step `k -> k+1`.
    pub state_belief: BeliefSource,
    /// Belief on `x_{k+1}` used for the measurement terms of that step.
    pub measurement_belief: BeliefSource,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::ungm_default(),
            horizon: 50,
            runs: 100,
            seed: DEFAULT_SEED,
            estimators: vec![EstimatorKind::Ukf, EstimatorKind::Pf],
            methods: vec![
                BoundMethod::True,
                BoundMethod::MeanOnly,
                BoundMethod::MeanCov,
            ],
            filters: FilterSettings::default(),
            averaging: AveragingMode::AverageBounds,
            state_belief: BeliefSource::Posterior,
            measurement_belief: BeliefSource::Predicted,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.filters.particles == 0 {
            return Err(Error::invalid("particle count must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if let Some(m) = self
            .methods
            .iter()
            .find(|m| matches!(m, BoundMethod::GapAnalytic | BoundMethod::GapDirect))
        {
            return Err(Error::invalid(format!(
                "{m} is not a bound method; gaps come with mean_cov"
            )));
        }
        let ut = &self.filters.ut;
        if !(ut.alpha > 0.0) {
            return Err(Error::invalid("UT alpha must be positive"));
        }
        if let crate::filters::ResamplePolicy::Ess(t) = self.filters.resample {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid("ESS threshold must lie in [0, 1]"));
            }
        }
        self.model.build().map(|_| ())
    }

    pub fn wants(&self, method: BoundMethod) -> bool {
        self.methods.contains(&method)
    }
}

//! Unscented transform and the unscented Kalman filter built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FilterOutput;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, regularize_cov, symmetrize};
use crate::model::{measure, transition, SystemModel};
use crate::moments::GaussianBelief;

/// Scaling parameters. `kappa = None` means `3 - n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Option<f64>,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: None,
        }
    }
}

impl UtParams {
    pub fn lambda(&self, n: usize) -> f64 {
        let n = n as f64;
        let kappa = self.kappa.unwrap_or(3.0 - n);
        self.alpha * self.alpha * (n + kappa) - n
    }
}

/// Symmetric `2n + 1` point set; point 0 is the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn new(belief: &GaussianBelief, params: &UtParams) -> Result<Self> {
        let n = belief.dim();
        let lambda = params.lambda(n);
        let spread = n as f64 + lambda;
        if !(spread > 0.0) {
            return Err(Error::invalid(format!(
                "unscented transform needs n + lambda > 0, got {spread}"
            )));
        }
        let factor = cholesky_jittered(&(&belief.cov * spread), "sigma point square root")?.l();

        let mut points = Vec::with_capacity(2 * n + 1);
        points.push(belief.mean.clone());
        for j in 0..n {
            points.push(&belief.mean + factor.column(j));
        }
        for j in 0..n {
            points.push(&belief.mean - factor.column(j));
        }
        let w = 0.5 / spread;
        let mut mean_weights = vec![w; 2 * n + 1];
        let mut cov_weights = vec![w; 2 * n + 1];
        mean_weights[0] = lambda / spread;
        cov_weights[0] = lambda / spread + (1.0 - params.alpha * params.alpha + params.beta);
        Ok(Self {
            points,
            mean_weights,
            cov_weights,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtOutput {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Cross-covariance between input and output, `n x m`.
    pub cross_cov: DMatrix<f64>,
}

pub fn unscented_transform<F>(
    belief: &GaussianBelief,
    map: F,
    noise_cov: &DMatrix<f64>,
    params: &UtParams,
) -> Result<UtOutput>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let sigma = SigmaPointSet::new(belief, params)?;
    let mapped = sigma.points.iter().map(&map).collect::<Result<Vec<_>>>()?;
    let m = mapped[0].len();
    if noise_cov.shape() != (m, m) {
        return Err(Error::invalid(
            "unscented transform: noise covariance has the wrong shape",
        ));
    }
    let mean = mapped
        .iter()
        .zip(&sigma.mean_weights)
        .fold(DVector::zeros(m), |acc, (y, &w)| acc + y * w);
    let mut cov = noise_cov.clone();
    let mut cross_cov = DMatrix::zeros(belief.dim(), m);
    for ((y, x), &w) in mapped.iter().zip(&sigma.points).zip(&sigma.cov_weights) {
        let dy = y - &mean;
        let dx = x - &belief.mean;
        cov += &dy * dy.transpose() * w;
        cross_cov += &dx * dy.transpose() * w;
    }
    Ok(UtOutput {
        mean,
        cov: symmetrize(&cov),
        cross_cov,
    })
}

/// One predict/update cycle producing the belief on `x_k` from the belief on
/// `x_{k-1}` and the measurement `z_k`.
pub fn ukf_step<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
    z: &DVector<f64>,
    params: &UtParams,
) -> Result<FilterOutput> {
    if z.len() != model.meas_dim() {
        return Err(Error::invalid(format!(
            "measurement has length {} but the model has m = {}",
            z.len(),
            model.meas_dim()
        )));
    }
    let pred = unscented_transform(
        belief,
        |x| transition(model, k, x),
        &model.process_cov(k),
        params,
    )?;
    let predicted = GaussianBelief {
        mean: pred.mean,
        cov: regularize_cov(&pred.cov, "UKF predicted covariance")?,
    };

    let upd = unscented_transform(
        &predicted,
        |x| measure(model, k, x),
        &model.meas_cov(k),
        params,
    )?;
    let innovation_cov = nalgebra::Cholesky::new(upd.cov.clone())
        .ok_or_else(|| Error::numeric("UKF update", "innovation covariance is singular"))?;
    // K = P_xz P_zz^-1, via P_zz K' = P_xz'.
    let gain = innovation_cov.solve(&upd.cross_cov.transpose()).transpose();
    let mean = &predicted.mean + &gain * (z - &upd.mean);
    let cov = &predicted.cov - &gain * &upd.cov * gain.transpose();
    let posterior = GaussianBelief {
        mean,
        cov: regularize_cov(&cov, "UKF posterior covariance")?,
    };
    Ok(FilterOutput {
        posterior,
        predicted,
    })
}

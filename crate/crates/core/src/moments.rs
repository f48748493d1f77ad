//! Second-order Taylor propagation of a Gaussian belief through the
//! transition and measurement maps, and derivatives of the propagated
//! moments with respect to the conditioning point.
//!
//! For a map `g` with Jacobian `G` and component Hessians `S_i` at the
//! belief mean, with belief covariance `P`:
//!
//! ```text
//! mean = g(x) + g_curv,           g_curv_i  = 1/2 tr(S_i P)
//! cov  = G P G' + C + noise,      C_ij      = 1/2 tr(S_i P S_j P)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, is_symmetric, symmetrize};
use crate::model::{
    measure, measurement_hessians, measurement_jacobian, transition, transition_hessians,
    transition_jacobian, SystemModel,
};

/// Mean and covariance of a state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// Accepts PSD covariances; the covariance is symmetrized.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::invalid(format!(
                "belief mean has length {n} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !is_symmetric(&cov, 1e-8) {
            return Err(Error::invalid("belief covariance is not symmetric"));
        }
        let cov = clamp_psd(&cov, "belief covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Same covariance, different mean.
    pub fn recentered(&self, mean: DVector<f64>) -> Self {
        Self {
            mean,
            cov: self.cov.clone(),
        }
    }
}

/// Output of [`propagate_state_moments`] or [`propagate_measurement_moments`].
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedMoments {
    pub mean: DVector<f64>,
    /// Full covariance `linear_cov + curvature_cov + noise`.
    pub cov: DMatrix<f64>,
    /// `1/2 tr(S_i P)` stacked over output components.
    pub curvature_mean: DVector<f64>,
    /// `1/2 tr(S_i P S_j P)`.
    pub curvature_cov: DMatrix<f64>,
    /// `G P G'`.
    pub linear_cov: DMatrix<f64>,
}

impl PropagatedMoments {
    /// Covariance excess over the additive noise, `G P G' + C`.
    pub fn spread_cov(&self) -> DMatrix<f64> {
        &self.linear_cov + &self.curvature_cov
    }
}

fn assemble(
    value: DVector<f64>,
    jacobian: &DMatrix<f64>,
    hessians: &[DMatrix<f64>],
    cov_in: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    context: &str,
) -> Result<PropagatedMoments> {
    let out = value.len();
    if noise.shape() != (out, out) {
        return Err(Error::invalid(format!(
            "{context}: noise covariance has the wrong shape"
        )));
    }
    let sp: Vec<DMatrix<f64>> = hessians.iter().map(|s| s * cov_in).collect();
    let curvature_mean = DVector::from_iterator(out, sp.iter().map(|m| 0.5 * m.trace()));
    let mut curvature_cov = DMatrix::zeros(out, out);
    for i in 0..out {
        for j in i..out {
            let t = 0.5 * (&sp[i] * &sp[j]).trace();
            curvature_cov[(i, j)] = t;
            curvature_cov[(j, i)] = t;
        }
    }
    if curvature_mean
        .iter()
        .chain(curvature_cov.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::numeric(context, "non-finite trace terms"));
    }
    let linear_cov = clamp_psd(&(jacobian * cov_in * jacobian.transpose()), context)?;
    let curvature_cov = clamp_psd(&curvature_cov, context)?;
    let cov = clamp_psd(
        &symmetrize(&(&linear_cov + &curvature_cov + noise)),
        context,
    )?;
    Ok(PropagatedMoments {
        mean: value + &curvature_mean,
        cov,
        curvature_mean,
        curvature_cov,
        linear_cov,
    })
}

/// Gaussian approximation of `x_k` given a belief on `x_{k-1}` (model time
/// index `k`, see [`crate::model`]).
pub fn propagate_state_moments<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
) -> Result<PropagatedMoments> {
    let x = &belief.mean;
    assemble(
        transition(model, k, x)?,
        &transition_jacobian(model, k, x)?,
        &transition_hessians(model, k, x)?,
        &belief.cov,
        &model.process_cov(k),
        "state moment propagation",
    )
}

/// Gaussian approximation of `z_k` given a belief on `x_k`.
pub fn propagate_measurement_moments<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
) -> Result<PropagatedMoments> {
    let x = &belief.mean;
    assemble(
        measure(model, k, x)?,
        &measurement_jacobian(model, k, x)?,
        &measurement_hessians(model, k, x)?,
        &belief.cov,
        &model.meas_cov(k),
        "measurement moment propagation",
    )
}

/// Derivatives of the propagated moments with respect to the conditioning
/// point, covariance held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMapDerivatives {
    /// Jacobian of the noise-free map at the belief mean.
    pub base_jacobian: DMatrix<f64>,
    /// Jacobian of the curvature mean term.
    pub curvature_mean_jacobian: DMatrix<f64>,
    /// `base_jacobian + curvature_mean_jacobian`, the Jacobian of the
    /// propagated mean.
    pub mean_jacobian: DMatrix<f64>,
    /// `d cov / d x_i`, one matrix per state coordinate.
    pub cov_partials: Vec<DMatrix<f64>>,
}

#[derive(Clone, Copy)]
enum Channel {
    State,
    Measurement,
}

fn moment_map_derivatives<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
    channel: Channel,
) -> Result<MomentMapDerivatives> {
    let x = &belief.mean;
    let n = x.len();
    let (base_jacobian, analytic_hessians) = match channel {
        Channel::State => (
            transition_jacobian(model, k, x)?,
            model.analytic_transition_hessians(k, x).is_some(),
        ),
        Channel::Measurement => (
            measurement_jacobian(model, k, x)?,
            model.analytic_measurement_hessians(k, x).is_some(),
        ),
    };
    let propagate = |point: &DVector<f64>| {
        let b = belief.recentered(point.clone());
        match channel {
            Channel::State => propagate_state_moments(model, k, &b),
            Channel::Measurement => propagate_measurement_moments(model, k, &b),
        }
    };
    // Finite-difference Hessians are noisy at the Jacobian step size.
    let policy = model.step_policy();
    let out = base_jacobian.nrows();
    let mut curvature_mean_jacobian = DMatrix::zeros(out, n);
    let mut cov_partials = Vec::with_capacity(n);
    for j in 0..n {
        let h = if analytic_hessians {
            policy.jacobian_step(x[j])
        } else {
            policy.hessian_step(x[j])
        };
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let width = xp[j] - xm[j];
        let up = propagate(&xp)?;
        let down = propagate(&xm)?;
        curvature_mean_jacobian
            .set_column(j, &((&up.curvature_mean - &down.curvature_mean) / width));
        cov_partials.push(symmetrize(&((&up.cov - &down.cov) / width)));
    }
    if curvature_mean_jacobian.iter().any(|v| !v.is_finite())
        || cov_partials
            .iter()
            .flat_map(|m| m.iter())
            .any(|v| !v.is_finite())
    {
        return Err(Error::numeric(
            "moment map derivatives",
            "non-finite differences",
        ));
    }
    Ok(MomentMapDerivatives {
        mean_jacobian: &base_jacobian + &curvature_mean_jacobian,
        base_jacobian,
        curvature_mean_jacobian,
        cov_partials,
    })
}

/// Derivatives of the propagated state mean and covariance (transition at
/// model index `k`) with respect to the conditioning state.
pub fn state_moment_map_derivatives<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
) -> Result<MomentMapDerivatives> {
    moment_map_derivatives(model, k, belief, Channel::State)
}

/// Measurement analogue of [`state_moment_map_derivatives`].
pub fn measurement_moment_map_derivatives<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    belief: &GaussianBelief,
) -> Result<MomentMapDerivatives> {
    moment_map_derivatives(model, k, belief, Channel::Measurement)
}

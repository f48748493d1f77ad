//! State-space model abstraction.
//!
//! A model describes
//!
//! ```text
//! x_k = f_k(x_{k-1}) + w_k,   w_k ~ N(0, Q_k)
//! z_k = h_k(x_k)     + v_k,   v_k ~ N(0, R_k)
//! ```
//!
//! with a Gaussian prior on `x_0`. Time indices follow the *target* state:
//! [`SystemModel::transition_map`] at index `k` produces `x_k` from
//! `x_{k-1}`, and [`SystemModel::process_cov`] at `k` is the covariance of the
//! noise added on that step. Derivatives default to central finite
//! differences; built-in models override them analytically.

mod fd;
mod linear;
mod ungm;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, is_symmetric, psd_factor, symmetrize};

pub use fd::{fd_hessian, fd_jacobian, StepPolicy};
pub use linear::{linear_gaussian_model, LinearGaussian};
pub use ungm::{ungm_model, Ungm};

/// Gaussian distribution of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianPrior {
    /// Requires a symmetric positive definite covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::invalid(format!(
                "prior mean has length {n} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        check_finite(&cov, "prior covariance")?;
        if !is_symmetric(&cov, 1e-12) {
            return Err(Error::invalid("prior covariance is not symmetric"));
        }
        let cov = symmetrize(&cov);
        if nalgebra::Cholesky::new(cov.clone()).is_none() {
            return Err(Error::invalid("prior covariance is not positive definite"));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    /// Point mass at `mean`; only used to build noise-free test fixtures.
    #[cfg(test)]
    pub(crate) fn point_mass(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(n, n),
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Additive-Gaussian state-space model. Implementations must be immutable
/// after construction; all evaluation is through `&self`.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn meas_dim(&self) -> usize;

    /// Noise-free `f_k`: maps `x_{k-1}` to `x_k`.
    fn transition_map(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    /// Noise-free `h_k`.
    fn measurement_map(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;

    /// `Q_k`, covariance of the process noise entering `x_k`.
    fn process_cov(&self, k: usize) -> DMatrix<f64>;

    /// `R_k`.
    fn meas_cov(&self, k: usize) -> DMatrix<f64>;

    fn prior(&self) -> &GaussianPrior;

    fn analytic_transition_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn analytic_transition_hessians(
        &self,
        _k: usize,
        _x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn analytic_measurement_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn analytic_measurement_hessians(
        &self,
        _k: usize,
        _x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    fn step_policy(&self) -> StepPolicy {
        StepPolicy::default()
    }
}

fn check_state<M: SystemModel + ?Sized>(model: &M, x: &DVector<f64>, what: &str) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::invalid(format!(
            "{what}: state has length {} but the model has n = {}",
            x.len(),
            model.state_dim()
        )));
    }
    Ok(())
}

fn check_output(v: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::invalid(format!(
            "{what}: output has length {} but expected {len}",
            v.len()
        )));
    }
    check_finite(&DMatrix::from_column_slice(len, 1, v.as_slice()), what)
}

fn check_hessians(
    hess: &[DMatrix<f64>],
    count: usize,
    n: usize,
    what: &str,
) -> Result<Vec<DMatrix<f64>>> {
    if hess.len() != count || hess.iter().any(|h| h.nrows() != n || h.ncols() != n) {
        return Err(Error::invalid(format!(
            "{what}: expected {count} Hessians of size {n}x{n}"
        )));
    }
    hess.iter()
        .map(|h| {
            check_finite(h, what)?;
            Ok(symmetrize(h))
        })
        .collect()
}

/// `f_k(x)` without noise.
pub fn transition<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_state(model, x, "transition")?;
    let y = model.transition_map(k, x);
    check_output(&y, model.state_dim(), "transition")?;
    Ok(y)
}

/// `h_k(x)` without noise.
pub fn measure<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_state(model, x, "measurement")?;
    let y = model.measurement_map(k, x);
    check_output(&y, model.meas_dim(), "measurement")?;
    Ok(y)
}

pub fn transition_jacobian<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_state(model, x, "transition Jacobian")?;
    let n = model.state_dim();
    let jac = match model.analytic_transition_jacobian(k, x) {
        Some(j) => j,
        None => fd_jacobian(|p| model.transition_map(k, p), x, &model.step_policy())?,
    };
    if jac.shape() != (n, n) {
        return Err(Error::invalid("transition Jacobian has the wrong shape"));
    }
    check_finite(&jac, "transition Jacobian")?;
    Ok(jac)
}

/// One symmetric Hessian per component of `f_k`.
pub fn transition_hessians<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    check_state(model, x, "transition Hessians")?;
    let hess = match model.analytic_transition_hessians(k, x) {
        Some(h) => h,
        None => fd_hessian(|p| model.transition_map(k, p), x, &model.step_policy())?,
    };
    let n = model.state_dim();
    check_hessians(&hess, n, n, "transition Hessians")
}

pub fn measurement_jacobian<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_state(model, x, "measurement Jacobian")?;
    let jac = match model.analytic_measurement_jacobian(k, x) {
        Some(j) => j,
        None => fd_jacobian(|p| model.measurement_map(k, p), x, &model.step_policy())?,
    };
    if jac.shape() != (model.meas_dim(), model.state_dim()) {
        return Err(Error::invalid("measurement Jacobian has the wrong shape"));
    }
    check_finite(&jac, "measurement Jacobian")?;
    Ok(jac)
}

/// One symmetric Hessian per component of `h_k`.
pub fn measurement_hessians<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    x: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    check_state(model, x, "measurement Hessians")?;
    let hess = match model.analytic_measurement_hessians(k, x) {
        Some(h) => h,
        None => fd_hessian(|p| model.measurement_map(k, p), x, &model.step_policy())?,
    };
    check_hessians(
        &hess,
        model.meas_dim(),
        model.state_dim(),
        "measurement Hessians",
    )
}

/// One realization of states `x_0..x_T` and measurements `z_1..z_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    /// `measurements[k - 1]` holds `z_k`.
    pub measurements: Vec<DVector<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.measurements.len()
    }

    /// `z_k` for `1 <= k <= T`.
    pub fn measurement(&self, k: usize) -> &DVector<f64> {
        &self.measurements[k - 1]
    }
}

fn gaussian_draw(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let n = factor.ncols();
    let white = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    factor * white
}

/// Samples a trajectory of length `horizon`; the result is a pure function
/// of `(model, horizon, seed)`.
pub fn sample_trajectory<M: SystemModel + ?Sized>(
    model: &M,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("trajectory horizon must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = model.prior();
    let x0 = prior.mean() + gaussian_draw(&mut rng, &psd_factor(prior.cov(), "prior covariance")?);

    let mut states = Vec::with_capacity(horizon + 1);
    let mut measurements = Vec::with_capacity(horizon);
    states.push(x0);
    for k in 1..=horizon {
        let q = psd_factor(&model.process_cov(k), "process covariance")?;
        let r = psd_factor(&model.meas_cov(k), "measurement covariance")?;
        let x = transition(model, k, &states[k - 1])? + gaussian_draw(&mut rng, &q);
        let z = measure(model, k, &x)? + gaussian_draw(&mut rng, &r);
        states.push(x);
        measurements.push(z);
    }
    Ok(Trajectory {
        states,
        measurements,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar map with no noise anywhere.
    struct Deterministic {
        prior: GaussianPrior,
    }

    impl SystemModel for Deterministic {
        fn state_dim(&self) -> usize {
            1
        }
        fn meas_dim(&self) -> usize {
            1
        }
        fn transition_map(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.map(|v| 0.9 * v + (k as f64).sin())
        }
        fn measurement_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.map(|v| v * v)
        }
        fn process_cov(&self, _k: usize) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn meas_cov(&self, _k: usize) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn prior(&self) -> &GaussianPrior {
            &self.prior
        }
    }

    #[test]
    fn noise_free_trajectory_follows_the_maps() {
        let model = Deterministic {
            prior: GaussianPrior::point_mass(DVector::from_element(1, 2.0)),
        };
        let traj = sample_trajectory(&model, 20, 7).unwrap();
        assert_eq!(traj.states[0][0], 2.0);
        for k in 1..=20 {
            assert_eq!(
                traj.states[k],
                transition(&model, k, &traj.states[k - 1]).unwrap()
            );
            assert_eq!(
                *traj.measurement(k),
                measure(&model, k, &traj.states[k]).unwrap()
            );
        }
    }

    #[test]
    fn fd_fallback_used_without_analytic_derivatives() {
        let model = Deterministic {
            prior: GaussianPrior::point_mass(DVector::from_element(1, 0.0)),
        };
        let x = DVector::from_element(1, 1.5);
        let jac = measurement_jacobian(&model, 1, &x).unwrap();
        assert!((jac[(0, 0)] - 3.0).abs() < 1e-6);
        let hess = measurement_hessians(&model, 1, &x).unwrap();
        assert!((hess[0][(0, 0)] - 2.0).abs() < 1e-5);
        let fj = transition_jacobian(&model, 3, &x).unwrap();
        assert!((fj[(0, 0)] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
        let a = sample_trajectory(&model, 50, 42).unwrap();
        let b = sample_trajectory(&model, 50, 42).unwrap();
        let c = sample_trajectory(&model, 50, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        assert_eq!(a.states.len(), 51);
        assert_eq!(a.measurements.len(), 50);
    }

    #[test]
    fn zero_horizon_rejected() {
        let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
        assert!(sample_trajectory(&model, 0, 1).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
        let bad = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            transition(&model, 1, &bad),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            measure(&model, 1, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn prior_validation() {
        assert!(GaussianPrior::scalar(0.0, 0.0).is_err());
        assert!(GaussianPrior::scalar(0.0, -1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(GaussianPrior::new(DVector::zeros(2), asym).is_err());
        assert!(GaussianPrior::new(DVector::zeros(2), DMatrix::identity(3, 3)).is_err());
    }
}

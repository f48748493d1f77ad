//! Univariate nonlinear growth model:
//!
//! ```text
//! x_k = 0.5 x_{k-1} + 25 x_{k-1} / (1 + x_{k-1}^2) + 8 cos(1.2 (k - 1)) + w_k
//! z_k = x_k^2 / 20 + v_k
//! ```

use nalgebra::{DMatrix, DVector};

use super::{GaussianPrior, SystemModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Ungm {
    process_var: f64,
    meas_var: f64,
    prior: GaussianPrior,
}

/// Builds the growth model with scalar noise variances and a scalar prior.
pub fn ungm_model(process_var: f64, meas_var: f64, prior: GaussianPrior) -> Result<Ungm> {
    if !(process_var > 0.0 && process_var.is_finite()) || !(meas_var > 0.0 && meas_var.is_finite())
    {
        return Err(Error::invalid(format!(
            "UNGM variances must be positive, got {process_var} and {meas_var}"
        )));
    }
    if prior.dim() != 1 {
        return Err(Error::invalid("UNGM prior must be scalar"));
    }
    Ok(Ungm {
        process_var,
        meas_var,
        prior,
    })
}

impl Ungm {
    pub fn process_var(&self) -> f64 {
        self.process_var
    }

    pub fn meas_var(&self) -> f64 {
        self.meas_var
    }

    pub fn drift(k: usize) -> f64 {
        8.0 * (1.2 * (k as f64 - 1.0)).cos()
    }

    pub fn transition_value(k: usize, x: f64) -> f64 {
        0.5 * x + 25.0 * x / (1.0 + x * x) + Self::drift(k)
    }

    pub fn transition_derivative(x: f64) -> f64 {
        let d = 1.0 + x * x;
        0.5 + 25.0 * (1.0 - x * x) / (d * d)
    }

    pub fn transition_second_derivative(x: f64) -> f64 {
        let d = 1.0 + x * x;
        25.0 * (2.0 * x * x * x - 6.0 * x) / (d * d * d)
    }

    pub fn transition_third_derivative(x: f64) -> f64 {
        let d = 1.0 + x * x;
        let x2 = x * x;
        25.0 * (-6.0 * x2 * x2 + 36.0 * x2 - 6.0) / (d * d * d * d)
    }

    pub fn measurement_value(x: f64) -> f64 {
        x * x / 20.0
    }

    pub fn measurement_derivative(x: f64) -> f64 {
        x / 10.0
    }

    pub const MEASUREMENT_SECOND_DERIVATIVE: f64 = 0.1;
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

impl SystemModel for Ungm {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition_map(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, Self::transition_value(k, x[0]))
    }

    fn measurement_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, Self::measurement_value(x[0]))
    }

    fn process_cov(&self, _k: usize) -> DMatrix<f64> {
        scalar(self.process_var)
    }

    fn meas_cov(&self, _k: usize) -> DMatrix<f64> {
        scalar(self.meas_var)
    }

    fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    fn analytic_transition_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(scalar(Self::transition_derivative(x[0])))
    }

    fn analytic_transition_hessians(
        &self,
        _k: usize,
        x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![scalar(Self::transition_second_derivative(x[0]))])
    }

    fn analytic_measurement_jacobian(&self, _k: usize, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(scalar(Self::measurement_derivative(x[0])))
    }

    fn analytic_measurement_hessians(
        &self,
        _k: usize,
        _x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![scalar(Self::MEASUREMENT_SECOND_DERIVATIVE)])
    }
}

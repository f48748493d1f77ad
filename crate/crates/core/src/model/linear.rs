use nalgebra::{Cholesky, DMatrix, DVector};

use super::{GaussianPrior, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, symmetrize};

/// Time-invariant linear-Gaussian model `x_k = A x_{k-1} + w`, `z_k = H x_k + v`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    prior: GaussianPrior,
}

fn check_spd(m: &DMatrix<f64>, dim: usize, name: &str) -> Result<DMatrix<f64>> {
    if m.shape() != (dim, dim) {
        return Err(Error::invalid(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-12) || Cholesky::new(symmetrize(m)).is_none() {
        return Err(Error::invalid(format!(
            "{name} must be symmetric positive definite"
        )));
    }
    Ok(symmetrize(m))
}

pub fn linear_gaussian_model(
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    prior: GaussianPrior,
) -> Result<LinearGaussian> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::invalid(format!(
            "A must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let m = h.nrows();
    if m == 0 || h.ncols() != n {
        return Err(Error::invalid(format!(
            "H must be m x {n}, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if prior.dim() != n {
        return Err(Error::invalid(format!(
            "prior has dimension {} but A is {n}x{n}",
            prior.dim()
        )));
    }
    let q = check_spd(&q, n, "Q")?;
    let r = check_spd(&r, m, "R")?;
    Ok(LinearGaussian { a, h, q, r, prior })
}

impl LinearGaussian {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl SystemModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    fn transition_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn measurement_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x
    }

    fn process_cov(&self, _k: usize) -> DMatrix<f64> {
        self.q.clone()
    }

    fn meas_cov(&self, _k: usize) -> DMatrix<f64> {
        self.r.clone()
    }

    fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    fn analytic_transition_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn analytic_transition_hessians(
        &self,
        _k: usize,
        _x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        let n = self.state_dim();
        Some(vec![DMatrix::zeros(n, n); n])
    }

    fn analytic_measurement_jacobian(&self, _k: usize, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.h.clone())
    }

    fn analytic_measurement_hessians(
        &self,
        _k: usize,
        _x: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        let n = self.state_dim();
        Some(vec![DMatrix::zeros(n, n); self.meas_dim()])
    }
}

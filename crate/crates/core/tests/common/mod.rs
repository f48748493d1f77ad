#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcrlb::model::{linear_gaussian_model, LinearGaussian};
use pcrlb::{GaussianPrior, SystemModel};

/// Textbook Kalman filter in covariance form, written without any of the
/// library's linear-algebra helpers.
pub struct Kalman {
    pub predicted_mean: Vec<DVector<f64>>,
    pub predicted_cov: Vec<DMatrix<f64>>,
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
}

pub fn kalman(model: &LinearGaussian, measurements: &[DVector<f64>]) -> Kalman {
    let (a, h, q, r) = (model.a(), model.h(), model.q(), model.r());
    let mut x = model.prior().mean().clone();
    let mut p = model.prior().cov().clone();
    let mut out = Kalman {
        predicted_mean: vec![x.clone()],
        predicted_cov: vec![p.clone()],
        mean: vec![x.clone()],
        cov: vec![p.clone()],
    };
    for z in measurements {
        let xp = a * &x;
        let pp = a * &p * a.transpose() + q;
        let s = h * &pp * h.transpose() + r;
        let gain = &pp * h.transpose() * s.try_inverse().expect("innovation covariance invertible");
        x = &xp + &gain * (z - h * &xp);
        let i = DMatrix::<f64>::identity(x.len(), x.len());
        // Joseph form keeps the oracle symmetric.
        let ikh = &i - &gain * h;
        p = &ikh * &pp * ikh.transpose() + &gain * r * gain.transpose();
        out.predicted_mean.push(xp);
        out.predicted_cov.push(pp);
        out.mean.push(x.clone());
        out.cov.push(p.clone());
    }
    out
}

pub fn scalar_linear(a: f64, h: f64, q: f64, r: f64, p0: f64) -> LinearGaussian {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    linear_gaussian_model(
        s(a),
        s(h),
        s(q),
        s(r),
        GaussianPrior::scalar(0.0, p0).unwrap(),
    )
    .unwrap()
}

pub fn two_state_linear() -> LinearGaussian {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.9]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let q = DMatrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.2]);
    let r = DMatrix::from_element(1, 1, 0.5);
    let prior = GaussianPrior::new(
        DVector::from_vec(vec![1.0, -1.0]),
        DMatrix::identity(2, 2) * 2.0,
    )
    .unwrap();
    linear_gaussian_model(a, h, q, r, prior).unwrap()
}

/// `max|a - b| / max(1, max|b|)`.
pub fn scaled_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

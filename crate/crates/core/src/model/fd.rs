//! Central finite differences, used whenever a model does not provide
//! analytic derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative step sizes for the central-difference fallbacks. The actual
/// step along coordinate `i` is `scale * max(1, |x_i|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub jacobian_scale: f64,
    pub hessian_scale: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            jacobian_scale: f64::EPSILON.cbrt(),
            hessian_scale: f64::EPSILON.powf(0.25),
        }
    }
}

impl StepPolicy {
    pub fn jacobian_step(&self, xi: f64) -> f64 {
        self.jacobian_scale * xi.abs().max(1.0)
    }

    pub fn hessian_step(&self, xi: f64) -> f64 {
        self.hessian_scale * xi.abs().max(1.0)
    }
}

fn eval_checked<F>(map: &F, x: &DVector<f64>, expected: Option<usize>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y = map(x);
    if let Some(len) = expected {
        if y.len() != len {
            return Err(Error::invalid(format!(
                "finite difference: map output changed length ({} vs {len})",
                y.len()
            )));
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "finite-difference evaluation".into(),
            indices: vec![(i, 0)],
        });
    }
    Ok(y)
}

/// Central-difference Jacobian `J[(i, j)] = d map_i / d x_j`.
pub fn fd_jacobian<F>(map: F, x: &DVector<f64>, policy: &StepPolicy) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y0 = eval_checked(&map, x, None)?;
    let m = y0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        let h = policy.jacobian_step(x[j]);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        // Use the representable step, not the nominal one.
        let width = xp[j] - xm[j];
        let fp = eval_checked(&map, &xp, Some(m))?;
        let fm = eval_checked(&map, &xm, Some(m))?;
        jac.set_column(j, &((fp - fm) / width));
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// Central-difference Hessians, one symmetric `n x n` matrix per output
/// component of `map`.
pub fn fd_hessian<F>(map: F, x: &DVector<f64>, policy: &StepPolicy) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let y0 = eval_checked(&map, x, None)?;
    let m = y0.len();
    let n = x.len();
    let steps: Vec<f64> = (0..n)
        .map(|j| {
            let h = policy.hessian_step(x[j]);
            (x[j] + h) - x[j]
        })
        .collect();
    let shifted = |moves: &[(usize, f64)]| -> Result<DVector<f64>> {
        let mut xs = x.clone();
        for &(j, d) in moves {
            xs[j] += d;
        }
        eval_checked(&map, &xs, Some(m))
    };

    let mut hess = vec![DMatrix::zeros(n, n); m];
    for a in 0..n {
        let ha = steps[a];
        let fp = shifted(&[(a, ha)])?;
        let fm = shifted(&[(a, -ha)])?;
        let diag = (fp - &y0 * 2.0 + fm) / (ha * ha);
        for (i, h) in hess.iter_mut().enumerate() {
            h[(a, a)] = diag[i];
        }
        for b in (a + 1)..n {
            let hb = steps[b];
            let fpp = shifted(&[(a, ha), (b, hb)])?;
            let fpm = shifted(&[(a, ha), (b, -hb)])?;
            let fmp = shifted(&[(a, -ha), (b, hb)])?;
            let fmm = shifted(&[(a, -ha), (b, -hb)])?;
            let cross = (fpp - fpm - fmp + fmm) / (4.0 * ha * hb);
            for (i, h) in hess.iter_mut().enumerate() {
                h[(a, b)] = cross[i];
                h[(b, a)] = cross[i];
            }
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn square_derivative() {
        let jac = fd_jacobian(|x| x.map(|v| v * v), &v(&[1.0]), &StepPolicy::default()).unwrap();
        assert!((jac[(0, 0)] - 2.0).abs() < 1e-6);
        let hess = fd_hessian(|x| x.map(|v| v * v), &v(&[1.0]), &StepPolicy::default()).unwrap();
        assert!((hess[0][(0, 0)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn affine_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.5]);
        let b = v(&[0.25, -4.0]);
        let map = |x: &DVector<f64>| &a * x + &b;
        let x = v(&[0.3, -1.2, 2.0]);
        let jac = fd_jacobian(map, &x, &StepPolicy::default()).unwrap();
        assert!((jac - &a).amax() < 1e-9);
        let hess = fd_hessian(map, &x, &StepPolicy::default()).unwrap();
        assert_eq!(hess.len(), 2);
        for h in hess {
            assert!(h.amax() < 1e-6);
        }
    }

    #[test]
    fn mixed_partial() {
        // f(x, y) = x^2 y, Hessian [[2y, 2x], [2x, 0]].
        let map = |x: &DVector<f64>| v(&[x[0] * x[0] * x[1]]);
        let hess = fd_hessian(map, &v(&[1.5, -0.5]), &StepPolicy::default()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, 3.0, 0.0]);
        assert!((&hess[0] - expected).amax() < 1e-6);
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let map = |x: &DVector<f64>| x.map(|v| if v > 1.0 { f64::NAN } else { v });
        let r = fd_jacobian(map, &v(&[1.0]), &StepPolicy::default());
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}

//! Inversion identities used to split and recombine information matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, condition_number, inverse, is_symmetric, symmetrize};

/// Above this condition number `Pi` is treated as singular and the direct
/// inverse is used instead of the split formulas.
pub const PI_CONDITION_LIMIT: f64 = 1e12;

/// Result of an identity that may fall back to a direct computation.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaOutput {
    pub value: DMatrix<f64>,
    /// True when the split formula could not be used.
    pub fallback: bool,
}

/// Inverse of a symmetric positive definite matrix. Cholesky failures are
/// retried with trace-scaled jitter from 1e-12 up to 1e-6.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::invalid(format!(
            "spd_inverse: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-8) {
        return Err(Error::invalid("spd_inverse: matrix is not symmetric"));
    }
    let chol = cholesky_jittered(&symmetrize(m), "spd_inverse")?;
    Ok(symmetrize(&chol.inverse()))
}

/// `a^-1 - (a b^-1 a + a)^-1`, which equals `(a + b)^-1`.
pub fn inv_lemma_split(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::invalid("inv_lemma_split: shape mismatch"));
    }
    let a_inv = inverse(a, "inv_lemma_split: a")?;
    let b_inv = inverse(b, "inv_lemma_split: b")?;
    let bracket = a * b_inv * a + a;
    Ok(a_inv - inverse(&bracket, "inv_lemma_split: a b^-1 a + a")?)
}

fn pi_usable(pi: &DMatrix<f64>) -> bool {
    pi.amax() > 0.0 && condition_number(pi) <= PI_CONDITION_LIMIT
}

fn split_inverse(theta: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = theta.nrows();
    let theta_inv = inverse(theta, "theta")?;
    let pi_inv = inverse(pi, "pi")?;
    let lead = inverse(
        &(pi_inv * theta + DMatrix::identity(n, n)),
        "pi^-1 theta + I",
    )?;
    Ok(&theta_inv - lead * &theta_inv)
}

/// Bound `J^-1` from the split `J = theta + pi`, using
/// `theta^-1 - (pi^-1 theta + I)^-1 theta^-1`. Falls back to `(theta + pi)^-1`
/// when `pi` is singular or badly conditioned.
pub fn pcrlb_from_theta_pi(theta: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<LemmaOutput> {
    if theta.shape() != pi.shape() || !theta.is_square() {
        return Err(Error::invalid("pcrlb_from_theta_pi: shape mismatch"));
    }
    if pi_usable(pi) {
        if let Ok(value) = split_inverse(theta, pi) {
            return Ok(LemmaOutput {
                value,
                fallback: false,
            });
        }
    }
    Ok(LemmaOutput {
        value: inverse(&(theta + pi), "theta + pi")?,
        fallback: true,
    })
}

/// Gap between the mean-only bound `J*^-1` and the mean+covariance bound,
/// `(pi^-1 J* + I)^-1 J*^-1`. Falls back to `J*^-1 - (J* + pi)^-1` when `pi`
/// is singular or badly conditioned.
pub fn bound_difference(j_star: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<LemmaOutput> {
    if j_star.shape() != pi.shape() || !j_star.is_square() {
        return Err(Error::invalid("bound_difference: shape mismatch"));
    }
    let n = j_star.nrows();
    let j_star_inv = inverse(j_star, "J*")?;
    if pi_usable(pi) {
        let attempt = inverse(pi, "pi").and_then(|pi_inv| {
            inverse(&(pi_inv * j_star + DMatrix::identity(n, n)), "pi^-1 J* + I")
                .map(|lead| lead * &j_star_inv)
        });
        if let Ok(value) = attempt {
            return Ok(LemmaOutput {
                value,
                fallback: false,
            });
        }
    }
    let value = &j_star_inv - inverse(&(j_star + pi), "J* + pi")?;
    Ok(LemmaOutput {
        value,
        fallback: true,
    })
}

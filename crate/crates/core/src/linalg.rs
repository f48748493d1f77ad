//! Small dense helpers shared by the filters and bound engines.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Tolerance below which a negative eigenvalue is treated as rounding noise.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= rel_tol * scale
}

pub fn check_finite(m: &DMatrix<f64>, context: &str) -> Result<()> {
    let indices: Vec<(usize, usize)> = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| !m[(i, j)].is_finite())
        .collect();
    if indices.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
            indices,
        })
    }
}

fn mean_diagonal(m: &DMatrix<f64>) -> f64 {
    m.trace() / m.nrows().max(1) as f64
}

/// Symmetrizes `m` and clamps eigenvalues in `[-1e-10 * scale, 0)` to zero.
/// Anything more negative is reported as an indefinite matrix.
pub fn clamp_psd(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    check_finite(m, context)?;
    let sym = symmetrize(m);
    if Cholesky::new(sym.clone()).is_some() {
        return Ok(sym);
    }
    let eig = sym.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::numeric(
            context,
            format!("matrix is indefinite, min eigenvalue {min:e}"),
        ));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// Cholesky factorization that retries with `eps * tr(m)/n * I` added,
/// `eps` escalating from 1e-12 to 1e-6 by decades.
pub fn cholesky_jittered(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    check_finite(m, context)?;
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let scale = mean_diagonal(m);
    if scale > 0.0 {
        let n = m.nrows();
        for exp in (6..=12).rev() {
            let eps = 10f64.powi(-exp);
            let jittered = m + DMatrix::identity(n, n) * (eps * scale);
            if let Some(c) = Cholesky::new(jittered) {
                return Ok(c);
            }
        }
    }
    let eig = symmetrize(m).symmetric_eigen();
    Err(Error::numeric(
        context,
        format!(
            "Cholesky failed after jitter up to 1e-6; eigenvalues in [{:e}, {:e}]",
            eig.eigenvalues.min(),
            eig.eigenvalues.max()
        ),
    ))
}

/// General (LU) inverse with a finiteness check on the result.
pub fn inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "{context}: cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, context)?;
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric(context, "matrix is singular"))?;
    check_finite(&inv, context)?;
    Ok(inv)
}

/// 2-norm condition number; infinite for singular or empty input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Lower factor `L` with `L L' = m` for a PSD matrix; zero directions allowed.
pub fn psd_factor(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    check_finite(m, context)?;
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c.l());
    }
    let sym = clamp_psd(m, context)?;
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Makes a filter covariance usable downstream: symmetric, and PD after
/// adding `1e-10 * scale * I` (escalated by decades if needed).
pub fn regularize_cov(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = clamp_psd(m, context)?;
    if Cholesky::new(sym.clone()).is_some() {
        return Ok(sym);
    }
    let n = sym.nrows();
    let trace_scale = mean_diagonal(&sym);
    let scale = if trace_scale > 0.0 { trace_scale } else { 1.0 };
    let mut eps = 1e-10;
    while eps <= 1e-4 {
        let candidate = &sym + DMatrix::identity(n, n) * (eps * scale);
        if Cholesky::new(candidate.clone()).is_some() {
            return Ok(candidate);
        }
        eps *= 10.0;
    }
    Err(Error::numeric(
        context,
        "covariance could not be regularized",
    ))
}

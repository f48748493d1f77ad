//! Self-contained consistency checks: Kalman equivalence on linear models,
//! the decomposition identities on the growth model and the inversion
//! identities on random SPD pairs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fim::{
    decompose_terms, fim_recursion_step, fim_via_decomposition, initial_fim, inv_lemma_split,
    mean_cov_terms, mean_only_terms, pcrlb_from_theta_pi, spd_inverse, true_fim_terms_mc,
    FimTriple,
};
use crate::linalg::symmetrize;
use crate::model::{linear_gaussian_model, ungm_model, GaussianPrior, LinearGaussian, SystemModel};
use crate::moments::GaussianBelief;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Largest error seen.
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: worst error {:.3e} (tolerance {:.0e}, {} cases)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.cases
        )
    }
}

/// `max|a - b| / max(1, max|b|)`; infinite on shape mismatch or NaN.
pub fn scaled_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let e = (a - b).amax() / b.amax().max(1.0);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// `max|a - b| / max(max|a|, max|b|)`, zero when both vanish.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let scale = a.amax().max(b.amax());
    let diff = (a - b).amax();
    match (diff, scale) {
        (d, _) if d.is_nan() => f64::INFINITY,
        (d, 0.0) => d,
        (d, s) => d / s,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// SPD matrix with eigenvalues drawn from `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let basis = random_matrix(rng, n, n).qr().q();
    let eig = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    symmetrize(&(&basis * DMatrix::from_diagonal(&eig) * basis.transpose()))
}

/// Linear-Gaussian model of dimension `n` whose transition has spectral norm
/// in `[0.3, 0.95]`, with `1 <= m <= n` measurements.
pub fn random_stable_linear(rng: &mut ChaCha8Rng, n: usize) -> Result<LinearGaussian> {
    let raw = random_matrix(rng, n, n);
    let norm = raw.clone().singular_values().max();
    let a = raw * (rng.random_range(0.3..0.95) / norm);
    let m = rng.random_range(1..=n);
    let h = random_matrix(rng, m, n) * 2.0;
    let q = random_spd(rng, n, 0.1, 2.0);
    let r = random_spd(rng, m, 0.1, 2.0);
    let prior = GaussianPrior::new(DVector::zeros(n), random_spd(rng, n, 0.5, 5.0))?;
    linear_gaussian_model(a, h, q, r, prior)
}

/// Kalman posterior covariances `P_1..P_T`; they do not depend on the data.
pub fn kalman_posterior_covs(model: &LinearGaussian, horizon: usize) -> Result<Vec<DMatrix<f64>>> {
    let (a, h, q, r) = (model.a(), model.h(), model.q(), model.r());
    let mut p = model.prior().cov().clone();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let pred = symmetrize(&(a * &p * a.transpose() + q));
        let s = h * &pred * h.transpose() + r;
        let gain = &pred * h.transpose() * spd_inverse(&symmetrize(&s))?;
        p = symmetrize(&(&pred - &gain * h * &pred));
        out.push(p.clone());
    }
    Ok(out)
}

fn recursion_bounds(
    model: &LinearGaussian,
    horizon: usize,
    mut terms: impl FnMut(usize) -> Result<FimTriple>,
) -> Result<Vec<DMatrix<f64>>> {
    let mut j = initial_fim(model.prior())?;
    (0..horizon)
        .map(|k| {
            j = fim_recursion_step(&j, &terms(k)?)?;
            spd_inverse(&j)
        })
        .collect()
}

fn worst_over(bounds: &[DMatrix<f64>], kalman: &[DMatrix<f64>]) -> f64 {
    bounds
        .iter()
        .zip(kalman)
        .map(|(b, p)| scaled_error(b, p))
        .fold(0.0, f64::max)
}

fn outcome(
    name: &str,
    errors: impl IntoIterator<Item = Result<f64>>,
    tolerance: f64,
) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for e in errors {
        cases += 1;
        worst = worst.max(e.unwrap_or(f64::INFINITY));
    }
    CheckOutcome {
        name: name.to_string(),
        passed: worst <= tolerance,
        worst,
        tolerance,
        cases,
    }
}

/// Bound engines against the Kalman covariance on random linear models.
/// The mean+covariance engine is fed point-mass beliefs at zero, where its
/// terms reduce to the point-estimate ones.
pub fn kalman_checks(seed: u64, models: usize, horizon: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(models);
    for i in 0..models {
        cases.push(random_stable_linear(&mut rng, 1 + i % 2)?);
    }
    let tol = 1e-8;
    let zero_belief = |n: usize| GaussianBelief {
        mean: DVector::zeros(n),
        cov: DMatrix::zeros(n, n),
    };
    let engine = |f: &dyn Fn(&LinearGaussian, usize) -> Result<FimTriple>| {
        cases
            .iter()
            .map(|m| {
                let kalman = kalman_posterior_covs(m, horizon)?;
                Ok(worst_over(
                    &recursion_bounds(m, horizon, |k| f(m, k))?,
                    &kalman,
                ))
            })
            .collect::<Vec<_>>()
    };
    let x0 = |m: &LinearGaussian| DVector::zeros(m.state_dim());
    Ok(vec![
        outcome(
            "true-state bound equals Kalman covariance",
            engine(&|m, k| true_fim_terms_mc(m, k, &[x0(m)], &[x0(m)])),
            tol,
        ),
        outcome(
            "mean-only bound equals Kalman covariance",
            engine(&|m, k| mean_only_terms(m, k, &x0(m), &x0(m))),
            tol,
        ),
        outcome(
            "mean+cov bound at zero belief covariance equals Kalman covariance",
            engine(&|m, k| {
                let b = zero_belief(m.state_dim());
                mean_cov_terms(m, k, &b, &b)
            }),
            tol,
        ),
    ])
}

/// Split blocks against the direct terms, and the split recursion against
/// the plain one, on random growth-model beliefs.
pub fn decomposition_checks(seed: u64, cases: usize) -> Result<Vec<CheckOutcome>> {
    let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms_err = Vec::with_capacity(cases);
    let mut path_err = Vec::with_capacity(cases);
    for _ in 0..cases {
        let k = rng.random_range(0..50);
        let sb =
            GaussianBelief::scalar(rng.random_range(-20.0..20.0), rng.random_range(0.05..20.0))?;
        let mb =
            GaussianBelief::scalar(rng.random_range(-20.0..20.0), rng.random_range(0.05..20.0))?;
        let j = DMatrix::from_element(1, 1, rng.random_range(0.02..5.0));
        let direct = mean_cov_terms(&model, k, &sb, &mb);
        let dec = decompose_terms(&model, k, &sb, &mb);
        let (direct, dec) = match (direct, dec) {
            (Ok(d), Ok(s)) => (d, s),
            (Err(e), _) | (_, Err(e)) => {
                terms_err.push(Err(e));
                continue;
            }
        };
        terms_err.push(dec.full_triple().map(|sum| {
            relative_error(&sum.d11, &direct.d11)
                .max(relative_error(&sum.d12, &direct.d12))
                .max(relative_error(&sum.d22, &direct.d22))
        }));
        path_err.push(fim_via_decomposition(&j, &dec).and_then(|split| {
            Ok(relative_error(
                &split.j_next,
                &fim_recursion_step(&j, &direct)?,
            ))
        }));
    }
    Ok(vec![
        outcome("split terms sum to the mean+cov terms", terms_err, 1e-8),
        outcome("split recursion equals plain recursion", path_err, 1e-8),
    ])
}

/// Inversion identities against dense inverses on random SPD pairs.
pub fn lemma_checks(seed: u64, cases: usize) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Vec::with_capacity(cases);
    let mut recombine = Vec::with_capacity(cases);
    for _ in 0..cases {
        let n = rng.random_range(1..=4);
        let a = random_spd(&mut rng, n, 0.1, 10.0);
        let b = random_spd(&mut rng, n, 0.1, 10.0);
        let dense = match spd_inverse(&(&a + &b)) {
            Ok(d) => d,
            Err(e) => {
                split.push(Err(e));
                continue;
            }
        };
        split.push(inv_lemma_split(&a, &b).map(|v| scaled_error(&v, &dense)));
        recombine.push(pcrlb_from_theta_pi(&a, &b).map(|v| scaled_error(&v.value, &dense)));
    }
    vec![
        outcome("a^-1 - (a b^-1 a + a)^-1 equals (a + b)^-1", split, 1e-10),
        outcome("split bound equals (theta + pi)^-1", recombine, 1e-10),
    ]
}

/// Every check with its default size.
pub fn selftest(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut all = kalman_checks(seed, 10, 50)?;
    all.extend(decomposition_checks(seed.wrapping_add(1), 100)?);
    all.extend(lemma_checks(seed.wrapping_add(2), 100));
    Ok(all)
}

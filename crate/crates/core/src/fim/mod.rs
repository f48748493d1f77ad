//! Recursive posterior Fisher information and its approximations.
//!
//! The information matrix obeys
//!
//! ```text
//! J_{k+1} = D22_k - D12_k' (J_k + D11_k)^-1 D12_k,    J_0 = P_0^-1
//! ```
//!
//! Three ways of producing the `D` terms live here: sample averages over
//! true states ([`true_fim_terms_mc`]), model derivatives at a point
//! estimate ([`mean_only_terms`]), and second-order Gaussian moments of a
//! belief ([`mean_cov_terms`]). [`decompose_terms`] splits the latter into the
//! point-estimate part plus a correction, which yields the analytic gap
//! between the two approximate bounds.
//!
//! Term functions take the step index `k` of the transition `x_k -> x_{k+1}`
//! and evaluate the model at time `k + 1`.

mod decompose;
mod lemma;
mod terms;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::EstimatorKind;
use crate::linalg::{check_finite, symmetrize};
use crate::model::GaussianPrior;

pub(crate) use decompose::decompose_pieces;
pub use decompose::{
    decompose_terms, fim_via_decomposition, DecomposedFim, DecompositionStep, SINGULAR_SPREAD_RATIO,
};
pub use lemma::{
    bound_difference, inv_lemma_split, pcrlb_from_theta_pi, spd_inverse, LemmaOutput,
    PI_CONDITION_LIMIT,
};
pub(crate) use terms::MeanCovPieces;
pub use terms::{mean_cov_terms, mean_only_terms, true_fim_terms_mc};

/// `D11`, `D12` and `D22` of one recursion step; `D21 = D12'`.
#[derive(Debug, Clone, PartialEq)]
pub struct FimTriple {
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

impl FimTriple {
    /// Symmetrizes `d11` and `d22`.
    pub fn new(d11: DMatrix<f64>, d12: DMatrix<f64>, d22: DMatrix<f64>) -> Result<Self> {
        let n = d11.nrows();
        if d11.shape() != (n, n) || d12.shape() != (n, n) || d22.shape() != (n, n) {
            return Err(Error::invalid("FIM terms must all be n x n"));
        }
        check_finite(&d11, "D11")?;
        check_finite(&d12, "D12")?;
        check_finite(&d22, "D22")?;
        Ok(Self {
            d11: symmetrize(&d11),
            d12,
            d22: symmetrize(&d22),
        })
    }

    pub fn dim(&self) -> usize {
        self.d11.nrows()
    }
}

/// `J_0 = P_0^-1` for a Gaussian prior.
pub fn initial_fim(prior: &GaussianPrior) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(prior.cov().clone())
        .ok_or_else(|| Error::numeric("initial FIM", "prior covariance is singular"))?;
    Ok(symmetrize(&chol.inverse()))
}

/// One step of the information recursion.
pub fn fim_recursion_step(j: &DMatrix<f64>, terms: &FimTriple) -> Result<DMatrix<f64>> {
    if j.shape() != terms.d11.shape() {
        return Err(Error::invalid(
            "fim_recursion_step: J and D terms differ in size",
        ));
    }
    let lu = (j + &terms.d11).lu();
    let solved = lu
        .solve(&terms.d12)
        .ok_or_else(|| Error::numeric("FIM recursion", "J + D11 is singular"))?;
    let next = symmetrize(&(&terms.d22 - terms.d12.transpose() * solved));
    check_finite(&next, "FIM recursion")?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    True,
    MeanOnly,
    MeanCov,
    GapAnalytic,
    GapDirect,
}

impl BoundMethod {
    pub fn label(self) -> &'static str {
        match self {
            BoundMethod::True => "true",
            BoundMethod::MeanOnly => "mean_only",
            BoundMethod::MeanCov => "mean_cov",
            BoundMethod::GapAnalytic => "gap_analytic",
            BoundMethod::GapDirect => "gap_direct",
        }
    }
}

impl fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Time series of bound matrices for times `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSeries {
    pub method: BoundMethod,
    /// `None` for the true bound, which does not depend on an estimator.
    pub estimator: Option<EstimatorKind>,
    pub values: Vec<DMatrix<f64>>,
}

impl BoundSeries {
    pub fn new(
        method: BoundMethod,
        estimator: Option<EstimatorKind>,
        values: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            check_finite(v, &format!("{method} bound at k={}", i + 1))?;
        }
        Ok(Self {
            method,
            estimator,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Trace of each entry; equals the value itself for scalar models.
    pub fn traces(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.trace()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn initial_fim_examples() {
        assert_eq!(
            initial_fim(&GaussianPrior::scalar(0.0, 1.0).unwrap()).unwrap(),
            s(1.0)
        );
        assert!(
            (initial_fim(&GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap()[(0, 0)] - 0.05).abs()
                < 1e-16
        );
        let p = GaussianPrior::new(nalgebra::DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(initial_fim(&p).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn recursion_scalar_example() {
        let t = FimTriple::new(s(1.0), s(-1.0), s(2.0)).unwrap();
        assert!((fim_recursion_step(&s(1.0), &t).unwrap()[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn decoupled_recursion() {
        let d22 = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let t = FimTriple::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), d22.clone()).unwrap();
        assert_eq!(
            fim_recursion_step(&DMatrix::identity(2, 2), &t).unwrap(),
            d22
        );
    }

    #[test]
    fn singular_recursion_is_an_error() {
        let t = FimTriple::new(s(-1.0), s(1.0), s(1.0)).unwrap();
        assert!(matches!(
            fim_recursion_step(&s(1.0), &t),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn bound_series_rejects_non_finite() {
        assert!(BoundSeries::new(BoundMethod::True, None, vec![s(f64::NAN)]).is_err());
        let b = BoundSeries::new(
            BoundMethod::MeanOnly,
            Some(EstimatorKind::Pf),
            vec![s(0.5), s(2.0)],
        )
        .unwrap();
        assert_eq!(b.traces(), vec![0.5, 2.0]);
    }
}

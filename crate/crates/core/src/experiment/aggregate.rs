use nalgebra::{DMatrix, DVector};

use super::{AveragingMode, RunResult};
use crate::error::{Error, Result};
use crate::filters::EstimatorKind;
use crate::fim::{spd_inverse, PI_CONDITION_LIMIT};
use crate::linalg::symmetrize;

/// `sqrt(mean_r ||x_k^r - xhat_k^r||^2)` per step. `truths[r][k]` and
/// `estimates[r][k]` must line up across runs and steps.
pub fn rmse_series(
    truths: &[Vec<DVector<f64>>],
    estimates: &[Vec<DVector<f64>>],
) -> Result<Vec<f64>> {
    if truths.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "rmse: {} truth runs but {} estimate runs",
            truths.len(),
            estimates.len()
        )));
    }
    let Some(first) = truths.first() else {
        return Err(Error::invalid("rmse: no runs"));
    };
    let steps = first.len();
    let mut sums = vec![0.0; steps];
    for (r, (truth, est)) in truths.iter().zip(estimates).enumerate() {
        if truth.len() != steps || est.len() != steps {
            return Err(Error::invalid(format!(
                "rmse: run {r} has mismatched length"
            )));
        }
        for (k, (x, xh)) in truth.iter().zip(est).enumerate() {
            if x.len() != xh.len() {
                return Err(Error::invalid(format!(
                    "rmse: run {r}, step {k} has mismatched dimension"
                )));
            }
            sums[k] += (x - xh).norm_squared();
        }
    }
    let runs = truths.len() as f64;
    Ok(sums.into_iter().map(|s| (s / runs).sqrt()).collect())
}

fn mean_of<'a>(items: impl Iterator<Item = &'a DMatrix<f64>>, count: usize) -> DMatrix<f64> {
    let mut it = items;
    let first = it.next().expect("non-empty").clone();
    let sum = it.fold(first, |acc, m| acc + m);
    sum / count as f64
}

/// Combines per-run bound series (`J_k^-1`) into one series.
pub fn aggregate_bounds(
    per_run: &[Vec<DMatrix<f64>>],
    mode: AveragingMode,
) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = per_run.first() else {
        return Err(Error::invalid("aggregate_bounds: no runs"));
    };
    let steps = first.len();
    if per_run.iter().any(|s| s.len() != steps) {
        return Err(Error::invalid(
            "aggregate_bounds: runs have different lengths",
        ));
    }
    let runs = per_run.len();
    (0..steps)
        .map(|k| {
            let shape = per_run[0][k].shape();
            if per_run.iter().any(|s| s[k].shape() != shape) {
                return Err(Error::invalid(format!(
                    "aggregate_bounds: shape mismatch at step {}",
                    k + 1
                )));
            }
            match mode {
                AveragingMode::AverageBounds => {
                    Ok(symmetrize(&mean_of(per_run.iter().map(|s| &s[k]), runs)))
                }
                AveragingMode::AverageFim => {
                    let fims = per_run
                        .iter()
                        .map(|s| spd_inverse(&s[k]))
                        .collect::<Result<Vec<_>>>()?;
                    spd_inverse(&mean_of(fims.iter(), runs))
                }
            }
        })
        .collect()
}

/// Averaged analytic and direct gaps of one estimator, with per-step
/// diagnostics summed over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub estimator: EstimatorKind,
    pub analytic: Vec<DMatrix<f64>>,
    pub direct: Vec<DMatrix<f64>>,
    /// Runs whose direct gap has a negative eigenvalue, i.e. where the
    /// mean-only bound falls below the mean+covariance bound.
    pub violations: Vec<usize>,
    /// Runs where the analytic gap used direct subtraction.
    pub analytic_fallbacks: Vec<usize>,
    /// Runs where `Pi` came from the plain recursion.
    pub pi_fallbacks: Vec<usize>,
    /// Runs with `cond(Pi)` above the split-formula limit.
    pub ill_conditioned: Vec<usize>,
}

/// Gap series for `estimator` over the given runs.
pub fn gap_series(runs: &[RunResult], estimator: EstimatorKind) -> Result<GapSeries> {
    let traces = runs
        .iter()
        .map(|r| {
            r.estimator(estimator)
                .and_then(|e| e.mean_cov.as_ref())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "gap_series: run {} has no mean+cov trace for {estimator}",
                        r.run
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = traces.first() else {
        return Err(Error::invalid("gap_series: no runs"));
    };
    let steps = first.gap_analytic.len();
    if traces.iter().any(|t| t.gap_analytic.len() != steps) {
        return Err(Error::invalid("gap_series: runs have different lengths"));
    }
    let count = traces.len();
    let per_step = |f: &dyn Fn(&super::MeanCovTrace, usize) -> bool| -> Vec<usize> {
        (0..steps)
            .map(|k| traces.iter().filter(|t| f(t, k)).count())
            .collect()
    };
    Ok(GapSeries {
        estimator,
        analytic: (0..steps)
            .map(|k| mean_of(traces.iter().map(|t| &t.gap_analytic[k]), count))
            .collect(),
        direct: (0..steps)
            .map(|k| mean_of(traces.iter().map(|t| &t.gap_direct[k]), count))
            .collect(),
        violations: per_step(&|t, k| {
            symmetrize(&t.gap_direct[k]).symmetric_eigenvalues().min() < 0.0
        }),
        analytic_fallbacks: per_step(&|t, k| t.gap_fallback[k]),
        pi_fallbacks: per_step(&|t, k| t.pi_fallback[k]),
        ill_conditioned: per_step(&|t, k| t.pi_condition[k] > PI_CONDITION_LIMIT),
    })
}

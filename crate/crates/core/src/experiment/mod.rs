//! Monte Carlo harness: trajectories, filters, per-run bound recursions and
//! their aggregation.
//!
//! Every run is a pure function of the master seed and its index, and all
//! reductions happen in run-index order, so results do not depend on the
//! number of worker threads.

mod aggregate;
mod config;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{run_filter_tracked, EstimatorKind, FilterOutput};
use crate::fim::{
    bound_difference, decompose_pieces, fim_recursion_step, fim_via_decomposition, initial_fim,
    mean_only_terms, spd_inverse, true_fim_terms_mc, BoundMethod, BoundSeries, MeanCovPieces,
};
use crate::linalg::condition_number;
use crate::model::{sample_trajectory, SystemModel, Trajectory};
use crate::moments::GaussianBelief;

pub use aggregate::{aggregate_bounds, gap_series, rmse_series, GapSeries};
pub use config::{AveragingMode, BeliefSource, ExperimentConfig, ModelSpec, DEFAULT_SEED};

/// More than this fraction of failed runs fails the experiment.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`. Injective in `index` for a fixed
/// master (the mixer is a bijection).
pub fn derive_run_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Information matrices `J_1..J_T` and the bounds `J_k^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionTrace {
    pub fim: Vec<DMatrix<f64>>,
    pub bound: Vec<DMatrix<f64>>,
}

/// Mean+covariance recursion plus its split against the mean-only terms on
/// the same `J_k`. Entry `k - 1` belongs to time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCovTrace {
    pub fim: Vec<DMatrix<f64>>,
    pub bound: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
    pub pi: Vec<DMatrix<f64>>,
    /// `(Pi^-1 Theta + I)^-1 Theta^-1`.
    pub gap_analytic: Vec<DMatrix<f64>>,
    /// `Theta^-1 - J^-1`.
    pub gap_direct: Vec<DMatrix<f64>>,
    pub pi_condition: Vec<f64>,
    pub pi_fallback: Vec<bool>,
    pub gap_fallback: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub estimator: EstimatorKind,
    /// Index 0 is the prior, index `k` the output at time `k`.
    pub outputs: Vec<FilterOutput>,
    pub mean_only: Option<RecursionTrace>,
    pub mean_cov: Option<MeanCovTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub estimators: Vec<EstimatorRun>,
}

impl RunResult {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorRun> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub horizon: usize,
    pub runs_total: usize,
    pub failed: Vec<FailedRun>,
    pub rmse: BTreeMap<EstimatorKind, Vec<f64>>,
    pub bounds: Vec<BoundSeries>,
    pub gaps: BTreeMap<EstimatorKind, GapSeries>,
}

impl AggregateResult {
    pub fn runs_used(&self) -> usize {
        self.runs_total - self.failed.len()
    }

    pub fn bound(
        &self,
        method: BoundMethod,
        estimator: Option<EstimatorKind>,
    ) -> Option<&BoundSeries> {
        self.bounds
            .iter()
            .find(|b| b.method == method && b.estimator == estimator)
    }
}

fn pick(out: &FilterOutput, source: BeliefSource) -> &GaussianBelief {
    match source {
        BeliefSource::Posterior => &out.posterior,
        BeliefSource::Predicted => &out.predicted,
    }
}

fn recurse_mean_only(
    model: &dyn SystemModel,
    config: &ExperimentConfig,
    outputs: &[FilterOutput],
) -> std::result::Result<RecursionTrace, (usize, Error)> {
    let mut j = initial_fim(model.prior()).map_err(|e| (0, e))?;
    let mut trace = RecursionTrace {
        fim: Vec::with_capacity(outputs.len()),
        bound: Vec::with_capacity(outputs.len()),
    };
    for k in 0..outputs.len() - 1 {
        let step = || -> Result<DMatrix<f64>> {
            let state = pick(&outputs[k], config.state_belief);
            let meas = pick(&outputs[k + 1], config.measurement_belief);
            let terms = mean_only_terms(model, k, &state.mean, &meas.mean)?;
            fim_recursion_step(&j, &terms)
        };
        j = step().map_err(|e| (k + 1, e))?;
        trace.bound.push(spd_inverse(&j).map_err(|e| (k + 1, e))?);
        trace.fim.push(j.clone());
    }
    Ok(trace)
}

fn recurse_mean_cov(
    model: &dyn SystemModel,
    config: &ExperimentConfig,
    outputs: &[FilterOutput],
) -> std::result::Result<MeanCovTrace, (usize, Error)> {
    let steps = outputs.len() - 1;
    let mut j = initial_fim(model.prior()).map_err(|e| (0, e))?;
    let mut t = MeanCovTrace {
        fim: Vec::with_capacity(steps),
        bound: Vec::with_capacity(steps),
        theta: Vec::with_capacity(steps),
        pi: Vec::with_capacity(steps),
        gap_analytic: Vec::with_capacity(steps),
        gap_direct: Vec::with_capacity(steps),
        pi_condition: Vec::with_capacity(steps),
        pi_fallback: Vec::with_capacity(steps),
        gap_fallback: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let mut step = || -> Result<()> {
            let state = pick(&outputs[k], config.state_belief);
            let meas = pick(&outputs[k + 1], config.measurement_belief);
            let pieces = MeanCovPieces::gather(model, k, state, meas)?;
            let dec = decompose_pieces(&pieces)?;
            let split = fim_via_decomposition(&j, &dec)?;
            let next = fim_recursion_step(&j, &pieces.triple()?)?;
            let bound = spd_inverse(&next)?;
            let gap = bound_difference(&split.theta, &split.pi)?;
            t.gap_direct.push(spd_inverse(&split.theta)? - &bound);
            t.gap_analytic.push(gap.value);
            t.gap_fallback.push(gap.fallback);
            t.pi_condition.push(condition_number(&split.pi));
            t.pi_fallback.push(split.pi_fallback);
            t.theta.push(split.theta);
            t.pi.push(split.pi);
            t.bound.push(bound);
            t.fim.push(next.clone());
            j = next;
            Ok(())
        };
        step().map_err(|e| (k + 1, e))?;
    }
    Ok(t)
}

fn run_one(model: &dyn SystemModel, config: &ExperimentConfig, run: usize) -> Result<RunResult> {
    let seed = derive_run_seed(config.seed, run as u64);
    let trajectory = sample_trajectory(model, config.horizon, derive_run_seed(seed, 0))
        .map_err(|e| e.in_run(run, 0, "trajectory"))?;
    let filter_seed = derive_run_seed(seed, 1);
    let mut estimators = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let outputs = run_filter_tracked(model, &trajectory, kind, &config.filters, filter_seed)
            .map_err(|(k, e)| e.in_run(run, k, format!("{kind} filter")))?;
        let mean_only = if config.wants(BoundMethod::MeanOnly) {
            Some(
                recurse_mean_only(model, config, &outputs)
                    .map_err(|(k, e)| e.in_run(run, k, format!("{kind} mean-only bound")))?,
            )
        } else {
            None
        };
        let mean_cov = if config.wants(BoundMethod::MeanCov) {
            Some(
                recurse_mean_cov(model, config, &outputs)
                    .map_err(|(k, e)| e.in_run(run, k, format!("{kind} mean+cov bound")))?,
            )
        } else {
            None
        };
        estimators.push(EstimatorRun {
            estimator: kind,
            outputs,
            mean_only,
            mean_cov,
        });
    }
    Ok(RunResult {
        run,
        seed,
        trajectory,
        estimators,
    })
}

/// True bound from an ensemble of trajectories: the `D` terms at each step
/// are averaged over the ensemble before the recursion.
pub fn true_bound_series(
    model: &dyn SystemModel,
    trajectories: &[&Trajectory],
) -> Result<Vec<DMatrix<f64>>> {
    let Some(first) = trajectories.first() else {
        return Err(Error::invalid("true bound needs at least one trajectory"));
    };
    let horizon = first.horizon();
    if trajectories.iter().any(|t| t.horizon() != horizon) {
        return Err(Error::invalid("true bound: trajectories differ in length"));
    }
    let mut j = initial_fim(model.prior())?;
    let mut bounds = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let now: Vec<_> = trajectories.iter().map(|t| t.states[k].clone()).collect();
        let next: Vec<_> = trajectories
            .iter()
            .map(|t| t.states[k + 1].clone())
            .collect();
        let terms = true_fim_terms_mc(model, k, &now, &next)?;
        j = fim_recursion_step(&j, &terms)
            .map_err(|e| Error::numeric(format!("true bound, step {}", k + 1), e.to_string()))?;
        bounds.push(spd_inverse(&j)?);
    }
    Ok(bounds)
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the full experiment and aggregates it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    run_experiment_with_runs(config).map(|(agg, _)| agg)
}

/// [`run_experiment`], also returning the successful per-run results in
/// run-index order.
pub fn run_experiment_with_runs(
    config: &ExperimentConfig,
) -> Result<(AggregateResult, Vec<RunResult>)> {
    config.validate()?;
    let model = config.model.build()?;
    let model: &dyn SystemModel = model.as_ref();
    let outcomes: Vec<Result<RunResult>> = in_pool(config.workers, || {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_one(model, config, r))
            .collect()
    })?;

    let mut runs = Vec::with_capacity(config.runs);
    let mut failed = Vec::new();
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => {
                log::warn!("excluding run {run}: {e}");
                failed.push(FailedRun {
                    run,
                    message: e.to_string(),
                });
            }
        }
    }
    if failed.len() as f64 > MAX_FAILURE_FRACTION * config.runs as f64 || runs.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total: config.runs,
        });
    }
    if !failed.is_empty() {
        log::info!("{} of {} runs excluded", failed.len(), config.runs);
    }

    let mut rmse = BTreeMap::new();
    let mut bounds = Vec::new();
    let mut gaps = BTreeMap::new();
    if config.wants(BoundMethod::True) {
        // Paired design: the true bound averages over the same trajectories
        // the filters saw, including those of excluded runs.
        let trajectories = (0..config.runs)
            .map(|r| {
                sample_trajectory(
                    model,
                    config.horizon,
                    derive_run_seed(derive_run_seed(config.seed, r as u64), 0),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Trajectory> = trajectories.iter().collect();
        bounds.push(BoundSeries::new(
            BoundMethod::True,
            None,
            true_bound_series(model, &refs)?,
        )?);
    }
    let truths: Vec<Vec<_>> = runs
        .iter()
        .map(|r| r.trajectory.states[1..].to_vec())
        .collect();
    for &kind in &config.estimators {
        let per_run: Vec<&EstimatorRun> = runs
            .iter()
            .map(|r| r.estimator(kind).expect("every run has every estimator"))
            .collect();
        let estimates: Vec<Vec<_>> = per_run
            .iter()
            .map(|e| {
                e.outputs[1..]
                    .iter()
                    .map(|o| o.posterior.mean.clone())
                    .collect()
            })
            .collect();
        rmse.insert(kind, rmse_series(&truths, &estimates)?);
        if config.wants(BoundMethod::MeanOnly) {
            let series: Vec<Vec<_>> = per_run
                .iter()
                .map(|e| e.mean_only.as_ref().expect("requested").bound.clone())
                .collect();
            bounds.push(BoundSeries::new(
                BoundMethod::MeanOnly,
                Some(kind),
                aggregate_bounds(&series, config.averaging)?,
            )?);
        }
        if config.wants(BoundMethod::MeanCov) {
            let series: Vec<Vec<_>> = per_run
                .iter()
                .map(|e| e.mean_cov.as_ref().expect("requested").bound.clone())
                .collect();
            bounds.push(BoundSeries::new(
                BoundMethod::MeanCov,
                Some(kind),
                aggregate_bounds(&series, config.averaging)?,
            )?);
            gaps.insert(kind, gap_series(&runs, kind)?);
        }
    }
    Ok((
        AggregateResult {
            horizon: config.horizon,
            runs_total: config.runs,
            failed,
            rmse,
            bounds,
            gaps,
        },
        runs,
    ))
}

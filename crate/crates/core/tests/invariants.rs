use nalgebra::DMatrix;
use pcrlb::experiment::{
    derive_run_seed, run_experiment_with_runs, AveragingMode, ExperimentConfig,
};
use pcrlb::filters::FilterSettings;
use pcrlb::fim::{
    bound_difference, decompose_terms, fim_recursion_step, fim_via_decomposition, mean_cov_terms,
};
use pcrlb::linalg::is_symmetric;
use pcrlb::model::ungm_model;
use pcrlb::{GaussianBelief, GaussianPrior};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(workers: Option<usize>) -> ExperimentConfig {
    ExperimentConfig {
        horizon: 12,
        runs: 6,
        seed: 77,
        filters: FilterSettings {
            particles: 200,
            ..FilterSettings::default()
        },
        workers,
        ..ExperimentConfig::default()
    }
}

#[test]
fn run_seeds_do_not_collide_for_adjacent_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1_000_000 {
        let s: u64 = rng.random();
        assert_ne!(derive_run_seed(s, 0), derive_run_seed(s, 1));
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (one, runs_one) = run_experiment_with_runs(&small_config(Some(1))).unwrap();
    let (four, runs_four) = run_experiment_with_runs(&small_config(Some(4))).unwrap();
    let (pool, _) = run_experiment_with_runs(&small_config(None)).unwrap();
    assert_eq!(one, four);
    assert_eq!(one, pool);
    assert_eq!(runs_one, runs_four);
}

#[test]
fn aggregate_shapes_and_signs() {
    for averaging in [AveragingMode::AverageBounds, AveragingMode::AverageFim] {
        let cfg = ExperimentConfig {
            averaging,
            ..small_config(None)
        };
        let (agg, runs) = run_experiment_with_runs(&cfg).unwrap();
        assert_eq!(runs.len() + agg.failed.len(), cfg.runs);
        for series in agg.rmse.values() {
            assert_eq!(series.len(), cfg.horizon);
            assert!(series.iter().all(|&v| v >= 0.0));
        }
        for b in &agg.bounds {
            assert_eq!(b.len(), cfg.horizon);
            for m in &b.values {
                assert!(is_symmetric(m, 1e-10));
                assert!(m.symmetric_eigenvalues().min() >= 0.0);
            }
        }
        for g in agg.gaps.values() {
            assert_eq!(
                (g.analytic.len(), g.direct.len(), g.violations.len()),
                (cfg.horizon, cfg.horizon, cfg.horizon)
            );
        }
    }
}

#[test]
fn per_run_traces_have_horizon_length() {
    let cfg = small_config(None);
    let (_, runs) = run_experiment_with_runs(&cfg).unwrap();
    for r in &runs {
        assert_eq!(r.trajectory.states.len(), cfg.horizon + 1);
        for e in &r.estimators {
            assert_eq!(e.outputs.len(), cfg.horizon + 1);
            assert_eq!(e.mean_only.as_ref().unwrap().bound.len(), cfg.horizon);
            let mc = e.mean_cov.as_ref().unwrap();
            assert_eq!(mc.bound.len(), cfg.horizon);
            for (j, (t, p)) in mc.fim.iter().zip(mc.theta.iter().zip(&mc.pi)) {
                assert!(((t + p) - j).amax() <= 1e-8 * j.amax().max(1e-300));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn growth_model_fims_are_symmetric_with_psd_inverse(
        k in 0usize..50,
        x in -25.0f64..25.0,
        p in 0.01f64..30.0,
        xz in -25.0f64..25.0,
        pz in 0.01f64..30.0,
        j in 0.001f64..10.0,
    ) {
        let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
        let sb = GaussianBelief::scalar(x, p).unwrap();
        let mb = GaussianBelief::scalar(xz, pz).unwrap();
        let j = DMatrix::from_element(1, 1, j);
        let next = fim_recursion_step(&j, &mean_cov_terms(&model, k, &sb, &mb).unwrap()).unwrap();
        prop_assert!(next[(0, 0)] > 0.0);
        let split = fim_via_decomposition(&j, &decompose_terms(&model, k, &sb, &mb).unwrap()).unwrap();
        let rel = ((&split.j_next - &next).amax()) / next.amax();
        prop_assert!(rel < 1e-8, "relative error {}", rel);
    }

    #[test]
    fn gap_formula_matches_subtraction_for_either_sign(
        j_star in 0.01f64..10.0,
        pi in prop_oneof![0.01f64..10.0, -0.009f64..-0.001],
    ) {
        let js = DMatrix::from_element(1, 1, j_star);
        let p = DMatrix::from_element(1, 1, pi * j_star.max(1.0));
        let gap = bound_difference(&js, &p).unwrap();
        let direct = 1.0 / j_star - 1.0 / (j_star + p[(0, 0)]);
        prop_assert!((gap.value[(0, 0)] - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        prop_assert_eq!(gap.value[(0, 0)] >= 0.0, p[(0, 0)] >= 0.0);
    }
}

mod common;

use common::{kalman, scalar_linear};
use nalgebra::DVector;
use pcrlb::filters::{
    pf_step, run_filter, systematic_resample, EstimatorKind, FilterSettings, ParticleSet,
    ResamplePolicy,
};
use pcrlb::fim::true_fim_terms_mc;
use pcrlb::model::{sample_trajectory, ungm_model, SystemModel};
use pcrlb::GaussianPrior;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn growth_slope(x: f64) -> f64 {
    0.5 + 25.0 * (1.0 - x * x) / (1.0 + x * x).powi(2)
}

/// `E[g(x)]` for `x ~ N(0, var)` by the composite Simpson rule on +-12 sd.
fn gaussian_expectation(var: f64, g: impl Fn(f64) -> f64) -> f64 {
    let sd = var.sqrt();
    let n = 200_000;
    let (lo, hi) = (-12.0 * sd, 12.0 * sd);
    let h = (hi - lo) / n as f64;
    let density = |x: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let f = |x: f64| g(x) * density(x);
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn growth_model_d11_from_prior_samples() {
    let var = 20.0;
    let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, var).unwrap()).unwrap();
    let exact_d11 = gaussian_expectation(var, |x| growth_slope(x).powi(2));
    let exact_d12 = -gaussian_expectation(var, growth_slope);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let normal = Normal::new(0.0, var.sqrt()).unwrap();
    let states: Vec<DVector<f64>> = (0..100_000)
        .map(|_| DVector::from_element(1, normal.sample(&mut rng)))
        .collect();
    // Only the transition terms are checked, so the paired samples are immaterial.
    let t = true_fim_terms_mc(&model, 0, &states, &states).unwrap();
    let d11 = t.d11[(0, 0)];
    assert!(
        (d11 - exact_d11).abs() < 0.01 * exact_d11,
        "{d11} vs {exact_d11}"
    );
    // D12 is a small average of a sign-changing slope; check it absolutely.
    assert!(
        (t.d12[(0, 0)] - exact_d12).abs() < 0.05 * exact_d11.sqrt(),
        "{} vs {exact_d12}",
        t.d12[(0, 0)]
    );
}

#[test]
fn single_sample_is_a_point_evaluation() {
    let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
    let x = DVector::from_element(1, 1.0);
    let x1 = DVector::from_element(1, 2.0);
    let t = true_fim_terms_mc(
        &model,
        0,
        std::slice::from_ref(&x),
        std::slice::from_ref(&x1),
    )
    .unwrap();
    let m = pcrlb::fim::mean_only_terms(&model, 0, &x, &x1).unwrap();
    assert_eq!(t, m);
    assert!((t.d11[(0, 0)] - 0.25).abs() < 1e-12);
    assert!(true_fim_terms_mc(&model, 0, &[], &[]).is_err());
}

#[test]
fn particle_filter_tracks_kalman_on_linear_model() {
    let model = scalar_linear(0.9, 1.0, 0.5, 1.0, 2.0);
    let traj = sample_trajectory(&model, 30, 4).unwrap();
    let kf = kalman(&model, &traj.measurements);
    let settings = FilterSettings {
        particles: 20_000,
        ..FilterSettings::default()
    };
    let pf = run_filter(&model, &traj, EstimatorKind::Pf, &settings, 8).unwrap();
    for k in 1..=30 {
        let sd = kf.cov[k][(0, 0)].sqrt();
        assert!(
            (pf[k].posterior.mean[0] - kf.mean[k][0]).abs() < 0.1 * sd,
            "k={k}"
        );
        let ratio = pf[k].posterior.cov[(0, 0)] / kf.cov[k][(0, 0)];
        assert!((ratio - 1.0).abs() < 0.1, "k={k} ratio {ratio}");
    }
}

#[test]
fn particle_filter_is_seed_deterministic() {
    let model = ungm_model(1.0, 5.0, GaussianPrior::scalar(0.0, 20.0).unwrap()).unwrap();
    let traj = sample_trajectory(&model, 10, 1).unwrap();
    let s = FilterSettings::default();
    let a = run_filter(&model, &traj, EstimatorKind::Pf, &s, 3).unwrap();
    let b = run_filter(&model, &traj, EstimatorKind::Pf, &s, 3).unwrap();
    let c = run_filter(&model, &traj, EstimatorKind::Pf, &s, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn systematic_resampling_preserves_the_weighted_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 2000;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let target: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    let trials = 200;
    let mut mean_of_means = 0.0;
    for _ in 0..trials {
        let idx = systematic_resample(&weights, rng.random()).unwrap();
        assert_eq!(idx.len(), n);
        mean_of_means += idx.iter().map(|&i| values[i]).sum::<f64>() / n as f64;
    }
    mean_of_means /= trials as f64;
    assert!(
        (mean_of_means - target).abs() < 0.01,
        "{mean_of_means} vs {target}"
    );
}

#[test]
fn ess_policy_skips_resampling_for_even_weights() {
    let model = scalar_linear(1.0, 1.0, 1.0, 1e6, 1.0);
    let set = ParticleSet::from_prior(model.prior(), 500, 1).unwrap();
    let z = DVector::from_element(1, 0.0);
    let (next, _) = pf_step(&model, 1, &set, &z, 2, ResamplePolicy::Ess(0.5)).unwrap();
    assert!(next
        .weights
        .iter()
        .any(|&w| (w - 1.0 / 500.0).abs() > 1e-12));
    let (next, _) = pf_step(&model, 1, &set, &z, 2, ResamplePolicy::EveryStep).unwrap();
    assert!(next
        .weights
        .iter()
        .all(|&w| (w - 1.0 / 500.0).abs() < 1e-15));
}

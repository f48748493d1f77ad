//! Bootstrap (SIR) particle filter with systematic resampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FilterOutput;
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, regularize_cov, symmetrize};
use crate::model::{measure, transition, GaussianPrior, SystemModel};
use crate::moments::GaussianBelief;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<DVector<f64>>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(particles: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() || particles.len() != weights.len() {
            return Err(Error::invalid(format!(
                "particle set needs matching non-empty particles and weights ({} vs {})",
                particles.len(),
                weights.len()
            )));
        }
        let n = particles[0].len();
        if particles.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("particles have differing dimensions"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(
                "particle weights must be finite and non-negative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "particle weights sum to {total}, not 1"
            )));
        }
        Ok(Self { particles, weights })
    }

    pub fn uniform(particles: Vec<DVector<f64>>) -> Result<Self> {
        let w = 1.0 / particles.len().max(1) as f64;
        let weights = vec![w; particles.len()];
        Self::new(particles, weights)
    }

    /// `count` equally weighted draws from the prior.
    pub fn from_prior(prior: &GaussianPrior, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("particle count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factor = psd_factor(prior.cov(), "prior covariance")?;
        let n = prior.dim();
        let particles = (0..count)
            .map(|_| {
                let white =
                    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
                prior.mean() + &factor * white
            })
            .collect();
        Self::uniform(particles)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Effective sample size `1 / sum w_i^2`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplePolicy {
    #[default]
    EveryStep,
    /// Resample when `ess / N` drops below the threshold.
    Ess(f64),
}

/// Systematic resampling at positions `(i + u0) / N` against the cumulative
/// weights.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::invalid("cannot resample an empty weight vector"));
    }
    if !(0.0..1.0).contains(&u0) {
        return Err(Error::invalid(format!("u0 must lie in [0, 1), got {u0}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("weights sum to {total}, not 1")));
    }
    let last_positive = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .ok_or(Error::DegenerateWeights)?;

    let mut indices = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let position = (i as f64 + u0) / n as f64;
        while position >= cumulative && j < last_positive {
            j += 1;
            cumulative += weights[j];
        }
        indices.push(j);
    }
    Ok(indices)
}

/// Weighted mean and covariance (normalized weights, no bias correction).
pub fn particle_moments(set: &ParticleSet) -> GaussianBelief {
    let n = set.particles[0].len();
    let mean = set
        .particles
        .iter()
        .zip(&set.weights)
        .fold(DVector::zeros(n), |acc, (p, &w)| acc + p * w);
    let mut cov = DMatrix::zeros(n, n);
    for (p, &w) in set.particles.iter().zip(&set.weights) {
        let d = p - &mean;
        cov += &d * d.transpose() * w;
    }
    GaussianBelief {
        mean,
        cov: symmetrize(&cov),
    }
}

/// Propagate, weight by `p(z_k | x_k)`, report moments, then resample.
///
/// The returned [`FilterOutput`] holds the weighted moments before
/// resampling (posterior) and the moments of the propagated cloud under the
/// incoming weights (predicted).
pub fn pf_step<M: SystemModel + ?Sized>(
    model: &M,
    k: usize,
    particles: &ParticleSet,
    z: &DVector<f64>,
    seed: u64,
    policy: ResamplePolicy,
) -> Result<(ParticleSet, FilterOutput)> {
    if z.len() != model.meas_dim() {
        return Err(Error::invalid(format!(
            "measurement has length {} but the model has m = {}",
            z.len(),
            model.meas_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.state_dim();
    let noise = psd_factor(&model.process_cov(k), "process covariance")?;
    let propagated = particles
        .particles
        .iter()
        .map(|p| {
            let white = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            Ok(transition(model, k, p)? + &noise * white)
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted_set = ParticleSet {
        particles: propagated,
        weights: particles.weights.clone(),
    };
    let predicted = particle_moments(&predicted_set);

    let r = nalgebra::Cholesky::new(model.meas_cov(k)).ok_or_else(|| {
        Error::numeric(
            "particle filter",
            "measurement covariance is not positive definite",
        )
    })?;
    let log_weights = predicted_set
        .particles
        .iter()
        .zip(&predicted_set.weights)
        .map(|(p, &w)| {
            let innovation = z - measure(model, k, p)?;
            let mahalanobis = innovation.dot(&r.solve(&innovation));
            Ok(w.ln() - 0.5 * mahalanobis)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let unnormalized: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let weighted = ParticleSet {
        particles: predicted_set.particles,
        weights: unnormalized.iter().map(|w| w / total).collect(),
    };
    let posterior = particle_moments(&weighted);

    let resample = match policy {
        ResamplePolicy::EveryStep => true,
        ResamplePolicy::Ess(threshold) => weighted.ess() < threshold * weighted.len() as f64,
    };
    let next = if resample {
        let u0: f64 = rng.random();
        let indices = systematic_resample(&weighted.weights, u0)?;
        ParticleSet::uniform(
            indices
                .into_iter()
                .map(|i| weighted.particles[i].clone())
                .collect(),
        )?
    } else {
        weighted
    };

    let output = FilterOutput {
        posterior: GaussianBelief {
            mean: posterior.mean,
            cov: regularize_cov(&posterior.cov, "PF posterior covariance")?,
        },
        predicted: GaussianBelief {
            mean: predicted.mean,
            cov: regularize_cov(&predicted.cov, "PF predicted covariance")?,
        },
    };
    Ok((next, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_gaussian_model;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn resample_uniform() {
        for &u0 in &[0.0, 0.3, 0.999] {
            assert_eq!(
                systematic_resample(&[0.25; 4], u0).unwrap(),
                vec![0, 1, 2, 3]
            );
        }
    }

    #[test]
    fn resample_degenerate() {
        assert_eq!(
            systematic_resample(&[1.0, 0.0, 0.0, 0.0], 0.7).unwrap(),
            vec![0, 0, 0, 0]
        );
        assert_eq!(
            systematic_resample(&[0.0, 0.0, 0.0, 1.0], 0.0).unwrap(),
            vec![3, 3, 3, 3]
        );
    }

    #[test]
    fn resample_half_half() {
        assert_eq!(
            systematic_resample(&[0.5, 0.5, 0.0, 0.0], 0.1).unwrap(),
            vec![0, 0, 1, 1]
        );
    }

    #[test]
    fn resample_rejects_unnormalized() {
        assert!(systematic_resample(&[0.5, 0.6], 0.1).is_err());
        assert!(systematic_resample(&[0.5, 0.5], 1.0).is_err());
        assert!(systematic_resample(&[0.5, 0.5 + 5e-10], 0.1).is_ok());
    }

    #[test]
    fn moments_of_two_points() {
        let set = ParticleSet::uniform(vec![s(1.0), s(3.0)]).unwrap();
        let b = particle_moments(&set);
        assert_eq!(b.mean[0], 2.0);
        assert_eq!(b.cov[(0, 0)], 1.0);
    }

    #[test]
    fn moments_of_single_or_concentrated() {
        let one = ParticleSet::uniform(vec![s(4.5)]).unwrap();
        assert_eq!(particle_moments(&one).cov[(0, 0)], 0.0);
        let conc = ParticleSet::new(vec![s(1.0), s(-7.0), s(2.0)], vec![0.0, 1.0, 0.0]).unwrap();
        let b = particle_moments(&conc);
        assert_eq!(b.mean[0], -7.0);
        assert_eq!(b.cov[(0, 0)], 0.0);
    }

    #[test]
    fn ess_bounds() {
        let set = ParticleSet::new(vec![s(0.0), s(1.0), s(2.0)], vec![0.2, 0.3, 0.5]).unwrap();
        let ess = set.ess();
        assert!((1.0..=3.0).contains(&ess));
        assert_eq!(ParticleSet::uniform(vec![s(0.0); 8]).unwrap().ess(), 8.0);
    }

    /// Linear scalar model whose process noise is numerically zero.
    struct NoNoise {
        prior: GaussianPrior,
    }

    impl SystemModel for NoNoise {
        fn state_dim(&self) -> usize {
            1
        }
        fn meas_dim(&self) -> usize {
            1
        }
        fn transition_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.map(|v| 0.5 * v + 1.0)
        }
        fn measurement_map(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn process_cov(&self, _k: usize) -> DMatrix<f64> {
            DMatrix::zeros(1, 1)
        }
        fn meas_cov(&self, _k: usize) -> DMatrix<f64> {
            DMatrix::identity(1, 1)
        }
        fn prior(&self) -> &GaussianPrior {
            &self.prior
        }
    }

    #[test]
    fn single_particle_without_noise() {
        let model = NoNoise {
            prior: GaussianPrior::scalar(0.0, 1.0).unwrap(),
        };
        let set = ParticleSet::uniform(vec![s(3.0)]).unwrap();
        let (next, out) = pf_step(&model, 1, &set, &s(0.0), 9, ResamplePolicy::EveryStep).unwrap();
        assert_eq!(out.posterior.mean[0], 2.5);
        assert_eq!(next.particles[0][0], 2.5);
    }

    #[test]
    fn identical_particles() {
        let model = NoNoise {
            prior: GaussianPrior::scalar(0.0, 1.0).unwrap(),
        };
        let set = ParticleSet::uniform(vec![s(3.0); 50]).unwrap();
        let (_, out) = pf_step(&model, 1, &set, &s(10.0), 9, ResamplePolicy::EveryStep).unwrap();
        assert!((out.posterior.mean[0] - 2.5).abs() < 1e-14);
        let c = out.posterior.cov[(0, 0)];
        assert!(c > 0.0 && c < 1e-8);
    }

    #[test]
    fn distant_measurement_does_not_underflow() {
        let model = NoNoise {
            prior: GaussianPrior::scalar(0.0, 1.0).unwrap(),
        };
        let set = ParticleSet::uniform(vec![s(0.0), s(1.0)]).unwrap();
        let (_, out) = pf_step(&model, 1, &set, &s(1e3), 1, ResamplePolicy::EveryStep).unwrap();
        // All mass moves to the particle nearest the measurement.
        assert_eq!(out.posterior.mean[0], 1.5);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let model = linear_gaussian_model(
            one.clone(),
            one.clone(),
            one.clone(),
            one,
            GaussianPrior::scalar(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let set = ParticleSet::from_prior(model.prior(), 200, 5).unwrap();
        let a = pf_step(&model, 1, &set, &s(0.4), 77, ResamplePolicy::EveryStep).unwrap();
        let b = pf_step(&model, 1, &set, &s(0.4), 77, ResamplePolicy::EveryStep).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ess_policy_can_skip_resampling() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let model = linear_gaussian_model(
            one.clone(),
            one.clone(),
            one.clone(),
            one * 1e6,
            GaussianPrior::scalar(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let set = ParticleSet::from_prior(model.prior(), 100, 5).unwrap();
        let (next, _) = pf_step(&model, 1, &set, &s(0.0), 3, ResamplePolicy::Ess(0.5)).unwrap();
        // Nearly flat likelihood keeps ESS high, so weights stay non-uniform.
        assert!(next.weights.iter().any(|&w| (w - 0.01).abs() > 1e-12));
        assert!(next.ess() > 99.0);
    }
}

//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! name = "ungm"            # required: "ungm" or "linear"
//! process_var = 1.0        # ungm
//! meas_var = 5.0           # ungm
//! prior_mean = 0.0         # ungm: number, linear: array
//! prior_var = 20.0         # ungm
//! # a, h, q, r, prior_cov  # linear: arrays of rows
//!
//! [experiment]
//! horizon = 50
//! runs = 100
//! seed = 20100701
//! averaging = "average-bounds"   # or "average-fim"
//! # workers = 4                  # default: all cores
//!
//! [filters]
//! estimators = ["ukf", "pf"]
//! particles = 1000
//! ut_alpha = 1.0
//! ut_beta = 2.0
//! # ut_kappa = 2.0               # default: 3 - n
//! resample = "every-step"        # or "ess"
//! ess_threshold = 0.5            # used with resample = "ess"
//!
//! [bounds]
//! methods = ["true", "mean_only", "mean_cov"]
//! state_belief = "posterior"         # or "predicted"
//! measurement_belief = "predicted"   # or "posterior"
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pcrlb::experiment::DEFAULT_SEED;
use pcrlb::filters::{ResamplePolicy, UtParams};
use pcrlb::{
    AveragingMode, BeliefSource, BoundMethod, EstimatorKind, ExperimentConfig, FilterSettings,
    ModelSpec,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVector {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    pub process_var: Option<f64>,
    pub meas_var: Option<f64>,
    pub prior_mean: Option<ScalarOrVector>,
    pub prior_var: Option<f64>,
    pub a: Option<Vec<Vec<f64>>>,
    pub h: Option<Vec<Vec<f64>>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
    pub prior_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub horizon: i64,
    pub runs: i64,
    pub seed: u64,
    pub averaging: AveragingMode,
    pub workers: Option<i64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            horizon: 50,
            runs: 100,
            seed: DEFAULT_SEED,
            averaging: AveragingMode::AverageBounds,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleName {
    EveryStep,
    Ess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiltersSection {
    pub estimators: Vec<EstimatorKind>,
    pub particles: i64,
    pub ut_alpha: f64,
    pub ut_beta: f64,
    pub ut_kappa: Option<f64>,
    pub resample: ResampleName,
    pub ess_threshold: f64,
}

impl Default for FiltersSection {
    fn default() -> Self {
        let ut = UtParams::default();
        Self {
            estimators: vec![EstimatorKind::Ukf, EstimatorKind::Pf],
            particles: 1000,
            ut_alpha: ut.alpha,
            ut_beta: ut.beta,
            ut_kappa: ut.kappa,
            resample: ResampleName::EveryStep,
            ess_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub methods: Vec<BoundMethod>,
    pub state_belief: BeliefSource,
    pub measurement_belief: BeliefSource,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            methods: vec![
                BoundMethod::True,
                BoundMethod::MeanOnly,
                BoundMethod::MeanCov,
            ],
            state_belief: BeliefSource::Posterior,
            measurement_belief: BeliefSource::Predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// The file as written, with defaults filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub experiment: ExperimentSection,
    pub filters: FiltersSection,
    pub bounds: BoundsSection,
    pub output: OutputSection,
}

/// Validated configuration plus the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
    pub file: ConfigFile,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!(
            "model.{key} must be a non-empty rectangular array of rows"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

fn positive(value: i64, key: &str) -> Result<usize, CliError> {
    if value < 1 {
        return Err(invalid(format!("{key} must be at least 1, got {value}")));
    }
    usize::try_from(value).map_err(|_| invalid(format!("{key} is too large")))
}

fn reject(present: &[(&str, bool)], model: &str) -> Result<(), CliError> {
    match present.iter().find(|(_, set)| *set) {
        Some((key, _)) => Err(invalid(format!(
            "model.{key} does not apply to model \"{model}\""
        ))),
        None => Ok(()),
    }
}

fn model_spec(m: &ModelSection) -> Result<ModelSpec, CliError> {
    let name = m
        .name
        .as_deref()
        .ok_or_else(|| invalid("model.name is required (\"ungm\" or \"linear\")"))?;
    match name {
        "ungm" => {
            reject(
                &[
                    ("a", m.a.is_some()),
                    ("h", m.h.is_some()),
                    ("q", m.q.is_some()),
                    ("r", m.r.is_some()),
                    ("prior_cov", m.prior_cov.is_some()),
                ],
                name,
            )?;
            let prior_mean = match &m.prior_mean {
                None => 0.0,
                Some(ScalarOrVector::Scalar(v)) => *v,
                Some(ScalarOrVector::Vector(v)) if v.len() == 1 => v[0],
                Some(ScalarOrVector::Vector(_)) => {
                    return Err(invalid("model.prior_mean must be a number for ungm"))
                }
            };
            let defaults = ModelSpec::ungm_default();
            let ModelSpec::Ungm {
                process_var,
                meas_var,
                prior_var,
                ..
            } = defaults
            else {
                unreachable!("ungm_default builds the growth model")
            };
            Ok(ModelSpec::Ungm {
                process_var: m.process_var.unwrap_or(process_var),
                meas_var: m.meas_var.unwrap_or(meas_var),
                prior_mean,
                prior_var: m.prior_var.unwrap_or(prior_var),
            })
        }
        "linear" => {
            reject(
                &[
                    ("process_var", m.process_var.is_some()),
                    ("meas_var", m.meas_var.is_some()),
                    ("prior_var", m.prior_var.is_some()),
                ],
                name,
            )?;
            fn need<'a>(
                v: &'a Option<Vec<Vec<f64>>>,
                key: &str,
            ) -> Result<&'a [Vec<f64>], CliError> {
                v.as_deref()
                    .ok_or_else(|| invalid(format!("model.{key} is required for model \"linear\"")))
            }
            let a = matrix(need(&m.a, "a")?, "a")?;
            let prior_mean = match &m.prior_mean {
                None => DVector::zeros(a.nrows()),
                Some(ScalarOrVector::Scalar(v)) => DVector::from_element(1, *v),
                Some(ScalarOrVector::Vector(v)) => DVector::from_vec(v.clone()),
            };
            Ok(ModelSpec::Linear {
                a,
                h: matrix(need(&m.h, "h")?, "h")?,
                q: matrix(need(&m.q, "q")?, "q")?,
                r: matrix(need(&m.r, "r")?, "r")?,
                prior_mean,
                prior_cov: matrix(need(&m.prior_cov, "prior_cov")?, "prior_cov")?,
            })
        }
        other => Err(invalid(format!(
            "unknown model \"{other}\"; expected \"ungm\" or \"linear\""
        ))),
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every field and builds the experiment configuration.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let f = &self.filters;
        let resample = match f.resample {
            ResampleName::EveryStep => ResamplePolicy::EveryStep,
            ResampleName::Ess => ResamplePolicy::Ess(f.ess_threshold),
        };
        let experiment = ExperimentConfig {
            model: model_spec(&self.model)?,
            horizon: positive(self.experiment.horizon, "experiment.horizon")?,
            runs: positive(self.experiment.runs, "experiment.runs")?,
            seed: self.experiment.seed,
            estimators: dedup(&f.estimators),
            methods: dedup(&self.bounds.methods),
            filters: FilterSettings {
                ut: UtParams {
                    alpha: f.ut_alpha,
                    beta: f.ut_beta,
                    kappa: f.ut_kappa,
                },
                particles: positive(f.particles, "filters.particles")?,
                resample,
            },
            averaging: self.experiment.averaging,
            state_belief: self.bounds.state_belief,
            measurement_belief: self.bounds.measurement_belief,
            workers: self
                .experiment
                .workers
                .map(|w| positive(w, "experiment.workers"))
                .transpose()?,
        };
        experiment.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(RunConfig {
            experiment,
            output_dir: self.output.dir.clone(),
            file: self.clone(),
        })
    }
}

fn dedup<T: Copy + Ord>(items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    ConfigFile::parse(&text)
        .and_then(|file| file.resolve())
        .map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<RunConfig, CliError> {
        ConfigFile::parse(text)?.resolve()
    }

    #[test]
    fn bare_model_gives_defaults() {
        let c = resolve("[model]\nname = \"ungm\"\n").unwrap();
        assert_eq!(c.experiment, ExperimentConfig::default());
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn overrides_apply() {
        let c = resolve("[model]\nname = \"ungm\"\nmeas_var = 2\n[filters]\nparticles = 5000\nestimators = [\"pf\"]\n").unwrap();
        assert_eq!(c.experiment.filters.particles, 5000);
        assert_eq!(c.experiment.estimators, vec![EstimatorKind::Pf]);
        assert!(matches!(c.experiment.model, ModelSpec::Ungm { meas_var, .. } if meas_var == 2.0));
    }

    #[test]
    fn negative_horizon_is_rejected() {
        let e = resolve("[model]\nname = \"ungm\"\n[experiment]\nhorizon = -1\n").unwrap_err();
        assert!(e.to_string().contains("experiment.horizon"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = resolve("[model]\nname = \"ungm\"\n[experiment]\nhorizn = 3\n").unwrap_err();
        assert!(e.to_string().contains("horizn"), "{e}");
    }

    #[test]
    fn missing_model_name() {
        assert!(resolve("").unwrap_err().to_string().contains("model.name"));
        assert!(resolve("[model]\nname = \"lorenz\"\n").is_err());
    }

    #[test]
    fn type_mismatch_reports_location() {
        let e = resolve("[model]\nname = \"ungm\"\n[experiment]\nruns = \"many\"\n").unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
    }

    #[test]
    fn linear_model() {
        let c = resolve(
            "[model]\nname = \"linear\"\na = [[0.9]]\nh = [[1.0]]\nq = [[1.0]]\nr = [[0.5]]\nprior_mean = [1.0]\nprior_cov = [[2.0]]\n",
        )
        .unwrap();
        assert_eq!(c.experiment.model.name(), "linear");
        assert!(resolve("[model]\nname = \"linear\"\na = [[0.9]]\n").is_err());
        assert!(resolve("[model]\nname = \"ungm\"\na = [[0.9]]\n").is_err());
    }

    #[test]
    fn resampling_choice() {
        let c = resolve(
            "[model]\nname = \"ungm\"\n[filters]\nresample = \"ess\"\ness_threshold = 0.3\n",
        )
        .unwrap();
        assert_eq!(c.experiment.filters.resample, ResamplePolicy::Ess(0.3));
        assert!(resolve(
            "[model]\nname = \"ungm\"\n[filters]\nresample = \"ess\"\ness_threshold = 3\n"
        )
        .is_err());
    }
}

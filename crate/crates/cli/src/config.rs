//! Run configuration for `dig separate`: a JSON document fully describing
//! the schedule, the observation, one prior per source and the sampler
//! settings. Command-line flags override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dig_core::dsm;
use dig_core::priors::{DenoiserPrior, GaussianPrior, GmmPrior, ScaledPrior, ScorePrior};
use dig_core::sampler::{DigConfig, Initializer, ScanOrder};
use dig_core::schedule::{GridSpacing, NoiseSchedule};
use dig_core::sde::SolverConfig;
use dig_core::synth::MixManifest;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub schedule: ScheduleParams,
    pub observation: ObservationSpec,
    pub priors: Vec<PriorSpec>,
    #[serde(default)]
    pub dig: DigParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub alpha: f64,
    pub t_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            t_max: 2.0,
        }
    }
}

/// Where the observed mixture comes from. Exactly one of `y`, `y_csv`,
/// `mix_manifest` must be set; `sigma_v` is required except with a mix
/// manifest, which records it per row.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ObservationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_manifest: Option<PathBuf>,
    /// Restrict to a single row of a multi-row source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_v: Option<f64>,
}

/// One source prior: analytic parameters or a trained model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PriorSpec {
    Gaussian {
        mean: MeanSpec,
        var: f64,
    },
    Gmm {
        weights: Vec<f64>,
        means: Vec<MeanSpec>,
        component_var: f64,
    },
    Model {
        path: PathBuf,
        /// Source scale c: the prior of c*m when the model was trained on m.
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    1.0
}

/// Scalar means broadcast to the signal length.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl MeanSpec {
    fn resolve(&self, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            MeanSpec::Scalar(v) => Ok(vec![*v; n]),
            MeanSpec::Vector(v) if v.len() == n => Ok(v.clone()),
            MeanSpec::Vector(v) => Err(CliError::Usage(format!(
                "prior mean has length {} but the observation has length {n}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Thin one chain's post-burn-in states.
    Thinned,
    /// Average the final states of independent chains.
    IndependentChains,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DigParams {
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    pub solver_steps: usize,
    pub spacing: GridSpacing,
    pub initializer: Initializer,
    pub scan: ScanOrder,
    /// Number of posterior samples averaged into the MMSE estimate.
    pub posterior_samples: usize,
    pub sample_mode: SampleMode,
}

impl Default for DigParams {
    fn default() -> Self {
        Self {
            iterations: 100,
            burn_in: None,
            solver_steps: 200,
            spacing: GridSpacing::default(),
            initializer: Initializer::default(),
            scan: ScanOrder::default(),
            posterior_samples: 25,
            sample_mode: SampleMode::Thinned,
        }
    }
}

impl DigParams {
    pub fn to_dig_config(&self) -> DigConfig {
        DigConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            solver: SolverConfig {
                steps: self.solver_steps,
                spacing: self.spacing,
            },
            initializer: self.initializer,
            scan: self.scan,
        }
    }
}

/// One resolved separation instance.
pub struct Instance {
    pub index: usize,
    pub y: Vec<f64>,
    pub sigma_v: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, CliError> {
        NoiseSchedule::new(self.schedule.alpha, self.schedule.t_max)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Resolve the observation source into concrete instances.
    pub fn instances(&self) -> Result<Vec<Instance>, CliError> {
        let spec = &self.observation;
        let chosen = [
            spec.y.is_some(),
            spec.y_csv.is_some(),
            spec.mix_manifest.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if chosen != 1 {
            return Err(CliError::Usage(
                "observation needs exactly one of y, y_csv, mix_manifest".into(),
            ));
        }

        let mut instances = Vec::new();
        if let Some(y) = &spec.y {
            let sigma_v = spec.sigma_v.ok_or_else(|| {
                CliError::Usage("observation.sigma_v is required with inline y".into())
            })?;
            instances.push(Instance {
                index: 0,
                y: y.clone(),
                sigma_v,
            });
        } else if let Some(csv) = &spec.y_csv {
            let sigma_v = spec.sigma_v.ok_or_else(|| {
                CliError::Usage("observation.sigma_v is required with y_csv".into())
            })?;
            let rows = dig_core::csvio::read_signals_csv(csv)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            for (index, y) in rows.into_iter().enumerate() {
                instances.push(Instance { index, y, sigma_v });
            }
        } else if let Some(manifest_path) = &spec.mix_manifest {
            let text = std::fs::read_to_string(manifest_path).map_err(|e| {
                CliError::Usage(format!(
                    "cannot read mix manifest {}: {e}",
                    manifest_path.display()
                ))
            })?;
            let manifest: MixManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid mix manifest: {e}")))?;
            let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
            let rows = dig_core::csvio::read_signals_csv(&base.join(&manifest.mixture_file))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if rows.len() != manifest.sigma_v.len() {
                return Err(CliError::Usage(format!(
                    "mix manifest lists {} sigma_v entries for {} mixture rows",
                    manifest.sigma_v.len(),
                    rows.len()
                )));
            }
            for (index, (y, &sigma_v)) in rows.into_iter().zip(&manifest.sigma_v).enumerate() {
                instances.push(Instance { index, y, sigma_v });
            }
        }

        if let Some(row) = spec.row {
            if row >= instances.len() {
                return Err(CliError::Usage(format!(
                    "row {row} out of range ({} rows)",
                    instances.len()
                )));
            }
            let picked = instances.swap_remove(row);
            instances = vec![Instance { index: 0, ..picked }];
        }
        if instances.is_empty() {
            return Err(CliError::Usage("no observation rows".into()));
        }
        let n = instances[0].y.len();
        if instances.iter().any(|i| i.y.len() != n) {
            return Err(CliError::Usage("observation rows differ in length".into()));
        }
        Ok(instances)
    }

    /// Build one prior per source for signals of length `n`. All referenced
    /// model files are read here, before any compute.
    pub fn build_priors(&self, n: usize) -> Result<Vec<Box<dyn ScorePrior>>, CliError> {
        if self.priors.is_empty() {
            return Err(CliError::Usage("at least one prior is required".into()));
        }
        let mut out: Vec<Box<dyn ScorePrior>> = Vec::with_capacity(self.priors.len());
        for (k, spec) in self.priors.iter().enumerate() {
            let prior: Box<dyn ScorePrior> = match spec {
                PriorSpec::Gaussian { mean, var } => Box::new(
                    GaussianPrior::new(mean.resolve(n)?, *var)
                        .map_err(|e| CliError::Usage(format!("prior {k}: {e}")))?,
                ),
                PriorSpec::Gmm {
                    weights,
                    means,
                    component_var,
                } => {
                    let resolved: Result<Vec<Vec<f64>>, CliError> =
                        means.iter().map(|m| m.resolve(n)).collect();
                    Box::new(
                        GmmPrior::new(weights.clone(), resolved?, *component_var)
                            .map_err(|e| CliError::Usage(format!("prior {k}: {e}")))?,
                    )
                }
                PriorSpec::Model { path, scale } => {
                    let net = dsm::load_model(path)
                        .map_err(|e| CliError::Usage(format!("prior {k}: {e}")))?;
                    if net.signal_len() != n {
                        return Err(CliError::Usage(format!(
                            "prior {k}: model expects signals of length {}, observation has {n}",
                            net.signal_len()
                        )));
                    }
                    let dp = DenoiserPrior::new(net);
                    if (*scale - 1.0).abs() > 0.0 {
                        Box::new(
                            ScaledPrior::new(dp, *scale)
                                .map_err(|e| CliError::Usage(format!("prior {k}: {e}")))?,
                        )
                    } else {
                        Box::new(dp)
                    }
                }
            };
            out.push(prior);
        }
        Ok(out)
    }
}

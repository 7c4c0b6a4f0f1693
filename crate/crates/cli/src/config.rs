//! Experiment config file schema.
//!
//! The file is parsed into plain records first and validated afterwards, so a
//! well-formed file with out-of-range values is reported as an invariant violation
//! rather than a parse error.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use gpslab_core::lambda_schedule::{ScheduleKind, ScheduleSpec};
use gpslab_core::sampler::{LambdaDomain, Method, SamplerConfig, DEFAULT_REFERENCE_RESOLUTION};
use gpslab_core::schedule::{NoiseSchedule, ScheduleConfig};
use gpslab_core::scoremodel::{Condition, MixtureModel, ModelConfig};
use gpslab_core::GuidanceSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    Extrapolate,
    Interpolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceFile {
    pub mode: GuidanceMode,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaFile {
    pub kind: ScheduleKind,
    pub lo: f64,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub sharpness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodFile {
    Standard { guidance: GuidanceFile },
    Zigzag { omega_h: f64, omega_l: f64 },
    Gps { lambda1: f64, lambda2: LambdaFile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub name: String,
    pub method: MethodFile,
    #[serde(rename = "K", default)]
    pub reflections: usize,
    #[serde(default = "unconditional")]
    pub cond: Condition,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub lambda2_domain: LambdaDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationFile {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub dimension: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunFile>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub emit_plots: bool,
    #[serde(default = "default_resolution")]
    pub reference_resolution: usize,
    #[serde(default)]
    pub ablation: Option<AblationFile>,
}

fn unconditional() -> Condition {
    Condition::Unconditional
}

fn one() -> usize {
    1
}

fn default_resolution() -> usize {
    DEFAULT_REFERENCE_RESOLUTION
}

#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    /// Seed is filled in per execution.
    pub sampler: SamplerConfig,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: MixtureModel,
    pub schedule: NoiseSchedule,
    pub dimension: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<NamedRun>,
    pub output_dir: Option<PathBuf>,
    pub emit_plots: bool,
    pub reference_resolution: usize,
    pub ablation_range: (f64, f64),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(format!("cannot read {}", path.display()), e))?;
        let file: ExperimentFile =
            serde_json::from_str(&text).map_err(|source| HarnessError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        Self::from_file(file)
    }

    pub fn from_file(file: ExperimentFile) -> Result<Self> {
        let invalid = |msg: String| Err(HarnessError::Invalid(msg));
        if file.runs.is_empty() {
            return invalid("at least one run is required".into());
        }
        if file.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        if file.dimension == 0 {
            return invalid("dimension must be at least 1".into());
        }
        let model = MixtureModel::try_from(file.model)?;
        if model.dim() != file.dimension {
            return invalid(format!(
                "dimension {} does not match the model's {}",
                file.dimension,
                model.dim()
            ));
        }
        let schedule = file.schedule.build()?;

        let mut names = HashSet::new();
        let mut runs = Vec::with_capacity(file.runs.len());
        for run in file.runs {
            if run.name.is_empty()
                || !run
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            {
                return invalid(format!(
                    "run name {:?} must be non-empty and use only [A-Za-z0-9._-]",
                    run.name
                ));
            }
            if !names.insert(run.name.clone()) {
                return invalid(format!("duplicate run name {:?}", run.name));
            }
            let sampler = SamplerConfig {
                method: method_from_file(&run.method)?,
                steps: schedule.steps(),
                reflections: run.reflections,
                cond: run.cond,
                seed: 0,
                repeats: run.repeats,
                lambda_domain: run.lambda2_domain,
                reference_resolution: file.reference_resolution,
            };
            sampler.validate(&model, &schedule)?;
            runs.push(NamedRun {
                name: run.name,
                sampler,
            });
        }

        let ablation_range = match file.ablation {
            Some(AblationFile { lo, hi }) => {
                ScheduleSpec::new(ScheduleKind::Linear, lo, hi)?;
                (lo, hi)
            }
            None => (0.1, 0.3),
        };

        Ok(Self {
            model,
            schedule,
            dimension: file.dimension,
            seeds: file.seeds,
            runs,
            output_dir: file.output_dir,
            emit_plots: file.emit_plots,
            reference_resolution: file.reference_resolution,
            ablation_range,
        })
    }
}

pub fn method_from_file(m: &MethodFile) -> Result<Method> {
    Ok(match *m {
        MethodFile::Standard { guidance } => Method::Standard {
            guidance: match guidance.mode {
                GuidanceMode::Extrapolate => GuidanceSpec::extrapolate(guidance.weight)?,
                GuidanceMode::Interpolate => GuidanceSpec::interpolate(guidance.weight)?,
            },
        },
        MethodFile::Zigzag { omega_h, omega_l } => Method::Zigzag { omega_h, omega_l },
        MethodFile::Gps { lambda1, lambda2 } => {
            let spec =
                ScheduleSpec::new(lambda2.kind, lambda2.lo, lambda2.hi.unwrap_or(lambda2.lo))?;
            let spec = match lambda2.sharpness {
                Some(s) => spec.with_sharpness(s)?,
                None => spec,
            };
            Method::Gps {
                lambda1,
                lambda2: spec,
            }
        }
    })
}

//! Experiment configuration: one human-readable JSON document drives every
//! command; CLI flags override individual keys and the resolved config is
//! echoed into the output directory for auditability.

use std::path::{Path, PathBuf};

use mmdiff_core::net::NetConfig;
use mmdiff_core::pipeline::GrainDataConfig;
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub time_freqs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            grad_clip: 1.0,
            seed: 0,
            hidden_layers: 3,
            hidden_width: 256,
            time_freqs: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverParams {
    pub particles: usize,
    pub n_out: usize,
    pub noise_floor: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            particles: 256,
            n_out: 1,
            noise_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepParams {
    pub fractions: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            fractions: vec![0.01, 0.02, 0.05, 0.10],
            sigmas: vec![0.0],
            trials: 20,
            seed: 7777,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: GrainDataConfig,
    #[serde(default)]
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub sweep: SweepParams,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {path:?}: {e}")))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse config {path:?}: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = |cond: bool, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(CliError::Config(msg.to_string()))
            }
        };
        c(self.data.h >= 1 && self.data.w >= 1, "grid must be >= 1x1")?;
        c(self.data.grains >= 1, "need at least one grain")?;
        c(
            self.data.train_count >= 1 && self.data.val_count >= 1,
            "train and validation counts must be >= 1",
        )?;
        c(self.schedule.steps >= 1, "schedule needs >= 1 step")?;
        c(
            self.schedule.beta_start >= 0.0
                && self.schedule.beta_start <= self.schedule.beta_end
                && self.schedule.beta_end < 1.0,
            "betas must satisfy 0 <= start <= end < 1",
        )?;
        c(
            self.train.steps >= 1 && self.train.batch_size >= 1,
            "training needs positive steps and batch size",
        )?;
        c(
            self.train.hidden_layers >= 1
                && self.train.hidden_width >= 1
                && self.train.time_freqs >= 1,
            "network architecture fields must be positive",
        )?;
        c(
            self.solver.particles >= 1 && self.solver.n_out >= 1,
            "solver needs positive particle and output counts",
        )?;
        c(
            self.solver.n_out <= self.solver.particles,
            "n_out cannot exceed the particle count",
        )?;
        c(self.solver.noise_floor > 0.0, "noise floor must be positive")?;
        c(!self.sweep.fractions.is_empty(), "sweep fraction list is empty")?;
        for &f in &self.sweep.fractions {
            c(
                (0.0..=1.0).contains(&f),
                &format!("sweep fraction {f} outside [0, 1]"),
            )?;
        }
        c(!self.sweep.sigmas.is_empty(), "sweep sigma list is empty")?;
        for &s in &self.sweep.sigmas {
            c(s >= 0.0, &format!("sweep sigma {s} must be nonnegative"))?;
        }
        c(self.sweep.trials >= 1, "sweep needs at least one trial")?;
        Ok(())
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule, CliError> {
        NoiseSchedule::linear(
            self.schedule.steps,
            self.schedule.beta_start,
            self.schedule.beta_end,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            grad_clip: self.train.grad_clip,
            seed: self.train.seed,
        }
    }

    pub fn net_config(&self, input_dim: usize) -> NetConfig {
        NetConfig {
            input_dim,
            hidden_layers: self.train.hidden_layers,
            hidden_width: self.train.hidden_width,
            time_freqs: self.train.time_freqs,
        }
    }

    /// Stable 64-bit hash of the resolved config, recorded in output metadata.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

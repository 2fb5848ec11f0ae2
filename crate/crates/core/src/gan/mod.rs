//! Wasserstein GAN with gradient penalty over configuration matrices.
//!
//! The classic GAN objective is the two-player game
//! `min_G max_D E[log D(x)] + E[log(1 − D(G(z)))]`; it is kept here only as
//! background. What actually runs is the Wasserstein form: the critic
//! minimizes `mean D(fake) − mean D(real) + λ·penalty` and the generator
//! minimizes `−mean D(G(z))`, both with Adam.
//!
//! Three conditioning modes are supported: none, OS label (one-hot over ten
//! classes) and device type (nine-bit multi-label flags). The generator gets
//! the condition concatenated to its latent vector; the critic gets one
//! constant input channel per condition entry.

mod checkpoint;
mod discriminator;
mod generator;
mod penalty;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DeviceType, DeviceTypeLabels, OsLabel};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use discriminator::{CriticInput, Discriminator, DiscriminatorCache};
pub use generator::{Generator, GeneratorCache};
pub use penalty::{
    critic_loss, critic_loss_and_gradients, gradient_penalty, interpolate, penalty_from_gradients,
    Critic, CriticEval,
};
pub use train::{
    sample, sample_with_conditions, train, train_with, training_set, GanModel, StepRecord, TrainingReport,
};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("model is conditional; a condition is required")]
    ConditionRequired,
    #[error("model is unconditional; no condition is allowed")]
    ConditionNotAllowed,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("checkpoint i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
}

/// Optimization settings. Defaults are the published WGAN-GP settings for
/// this model family, with a 128-wide latent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub critic_iters: usize,
    pub gp_coefficient: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub total_steps: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 64,
            critic_iters: 3,
            gp_coefficient: 10.0,
            learning_rate: 0.0002,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            total_steps: 11844,
            latent_dim: 128,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Settings for short single-core runs with [`ArchConfig::desk`].
    pub fn desk() -> Self {
        Hyperparams {
            total_steps: 2000,
            ..Hyperparams::default()
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |msg: &str| Err(GanError::InvalidHyperparams(msg.to_owned()));
        if self.batch_size == 0 || self.critic_iters == 0 || self.latent_dim == 0 {
            return bad("batch_size, critic_iters and latent_dim must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.gp_coefficient.is_nan() || self.gp_coefficient < 0.0 {
            return bad("gp_coefficient must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Layer widths. The generator projects to `generator_widths[0]` channels on
/// a 4×2 grid, then four upsample+conv blocks narrow through the remaining
/// widths down to one output channel. The critic widens through
/// `discriminator_widths` (one stride-1 conv, then four stride-2 convs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub generator_widths: [usize; 4],
    pub discriminator_widths: [usize; 5],
    pub discriminator_kernel: usize,
    pub generator_kernel: usize,
    pub leaky_slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            generator_widths: [256, 128, 64, 32],
            discriminator_widths: [32, 64, 128, 256, 256],
            discriminator_kernel: 5,
            generator_kernel: 3,
            leaky_slope: 0.2,
        }
    }
}

impl ArchConfig {
    /// Narrow network for desk-scale runs on a single CPU core.
    pub fn compact() -> Self {
        ArchConfig {
            generator_widths: [64, 32, 16, 8],
            discriminator_widths: [8, 16, 32, 32, 32],
            ..ArchConfig::default()
        }
    }

    /// Compact generator with a narrow 3x3 critic. A 2000-step run fits a
    /// single CPU core in under half an hour.
    pub fn desk() -> Self {
        ArchConfig {
            generator_widths: [64, 32, 16, 8],
            discriminator_widths: [4, 8, 16, 16, 16],
            discriminator_kernel: 3,
            ..ArchConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    Unconditional,
    Os,
    DeviceType,
}

impl std::str::FromStr for ConditionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncond" | "unconditional" => Ok(ConditionMode::Unconditional),
            "os" => Ok(ConditionMode::Os),
            "dt" | "device_type" => Ok(ConditionMode::DeviceType),
            other => Err(format!("unknown mode {other:?} (expected uncond, os or dt)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub mode: ConditionMode,
    pub num_classes: usize,
    pub multi_label: bool,
}

impl ConditionSpec {
    pub fn new(mode: ConditionMode) -> Self {
        match mode {
            ConditionMode::Unconditional => ConditionSpec { mode, num_classes: 0, multi_label: false },
            ConditionMode::Os => ConditionSpec { mode, num_classes: OsLabel::KNOWN.len(), multi_label: false },
            ConditionMode::DeviceType => ConditionSpec {
                mode,
                num_classes: DeviceType::ALL.len(),
                multi_label: true,
            },
        }
    }

    pub fn unconditional() -> Self {
        ConditionSpec::new(ConditionMode::Unconditional)
    }

    pub fn is_conditional(&self) -> bool {
        self.mode != ConditionMode::Unconditional
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if *self != ConditionSpec::new(self.mode) {
            return Err(GanError::LabelMismatch(format!("inconsistent condition spec {self:?}")));
        }
        Ok(())
    }

    /// Condition vector for one sample.
    pub fn vector(&self, condition: &Condition) -> Result<Vec<f64>, GanError> {
        match (self.mode, condition) {
            (ConditionMode::Os, Condition::Os(label)) => {
                let index = label.class_index().ok_or_else(|| {
                    GanError::LabelMismatch("the Other label cannot condition the model".into())
                })?;
                let mut v = vec![0.0; self.num_classes];
                v[index] = 1.0;
                Ok(v)
            }
            (ConditionMode::DeviceType, Condition::DeviceTypes(flags)) => Ok(flags.to_flags().to_vec()),
            (ConditionMode::Unconditional, _) => Err(GanError::ConditionNotAllowed),
            (mode, c) => Err(GanError::LabelMismatch(format!("{c:?} does not fit {mode:?} mode"))),
        }
    }
}

/// A label the generator can be asked to honour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Os(OsLabel),
    DeviceTypes(DeviceTypeLabels),
}

impl Condition {
    /// Parses a CLI label for the given mode: an OS label name, or a
    /// comma-separated list of device types.
    pub fn parse(mode: ConditionMode, text: &str) -> Result<Condition, String> {
        match mode {
            ConditionMode::Os => text.parse::<OsLabel>().map(Condition::Os),
            ConditionMode::DeviceType => {
                let types = text
                    .split(',')
                    .map(|t| t.parse::<DeviceType>())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Condition::DeviceTypes(DeviceTypeLabels::from_types(&types)))
            }
            ConditionMode::Unconditional => Err("unconditional models take no label".into()),
        }
    }
}

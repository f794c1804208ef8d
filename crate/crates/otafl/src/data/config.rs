//! Declarative experiment configuration.
//!
//! One TOML file describes a reproducible run: seed, workload, channel,
//! schedule, and optional power control. `resolve()` materializes every
//! default into the struct so run metadata carries no hidden values, and
//! `digest()` hashes the resolved form; two runs with equal digests produce
//! equal trajectories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{FadingModel, OtaChannelConfig};
use crate::error::{Error, Result};
use crate::power::{AmplificationPolicy, SaddleDetectorConfig};
use crate::stable::StableParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workload: WorkloadConfig,
    pub num_ues: usize,
    pub rounds: u64,
    pub step_size: StepSizeSchedule,
    pub channel: ChannelSection,
    #[serde(default)]
    pub clip_threshold: Option<f64>,
    #[serde(default)]
    pub power_control: Option<PowerControlSection>,
    #[serde(default)]
    pub shard_strategy: ShardStrategy,
    #[serde(default)]
    pub local: LocalComputation,
    /// Aggregate coordinates beyond this amplitude flag the round as a
    /// spike. Resolved default: 10 * sigma.
    #[serde(default)]
    pub spike_threshold: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub id: String,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSizeSchedule {
    Constant { eta: f64 },
    /// `eta0 / (k + 1)^exponent`.
    PolyDecay { eta0: f64, exponent: f64 },
}

impl StepSizeSchedule {
    pub fn at(&self, round: u64) -> f64 {
        match *self {
            StepSizeSchedule::Constant { eta } => eta,
            StepSizeSchedule::PolyDecay { eta0, exponent } => {
                eta0 / ((round + 1) as f64).powf(exponent)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let eta0 = match *self {
            StepSizeSchedule::Constant { eta } => eta,
            StepSizeSchedule::PolyDecay { eta0, exponent } => {
                if !exponent.is_finite() || exponent < 0.0 {
                    return Err(Error::Config(format!(
                        "step-size decay exponent must be finite and >= 0, got {exponent}"
                    )));
                }
                eta0
            }
        };
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::Config(format!(
                "step size must be positive and finite, got {eta0}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub fading: FadingModel,
    pub alpha: f64,
    pub sigma: f64,
    /// Base receive noise scale; power control may boost it per round.
    pub noise_scale: f64,
}

impl ChannelSection {
    pub fn noise_params(&self) -> Result<StableParams> {
        StableParams::new(self.alpha, self.sigma)
    }

    pub fn to_channel(&self, num_ues: usize) -> Result<OtaChannelConfig> {
        let cfg = OtaChannelConfig {
            fading: self.fading,
            noise: self.noise_params()?,
            receive_noise_scale: self.noise_scale,
            num_ues,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerControlSection {
    pub detector: SaddleDetectorConfig,
    pub policy: AmplificationPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShardStrategy {
    /// Seeded shuffle, then equal contiguous chunks.
    #[default]
    IidEqual,
    /// Dataset order, equal contiguous chunks (a non-IID option for data
    /// with ordered structure).
    Contiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalComputation {
    /// Full-batch local gradients (plain GD); the acceptance setting.
    #[default]
    FullBatch,
    /// Per-round seeded subsampling of each shard.
    Minibatch { fraction: f64 },
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ues == 0 {
            return Err(Error::Config("num_ues must be at least 1".into()));
        }
        if self.workload.id.is_empty() {
            return Err(Error::Config("workload id must not be empty".into()));
        }
        self.step_size.validate()?;
        self.channel
            .noise_params()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.channel.noise_scale >= 0.0 && self.channel.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be finite and >= 0, got {}",
                self.channel.noise_scale
            )));
        }
        if let FadingModel::TruncatedInversion { threshold } = self.channel.fading {
            if !(threshold > 0.0) {
                return Err(Error::Config(
                    "truncated inversion threshold must be positive".into(),
                ));
            }
        }
        if let Some(c) = self.clip_threshold {
            if !(c > 0.0) {
                return Err(Error::Config(format!(
                    "clip_threshold must be positive, got {c}"
                )));
            }
        }
        if let Some(t) = self.spike_threshold {
            if !(t > 0.0) {
                return Err(Error::Config(format!(
                    "spike_threshold must be positive, got {t}"
                )));
            }
        }
        if let LocalComputation::Minibatch { fraction } = self.local {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "minibatch fraction must be in (0, 1], got {fraction}"
                )));
            }
        }
        if let Some(pc) = &self.power_control {
            pc.detector
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
            pc.policy
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Materialize every default so the config carries no hidden values.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.validate()?;
        let mut resolved = self.clone();
        if resolved.spike_threshold.is_none() {
            resolved.spike_threshold = Some(10.0 * resolved.channel.sigma);
        }
        Ok(resolved)
    }

    /// Hex SHA-256 of the resolved config's canonical TOML form.
    pub fn digest(&self) -> Result<String> {
        let resolved = self.resolve()?;
        let canonical =
            toml::to_string(&resolved).map_err(|e| Error::Config(format!("serialize: {e}")))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
seed = 7
num_ues = 4
rounds = 10

[workload]
id = "quadratic"
[workload.params]
dim = 3

[step_size]
kind = "constant"
eta = 0.5

[channel]
alpha = 1.5
sigma = 1.0
noise_scale = 0.0
[channel.fading]
model = "unit"
"#;

    #[test]
    fn parses_and_resolves_a_minimal_config() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(cfg.num_ues, 4);
        assert_eq!(cfg.step_size.at(0), 0.5);
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.spike_threshold, Some(10.0));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        let a = cfg.digest().unwrap();
        let b = cfg.digest().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(a, other.digest().unwrap());
    }

    #[test]
    fn rejects_invalid_fields() {
        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        cfg.num_ues = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        cfg.channel.alpha = 2.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        cfg.channel.sigma = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(EXAMPLE).unwrap();
        cfg.clip_threshold = Some(0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("bogus_key = 1\n{EXAMPLE}");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn decay_schedule_evaluates() {
        let s = StepSizeSchedule::PolyDecay {
            eta0: 1.0,
            exponent: 0.5,
        };
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_control_section_round_trips() {
        let text = format!(
            "{EXAMPLE}
[power_control.detector]
window = 5
grad_norm_threshold = 1e-3
loss_plateau_threshold = 1e-6
cooldown = 10

[power_control.policy]
boost_factor = 5.0
duration = 3
max_episodes = 2
min_scale = 0.2
"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let pc = cfg.power_control.as_ref().unwrap();
        assert_eq!(pc.detector.window, 5);
        assert_eq!(pc.policy.min_scale, 0.2);
        let text2 = toml::to_string(&cfg).unwrap();
        let cfg2 = ExperimentConfig::from_toml_str(&text2).unwrap();
        assert_eq!(cfg, cfg2);
    }
}

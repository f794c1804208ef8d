//! Analog multiple-access channel: per-client fading, superposition, and
//! interference injection.
//!
//! The server never sees individual gradients. One round of simultaneous
//! transmission yields
//!
//! ```text
//! out = (1/N) * sum_n h_n * g_n  +  receive_noise_scale * xi
//! ```
//!
//! with `xi` i.i.d. SaS per coordinate. Gradients and gains are real
//! scalars (post phase alignment). Fading and interference draw from
//! separate named substreams of the round seed, so toggling the fading
//! model never perturbs the interference realization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable::{sample_sas, StableParams};

/// Per-client effective amplitude gain model for one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FadingModel {
    /// Idealized inversion: every gain is exactly 1. Used wherever the
    /// noise effect must be isolated.
    Unit,
    /// I.i.d. Rayleigh gains, parameterized to unit mean.
    Rayleigh,
    /// Channel inversion with a truncation threshold: clients whose raw
    /// Rayleigh draw exceeds the threshold transmit with gain 1, the rest
    /// are excluded (gain 0) for the round.
    TruncatedInversion { threshold: f64 },
}

/// Channel configuration for one communication round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtaChannelConfig {
    pub fading: FadingModel,
    pub noise: StableParams,
    /// Multiplier applied to interference before aggregation; the
    /// power-control actuator. Zero disables interference entirely.
    pub receive_noise_scale: f64,
    pub num_ues: usize,
}

impl FadingModel {
    pub fn label(&self) -> &'static str {
        match self {
            FadingModel::Unit => "unit",
            FadingModel::Rayleigh => "rayleigh",
            FadingModel::TruncatedInversion { .. } => "truncated_inversion",
        }
    }
}

impl OtaChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_ues == 0 {
            return Err(Error::InvalidParameter(
                "channel needs at least one UE".into(),
            ));
        }
        if !(self.receive_noise_scale >= 0.0 && self.receive_noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "receive_noise_scale must be finite and >= 0, got {}",
                self.receive_noise_scale
            )));
        }
        if let FadingModel::TruncatedInversion { threshold } = self.fading {
            if !(threshold > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "truncated inversion threshold must be positive, got {threshold}"
                )));
            }
        }
        Ok(())
    }
}

/// Effective gains for one round; length equals `num_ues`, all entries >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    coefficients: Vec<f64>,
}

impl FadingDraw {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Build a draw directly; test hook for frozen-fading experiments.
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| *c < 0.0 || !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "fading coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(FadingDraw { coefficients })
    }
}

/// Rayleigh draw by inverse CDF, with the scale giving unit mean
/// (mean = scale * sqrt(pi/2)).
fn unit_mean_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let scale = (2.0 / std::f64::consts::PI).sqrt();
    let u: f64 = rng.sample(rand_distr::Open01);
    scale * (-2.0 * u.ln()).sqrt()
}

/// Draw the per-client gains for one round.
pub fn draw_fading<R: Rng + ?Sized>(config: &OtaChannelConfig, rng: &mut R) -> Result<FadingDraw> {
    config.validate()?;
    let coefficients = match config.fading {
        FadingModel::Unit => vec![1.0; config.num_ues],
        FadingModel::Rayleigh => (0..config.num_ues)
            .map(|_| unit_mean_rayleigh(rng))
            .collect(),
        FadingModel::TruncatedInversion { threshold } => (0..config.num_ues)
            .map(|_| {
                if unit_mean_rayleigh(rng) > threshold {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Ok(FadingDraw { coefficients })
}

/// Superpose the local gradients and add interference.
///
/// With `receive_noise_scale = 0` and unit fading the output is the exact
/// arithmetic mean: the accumulation order is the client order and no noise
/// term is touched, so the result is bit-identical to a plain sequential
/// mean. With a positive scale, the interference vector is the next `d`
/// draws of `sample_sas(config.noise)` from `rng`.
pub fn ota_aggregate<R: Rng + ?Sized>(
    local_gradients: &[Vec<f64>],
    fading: &FadingDraw,
    config: &OtaChannelConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    config.validate()?;
    if local_gradients.is_empty() {
        return Err(Error::EmptyInput("no gradients to aggregate".into()));
    }
    let n = local_gradients.len();
    if fading.coefficients.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} fading coefficients for {} clients",
            fading.coefficients.len(),
            n
        )));
    }
    let dim = local_gradients[0].len();
    for (i, g) in local_gradients.iter().enumerate() {
        if g.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "gradient {} has dimension {}, expected {}",
                i,
                g.len(),
                dim
            )));
        }
    }

    let mut out = vec![0.0; dim];
    for (h, grad) in fading.coefficients.iter().zip(local_gradients) {
        for (acc, g) in out.iter_mut().zip(grad) {
            *acc += h * g;
        }
    }
    let inv = n as f64;
    for acc in out.iter_mut() {
        *acc /= inv;
    }

    if config.receive_noise_scale > 0.0 {
        let noise = sample_sas(&config.noise, dim, rng)?;
        for (acc, xi) in out.iter_mut().zip(noise) {
            *acc += config.receive_noise_scale * xi;
        }
    }
    Ok(out)
}

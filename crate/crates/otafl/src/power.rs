//! Stagnation detection and interference amplification.
//!
//! The server watches round telemetry; when the gradient norm flatlines
//! together with the loss (a saddle region or a local minimum; the detector
//! cannot and does not distinguish them), it boosts the receive-side noise
//! scale for a few rounds so the interference kicks the model out. State is
//! explicit, so a recorded trajectory replays to the exact same schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::RoundRecord;
use crate::stable::StableParams;

/// Window test declaring stagnation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleDetectorConfig {
    /// Number of recent rounds inspected; at least 2.
    pub window: usize,
    /// Mean gradient norm below this counts as flat.
    pub grad_norm_threshold: f64,
    /// Maximum allowed loss decrease over the window.
    #[serde(default)]
    pub loss_plateau_threshold: f64,
    /// Rounds to wait after an amplification episode before another may
    /// start.
    #[serde(default)]
    pub cooldown: u64,
}

impl SaddleDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidParameter(format!(
                "detector window must be at least 2, got {}",
                self.window
            )));
        }
        if !(self.grad_norm_threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grad_norm_threshold must be positive, got {}",
                self.grad_norm_threshold
            )));
        }
        if !(self.loss_plateau_threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss_plateau_threshold must be nonnegative, got {}",
                self.loss_plateau_threshold
            )));
        }
        Ok(())
    }
}

/// How hard and how long to amplify once stagnation is detected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplificationPolicy {
    /// Multiplier (> 1) applied to the base receive noise scale during an
    /// episode.
    pub boost_factor: f64,
    /// Episode length in rounds, at least 1.
    pub duration: u64,
    /// Maximum number of episodes per run; 0 disables amplification.
    pub max_episodes: u32,
    /// Floor for the boosted scale. A multiplicative boost alone cannot
    /// lift a zero base scale, so runs that train noiselessly and inject
    /// interference only on detection set this to the desired episode
    /// scale.
    #[serde(default)]
    pub min_scale: f64,
}

impl AmplificationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.boost_factor > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "boost_factor must exceed 1, got {}",
                self.boost_factor
            )));
        }
        if self.duration == 0 {
            return Err(Error::InvalidParameter(
                "episode duration must be at least 1 round".into(),
            ));
        }
        if !(self.min_scale >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "min_scale must be nonnegative, got {}",
                self.min_scale
            )));
        }
        Ok(())
    }

    fn episode_scale(&self, base_scale: f64) -> f64 {
        (base_scale * self.boost_factor).max(self.min_scale)
    }
}

/// Pure window test: true iff the mean gradient norm over the window is
/// below `grad_norm_threshold` AND the loss decreased by less than
/// `loss_plateau_threshold` from the first to the last record.
///
/// Requires exactly `window` records with consecutive round indices.
pub fn detect_stagnation(records: &[RoundRecord], config: &SaddleDetectorConfig) -> Result<bool> {
    config.validate()?;
    if records.len() != config.window {
        return Err(Error::ShapeMismatch(format!(
            "detector window of {} rounds, got {} records",
            config.window,
            records.len()
        )));
    }
    for pair in records.windows(2) {
        if pair[1].round != pair[0].round + 1 {
            return Err(Error::ShapeMismatch(format!(
                "detector window must be consecutive rounds, got {} then {}",
                pair[0].round, pair[1].round
            )));
        }
    }
    let mean_grad = records.iter().map(|r| r.grad_norm).sum::<f64>() / records.len() as f64;
    let decrease = records[0].train_loss - records[records.len() - 1].train_loss;
    Ok(mean_grad < config.grad_norm_threshold && decrease < config.loss_plateau_threshold)
}

/// Episode accounting carried across rounds; exact and replayable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeState {
    /// Episode active for rounds strictly below this.
    pub active_until: u64,
    /// First round at which a new episode may start.
    pub eligible_from: u64,
    pub episodes_used: u32,
}

/// Scale for round `k` given the base scale and a detection flag.
///
/// Outside episodes the base scale passes through. A detection at round `k`
/// (when allowed by `max_episodes` and the cooldown) starts an episode
/// covering rounds `k .. k + duration` at the boosted scale; `cooldown`
/// rounds must pass after an episode ends before another may start.
pub fn schedule_noise_scale(
    base_scale: f64,
    state: EpisodeState,
    policy: &AmplificationPolicy,
    cooldown: u64,
    detected: bool,
    round: u64,
) -> Result<(f64, EpisodeState)> {
    policy.validate()?;
    if !(base_scale >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "base scale must be nonnegative, got {base_scale}"
        )));
    }
    let mut next = state;
    if round < state.active_until {
        return Ok((policy.episode_scale(base_scale), next));
    }
    if detected && state.episodes_used < policy.max_episodes && round >= state.eligible_from {
        next.active_until = round + policy.duration;
        next.eligible_from = next.active_until + cooldown;
        next.episodes_used = state.episodes_used + 1;
        return Ok((policy.episode_scale(base_scale), next));
    }
    Ok((base_scale, next))
}

/// Recompute the per-round scale schedule from a recorded trajectory.
///
/// The schedule is a pure function of (trajectory, configs): replaying the
/// records reproduces the recorded `noise_scale` column exactly.
pub fn replay_schedule(
    records: &[RoundRecord],
    base_scale: f64,
    detector: &SaddleDetectorConfig,
    policy: &AmplificationPolicy,
) -> Result<Vec<f64>> {
    let mut controller = Controller::new(detector.clone(), policy.clone());
    let mut scales = Vec::with_capacity(records.len());
    for k in 0..records.len() {
        let scale = controller.scale_for_round(base_scale, &records[..k], k as u64)?;
        scales.push(scale);
    }
    Ok(scales)
}

/// Per-run controller: decides the scale for round `k` from the records of
/// rounds `0..k`.
#[derive(Debug, Clone)]
pub struct Controller {
    detector: SaddleDetectorConfig,
    policy: AmplificationPolicy,
    state: EpisodeState,
}

impl Controller {
    pub fn new(detector: SaddleDetectorConfig, policy: AmplificationPolicy) -> Self {
        Controller {
            detector,
            policy,
            state: EpisodeState::default(),
        }
    }

    pub fn scale_for_round(
        &mut self,
        base_scale: f64,
        history: &[RoundRecord],
        round: u64,
    ) -> Result<f64> {
        let detected = if history.len() >= self.detector.window {
            detect_stagnation(&history[history.len() - self.detector.window..], &self.detector)?
        } else {
            false
        };
        let (scale, next) = schedule_noise_scale(
            base_scale,
            self.state,
            &self.policy,
            self.detector.cooldown,
            detected,
            round,
        )?;
        self.state = next;
        Ok(scale)
    }
}

/// Effective-SNR description of a channel setting.
///
/// Interference with `alpha < 2` has infinite variance, so no variance-ratio
/// SNR exists; the report carries the signal power with the effective noise
/// scale and tail index instead. For `alpha = 2` the classical ratio
/// `signal_power / (2 sigma^2 scale^2)` is reported as well, and a zero
/// noise scale reports an infinite SNR for any alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrReport {
    pub signal_power: f64,
    pub alpha: f64,
    /// sigma times the receive noise scale.
    pub effective_noise_scale: f64,
    pub classical_snr: Option<f64>,
}

pub fn snr_report(signal_power: f64, noise_scale: f64, noise: &StableParams) -> Result<SnrReport> {
    if !(signal_power >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "signal power must be nonnegative, got {signal_power}"
        )));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be nonnegative, got {noise_scale}"
        )));
    }
    let effective = noise.scale() * noise_scale;
    let classical_snr = if noise_scale == 0.0 {
        Some(f64::INFINITY)
    } else if noise.alpha() == 2.0 {
        Some(signal_power / (2.0 * effective * effective))
    } else {
        None
    };
    Ok(SnrReport {
        signal_power,
        alpha: noise.alpha(),
        effective_noise_scale: effective,
        classical_snr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: u64, loss: f64, grad: f64) -> RoundRecord {
        RoundRecord {
            round,
            train_loss: loss,
            test_metric: 0.0,
            grad_norm: grad,
            noise_scale: 0.0,
            step_size: 0.1,
            spike: false,
            event: String::new(),
        }
    }

    fn detector(window: usize, grad: f64, plateau: f64) -> SaddleDetectorConfig {
        SaddleDetectorConfig {
            window,
            grad_norm_threshold: grad,
            loss_plateau_threshold: plateau,
            cooldown: 0,
        }
    }

    fn policy(boost: f64, duration: u64, max: u32) -> AmplificationPolicy {
        AmplificationPolicy {
            boost_factor: boost,
            duration,
            max_episodes: max,
            min_scale: 0.0,
        }
    }

    #[test]
    fn large_gradients_are_not_stagnation() {
        let window: Vec<RoundRecord> = (0..4).map(|k| record(k, 1.0, 10.0)).collect();
        assert!(!detect_stagnation(&window, &detector(4, 0.1, 1.0)).unwrap());
    }

    #[test]
    fn flat_loss_and_tiny_gradients_are_stagnation() {
        let window: Vec<RoundRecord> = (0..4).map(|k| record(k, 1.0, 1e-6)).collect();
        assert!(detect_stagnation(&window, &detector(4, 0.1, 1e-3)).unwrap());
    }

    #[test]
    fn decreasing_loss_is_not_stagnation() {
        let window: Vec<RoundRecord> = (0..4)
            .map(|k| record(k, 1.0 - 0.5 * k as f64, 1e-6))
            .collect();
        assert!(!detect_stagnation(&window, &detector(4, 0.1, 1e-3)).unwrap());
    }

    #[test]
    fn detector_checks_window_shape() {
        let short: Vec<RoundRecord> = (0..3).map(|k| record(k, 1.0, 1.0)).collect();
        assert!(detect_stagnation(&short, &detector(4, 0.1, 1.0)).is_err());
        let gap = vec![record(0, 1.0, 1.0), record(2, 1.0, 1.0)];
        assert!(detect_stagnation(&gap, &detector(2, 0.1, 1.0)).is_err());
    }

    #[test]
    fn detector_is_monotone_in_thresholds() {
        let window: Vec<RoundRecord> = (0..4).map(|k| record(k, 1.0, 0.05)).collect();
        let base = detector(4, 0.1, 1e-3);
        let fired = detect_stagnation(&window, &base).unwrap();
        assert!(fired);
        // Raising either threshold never turns a true into a false.
        for (grad, plateau) in [(0.2, 1e-3), (0.1, 1.0), (5.0, 5.0)] {
            assert!(detect_stagnation(&window, &detector(4, grad, plateau)).unwrap());
        }
    }

    #[test]
    fn no_detection_means_base_scale() {
        let pol = policy(5.0, 3, 1);
        let mut state = EpisodeState::default();
        for k in 0..20 {
            let (scale, next) = schedule_noise_scale(0.1, state, &pol, 0, false, k).unwrap();
            assert_eq!(scale, 0.1);
            state = next;
        }
    }

    #[test]
    fn detection_boosts_for_duration_rounds() {
        let pol = policy(5.0, 3, 1);
        let mut state = EpisodeState::default();
        let mut scales = Vec::new();
        for k in 0..15 {
            let detected = k == 10;
            let (scale, next) = schedule_noise_scale(0.1, state, &pol, 0, detected, k).unwrap();
            scales.push(scale);
            state = next;
        }
        for (k, scale) in scales.iter().enumerate() {
            let expected = if (10..13).contains(&k) { 0.5 } else { 0.1 };
            assert!(
                (scale - expected).abs() < 1e-15,
                "round {}: {} vs {}",
                k,
                scale,
                expected
            );
        }
    }

    #[test]
    fn max_episodes_caps_detections() {
        let pol = policy(5.0, 2, 1);
        let mut state = EpisodeState::default();
        let mut boosted_rounds = 0;
        for k in 0..30 {
            let detected = k == 5 || k == 20;
            let (scale, next) = schedule_noise_scale(0.1, state, &pol, 0, detected, k).unwrap();
            if scale > 0.1 {
                boosted_rounds += 1;
            }
            state = next;
        }
        assert_eq!(boosted_rounds, 2, "second detection must be ignored");
    }

    #[test]
    fn min_scale_lifts_a_zero_base() {
        let pol = AmplificationPolicy {
            boost_factor: 5.0,
            duration: 2,
            max_episodes: 1,
            min_scale: 0.25,
        };
        let (scale, _) =
            schedule_noise_scale(0.0, EpisodeState::default(), &pol, 0, true, 3).unwrap();
        assert_eq!(scale, 0.25);
    }

    #[test]
    fn controller_replays_its_own_schedule() {
        let det = detector(3, 0.5, 1e-3);
        let pol = policy(4.0, 2, 3);
        // A trajectory that stalls twice.
        let mut records = Vec::new();
        for k in 0..30u64 {
            let grad = if (5..12).contains(&k) || (20..26).contains(&k) {
                0.01
            } else {
                3.0
            };
            records.push(record(k, 1.0, grad));
        }
        let mut controller = Controller::new(det.clone(), pol.clone());
        let mut recorded = Vec::new();
        for k in 0..records.len() {
            let s = controller
                .scale_for_round(0.1, &records[..k], k as u64)
                .unwrap();
            records[k].noise_scale = s;
            recorded.push(s);
        }
        let replayed = replay_schedule(&records, 0.1, &det, &pol).unwrap();
        assert_eq!(recorded, replayed);
        assert!(recorded.iter().any(|s| *s > 0.1));
    }

    #[test]
    fn cooldown_blocks_back_to_back_episodes() {
        let det = SaddleDetectorConfig {
            window: 2,
            grad_norm_threshold: 0.5,
            loss_plateau_threshold: 1.0,
            cooldown: 10,
        };
        let pol = policy(4.0, 2, 10);
        let mut controller = Controller::new(det, pol);
        // Permanently stalled trajectory: detector fires every round.
        let records: Vec<RoundRecord> = (0..30).map(|k| record(k, 1.0, 0.0)).collect();
        let mut scales = Vec::new();
        for k in 0..records.len() {
            scales.push(
                controller
                    .scale_for_round(0.1, &records[..k], k as u64)
                    .unwrap(),
            );
        }
        // First episode at rounds 2-3 (first full window), next one no
        // earlier than 4 + 10.
        assert!(scales[2] > 0.1 && scales[3] > 0.1);
        assert!(scales[4..14].iter().all(|s| *s == 0.1), "{:?}", scales);
        assert!(scales[14] > 0.1);
    }

    #[test]
    fn detector_fires_fast_on_the_pca_saddle() {
        // Saddle-adjacent init on the exact spiked instance: the gradient
        // is exactly zero, so the detector must fire within the first two
        // windows and the schedule must boost the scale.
        use crate::data::mnist::DataEnv;
        use crate::suites::pca_escape_config;
        let run = crate::fl::train(&pca_escape_config(1, true), &DataEnv::default()).unwrap();
        let detector_window = 10;
        let first_boost = run
            .records
            .iter()
            .position(|r| r.noise_scale > 0.0)
            .expect("amplification never fired");
        assert!(
            first_boost < 2 * detector_window,
            "first boost at round {first_boost}"
        );
        assert!(run.records[first_boost].event.contains("scale_change"));

        // The recorded schedule replays exactly from the trajectory.
        let cfg = pca_escape_config(1, true);
        let pc = cfg.power_control.as_ref().unwrap();
        let replayed =
            replay_schedule(&run.records, cfg.channel.noise_scale, &pc.detector, &pc.policy)
                .unwrap();
        let recorded: Vec<f64> = run.records.iter().map(|r| r.noise_scale).collect();
        assert_eq!(replayed, recorded);
    }

    #[test]
    fn snr_report_follows_alpha() {
        let gauss = StableParams::new(2.0, 1.0).unwrap();
        let r = snr_report(2.0, 1.0, &gauss).unwrap();
        assert_eq!(r.classical_snr, Some(1.0));

        let heavy = StableParams::new(1.5, 1.0).unwrap();
        let r = snr_report(2.0, 1.0, &heavy).unwrap();
        assert_eq!(r.classical_snr, None);
        assert_eq!(r.effective_noise_scale, 1.0);
        assert_eq!(r.alpha, 1.5);

        let r = snr_report(2.0, 0.0, &heavy).unwrap();
        assert_eq!(r.classical_snr, Some(f64::INFINITY));
    }
}

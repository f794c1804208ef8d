//! Symmetric alpha-stable (SaS) interference model.
//!
//! The interference on the analog uplink is heavy-tailed; a SaS law with
//! tail index `alpha` in (0, 2] and scale `sigma` captures it. `alpha = 1`
//! is Cauchy, `alpha = 2` is Gaussian with variance `2 sigma^2`, and smaller
//! `alpha` produces more extreme amplitude spikes. Moments of order >= alpha
//! are infinite for alpha < 2, so diagnostics here avoid variances and work
//! through the characteristic function `exp(-sigma^alpha |t|^alpha)` and
//! tail counts instead.
//!
//! Sampling uses the Chambers-Mallows-Stuck transform (uniform angle plus
//! unit exponential), which is exact for every alpha. The `alpha = 1` branch
//! uses its dedicated form `sigma * tan(U)` and `alpha = 2` delegates to a
//! standard normal draw scaled by `sigma * sqrt(2)`.

use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a symmetric alpha-stable law with location 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStableParams")]
pub struct StableParams {
    alpha: f64,
    scale: f64,
}

#[derive(Deserialize)]
struct RawStableParams {
    alpha: f64,
    #[serde(alias = "sigma")]
    scale: f64,
}

impl TryFrom<RawStableParams> for StableParams {
    type Error = Error;
    fn try_from(raw: RawStableParams) -> Result<Self> {
        StableParams::new(raw.alpha, raw.scale)
    }
}

impl StableParams {
    /// Requires `0 < alpha <= 2` and `scale > 0`.
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "tail index alpha must be in (0, 2], got {alpha}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale sigma must be positive and finite, got {scale}"
            )));
        }
        Ok(StableParams { alpha, scale })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Characteristic function `E[exp(i t X)] = exp(-(sigma |t|)^alpha ... )`,
    /// i.e. `exp(-sigma^alpha * |t|^alpha)`. Real, even in `t`, in (0, 1].
    pub fn char_fn(&self, t: f64) -> f64 {
        (-(self.scale.powf(self.alpha) * t.abs().powf(self.alpha))).exp()
    }

    /// One draw from SaS(alpha, sigma).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * standard_sas(self.alpha, rng)
    }
}

/// One draw from SaS(alpha, 1) via the Chambers-Mallows-Stuck transform.
fn standard_sas<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return std::f64::consts::SQRT_2 * z;
    }
    let u: f64 = rng.sample(Open01);
    let v = std::f64::consts::PI * (u - 0.5); // uniform on (-pi/2, pi/2)
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE);
    let inv_alpha = 1.0 / alpha;
    (alpha * v).sin() / v.cos().powf(inv_alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) * inv_alpha)
}

/// `count` i.i.d. draws from SaS(params). Identical (seed, params, count)
/// yields a bit-identical vector.
pub fn sample_sas<R: Rng + ?Sized>(
    params: &StableParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::EmptyInput("sample count must be at least 1".into()));
    }
    Ok((0..count).map(|_| params.sample(rng)).collect())
}

/// `exp(-sigma^alpha |t|^alpha)`; see [`StableParams::char_fn`].
pub fn char_fn(params: &StableParams, t: f64) -> f64 {
    params.char_fn(t)
}

const TAIL_ESTIMATE_MIN_SAMPLES: usize = 10_000;
/// Fixed grid the log-log characteristic-function regression runs over.
const TAIL_ESTIMATE_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
/// Empirical characteristic-function magnitudes below this are clamped
/// before taking logs.
const CHAR_FN_CLAMP: f64 = 1e-12;

/// Estimate the tail index from samples.
///
/// For SaS data, `-log phi(t) = sigma^alpha t^alpha`, so the slope of
/// `log(-log |phi_hat(t)|)` against `log t` over a fixed grid is `alpha`.
/// This stays well-behaved near `alpha = 2`, where order-statistics
/// estimators degrade. Samples are first normalized by their median
/// absolute value (the tail index is scale-invariant) so the grid sits in
/// the informative region of the characteristic function. The estimate is
/// clamped to (0, 2], the valid stable range.
///
/// Requires at least 10^4 samples; with 10^6 draws the estimate is within
/// 0.05 of the true index for alpha in [1.1, 2.0].
pub fn estimate_tail_index(samples: &[f64]) -> Result<f64> {
    if samples.len() < TAIL_ESTIMATE_MIN_SAMPLES {
        return Err(Error::SampleSize {
            needed: TAIL_ESTIMATE_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    Ok(tail_index_unchecked(samples))
}

fn tail_index_unchecked(samples: &[f64]) -> f64 {
    let scale = median_abs(samples);
    if scale <= 0.0 || !scale.is_finite() {
        // Degenerate data (e.g. all zeros) has no meaningful tail; report
        // the lightest stable index.
        return 2.0;
    }
    let n = samples.len() as f64;
    let mut xs = Vec::with_capacity(TAIL_ESTIMATE_GRID.len());
    let mut ys = Vec::with_capacity(TAIL_ESTIMATE_GRID.len());
    for &t in &TAIL_ESTIMATE_GRID {
        let mut acc = 0.0;
        for &x in samples {
            acc += (t * x / scale).cos();
        }
        let phi = (acc / n).abs().max(CHAR_FN_CLAMP).min(1.0 - CHAR_FN_CLAMP);
        let y = (-phi.ln()).ln();
        if y.is_finite() {
            xs.push(t.ln());
            ys.push(y);
        }
    }
    if xs.len() < 2 {
        return 2.0;
    }
    let slope = regression_slope(&xs, &ys);
    slope.clamp(0.01, 2.0)
}

fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn median_abs(samples: &[f64]) -> f64 {
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    }
}

/// Amplitude-spike summary of a sample vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeDiagnostics {
    /// Amplitude cutoff the rate was computed against.
    pub threshold: f64,
    /// Fraction of samples with `|x| > threshold`.
    pub spike_rate: f64,
    /// Best-effort tail index estimate of the samples (always > 0; degenerate
    /// inputs report 2.0, the lightest stable tail).
    pub empirical_tail_exponent: f64,
}

/// Count the fraction of samples beyond `threshold` and estimate the tail.
///
/// The spike rate is monotone nonincreasing in the threshold and invariant
/// under a sign flip of all samples.
pub fn spike_diagnostics(samples: &[f64], threshold: f64) -> Result<SpikeDiagnostics> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("spike diagnostics need samples".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spike threshold must be positive, got {threshold}"
        )));
    }
    let spikes = samples.iter().filter(|x| x.abs() > threshold).count();
    Ok(SpikeDiagnostics {
        threshold,
        spike_rate: spikes as f64 / samples.len() as f64,
        empirical_tail_exponent: tail_index_unchecked(samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;

    fn draws(alpha: f64, scale: f64, n: usize, label: &str) -> Vec<f64> {
        let params = StableParams::new(alpha, scale).unwrap();
        let mut rng = derive_rng(42, &["stable-test", label]);
        sample_sas(&params, n, &mut rng).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(StableParams::new(0.0, 1.0).is_err());
        assert!(StableParams::new(2.1, 1.0).is_err());
        assert!(StableParams::new(1.5, 0.0).is_err());
        assert!(StableParams::new(1.5, -1.0).is_err());
        assert!(StableParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn zero_count_is_an_error() {
        let params = StableParams::new(1.5, 1.0).unwrap();
        let mut rng = derive_rng(0, &["zero"]);
        assert!(matches!(
            sample_sas(&params, 0, &mut rng),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn identical_seed_gives_identical_samples() {
        let a = draws(1.3, 2.0, 1000, "det");
        let b = draws(1.3, 2.0, 1000, "det");
        assert_eq!(a, b);
    }

    #[test]
    fn alpha_two_reduces_to_gaussian_variance() {
        // SaS(2, sigma) is N(0, 2 sigma^2): empirical variance near 2.
        let xs = draws(2.0, 1.0, 100_000, "gauss-var");
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 2.0).abs() < 0.1, "variance {} not within 5% of 2", var);
    }

    #[test]
    fn alpha_one_reduces_to_cauchy_cdf() {
        // Standard Cauchy: F(0) = 0.5, F(1) = 0.75.
        let xs = draws(1.0, 1.0, 100_000, "cauchy-cdf");
        let n = xs.len() as f64;
        let at = |q: f64| xs.iter().filter(|x| **x <= q).count() as f64 / n;
        assert!((at(0.0) - 0.5).abs() < 0.01);
        assert!((at(1.0) - 0.75).abs() < 0.01);
    }

    #[test]
    fn tail_law_constant_at_alpha_1_5() {
        // P(|X| > K) * K^alpha approaches 2 C_alpha = sin(pi a/2) Gamma(a) * 2/pi
        // which is ~0.399 at alpha = 1.5. Monte-Carlo at K = 10 and K = 100.
        let xs = draws(1.5, 1.0, 1_000_000, "tail-law");
        let n = xs.len() as f64;
        for k in [10.0_f64, 31.6, 100.0] {
            let p = xs.iter().filter(|x| x.abs() > k).count() as f64 / n;
            let c = p * k.powf(1.5);
            assert!(
                (0.3..0.5).contains(&c),
                "tail constant {} at K = {} outside band",
                c,
                k
            );
        }
    }

    #[test]
    fn char_fn_examples() {
        let p = StableParams::new(2.0, 1.0).unwrap();
        assert!((char_fn(&p, 1.0) - (-1.0_f64).exp()).abs() < 1e-12);
        assert_eq!(char_fn(&p, 0.0), 1.0);
        // 0.5^1.5 * 2^1.5 = 1, so this is exp(-1) exactly.
        let p = StableParams::new(1.5, 0.5).unwrap();
        assert!((char_fn(&p, 2.0) - (-1.0_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn char_fn_is_even_and_bounded() {
        let p = StableParams::new(1.3, 0.7).unwrap();
        for t in [-3.0, -0.5, 0.1, 2.0] {
            let v = char_fn(&p, t);
            assert_eq!(v, char_fn(&p, -t));
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn empirical_char_fn_matches_closed_form() {
        // max_t |mean cos(tX) - exp(-sigma^a |t|^a)| < 0.02 at n = 10^6.
        for (i, alpha) in [1.0, 1.5, 2.0].iter().enumerate() {
            let params = StableParams::new(*alpha, 1.0).unwrap();
            let xs = draws(*alpha, 1.0, 1_000_000, &format!("ecf-{i}"));
            for t in [0.5, 1.0, 2.0, 3.0_f64] {
                for t in [t, -t] {
                    let emp = xs.iter().map(|x| (t * x).cos()).sum::<f64>() / xs.len() as f64;
                    let diff = (emp - char_fn(&params, t)).abs();
                    assert!(diff < 0.02, "alpha {} t {}: |ecf - cf| = {}", alpha, t, diff);
                }
            }
        }
    }

    #[test]
    fn tail_index_recovered_at_1_5() {
        let xs = draws(1.5, 1.0, 1_000_000, "est-1.5");
        let a = estimate_tail_index(&xs).unwrap();
        assert!((1.45..=1.55).contains(&a), "estimate {}", a);
    }

    #[test]
    fn tail_index_recovered_at_1_1() {
        let xs = draws(1.1, 1.0, 1_000_000, "est-1.1");
        let a = estimate_tail_index(&xs).unwrap();
        assert!((1.05..=1.15).contains(&a), "estimate {}", a);
    }

    #[test]
    fn tail_index_of_reference_gaussian() {
        // Draws from an independent normal generator, not our CMS path.
        use rand_distr::Distribution;
        let mut rng = derive_rng(42, &["stable-test", "ref-normal"]);
        let normal = rand_distr::Normal::new(0.0, std::f64::consts::SQRT_2).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
        let a = estimate_tail_index(&xs).unwrap();
        assert!((1.95..=2.0).contains(&a), "estimate {}", a);
    }

    #[test]
    fn tail_index_is_scale_invariant() {
        let xs = draws(1.5, 1.0, 200_000, "est-scale");
        let scaled: Vec<f64> = xs.iter().map(|x| 37.0 * x).collect();
        let a = estimate_tail_index(&xs).unwrap();
        let b = estimate_tail_index(&scaled).unwrap();
        assert!((a - b).abs() < 0.02, "{} vs {}", a, b);
    }

    #[test]
    fn tail_index_needs_enough_samples() {
        let xs = vec![1.0; 100];
        assert!(matches!(
            estimate_tail_index(&xs),
            Err(Error::SampleSize { .. })
        ));
    }

    #[test]
    fn spike_diagnostics_on_zeros() {
        let d = spike_diagnostics(&vec![0.0; 64], 3.0).unwrap();
        assert_eq!(d.spike_rate, 0.0);
        assert!(d.empirical_tail_exponent > 0.0);
    }

    #[test]
    fn spike_diagnostics_rejects_bad_input() {
        assert!(spike_diagnostics(&[], 1.0).is_err());
        assert!(spike_diagnostics(&[1.0], 0.0).is_err());
    }

    #[test]
    fn heavier_tails_spike_more() {
        // At threshold 10 sigma the asymptotic rates are ~3.5e-2 (alpha 1.2)
        // and ~1.2e-3 (alpha 1.9); Gaussian is below 1e-6, typically zero.
        let heavy = spike_diagnostics(&draws(1.2, 1.0, 1_000_000, "spike-1.2"), 10.0).unwrap();
        let light = spike_diagnostics(&draws(1.9, 1.0, 1_000_000, "spike-1.9"), 10.0).unwrap();
        let gauss = spike_diagnostics(&draws(2.0, 1.0, 1_000_000, "spike-2.0"), 10.0).unwrap();
        assert!(heavy.spike_rate > light.spike_rate);
        assert!((0.02..0.05).contains(&heavy.spike_rate), "{}", heavy.spike_rate);
        assert!((5e-4..3e-3).contains(&light.spike_rate), "{}", light.spike_rate);
        assert!(gauss.spike_rate < 1e-6, "{}", gauss.spike_rate);
    }

    #[test]
    fn samples_are_symmetric() {
        let xs = draws(1.5, 1.0, 1_000_000, "sym");
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        // 5 sigma / sqrt(n) confidence band around 0.
        assert!(median.abs() < 5.0 / (xs.len() as f64).sqrt(), "median {}", median);
    }

    #[test]
    fn sign_flip_leaves_diagnostics_unchanged() {
        let xs = draws(1.3, 1.0, 50_000, "flip");
        let flipped: Vec<f64> = xs.iter().map(|x| -x).collect();
        let a = spike_diagnostics(&xs, 5.0).unwrap();
        let b = spike_diagnostics(&flipped, 5.0).unwrap();
        assert_eq!(a.spike_rate, b.spike_rate);
        assert_eq!(a.empirical_tail_exponent, b.empirical_tail_exponent);
    }

    #[test]
    fn fractional_moments_respect_alpha_order() {
        // alpha = 1.5: E|X|^p is finite for p = 1 and infinite for p = 2.
        // Over nested prefixes of one stream the p = 1 mean stabilizes under
        // doubling n while the p = 2 mean swings by multiples (it is pinned
        // to the running maximum) and keeps growing.
        let xs = draws(1.5, 1.0, 800_000, "moments-b");
        let mean_p = |n: usize, p: f64| xs[..n].iter().map(|x| x.abs().powf(p)).sum::<f64>() / n as f64;
        let ns = [100_000, 200_000, 400_000, 800_000];
        let m1: Vec<f64> = ns.iter().map(|&n| mean_p(n, 1.0)).collect();
        let m2: Vec<f64> = ns.iter().map(|&n| mean_p(n, 2.0)).collect();
        let span = |m: &[f64]| {
            m.iter().cloned().fold(f64::MIN, f64::max) / m.iter().cloned().fold(f64::MAX, f64::min)
        };
        assert!(span(&m1) < 1.1, "p=1 should stabilize: {:?}", m1);
        assert!(span(&m2) > 2.0, "p=2 should swing: {:?}", m2);
        assert!(m2[3] > 2.0 * m2[0], "p=2 should grow with n: {:?}", m2);
    }
}


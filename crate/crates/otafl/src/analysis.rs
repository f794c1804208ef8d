//! Trajectory analysis: the alpha-norm, convergence-order fitting, and the
//! rolling-variability stability metric.

use crate::error::{Error, Result};

/// `(sum_i |x_i|^alpha)^(1/alpha)`.
///
/// The distance used when variances are infinite; at `alpha = 2` it is the
/// Euclidean norm.
pub fn alpha_norm(x: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha-norm needs alpha in (0, 2], got {alpha}"
        )));
    }
    let sum: f64 = x.iter().map(|v| v.abs().powf(alpha)).sum();
    Ok(sum.powf(1.0 / alpha))
}

/// Fitted decay exponent of an optimality-gap trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `q` in `gap_k ~ C / k^q`.
    pub exponent: f64,
    /// Regression standard error of the exponent.
    pub std_error: f64,
    /// Points entering the fit.
    pub points: usize,
}

/// Least-squares slope of `log(loss_k - optimum)` against `log k` over
/// rounds after `burn_in` (rounds are 1-indexed for the fit, so round
/// index 0 is k = 1).
///
/// Every gap after burn-in must be positive; a divergent or
/// already-optimal trajectory is a domain error.
pub fn fit_convergence_order(losses: &[f64], optimum: f64, burn_in: usize) -> Result<RateFit> {
    if losses.len() < burn_in + 3 {
        return Err(Error::ShapeMismatch(format!(
            "rate fit needs at least 3 rounds after burn-in, got {} with burn-in {}",
            losses.len(),
            burn_in
        )));
    }
    let mut xs = Vec::with_capacity(losses.len() - burn_in);
    let mut ys = Vec::with_capacity(losses.len() - burn_in);
    for (idx, loss) in losses.iter().enumerate().skip(burn_in) {
        let gap = loss - optimum;
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(Error::Domain(format!(
                "non-positive optimality gap {gap} at round {idx}"
            )));
        }
        xs.push(((idx + 1) as f64).ln());
        ys.push(gap.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fitted = my + slope * (x - mx);
            (y - fitted) * (y - fitted)
        })
        .sum();
    let df = (xs.len() as f64 - 2.0).max(1.0);
    let std_error = (ssr / df / sxx).sqrt();
    Ok(RateFit {
        exponent: -slope,
        std_error,
        points: xs.len(),
    })
}

/// Mean over sliding windows of the (population) standard deviation of
/// the losses inside each window.
pub fn stability_metric(losses: &[f64], window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::InvalidParameter(format!(
            "stability window must be at least 2, got {window}"
        )));
    }
    if losses.len() <= window {
        return Err(Error::ShapeMismatch(format!(
            "stability metric needs more than {window} rounds, got {}",
            losses.len()
        )));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for w in losses.windows(window) {
        let mean = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / window as f64;
        acc += var.sqrt();
        count += 1;
    }
    Ok(acc / count as f64)
}

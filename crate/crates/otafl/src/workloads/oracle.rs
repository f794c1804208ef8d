//! Centralized reference optimizers.
//!
//! `centralized_gd` is the noiseless reference the federated loop must
//! reproduce bit-for-bit when the channel is ideal (zero noise, unit
//! fading): plain full-batch gradient descent on the pooled objective,
//! emitting the same per-round telemetry. `ista` is the proximal-gradient
//! reference for the LASSO objective.

use crate::data::config::StepSizeSchedule;
use crate::error::Result;
use crate::fl::RoundRecord;
use crate::linalg::{l2_norm, leading_eigenpair, Matrix};
use crate::workloads::lasso::soft_threshold;
use crate::workloads::Workload;

/// Full-batch gradient descent on the pooled objective.
///
/// Emits the same telemetry as a zero-noise unit-fading federated round,
/// including the amplitude-spike flag at `spike_threshold`.
pub fn centralized_gd(
    workload: &dyn Workload,
    initial: Vec<f64>,
    schedule: &StepSizeSchedule,
    rounds: u64,
    spike_threshold: f64,
) -> Result<(Vec<RoundRecord>, Vec<f64>)> {
    let mut params = initial;
    let mut records = Vec::with_capacity(rounds as usize);
    for k in 0..rounds {
        let (loss, grad) = workload.pooled_loss_and_gradient(&params)?;
        let metric = workload.test_metric(&params);
        let eta = schedule.at(k);
        let spike = grad.iter().any(|g| g.abs() > spike_threshold);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= eta * g;
        }
        records.push(RoundRecord {
            round: k,
            train_loss: loss,
            test_metric: metric,
            grad_norm: l2_norm(&grad),
            noise_scale: 0.0,
            step_size: eta,
            spike,
            event: String::new(),
        });
    }
    Ok((records, params))
}

/// Proximal gradient (ISTA) for `1/2 ||A x - b||^2 + lambda ||x||_1`,
/// with step `1 / lambda_max(A'A)`. Runs until the iterate moves less
/// than `tol` or the iteration budget is spent; returns the solution and
/// its objective value.
pub fn ista(
    design: &Matrix,
    targets: &[f64],
    l1_weight: f64,
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let gram = design.gram();
    let (lipschitz, _) = leading_eigenpair(&gram, 1000);
    let step = 1.0 / lipschitz.max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; design.cols()];
    for _ in 0..max_iters {
        let residual: Vec<f64> = design
            .matvec(&x)
            .iter()
            .zip(targets)
            .map(|(ax, b)| ax - b)
            .collect();
        let grad = design.t_matvec(&residual);
        let mut delta = 0.0;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            let next = soft_threshold(*xi - step * gi, step * l1_weight);
            delta += (next - *xi) * (next - *xi);
            *xi = next;
        }
        if delta.sqrt() < tol {
            break;
        }
    }
    let residual: f64 = design
        .matvec(&x)
        .iter()
        .zip(targets)
        .map(|(ax, b)| (ax - b) * (ax - b))
        .sum();
    let objective = 0.5 * residual + l1_weight * x.iter().map(|v| v.abs()).sum::<f64>();
    (x, objective)
}

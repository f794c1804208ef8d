//! Strongly convex quadratic with per-client centers.
//!
//! Client n owns `f_n(w) = 1/2 sum_j q_j (w_j - c_{n,j})^2`; the global
//! objective is their uniform average, minimized at the center mean with a
//! closed-form optimal value. This is the controlled workload for
//! convergence-rate measurements: the optimality gap is exact, the
//! smoothness constant is `max q_j`, and noiseless GD has textbook
//! geometry.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::{parse_params, BuildContext, Task, Workload, WorkloadFactory};
use crate::error::{Error, Result};
use crate::seed::derive_rng;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticParams {
    pub dim: usize,
    /// Diagonal curvature, identical across coordinates.
    pub curvature: f64,
    /// Standard deviation of the per-client center offsets.
    pub center_spread: f64,
    /// Standard deviation of the random initial parameters.
    pub init_scale: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        QuadraticParams {
            dim: 10,
            curvature: 1.0,
            center_spread: 1.0,
            init_scale: 2.0,
        }
    }
}

pub struct QuadraticWorkload {
    curvature: f64,
    init_scale: f64,
    /// One center per client shard.
    centers: Vec<Vec<f64>>,
    /// Mean of the centers: the pooled minimizer.
    minimizer: Vec<f64>,
    optimum: f64,
}

impl QuadraticWorkload {
    pub fn build(params: &QuadraticParams, num_ues: usize, seed: u64) -> Result<Self> {
        if params.dim == 0 {
            return Err(Error::Config("quadratic dim must be at least 1".into()));
        }
        if !(params.curvature > 0.0) {
            return Err(Error::Config(format!(
                "quadratic curvature must be positive, got {}",
                params.curvature
            )));
        }
        let mut rng = derive_rng(seed, &["workload", "quadratic", "centers"]);
        let centers: Vec<Vec<f64>> = (0..num_ues)
            .map(|_| {
                (0..params.dim)
                    .map(|_| params.center_spread * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let mut minimizer = vec![0.0; params.dim];
        for c in &centers {
            for (m, v) in minimizer.iter_mut().zip(c) {
                *m += v;
            }
        }
        for m in minimizer.iter_mut() {
            *m /= num_ues as f64;
        }
        // f* = (1/N) sum_n 1/2 sum_j q (c_mean_j - c_nj)^2
        let mut optimum = 0.0;
        for c in &centers {
            let mut local = 0.0;
            for (m, v) in minimizer.iter().zip(c) {
                let d = m - v;
                local += d * d;
            }
            optimum += 0.5 * params.curvature * local;
        }
        optimum /= num_ues as f64;
        Ok(QuadraticWorkload {
            curvature: params.curvature,
            init_scale: params.init_scale,
            centers,
            minimizer,
            optimum,
        })
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    /// Smoothness constant of each local objective.
    pub fn smoothness(&self) -> f64 {
        self.curvature
    }
}

impl Workload for QuadraticWorkload {
    fn id(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn num_shards(&self) -> usize {
        self.centers.len()
    }

    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|_| self.init_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn shard_loss_and_gradient(&self, params: &[f64], shard: usize) -> Result<(f64, Vec<f64>)> {
        if params.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "quadratic expects dimension {}, got {}",
                self.dim(),
                params.len()
            )));
        }
        let center = self
            .centers
            .get(shard)
            .ok_or_else(|| Error::ShapeMismatch(format!("no shard {shard}")))?;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(params.len());
        for (w, c) in params.iter().zip(center) {
            let d = w - c;
            loss += 0.5 * self.curvature * d * d;
            grad.push(self.curvature * d);
        }
        Ok((loss, grad))
    }

    fn test_metric(&self, params: &[f64]) -> f64 {
        // Optimality gap of the pooled objective.
        match self.pooled_loss_and_gradient(params) {
            Ok((loss, _)) => loss - self.optimum,
            Err(_) => f64::NAN,
        }
    }

    fn optimum(&self) -> Option<f64> {
        Some(self.optimum)
    }
}

pub struct QuadraticFactory;

impl WorkloadFactory for QuadraticFactory {
    fn id(&self) -> &'static str {
        "quadratic"
    }

    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
        let p: QuadraticParams = parse_params(self.id(), params)?;
        Ok(Task::Gradient(Box::new(QuadraticWorkload::build(
            &p,
            ctx.num_ues,
            ctx.seed,
        )?)))
    }
}

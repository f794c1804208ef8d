//! Training tasks, each behind the [`Workload`] trait and registered by
//! name. `ExperimentConfig.workload.id` selects one at runtime:
//!
//! - `quadratic`     strongly convex quadratic with a closed-form optimum
//! - `mlp`           multilayer perceptron classifier on image data
//! - `pca_spiked`    leading-eigenvector estimation (Rayleigh quotient)
//! - `landscape_2d`  named two-dimensional loss surfaces
//! - `lasso_admm`    consensus-ADMM LASSO (its own round structure)
//!
//! Shards partition the task across clients; the pooled objective is the
//! uniform client average, so the pooled gradient accumulates the per-shard
//! gradients in client order and divides by the client count. That is
//! bit-identical to what the zero-noise unit-fading channel computes, which
//! is exactly the noiseless-equivalence contract the oracle tests lean on.

pub mod landscape;
pub mod lasso;
pub mod mlp;
pub mod oracle;
pub mod pca;
pub mod quadratic;

use rand_chacha::ChaCha8Rng;

use crate::data::config::ShardStrategy;
use crate::data::mnist::DataEnv;
use crate::error::{Error, Result};

/// A gradient-descent task split across client shards.
///
/// All methods are pure; shards are immutable after construction, so
/// per-client evaluation may run concurrently.
pub trait Workload: Send + Sync {
    fn id(&self) -> &str;

    /// Parameter dimension d.
    fn dim(&self) -> usize;

    /// Number of client shards (the shards partition the task).
    fn num_shards(&self) -> usize;

    /// Initial global model; `rng` is the experiment's init substream.
    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Loss and exact analytic gradient of one client's local objective.
    fn shard_loss_and_gradient(&self, params: &[f64], shard: usize) -> Result<(f64, Vec<f64>)>;

    /// Loss and gradient over a subset of a shard's examples, for
    /// mini-batch local computation. Only example-based workloads support
    /// this.
    fn shard_subset_loss_and_gradient(
        &self,
        _params: &[f64],
        _shard: usize,
        _subset: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        Err(Error::Config(format!(
            "workload `{}` does not support mini-batch local computation",
            self.id()
        )))
    }

    /// Number of examples in a shard; 0 for workloads without per-example
    /// structure.
    fn shard_len(&self, _shard: usize) -> usize {
        0
    }

    /// Global objective and gradient: the uniform average over shards,
    /// accumulated in shard order.
    fn pooled_loss_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.num_shards();
        let mut grad = vec![0.0; self.dim()];
        let mut loss = 0.0;
        for shard in 0..n {
            let (l, g) = self.shard_loss_and_gradient(params, shard)?;
            loss += l;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        let inv = n as f64;
        loss /= inv;
        for v in grad.iter_mut() {
            *v /= inv;
        }
        Ok((loss, grad))
    }

    /// Workload-defined evaluation metric (test accuracy, optimality gap,
    /// alignment, ...), evaluated on the broadcast model.
    fn test_metric(&self, params: &[f64]) -> f64;

    /// Known optimal objective value, when the workload has one in closed
    /// form.
    fn optimum(&self) -> Option<f64> {
        None
    }

    /// Which dataset backs the workload, for run metadata.
    fn dataset_note(&self) -> Option<String> {
        None
    }
}

/// A buildable task: most workloads train by gradient descent; the
/// consensus-ADMM LASSO task has its own round structure.
pub enum Task {
    Gradient(Box<dyn Workload>),
    AdmmLasso(lasso::AdmmLassoTask),
}

/// Everything a factory needs besides its own parameter table.
pub struct BuildContext<'a> {
    pub num_ues: usize,
    pub seed: u64,
    pub shard_strategy: ShardStrategy,
    pub env: &'a DataEnv,
}

/// Builds one workload kind from its config table.
pub trait WorkloadFactory: Send + Sync {
    fn id(&self) -> &'static str;
    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task>;
}

static FACTORIES: &[&dyn WorkloadFactory] = &[
    &quadratic::QuadraticFactory,
    &mlp::MlpFactory,
    &pca::PcaFactory,
    &landscape::LandscapeFactory,
    &lasso::LassoFactory,
];

pub fn workload_ids() -> Vec<&'static str> {
    FACTORIES.iter().map(|f| f.id()).collect()
}

/// Build the workload registered under `id`.
pub fn build_workload(id: &str, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
    let factory = FACTORIES
        .iter()
        .find(|f| f.id() == id)
        .ok_or_else(|| Error::UnknownName {
            kind: "workload",
            name: id.to_string(),
        })?;
    factory.build(params, ctx)
}

pub(crate) fn parse_params<'de, T: serde::Deserialize<'de>>(
    id: &str,
    params: &toml::Table,
) -> Result<T> {
    params
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("workload `{id}` params: {e}")))
}

/// Equal contiguous chunks covering `0..n`; the first `n % parts` chunks
/// take one extra element.
pub(crate) fn chunk_ranges(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / parts;
    let extra = n % parts;
    let mut ranges = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

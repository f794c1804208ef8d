//! Multilayer-perceptron classifier with exact analytic backpropagation.
//!
//! Default architecture 784-32-10, tanh hidden activations, softmax
//! cross-entropy loss, full-batch gradients per shard. All math is f64 and
//! batched over shard rows, so the heavy products are contiguous row dots.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{chunk_ranges, parse_params, BuildContext, Task, Workload, WorkloadFactory};
use crate::data::config::ShardStrategy;
use crate::data::mnist::{resolve_images, DatasetChoice, DatasetSource, ImageDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Architecture: layer sizes from input to class logits, hidden activation,
/// softmax cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::Config(format!(
                "MLP needs at least 3 layers (input, hidden, output), got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|s| *s == 0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        Ok(MlpSpec {
            layer_sizes,
            activation,
        })
    }

    /// Total parameter count: weights plus biases of every layer.
    pub fn dim(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Offsets of (weights, biases) per layer inside the flat parameter
    /// vector; weights are row-major `(out, in)`.
    fn layout(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = offset;
            let biases = offset + fan_in * fan_out;
            out.push((weights, biases, fan_in, fan_out));
            offset = biases + fan_out;
        }
        out
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.dim()];
        for (w_off, _, fan_in, fan_out) in self.layout() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params[w_off..w_off + fan_in * fan_out].iter_mut() {
                *p = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        params
    }
}

/// `C = A * B'` for row-major `A (m x k)` and `B (n x k)`.
fn matmul_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            *o = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
}

/// `C += A' * B` for row-major `A (m x p)` and `B (m x k)`, `C (p x k)`.
fn matmul_tn_accum(a: &[f64], m: usize, p: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * p);
    debug_assert_eq!(b.len(), m * k);
    debug_assert_eq!(out.len(), p * k);
    for r in 0..m {
        let a_row = &a[r * p..(r + 1) * p];
        let b_row = &b[r * k..(r + 1) * k];
        for (j, &coef) in a_row.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let out_row = &mut out[j * k..(j + 1) * k];
            for (o, &x) in out_row.iter_mut().zip(b_row) {
                *o += coef * x;
            }
        }
    }
}

/// `C = A * B` for row-major `A (m x p)` and `B (p x k)`.
fn matmul_nn(a: &[f64], m: usize, p: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * p);
    debug_assert_eq!(b.len(), p * k);
    debug_assert_eq!(out.len(), m * k);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * p..(i + 1) * p];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (j, &coef) in a_row.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let b_row = &b[j * k..(j + 1) * k];
            for (o, &x) in out_row.iter_mut().zip(b_row) {
                *o += coef * x;
            }
        }
    }
}

/// Mean cross-entropy and its exact gradient over a batch of examples.
///
/// `images` is row-major `(n, input_dim)`, one label per row.
pub fn mlp_loss_and_gradient(
    spec: &MlpSpec,
    params: &[f64],
    images: &[f64],
    labels: &[u8],
) -> Result<(f64, Vec<f64>)> {
    if params.len() != spec.dim() {
        return Err(Error::ShapeMismatch(format!(
            "MLP expects {} parameters, got {}",
            spec.dim(),
            params.len()
        )));
    }
    let input_dim = spec.layer_sizes[0];
    if labels.is_empty() {
        return Err(Error::EmptyInput("MLP shard has no examples".into()));
    }
    if images.len() != labels.len() * input_dim {
        return Err(Error::ShapeMismatch(format!(
            "{} pixels for {} examples of dimension {}",
            images.len(),
            labels.len(),
            input_dim
        )));
    }
    let classes = spec.num_classes();
    if labels.iter().any(|l| *l as usize >= classes) {
        return Err(Error::Domain(format!(
            "label out of range for {classes} classes"
        )));
    }

    let n = labels.len();
    let layout = spec.layout();
    let layers = layout.len();

    // Forward: keep every activation for the backward pass.
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers);
    {
        let mut current: &[f64] = images;
        for (li, &(w_off, b_off, fan_in, fan_out)) in layout.iter().enumerate() {
            let weights = &params[w_off..w_off + fan_in * fan_out];
            let biases = &params[b_off..b_off + fan_out];
            let mut z = vec![0.0; n * fan_out];
            matmul_nt(current, n, fan_in, weights, fan_out, &mut z);
            let last = li == layers - 1;
            for row in 0..n {
                let zr = &mut z[row * fan_out..(row + 1) * fan_out];
                for (v, b) in zr.iter_mut().zip(biases) {
                    *v += b;
                    if !last {
                        *v = spec.activation.apply(*v);
                    }
                }
            }
            activations.push(z);
            current = activations.last().unwrap();
        }
    }

    // Softmax cross-entropy on the logits; d_logits = (p - y) / n.
    let logits = activations.last_mut().unwrap();
    let mut loss = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        let lr = &mut logits[row * classes..(row + 1) * classes];
        let max = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in lr.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        let p_label = lr[label as usize] / denom;
        loss -= p_label.ln();
        for (c, v) in lr.iter_mut().enumerate() {
            let p = *v / denom;
            let y = if c == label as usize { 1.0 } else { 0.0 };
            *v = (p - y) / n as f64;
        }
    }
    loss /= n as f64;

    // Backward.
    let mut grad = vec![0.0; params.len()];
    let mut delta = activations.pop().unwrap(); // d_logits already in place
    for li in (0..layers).rev() {
        let (w_off, b_off, fan_in, fan_out) = layout[li];
        let inputs: &[f64] = if li == 0 {
            images
        } else {
            &activations[li - 1]
        };
        matmul_tn_accum(
            &delta,
            n,
            fan_out,
            inputs,
            fan_in,
            &mut grad[w_off..w_off + fan_in * fan_out],
        );
        for row in 0..n {
            let dr = &delta[row * fan_out..(row + 1) * fan_out];
            for (g, &d) in grad[b_off..b_off + fan_out].iter_mut().zip(dr) {
                *g += d;
            }
        }
        if li == 0 {
            break;
        }
        let weights = &params[w_off..w_off + fan_in * fan_out];
        let mut d_input = vec![0.0; n * fan_in];
        matmul_nn(&delta, n, fan_out, weights, fan_in, &mut d_input);
        let hidden = &activations[li - 1];
        for (d, &a) in d_input.iter_mut().zip(hidden) {
            *d *= spec.activation.grad_from_output(a);
        }
        delta = d_input;
    }

    Ok((loss, grad))
}

/// Fraction of correctly classified examples.
pub fn mlp_accuracy(spec: &MlpSpec, params: &[f64], images: &[f64], labels: &[u8]) -> f64 {
    let input_dim = spec.layer_sizes[0];
    let classes = spec.num_classes();
    let n = labels.len();
    let layout = spec.layout();
    let mut current = images.to_vec();
    let mut rows_dim = input_dim;
    for (li, &(w_off, b_off, fan_in, fan_out)) in layout.iter().enumerate() {
        debug_assert_eq!(rows_dim, fan_in);
        let weights = &params[w_off..w_off + fan_in * fan_out];
        let biases = &params[b_off..b_off + fan_out];
        let mut z = vec![0.0; n * fan_out];
        matmul_nt(&current, n, fan_in, weights, fan_out, &mut z);
        let last = li == layout.len() - 1;
        for row in 0..n {
            let zr = &mut z[row * fan_out..(row + 1) * fan_out];
            for (v, b) in zr.iter_mut().zip(biases) {
                *v += b;
                if !last {
                    *v = spec.activation.apply(*v);
                }
            }
        }
        current = z;
        rows_dim = fan_out;
    }
    let mut correct = 0;
    for (row, &label) in labels.iter().enumerate() {
        let lr = &current[row * classes..(row + 1) * classes];
        let argmax = lr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        if argmax == label as usize {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub dataset: DatasetChoice,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train_subset: usize,
    pub test_subset: usize,
    /// Seed of the subset/stand-in selection, independent of the experiment
    /// seed so every run trains on the same data.
    pub subset_seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            dataset: DatasetChoice::Auto,
            hidden: vec![32],
            activation: Activation::Tanh,
            train_subset: 6000,
            test_subset: 1000,
            subset_seed: 17,
        }
    }
}

pub struct MlpWorkload {
    spec: MlpSpec,
    train: ImageDataset,
    test: ImageDataset,
    shards: Vec<std::ops::Range<usize>>,
    source: DatasetSource,
}

impl MlpWorkload {
    pub fn build(params: &MlpParams, ctx: &BuildContext) -> Result<Self> {
        let (train, test, source) = resolve_images(
            params.dataset,
            ctx.env,
            params.train_subset,
            params.test_subset,
            params.subset_seed,
        )?;
        let input_dim = train.images.cols();
        let mut layer_sizes = Vec::with_capacity(params.hidden.len() + 2);
        layer_sizes.push(input_dim);
        layer_sizes.extend_from_slice(&params.hidden);
        layer_sizes.push(10);
        let spec = MlpSpec::new(layer_sizes, params.activation)?;
        if train.len() < ctx.num_ues {
            return Err(Error::Config(format!(
                "{} training examples cannot cover {} clients",
                train.len(),
                ctx.num_ues
            )));
        }
        let train = match ctx.shard_strategy {
            ShardStrategy::IidEqual => reorder(&train, &shuffled_order(train.len(), ctx.seed))?,
            ShardStrategy::Contiguous => train,
        };
        let shards = chunk_ranges(train.len(), ctx.num_ues);
        Ok(MlpWorkload {
            spec,
            train,
            test,
            shards,
            source,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn dataset_source(&self) -> DatasetSource {
        self.source
    }

    fn shard_slices(&self, shard: usize) -> Result<(&[f64], &[u8])> {
        let range = self
            .shards
            .get(shard)
            .ok_or_else(|| Error::ShapeMismatch(format!("no shard {shard}")))?;
        let dim = self.train.images.cols();
        let pixels = &self.train.images.data()[range.start * dim..range.end * dim];
        let labels = &self.train.labels[range.clone()];
        Ok((pixels, labels))
    }
}

fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, &["shards"]);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn reorder(data: &ImageDataset, order: &[usize]) -> Result<ImageDataset> {
    let dim = data.images.cols();
    let mut pixels = Vec::with_capacity(order.len() * dim);
    let mut labels = Vec::with_capacity(order.len());
    for &i in order {
        pixels.extend_from_slice(data.images.row(i));
        labels.push(data.labels[i]);
    }
    Ok(ImageDataset {
        images: Matrix::from_rows(order.len(), dim, pixels)?,
        labels,
    })
}

impl Workload for MlpWorkload {
    fn id(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn num_shards(&self) -> usize {
        self.shards.len()
    }

    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.spec.init_params(rng)
    }

    fn shard_loss_and_gradient(&self, params: &[f64], shard: usize) -> Result<(f64, Vec<f64>)> {
        let (pixels, labels) = self.shard_slices(shard)?;
        mlp_loss_and_gradient(&self.spec, params, pixels, labels)
    }

    fn shard_subset_loss_and_gradient(
        &self,
        params: &[f64],
        shard: usize,
        subset: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let (pixels, labels) = self.shard_slices(shard)?;
        let dim = self.train.images.cols();
        let mut sub_pixels = Vec::with_capacity(subset.len() * dim);
        let mut sub_labels = Vec::with_capacity(subset.len());
        for &i in subset {
            if i >= labels.len() {
                return Err(Error::ShapeMismatch(format!(
                    "example {i} outside shard of {})",
                    labels.len()
                )));
            }
            sub_pixels.extend_from_slice(&pixels[i * dim..(i + 1) * dim]);
            sub_labels.push(labels[i]);
        }
        mlp_loss_and_gradient(&self.spec, params, &sub_pixels, &sub_labels)
    }

    fn shard_len(&self, shard: usize) -> usize {
        self.shards.get(shard).map(|r| r.len()).unwrap_or(0)
    }

    fn test_metric(&self, params: &[f64]) -> f64 {
        mlp_accuracy(
            &self.spec,
            params,
            self.test.images.data(),
            &self.test.labels,
        )
    }

    fn dataset_note(&self) -> Option<String> {
        Some(
            match self.source {
                DatasetSource::Mnist => "mnist",
                DatasetSource::Synthetic => "synthetic",
            }
            .to_string(),
        )
    }
}

pub struct MlpFactory;

impl WorkloadFactory for MlpFactory {
    fn id(&self) -> &'static str {
        "mlp"
    }

    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
        let p: MlpParams = parse_params(self.id(), params)?;
        Ok(Task::Gradient(Box::new(MlpWorkload::build(&p, ctx)?)))
    }
}

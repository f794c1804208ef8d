//! Synthetic dataset generators, registered by name.
//!
//! Every generator is a pure function of `(name, params, seed)`:
//! regeneration is bit-identical.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// Sparse regression instance: `targets = design * ground_truth + noise`.
    Lasso {
        design: Matrix,
        targets: Vec<f64>,
        ground_truth: Vec<f64>,
    },
    /// Unlabeled points, one row per sample.
    Points(Matrix),
    /// Labeled points.
    Labeled { points: Matrix, labels: Vec<u8> },
}

pub trait Generator: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, params: &toml::Table, seed: u64) -> Result<Dataset>;
}

static GENERATORS: &[&dyn Generator] = &[&LassoSparse, &PcaSpiked, &TwoGaussians2d];

pub fn generator_names() -> Vec<&'static str> {
    GENERATORS.iter().map(|g| g.name()).collect()
}

/// Run the generator registered under `name`.
pub fn generate_synthetic(name: &str, params: &toml::Table, seed: u64) -> Result<Dataset> {
    let generator = GENERATORS
        .iter()
        .find(|g| g.name() == name)
        .ok_or_else(|| Error::UnknownName {
            kind: "generator",
            name: name.to_string(),
        })?;
    generator.generate(params, seed)
}

fn parse_params<'de, T: Deserialize<'de>>(name: &str, params: &toml::Table) -> Result<T> {
    params
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("{name} params: {e}")))
}

fn default_usize<const N: usize>() -> usize {
    N
}

struct LassoSparse;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoSparseParams {
    #[serde(default = "default_usize::<200>")]
    m: usize,
    #[serde(default = "default_usize::<50>")]
    d: usize,
    #[serde(default = "default_usize::<10>")]
    nnz: usize,
    /// Observation SNR in dB; the spec instance uses 40 dB.
    #[serde(default = "default_snr_db")]
    snr_db: f64,
}

fn default_snr_db() -> f64 {
    40.0
}

impl Generator for LassoSparse {
    fn name(&self) -> &'static str {
        "lasso_sparse"
    }

    fn generate(&self, params: &toml::Table, seed: u64) -> Result<Dataset> {
        let p: LassoSparseParams = parse_params(self.name(), params)?;
        if p.m == 0 || p.d == 0 || p.nnz > p.d {
            return Err(Error::Config(format!(
                "lasso_sparse needs m, d >= 1 and nnz <= d (m={}, d={}, nnz={})",
                p.m, p.d, p.nnz
            )));
        }
        let mut rng = derive_rng(seed, &["synth", "lasso_sparse"]);
        let design_data: Vec<f64> = (0..p.m * p.d).map(|_| rng.sample(StandardNormal)).collect();
        let design = Matrix::from_rows(p.m, p.d, design_data)?;

        let mut ground_truth = vec![0.0; p.d];
        let mut indices: Vec<usize> = (0..p.d).collect();
        for i in 0..p.nnz {
            let j = i + rng.random_range(0..p.d - i);
            indices.swap(i, j);
            ground_truth[indices[i]] = rng.sample::<f64, _>(StandardNormal);
        }

        let clean = design.matvec(&ground_truth);
        let signal_power = clean.iter().map(|v| v * v).sum::<f64>() / p.m as f64;
        let noise_std = signal_power.sqrt() * 10f64.powf(-p.snr_db / 20.0);
        let targets = clean
            .iter()
            .map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Dataset::Lasso {
            design,
            targets,
            ground_truth,
        })
    }
}

struct PcaSpiked;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PcaSpikedParams {
    #[serde(default = "default_usize::<20>")]
    d: usize,
    #[serde(default = "default_usize::<2000>")]
    n: usize,
    /// Leading eigenvalues of the diagonal population covariance; the rest
    /// are 1. Default is the spiked (3, 1, ..., 1) instance.
    #[serde(default = "default_spike")]
    eigenvalues: Vec<f64>,
}

fn default_spike() -> Vec<f64> {
    vec![3.0]
}

impl Generator for PcaSpiked {
    fn name(&self) -> &'static str {
        "pca_spiked"
    }

    fn generate(&self, params: &toml::Table, seed: u64) -> Result<Dataset> {
        let p: PcaSpikedParams = parse_params(self.name(), params)?;
        if p.d == 0 || p.n == 0 || p.eigenvalues.len() > p.d {
            return Err(Error::Config(format!(
                "pca_spiked needs d, n >= 1 and at most d eigenvalues (d={}, n={})",
                p.d, p.n
            )));
        }
        if p.eigenvalues.iter().any(|ev| *ev <= 0.0) {
            return Err(Error::Config("pca_spiked eigenvalues must be positive".into()));
        }
        let mut scales = vec![1.0; p.d];
        for (s, ev) in scales.iter_mut().zip(&p.eigenvalues) {
            *s = ev.sqrt();
        }
        let mut rng = derive_rng(seed, &["synth", "pca_spiked"]);
        let mut data = Vec::with_capacity(p.n * p.d);
        for _ in 0..p.n {
            for s in &scales {
                data.push(s * rng.sample::<f64, _>(StandardNormal));
            }
        }
        Ok(Dataset::Points(Matrix::from_rows(p.n, p.d, data)?))
    }
}

struct TwoGaussians2d;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoGaussiansParams {
    #[serde(default = "default_usize::<200>")]
    n: usize,
    #[serde(default = "default_separation")]
    separation: f64,
}

fn default_separation() -> f64 {
    4.0
}

impl Generator for TwoGaussians2d {
    fn name(&self) -> &'static str {
        "two_gaussians_2d"
    }

    fn generate(&self, params: &toml::Table, seed: u64) -> Result<Dataset> {
        let p: TwoGaussiansParams = parse_params(self.name(), params)?;
        if p.n == 0 {
            return Err(Error::Config("two_gaussians_2d needs n >= 1".into()));
        }
        let mut rng = derive_rng(seed, &["synth", "two_gaussians_2d"]);
        let mut data = Vec::with_capacity(p.n * 2);
        let mut labels = Vec::with_capacity(p.n);
        for i in 0..p.n {
            let label = (i % 2) as u8;
            let mean_x = if label == 0 { -p.separation / 2.0 } else { p.separation / 2.0 };
            data.push(mean_x + rng.sample::<f64, _>(StandardNormal));
            data.push(rng.sample::<f64, _>(StandardNormal));
            labels.push(label);
        }
        Ok(Dataset::Labeled {
            points: Matrix::from_rows(p.n, 2, data)?,
            labels,
        })
    }
}

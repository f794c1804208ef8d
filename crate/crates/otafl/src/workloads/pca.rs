//! Distributed leading-eigenvector estimation.
//!
//! Client n holds a covariance `C_n`; its local objective is the negative
//! Rayleigh quotient `-w' C_n w / (w' w)`, whose pooled gradient vanishes
//! exactly at every eigenvector of the pooled covariance. The minor
//! eigenvectors are saddles of the pooled landscape, which makes this the
//! canonical stagnation-escape workload: the spiked instance
//! diag(3, 1, ..., 1) has a whole minor eigenspace where the gradient is
//! *exactly* zero, so noiseless descent started there never moves.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::{chunk_ranges, parse_params, BuildContext, Task, Workload, WorkloadFactory};
use crate::data::synth::{generate_synthetic, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, leading_eigenpair, Matrix};

/// The distributed PCA instance: per-client covariances plus the pooled
/// target direction.
pub struct PcaProblem {
    covariances: Vec<Matrix>,
    /// Leading eigenvector of the pooled covariance.
    target: Vec<f64>,
    eigengap: f64,
}

impl PcaProblem {
    /// Build from explicit per-client covariance matrices.
    pub fn from_covariances(covariances: Vec<Matrix>) -> Result<Self> {
        if covariances.is_empty() {
            return Err(Error::EmptyInput("PCA needs at least one client".into()));
        }
        let d = covariances[0].rows();
        for c in &covariances {
            if c.rows() != d || c.cols() != d {
                return Err(Error::ShapeMismatch(
                    "client covariances must share one square shape".into(),
                ));
            }
        }
        let mut pooled = Matrix::zeros(d, d);
        for c in &covariances {
            for i in 0..d {
                for j in 0..d {
                    pooled.set(i, j, pooled.get(i, j) + c.get(i, j) / covariances.len() as f64);
                }
            }
        }
        let (l1, target) = leading_eigenpair(&pooled, 2000);
        // Second eigenvalue by deflation.
        let mut deflated = pooled.clone();
        for i in 0..d {
            for j in 0..d {
                deflated.set(i, j, deflated.get(i, j) - l1 * target[i] * target[j]);
            }
        }
        let (l2, _) = leading_eigenpair(&deflated, 2000);
        let eigengap = l1 - l2;
        if !(eigengap > 0.0) {
            return Err(Error::Domain(format!(
                "pooled covariance needs a positive eigengap, got {eigengap}"
            )));
        }
        Ok(PcaProblem {
            covariances,
            target,
            eigengap,
        })
    }

    /// The exact spiked instance: every client holds diag(3, 1, ..., 1).
    pub fn spiked_diagonal(dim: usize, num_ues: usize) -> Result<Self> {
        let mut c = Matrix::zeros(dim, dim);
        c.set(0, 0, 3.0);
        for i in 1..dim {
            c.set(i, i, 1.0);
        }
        Self::from_covariances(vec![c; num_ues])
    }

    /// Sample covariances of generated spiked data, sharded across clients.
    pub fn from_spiked_samples(dim: usize, n: usize, num_ues: usize, seed: u64) -> Result<Self> {
        let mut params = toml::Table::new();
        params.insert("d".into(), (dim as i64).into());
        params.insert("n".into(), (n as i64).into());
        let data = match generate_synthetic("pca_spiked", &params, seed)? {
            Dataset::Points(m) => m,
            _ => unreachable!("pca_spiked yields points"),
        };
        let covariances = chunk_ranges(n, num_ues)
            .into_iter()
            .map(|range| {
                let rows = range.len();
                let block = data.row_block(range.start, rows);
                let mut c = block.gram();
                for i in 0..dim {
                    for j in 0..dim {
                        c.set(i, j, c.get(i, j) / rows as f64);
                    }
                }
                c
            })
            .collect();
        Self::from_covariances(covariances)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn eigengap(&self) -> f64 {
        self.eigengap
    }
}

/// Negative Rayleigh quotient and its exact gradient on one covariance.
pub fn pca_loss_and_gradient(covariance: &Matrix, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    if w.len() != covariance.rows() {
        return Err(Error::ShapeMismatch(format!(
            "PCA expects dimension {}, got {}",
            covariance.rows(),
            w.len()
        )));
    }
    let norm_sq = dot(w, w);
    if norm_sq == 0.0 {
        return Err(Error::Domain(
            "Rayleigh quotient is undefined at the zero vector".into(),
        ));
    }
    let cw = covariance.matvec(w);
    let rayleigh = dot(w, &cw) / norm_sq;
    let loss = -rayleigh;
    let grad = cw
        .iter()
        .zip(w)
        .map(|(cwi, wi)| -2.0 * (cwi - rayleigh * wi) / norm_sq)
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PcaInit {
    /// Seeded random direction.
    #[default]
    RandomUnit,
    /// The minor-eigenvector saddle plus a small seeded perturbation drawn
    /// inside the minor eigenspace (orthogonal to the principal axis), so
    /// noiseless descent stays exactly stationary.
    SaddleAdjacent,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaParams {
    pub dim: usize,
    /// Exact diagonal covariance on every client (`true`) or sample
    /// covariances of generated spiked data (`false`).
    pub exact_covariance: bool,
    /// Sample count when generating data.
    pub samples: usize,
    pub init: PcaInit,
    pub perturbation: f64,
}

impl Default for PcaParams {
    fn default() -> Self {
        PcaParams {
            dim: 20,
            exact_covariance: true,
            samples: 2000,
            init: PcaInit::RandomUnit,
            perturbation: 1e-4,
        }
    }
}

pub struct PcaWorkload {
    problem: PcaProblem,
    init: PcaInit,
    perturbation: f64,
}

impl PcaWorkload {
    pub fn build(params: &PcaParams, num_ues: usize, seed: u64) -> Result<Self> {
        if params.dim < 2 {
            return Err(Error::Config("PCA dim must be at least 2".into()));
        }
        let problem = if params.exact_covariance {
            PcaProblem::spiked_diagonal(params.dim, num_ues)?
        } else {
            PcaProblem::from_spiked_samples(params.dim, params.samples, num_ues, seed)?
        };
        Ok(PcaWorkload {
            problem,
            init: params.init,
            perturbation: params.perturbation,
        })
    }

    pub fn problem(&self) -> &PcaProblem {
        &self.problem
    }

    /// |cos angle(w, v1)|.
    pub fn alignment(&self, w: &[f64]) -> f64 {
        let norm = l2_norm(w);
        if norm == 0.0 {
            return 0.0;
        }
        (dot(w, &self.problem.target) / norm).abs()
    }
}

impl Workload for PcaWorkload {
    fn id(&self) -> &str {
        "pca_spiked"
    }

    fn dim(&self) -> usize {
        self.problem.target.len()
    }

    fn num_shards(&self) -> usize {
        self.problem.covariances.len()
    }

    fn initial_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        match self.init {
            PcaInit::RandomUnit => {
                let mut w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = l2_norm(&w);
                w.iter_mut().for_each(|x| *x /= norm);
                w
            }
            PcaInit::SaddleAdjacent => {
                // e2 plus a perturbation with zero first coordinate: for the
                // exact diagonal instance the entire vector stays inside the
                // minor eigenspace, where the gradient is exactly zero.
                let mut delta: Vec<f64> = (0..d)
                    .map(|i| {
                        if i == 0 {
                            0.0
                        } else {
                            rng.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect();
                let norm = l2_norm(&delta);
                delta.iter_mut().for_each(|x| *x *= self.perturbation / norm);
                let mut w = vec![0.0; d];
                w[1] = 1.0;
                for (wi, di) in w.iter_mut().zip(&delta) {
                    *wi += di;
                }
                w
            }
        }
    }

    fn shard_loss_and_gradient(&self, params: &[f64], shard: usize) -> Result<(f64, Vec<f64>)> {
        let c = self
            .problem
            .covariances
            .get(shard)
            .ok_or_else(|| Error::ShapeMismatch(format!("no shard {shard}")))?;
        pca_loss_and_gradient(c, params)
    }

    fn test_metric(&self, params: &[f64]) -> f64 {
        self.alignment(params)
    }
}

pub struct PcaFactory;

impl WorkloadFactory for PcaFactory {
    fn id(&self) -> &'static str {
        "pca_spiked"
    }

    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
        let p: PcaParams = parse_params(self.id(), params)?;
        Ok(Task::Gradient(Box::new(PcaWorkload::build(
            &p,
            ctx.num_ues,
            ctx.seed,
        )?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_rng;

    fn diag(values: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    #[test]
    fn eigenvectors_are_stationary() {
        let c = diag(&[3.0, 1.0]);
        let (loss, grad) = pca_loss_and_gradient(&c, &[1.0, 0.0]).unwrap();
        assert_eq!(loss, -3.0);
        assert_eq!(grad, vec![0.0, 0.0]);

        let (loss, grad) = pca_loss_and_gradient(&c, &[0.0, 1.0]).unwrap();
        assert_eq!(loss, -1.0);
        assert_eq!(grad, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_vector_is_a_domain_error() {
        let c = diag(&[3.0, 1.0]);
        assert!(matches!(
            pca_loss_and_gradient(&c, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_spd() {
        // Random 5x5 SPD matrix: B'B + I.
        let mut rng = derive_rng(12, &["pca-fd"]);
        let b_data: Vec<f64> = (0..25).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b = Matrix::from_rows(5, 5, b_data).unwrap();
        let mut c = b.gram();
        for i in 0..5 {
            c.set(i, i, c.get(i, i) + 1.0);
        }
        let w: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (_, grad) = pca_loss_and_gradient(&c, &w).unwrap();
        let h = 1e-6;
        for j in 0..5 {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[j] += h;
            minus[j] -= h;
            let (fp, _) = pca_loss_and_gradient(&c, &plus).unwrap();
            let (fm, _) = pca_loss_and_gradient(&c, &minus).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let denom = grad[j].abs().max(1e-3);
            assert!(
                ((grad[j] - numeric) / denom).abs() < 1e-6,
                "coordinate {}: {} vs {}",
                j,
                grad[j],
                numeric
            );
        }
    }

    #[test]
    fn pooled_gradient_vanishes_at_every_exact_eigenvector() {
        let w = PcaWorkload::build(&PcaParams::default(), 4, 0).unwrap();
        let d = w.dim();
        for axis in 0..d {
            let mut v = vec![0.0; d];
            v[axis] = 1.0;
            let (_, grad) = w.pooled_loss_and_gradient(&v).unwrap();
            assert!(
                l2_norm(&grad) < 1e-12,
                "axis {} gradient norm {}",
                axis,
                l2_norm(&grad)
            );
        }
    }

    #[test]
    fn spiked_problem_reports_target_and_gap() {
        let p = PcaProblem::spiked_diagonal(20, 3).unwrap();
        assert!((p.eigengap() - 2.0).abs() < 1e-9);
        assert!(p.target()[0].abs() > 0.999);
    }

    #[test]
    fn sampled_covariance_instance_builds() {
        let p = PcaProblem::from_spiked_samples(20, 2000, 5, 3).unwrap();
        assert!(p.eigengap() > 1.0, "eigengap {}", p.eigengap());
    }

    #[test]
    fn saddle_adjacent_init_is_orthogonal_to_the_spike() {
        let params = PcaParams {
            init: PcaInit::SaddleAdjacent,
            ..PcaParams::default()
        };
        let w = PcaWorkload::build(&params, 4, 0).unwrap();
        let mut rng = derive_rng(7, &["init"]);
        let w0 = w.initial_params(&mut rng);
        assert_eq!(w0[0], 0.0);
        assert!((l2_norm(&w0) - 1.0).abs() < 1e-3);
        // Exactly stationary for the exact diagonal instance.
        let (_, grad) = w.pooled_loss_and_gradient(&w0).unwrap();
        assert_eq!(l2_norm(&grad), 0.0);
        assert!(w.alignment(&w0) == 0.0);
    }
}

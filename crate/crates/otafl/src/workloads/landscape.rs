//! Named two-dimensional loss surfaces with exact analytic gradients.
//!
//! The shipped `double_well` surface is
//!
//! ```text
//! f(x, y) = x^4 - (4c/3) x^3 - 2x^2 + 4c x + C + 2 y^2,    c = 0.2
//! ```
//!
//! whose gradient in x factors as `4 (x^2 - 1)(x - c)`, so the critical
//! points are exact:
//!
//! - global minimum  (-1, 0), loss 0 (C is chosen to zero it),
//! - local minimum   (+1, 0), loss (16/3) c  ~ 1.0667,
//! - barrier saddle  (c, 0),  loss  ~ 1.6128.
//!
//! A gradient-descent run started at the local minimum stays there forever
//! without noise (the gradient is exactly zero in floating point), which
//! makes basin-escape experiments clean: any escape is attributable to
//! injected interference.

use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{parse_params, BuildContext, Task, Workload, WorkloadFactory};
use crate::error::{Error, Result};

/// Asymmetry of the double well: the middle root of the gradient.
const WELL_C: f64 = 0.2;

pub const DOUBLE_WELL_GLOBAL_MIN: [f64; 2] = [-1.0, 0.0];
pub const DOUBLE_WELL_LOCAL_MIN: [f64; 2] = [1.0, 0.0];
pub const DOUBLE_WELL_BARRIER: [f64; 2] = [WELL_C, 0.0];

fn double_well(w: &[f64; 2]) -> (f64, [f64; 2]) {
    let [x, y] = *w;
    let c = WELL_C;
    let offset = 1.0 + 8.0 * c / 3.0; // zeroes the global minimum
    let loss = x.powi(4) - (4.0 * c / 3.0) * x.powi(3) - 2.0 * x * x + 4.0 * c * x + offset
        + 2.0 * y * y;
    let gx = 4.0 * (x * x - 1.0) * (x - c);
    let gy = 4.0 * y;
    (loss, [gx, gy])
}

/// Loss at the barrier saddle; the energy level separating the wells.
pub fn double_well_barrier_height() -> f64 {
    double_well(&DOUBLE_WELL_BARRIER).0
}

/// Loss at the local (shallow) minimum.
pub fn double_well_local_height() -> f64 {
    double_well(&DOUBLE_WELL_LOCAL_MIN).0
}

type LandscapeFn = fn(&[f64; 2]) -> (f64, [f64; 2]);

static LANDSCAPES: &[(&str, LandscapeFn)] = &[("double_well", double_well)];

pub fn landscape_names() -> Vec<&'static str> {
    LANDSCAPES.iter().map(|(n, _)| *n).collect()
}

/// Evaluate the landscape registered under `name` at `w`.
pub fn landscape_2d(name: &str, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (_, f) = LANDSCAPES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownName {
            kind: "landscape",
            name: name.to_string(),
        })?;
    if w.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "landscape expects 2 coordinates, got {}",
            w.len()
        )));
    }
    let (loss, grad) = f(&[w[0], w[1]]);
    Ok((loss, grad.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeInit {
    /// Start exactly at the documented local minimum.
    #[default]
    LocalMin,
    GlobalMin,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeParams {
    pub name: String,
    pub init: LandscapeInit,
}

impl Default for LandscapeParams {
    fn default() -> Self {
        LandscapeParams {
            name: "double_well".to_string(),
            init: LandscapeInit::LocalMin,
        }
    }
}

/// Every client shares the same surface; shards are replicas.
pub struct LandscapeWorkload {
    name: String,
    f: LandscapeFn,
    init: LandscapeInit,
    num_shards: usize,
}

impl LandscapeWorkload {
    pub fn build(params: &LandscapeParams, num_ues: usize) -> Result<Self> {
        let (_, f) = LANDSCAPES
            .iter()
            .find(|(n, _)| *n == params.name)
            .ok_or_else(|| Error::UnknownName {
                kind: "landscape",
                name: params.name.clone(),
            })?;
        Ok(LandscapeWorkload {
            name: params.name.clone(),
            f: *f,
            init: params.init,
            num_shards: num_ues,
        })
    }
}

impl Workload for LandscapeWorkload {
    fn id(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2
    }

    fn num_shards(&self) -> usize {
        self.num_shards
    }

    fn initial_params(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.init {
            LandscapeInit::LocalMin => DOUBLE_WELL_LOCAL_MIN.to_vec(),
            LandscapeInit::GlobalMin => DOUBLE_WELL_GLOBAL_MIN.to_vec(),
        }
    }

    fn shard_loss_and_gradient(&self, params: &[f64], shard: usize) -> Result<(f64, Vec<f64>)> {
        if shard >= self.num_shards {
            return Err(Error::ShapeMismatch(format!("no shard {shard}")));
        }
        if params.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "landscape expects 2 coordinates, got {}",
                params.len()
            )));
        }
        let (loss, grad) = (self.f)(&[params[0], params[1]]);
        Ok((loss, grad.to_vec()))
    }

    fn test_metric(&self, params: &[f64]) -> f64 {
        // 1.0 when the model currently sits in the global-minimum basin:
        // x below the barrier ridge with energy below the barrier level.
        let (loss, _) = (self.f)(&[params[0], params[1]]);
        let in_basin = params[0] < DOUBLE_WELL_BARRIER[0] && loss < double_well_barrier_height();
        if in_basin {
            1.0
        } else {
            0.0
        }
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

pub struct LandscapeFactory;

impl WorkloadFactory for LandscapeFactory {
    fn id(&self) -> &'static str {
        "landscape_2d"
    }

    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
        let p: LandscapeParams = parse_params(self.id(), params)?;
        Ok(Task::Gradient(Box::new(LandscapeWorkload::build(
            &p,
            ctx.num_ues,
        )?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::l2_norm;
    use crate::seed::derive_rng;
    use rand::Rng;

    #[test]
    fn unknown_landscape_is_a_lookup_error() {
        assert!(matches!(
            landscape_2d("nope", &[0.0, 0.0]),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn critical_points_are_exact() {
        let (global_loss, g) = landscape_2d("double_well", &DOUBLE_WELL_GLOBAL_MIN).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(global_loss.abs() < 1e-12);

        let (local_loss, g) = landscape_2d("double_well", &DOUBLE_WELL_LOCAL_MIN).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(local_loss > global_loss);
        assert!((local_loss - 16.0 / 3.0 * WELL_C).abs() < 1e-12);

        let (barrier_loss, g) = landscape_2d("double_well", &DOUBLE_WELL_BARRIER).unwrap();
        assert!(l2_norm(&g) < 1e-12);
        assert!(barrier_loss > local_loss);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = derive_rng(5, &["landscape-fd"]);
        let h = 1e-6;
        for _ in 0..10 {
            let p = [
                4.0 * rng.random::<f64>() - 2.0,
                4.0 * rng.random::<f64>() - 2.0,
            ];
            let (_, grad) = landscape_2d("double_well", &p).unwrap();
            for j in 0..2 {
                let mut plus = p;
                let mut minus = p;
                plus[j] += h;
                minus[j] -= h;
                let (fp, _) = landscape_2d("double_well", &plus).unwrap();
                let (fm, _) = landscape_2d("double_well", &minus).unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                let denom = grad[j].abs().max(1.0);
                assert!(
                    ((grad[j] - numeric) / denom).abs() < 1e-8,
                    "coordinate {}: {} vs {}",
                    j,
                    grad[j],
                    numeric
                );
            }
        }
    }

    #[test]
    fn basin_indicator_matches_geometry() {
        let p = LandscapeParams::default();
        let w = LandscapeWorkload::build(&p, 3).unwrap();
        assert_eq!(w.test_metric(&DOUBLE_WELL_GLOBAL_MIN), 1.0);
        assert_eq!(w.test_metric(&DOUBLE_WELL_LOCAL_MIN), 0.0);
        // Left of the ridge but far above the barrier energy: not "in basin".
        assert_eq!(w.test_metric(&[-4.0, 0.0]), 0.0);
    }
}

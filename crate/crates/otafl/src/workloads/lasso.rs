//! LASSO via consensus ADMM with over-the-air consensus aggregation.
//!
//! Client n holds a row block `(A_n, b_n)` and keeps a local iterate `x_n`
//! and dual `u_n`; one round is
//!
//! ```text
//! x_n <- argmin 1/2 ||A_n x - b_n||^2 + rho/2 ||x - z + u_n||^2
//! z   <- soft_threshold( ota_aggregate(x_n + u_n), lambda / (rho N) )
//! u_n <- u_n + x_n - z
//! ```
//!
//! The consensus average of `(x_n + u_n)` is the one quantity the channel
//! carries, so interference enters the iteration exactly once per round.
//! The per-client normal matrices `(A_n' A_n + rho I)` are factored once.

use serde::Deserialize;

use super::{chunk_ranges, parse_params, BuildContext, Task, WorkloadFactory};
use crate::channel::{draw_fading, ota_aggregate, OtaChannelConfig};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, Cholesky, Matrix};
use crate::data::synth::{generate_synthetic, Dataset};
use rand::Rng;

/// `sign(x) * max(|x| - lambda, 0)`: the proximal map of `lambda |.|`.
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// The regression instance: `min 1/2 ||A x - b||^2 + lambda ||x||_1`.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: Matrix,
    pub targets: Vec<f64>,
    pub l1_weight: f64,
    pub admm_penalty: f64,
}

impl LassoProblem {
    pub fn validate(&self) -> Result<()> {
        if self.design.rows() != self.targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} design rows but {} targets",
                self.design.rows(),
                self.targets.len()
            )));
        }
        if !(self.l1_weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "l1 weight must be nonnegative, got {}",
                self.l1_weight
            )));
        }
        if !(self.admm_penalty > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ADMM penalty must be positive, got {}",
                self.admm_penalty
            )));
        }
        Ok(())
    }

    /// `1/2 ||A x - b||^2 + lambda ||z||_1` with the quadratic part at `x`
    /// and the penalty at `z`.
    pub fn objective(&self, x: &[f64], z: &[f64]) -> f64 {
        let residual: f64 = self
            .design
            .matvec(x)
            .iter()
            .zip(&self.targets)
            .map(|(ax, b)| (ax - b) * (ax - b))
            .sum();
        0.5 * residual + self.l1_weight * z.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// One client's cached solve state.
struct ClientSolver {
    /// `A_n' b_n`.
    atb: Vec<f64>,
    /// Cholesky of `A_n' A_n + rho I`.
    factor: Cholesky,
}

/// Per-client primal/dual state plus the consensus variable.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

impl AdmmState {
    pub fn zeros(num_clients: usize, dim: usize) -> Self {
        AdmmState {
            x: vec![vec![0.0; dim]; num_clients],
            u: vec![vec![0.0; dim]; num_clients],
            z: vec![0.0; dim],
        }
    }
}

/// Telemetry of one ADMM round.
#[derive(Debug, Clone, Copy)]
pub struct AdmmRoundStats {
    pub objective: f64,
    /// `||x_mean - z||`.
    pub primal_residual: f64,
    /// `rho * ||z - z_prev||`.
    pub dual_residual: f64,
    /// Largest aggregate coordinate magnitude seen by the server.
    pub aggregate_peak: f64,
}

/// The distributed task: problem, shards, and cached factorizations.
pub struct AdmmLassoTask {
    problem: LassoProblem,
    clients: Vec<ClientSolver>,
    ground_truth: Option<Vec<f64>>,
}

impl AdmmLassoTask {
    pub fn new(problem: LassoProblem, num_ues: usize, ground_truth: Option<Vec<f64>>) -> Result<Self> {
        problem.validate()?;
        if num_ues == 0 {
            return Err(Error::EmptyInput("ADMM needs at least one client".into()));
        }
        if problem.design.rows() < num_ues {
            return Err(Error::Config(format!(
                "{} rows cannot cover {} clients",
                problem.design.rows(),
                num_ues
            )));
        }
        let dim = problem.design.cols();
        let clients = chunk_ranges(problem.design.rows(), num_ues)
            .into_iter()
            .map(|range| {
                let design = problem.design.row_block(range.start, range.len());
                let atb = design.t_matvec(&problem.targets[range.clone()]);
                let mut normal = design.gram();
                for i in 0..dim {
                    normal.set(i, i, normal.get(i, i) + problem.admm_penalty);
                }
                Ok(ClientSolver {
                    atb,
                    factor: Cholesky::factor(&normal)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AdmmLassoTask {
            problem,
            clients,
            ground_truth,
        })
    }

    pub fn problem(&self) -> &LassoProblem {
        &self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.design.cols()
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn initial_state(&self) -> AdmmState {
        AdmmState::zeros(self.num_clients(), self.dim())
    }

    /// Relative error of the consensus variable against the generating
    /// ground truth, when one is known.
    pub fn ground_truth_error(&self, z: &[f64]) -> f64 {
        match &self.ground_truth {
            Some(truth) => {
                let norm = l2_norm(truth).max(f64::MIN_POSITIVE);
                let diff: f64 = z
                    .iter()
                    .zip(truth)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                diff / norm
            }
            None => f64::NAN,
        }
    }
}

/// One consensus-ADMM round over the analog channel.
pub fn admm_lasso_round<R: Rng + ?Sized>(
    task: &AdmmLassoTask,
    state: &mut AdmmState,
    channel: &OtaChannelConfig,
    fading_rng: &mut R,
    noise_rng: &mut R,
) -> Result<AdmmRoundStats> {
    let n = task.num_clients();
    if state.x.len() != n || state.u.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "ADMM state has {} clients, task has {}",
            state.x.len(),
            n
        )));
    }
    let rho = task.problem.admm_penalty;

    // Local ridge-regularized least squares.
    for (client, (x, u)) in task
        .clients
        .iter()
        .zip(state.x.iter_mut().zip(state.u.iter()))
    {
        let mut rhs = client.atb.clone();
        for ((r, zi), ui) in rhs.iter_mut().zip(&state.z).zip(u) {
            *r += rho * (zi - ui);
        }
        *x = client.factor.solve(&rhs);
    }

    // The consensus messages cross the channel.
    let messages: Vec<Vec<f64>> = state
        .x
        .iter()
        .zip(&state.u)
        .map(|(x, u)| x.iter().zip(u).map(|(a, b)| a + b).collect())
        .collect();
    let fading = draw_fading(channel, fading_rng)?;
    let aggregate = ota_aggregate(&messages, &fading, channel, noise_rng)?;
    let aggregate_peak = aggregate.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let z_prev = std::mem::take(&mut state.z);
    let threshold = task.problem.l1_weight / (rho * n as f64);
    state.z = aggregate
        .iter()
        .map(|v| soft_threshold(*v, threshold))
        .collect();

    for (x, u) in state.x.iter().zip(state.u.iter_mut()) {
        for ((ui, xi), zi) in u.iter_mut().zip(x).zip(&state.z) {
            *ui += xi - zi;
        }
    }

    // Residuals and objective on the mean primal iterate.
    let dim = task.dim();
    let mut x_mean = vec![0.0; dim];
    for x in &state.x {
        for (m, v) in x_mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in x_mean.iter_mut() {
        *m /= n as f64;
    }
    let primal_residual = x_mean
        .iter()
        .zip(&state.z)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let dual_residual = rho
        * state
            .z
            .iter()
            .zip(&z_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

    Ok(AdmmRoundStats {
        objective: task.problem.objective(&x_mean, &state.z),
        primal_residual,
        dual_residual,
        aggregate_peak,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoParams {
    pub m: usize,
    pub d: usize,
    pub nnz: usize,
    pub snr_db: f64,
    /// Seed of the shipped synthetic instance (fixed: the dataset is part
    /// of the task identity, not of the experiment seed).
    pub data_seed: u64,
    /// L1 weight as a fraction of `||A' b||_inf` (the smallest weight that
    /// zeroes the solution).
    pub l1_fraction: f64,
    pub admm_penalty: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            m: 200,
            d: 50,
            nnz: 10,
            snr_db: 40.0,
            data_seed: 1,
            l1_fraction: 0.1,
            admm_penalty: 50.0,
        }
    }
}

pub fn build_lasso_task(params: &LassoParams, num_ues: usize) -> Result<AdmmLassoTask> {
    let mut table = toml::Table::new();
    table.insert("m".into(), (params.m as i64).into());
    table.insert("d".into(), (params.d as i64).into());
    table.insert("nnz".into(), (params.nnz as i64).into());
    table.insert("snr_db".into(), params.snr_db.into());
    let (design, targets, ground_truth) =
        match generate_synthetic("lasso_sparse", &table, params.data_seed)? {
            Dataset::Lasso {
                design,
                targets,
                ground_truth,
            } => (design, targets, ground_truth),
            _ => unreachable!("lasso_sparse yields a lasso dataset"),
        };
    let atb_inf = design
        .t_matvec(&targets)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let problem = LassoProblem {
        design,
        targets,
        l1_weight: params.l1_fraction * atb_inf,
        admm_penalty: params.admm_penalty,
    };
    AdmmLassoTask::new(problem, num_ues, Some(ground_truth))
}

pub struct LassoFactory;

impl WorkloadFactory for LassoFactory {
    fn id(&self) -> &'static str {
        "lasso_admm"
    }

    fn build(&self, params: &toml::Table, ctx: &BuildContext) -> Result<Task> {
        let p: LassoParams = parse_params(self.id(), params)?;
        Ok(Task::AdmmLasso(build_lasso_task(&p, ctx.num_ues)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingModel;
    use crate::seed::round_rng;
    use crate::stable::StableParams;
    use crate::workloads::oracle::ista;

    fn noiseless_channel(n: usize) -> OtaChannelConfig {
        OtaChannelConfig {
            fading: FadingModel::Unit,
            noise: StableParams::new(1.5, 1.0).unwrap(),
            receive_noise_scale: 0.0,
            num_ues: n,
        }
    }

    fn run_admm(task: &AdmmLassoTask, rounds: usize) -> (AdmmState, Vec<AdmmRoundStats>) {
        let channel = noiseless_channel(task.num_clients());
        let mut state = task.initial_state();
        let mut stats = Vec::with_capacity(rounds);
        for k in 0..rounds {
            let mut fading = round_rng(0, k as u64, "fading");
            let mut noise = round_rng(0, k as u64, "noise");
            stats.push(admm_lasso_round(task, &mut state, &channel, &mut fading, &mut noise).unwrap());
        }
        (state, stats)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.0, 0.0), 0.0);
    }

    #[test]
    fn single_client_no_penalty_reaches_least_squares() {
        // 5x3 instance, lambda = 0: the fixed point solves the normal
        // equations. Independent oracle: direct Cholesky solve of A'A.
        let design = Matrix::from_rows(
            5,
            3,
            vec![
                1.0, 0.5, -0.2, //
                0.3, -1.0, 0.8, //
                -0.7, 0.2, 0.4, //
                0.9, 0.9, -0.5, //
                0.1, -0.3, 1.2,
            ],
        )
        .unwrap();
        let targets = vec![1.0, -0.5, 0.3, 0.8, -1.1];
        let problem = LassoProblem {
            design: design.clone(),
            targets: targets.clone(),
            l1_weight: 0.0,
            admm_penalty: 1.0,
        };
        let task = AdmmLassoTask::new(problem, 1, None).unwrap();
        let (state, _) = run_admm(&task, 300);

        let normal = design.gram();
        let rhs = design.t_matvec(&targets);
        let direct = Cholesky::factor(&normal).unwrap().solve(&rhs);
        for (zi, di) in state.z.iter().zip(&direct) {
            assert!((zi - di).abs() < 1e-9, "{} vs {}", zi, di);
        }
    }

    #[test]
    fn noiseless_admm_matches_centralized_ista() {
        let task = build_lasso_task(&LassoParams::default(), 4).unwrap();
        let (state, stats) = run_admm(&task, 200);
        let (_, ista_objective) = ista(
            &task.problem().design,
            &task.problem().targets,
            task.problem().l1_weight,
            200_000,
            1e-14,
        );
        let last = stats.last().unwrap();
        assert!(
            (last.objective - ista_objective).abs() < 1e-6,
            "admm {} vs ista {}",
            last.objective,
            ista_objective
        );
        // Residual contract at the documented budget.
        assert!(last.primal_residual < 1e-6, "primal {}", last.primal_residual);
        assert!(last.dual_residual < 1e-6, "dual {}", last.dual_residual);
        // The solution should resemble the planted signal up to the
        // shrinkage bias of the L1 penalty.
        let err = task.ground_truth_error(&state.z);
        assert!(err < 0.5, "ground-truth error {err}");
    }

    #[test]
    fn objective_approaches_the_fixed_point() {
        let task = build_lasso_task(&LassoParams::default(), 4).unwrap();
        let (_, stats) = run_admm(&task, 60);
        let reference = stats.last().unwrap().objective;
        let early = (stats[0].objective - reference).abs();
        let late = (stats[40].objective - reference).abs();
        assert!(late < 1e-3 * early, "early err {early}, late err {late}");
    }
}


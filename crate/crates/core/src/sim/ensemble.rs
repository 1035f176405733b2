use rayon::prelude::*;
use serde::Serialize;

use super::path::simulate_path;
use super::{SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Replications simulated per parallel batch before folding into the stats.
const BATCH: u64 = 256;

/// Per-grid-point moments of `x_k / N` over the replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub grid: Vec<f64>,
    pub scale: f64,
    /// `mean[k][i]`: mean of `x_k / N` at `grid[i]`.
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance, zero for a single replication.
    pub variance: Vec<Vec<f64>>,
    /// Replications that reached the horizon.
    pub replications: u64,
    /// Replications that hit the event cap and were left out.
    pub cap_exceeded: u64,
}

impl EnsembleStats {
    pub fn d(&self) -> usize {
        self.mean.len() - 1
    }
}

/// Exact integer accumulators: the result does not depend on the order in
/// which replications are folded in.
struct Moments {
    sum: Vec<Vec<u128>>,
    sum_sq: Vec<Vec<u128>>,
    count: u64,
}

impl Moments {
    fn new(levels: usize, points: usize) -> Self {
        Self {
            sum: vec![vec![0; points]; levels],
            sum_sq: vec![vec![0; points]; levels],
            count: 0,
        }
    }

    fn push(&mut self, traj: &Trajectory) {
        for (i, state) in traj.states.iter().enumerate() {
            for (k, &x) in state.counts().iter().enumerate() {
                let x = x as u128;
                self.sum[k][i] += x;
                self.sum_sq[k][i] += x * x;
            }
        }
        self.count += 1;
    }
}

/// All replications `0..R` in replication order.
pub fn simulate_paths(params: &ModelParams, cfg: &SimConfig) -> Vec<Result<Trajectory>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| simulate_path(params, cfg, rep))
        .collect()
}

pub fn run_ensemble(params: &ModelParams, cfg: &SimConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    if let crate::model::Regime::Rejected(reason) = params.regime() {
        return Err(Error::RegimeRejected(reason.to_string()));
    }
    let grid = cfg.grid();
    let levels = params.d() + 1;
    let mut moments = Moments::new(levels, grid.len());
    let mut cap_exceeded = 0;

    let mut first = 0;
    while first < cfg.replications {
        let last = (first + BATCH).min(cfg.replications);
        let batch: Vec<Result<Trajectory>> = (first..last)
            .into_par_iter()
            .map(|rep| simulate_path(params, cfg, rep))
            .collect();
        for res in batch {
            match res {
                Ok(traj) => moments.push(&traj),
                Err(Error::EventCapExceeded { .. }) => cap_exceeded += 1,
                Err(e) => return Err(e),
            }
        }
        first = last;
    }

    let n = params.n_servers() as f64;
    let r = moments.count;
    let mut mean = vec![vec![0.0; grid.len()]; levels];
    let mut variance = vec![vec![0.0; grid.len()]; levels];
    if r > 0 {
        for k in 0..levels {
            for i in 0..grid.len() {
                let s = moments.sum[k][i];
                mean[k][i] = s as f64 / r as f64 / n;
                if r > 1 {
                    // R * sum(x^2) - (sum x)^2 >= 0 exactly.
                    let centered = r as u128 * moments.sum_sq[k][i] - s * s;
                    variance[k][i] = centered as f64 / (r as f64 * (r - 1) as f64) / (n * n);
                }
            }
        }
    }
    Ok(EnsembleStats {
        grid,
        scale: cfg.scale(params),
        mean,
        variance,
        replications: r,
        cap_exceeded,
    })
}

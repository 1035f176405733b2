use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::path::simulate_path;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};
use crate::rng::{stream, tag, tagged, SimRng};

/// Birth-death path of an M/M/1 queue: `values[i]` holds on
/// `[times[i], times[i+1])`, `integrals[i]` is the running integral at `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mm1Path {
    pub times: Vec<f64>,
    pub values: Vec<u64>,
    pub integrals: Vec<f64>,
    pub horizon: f64,
}

impl Mm1Path {
    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> u64 {
        self.values[self.index_at(t)]
    }

    /// `int_0^t L(s) ds`, exact.
    pub fn integral_at(&self, t: f64) -> f64 {
        let i = self.index_at(t);
        self.integrals[i] + self.values[i] as f64 * (t - self.times[i])
    }

    pub fn time_average(&self, t: f64) -> f64 {
        self.integral_at(t) / t
    }

    pub fn max_value(&self) -> u64 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

pub fn mm1_path(arrival: f64, service: f64, initial: u64, horizon: f64, seed: u64) -> Result<Mm1Path> {
    if !(arrival >= 0.0 && service > 0.0 && horizon > 0.0) {
        return Err(Error::Domain(format!(
            "need arrival >= 0, service > 0, horizon > 0 (got {arrival}, {service}, {horizon})"
        )));
    }
    let mut rng = stream(tagged(seed, tag::MM1), 0);
    Ok(run_mm1(&mut rng, arrival, service, initial, horizon))
}

fn run_mm1(rng: &mut SimRng, arrival: f64, service: f64, initial: u64, horizon: f64) -> Mm1Path {
    let mut path = Mm1Path {
        times: vec![0.0],
        values: vec![initial],
        integrals: vec![0.0],
        horizon,
    };
    let (mut t, mut l, mut integral) = (0.0, initial, 0.0);
    loop {
        let rate = arrival + if l > 0 { service } else { 0.0 };
        if rate == 0.0 {
            break;
        }
        let next = t + rng.sample::<f64, _>(Exp1) / rate;
        if next > horizon {
            break;
        }
        integral += l as f64 * (next - t);
        let up = rng.random::<f64>() * rate < arrival;
        l = if up { l + 1 } else { l - 1 };
        t = next;
        path.times.push(t);
        path.values.push(l);
        path.integrals.push(integral);
    }
    path
}

/// `Z = sum_{k<d} (d - k) x_k` of one replication next to an independent
/// M/M/1 queue with arrival rate `d mu beta0 N` and service rate `lambda N`,
/// both on the (scaled) simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingPaths {
    pub grid: Vec<f64>,
    pub z: Vec<u64>,
    pub queue: Vec<u64>,
    /// `F_N / N`.
    pub beta0: f64,
}

pub fn coupling_diagnostic(params: &ModelParams, cfg: &SimConfig, rep: u64) -> Result<CouplingPaths> {
    if params.regime() != Regime::Stable {
        return Err(Error::RegimeRejected(format!(
            "the M/M/1 comparison needs the stable regime, got {}",
            params.regime()
        )));
    }
    let n = params.n_servers() as f64;
    let beta0 = params.f_n() as f64 / n;
    let arrival = params.d() as f64 * params.mu() * beta0 * n;
    let service = params.capacity();
    if arrival >= service {
        return Err(Error::Domain(format!(
            "M/M/1 arrival rate {arrival} is not below service rate {service}"
        )));
    }
    let traj = simulate_path(params, cfg, rep)?;
    let end = cfg.horizon * traj.scale;
    let mut rng = stream(tagged(cfg.seed, tag::MM1), rep);
    let queue = run_mm1(&mut rng, arrival, service, 0, end);
    Ok(CouplingPaths {
        z: traj.states.iter().map(|s| s.weighted_deficit()).collect(),
        queue: traj.grid.iter().map(|&g| queue.value_at(g * traj.scale)).collect(),
        grid: traj.grid,
        beta0,
    })
}

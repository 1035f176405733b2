//! Gaussian fluctuations of the number of lost files around `N Phi(t)`.
//!
//! `W = lim (x_0(N^{d-1} t) - N Phi(t)) / sqrt(N)` solves
//!
//! `dW = sqrt(Phi'(t)) dB - K (W - gamma) / (lambda - d mu (beta - Phi(t)))^2 dt`
//!
//! with `K = lambda^2 mu d! / rho^{d-1}` and `W(0) = 0`, where
//! `gamma = lim (F_N - beta N) / sqrt(N)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::DecayCurve;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{stream, tag, tagged};
use crate::sim::Trajectory;

const CHUNK: u64 = 256;

/// `(F_N - beta N) / sqrt(N)`.
pub fn default_gamma(params: &ModelParams) -> f64 {
    let n = params.n_servers() as f64;
    (params.f_n() as f64 - params.beta() * n) / n.sqrt()
}

/// Mean-reversion rate `K / (lambda - d mu (beta - Phi(t)))^2`.
pub fn drift_rate(curve: &DecayCurve, t: f64) -> f64 {
    let p = curve.params();
    let d = p.d();
    let k = p.lambda() * p.lambda() * p.mu() * (1..=d).map(|i| i as f64).product::<f64>()
        / p.rho().powi(d as i32 - 1);
    let gap = p.lambda() - d as f64 * p.mu() * (p.beta() - curve.phi_of_t(t));
    k / (gap * gap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeOptions {
    pub step: f64,
    pub horizon: f64,
    pub gamma: f64,
    /// `false` drops the Brownian term.
    pub noise: bool,
}

impl SdeOptions {
    pub fn new(step: f64, horizon: f64, gamma: f64) -> Result<Self> {
        if !(step > 0.0 && horizon >= step && step.is_finite() && horizon.is_finite()) {
            return Err(Error::Domain(format!("need 0 < step <= horizon, got {step}, {horizon}")));
        }
        Ok(Self {
            step,
            horizon,
            gamma,
            noise: true,
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    fn len(&self) -> usize {
        (self.horizon / self.step + 1e-9).floor() as usize + 1
    }
}

/// Drift rate and diffusion coefficient at every grid time.
struct Coefficients {
    rate: Vec<f64>,
    diffusion: Vec<f64>,
}

impl Coefficients {
    fn new(curve: &DecayCurve, opts: &SdeOptions) -> Self {
        let times: Vec<f64> = (0..opts.len()).map(|i| i as f64 * opts.step).collect();
        Self {
            rate: times.iter().map(|&t| drift_rate(curve, t)).collect(),
            diffusion: times.iter().map(|&t| curve.phi_prime(t).sqrt()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationPath {
    pub step: f64,
    pub w: Vec<f64>,
    pub seed: u64,
}

fn euler_maruyama(coef: &Coefficients, opts: &SdeOptions, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = stream(tagged(seed, tag::SDE), index);
    let n = coef.rate.len();
    let h = opts.step;
    let sqrt_h = h.sqrt();
    let mut w = Vec::with_capacity(n);
    let mut x = 0.0;
    w.push(x);
    for i in 0..n - 1 {
        let mut next = x - coef.rate[i] * (x - opts.gamma) * h;
        if opts.noise {
            let z: f64 = StandardNormal.sample(&mut rng);
            next += coef.diffusion[i] * sqrt_h * z;
        }
        x = next;
        w.push(x);
    }
    w
}

/// Euler-Maruyama path with `W(0) = 0`.
pub fn simulate_clt_path(curve: &DecayCurve, opts: &SdeOptions, seed: u64) -> FluctuationPath {
    let coef = Coefficients::new(curve, opts);
    FluctuationPath {
        step: opts.step,
        w: euler_maruyama(&coef, opts, seed, 0),
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurve {
    pub step: f64,
    pub mean: Vec<f64>,
    /// Unbiased sample variance.
    pub variance: Vec<f64>,
    pub samples: u64,
}

impl MomentCurve {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t / self.step).round() as usize;
        ((i as f64 * self.step - t).abs() < 1e-9 * (1.0 + t) && i < self.mean.len()).then_some(i)
    }

    pub fn standard_error(&self, i: usize) -> f64 {
        (self.variance[i] / self.samples as f64).sqrt()
    }
}

struct Sums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Sums {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            sum_sq: vec![0.0; n],
        }
    }

    fn push(&mut self, path: &[f64]) {
        for (i, &w) in path.iter().enumerate() {
            self.sum[i] += w;
            self.sum_sq[i] += w * w;
        }
    }

    fn merge(&mut self, other: &Sums) {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
    }

    fn finish(self, step: f64, r: u64) -> MomentCurve {
        let rf = r as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / rf).collect();
        let variance = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| ((q - s * s / rf) / (rf - 1.0)).max(0.0))
            .collect();
        MomentCurve {
            step,
            mean,
            variance,
            samples: r,
        }
    }
}

/// Mean and variance of `reps` independent SDE paths. Path `i` uses its own
/// stream; chunks are merged in a fixed order, so the result does not
/// depend on the thread count.
pub fn clt_ensemble(curve: &DecayCurve, opts: &SdeOptions, reps: u64, seed: u64) -> Result<MomentCurve> {
    if reps < 2 {
        return Err(Error::Domain(format!("need at least 2 paths, got {reps}")));
    }
    let coef = Coefficients::new(curve, opts);
    let n = opts.len();
    let chunks: Vec<Sums> = (0..reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = Sums::new(n);
            for i in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                sums.push(&euler_maruyama(&coef, opts, seed, i));
            }
            sums
        })
        .collect();
    let mut total = Sums::new(n);
    for c in &chunks {
        total.merge(c);
    }
    Ok(total.finish(opts.step, reps))
}

fn rk4(n: usize, h: f64, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut y = 0.0;
    out.push(y);
    for i in 0..n - 1 {
        let t = i as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(y);
    }
    out
}

/// `E W(t)`: solution of `m' = -a(t) (m - gamma)`, `m(0) = 0`.
pub fn mean_ode(curve: &DecayCurve, opts: &SdeOptions) -> Vec<f64> {
    rk4(opts.len(), opts.step, |t, m| -drift_rate(curve, t) * (m - opts.gamma))
}

/// `Var W(t)`: solution of `v' = -2 a(t) v + Phi'(t)`, `v(0) = 0`.
pub fn variance_ode(curve: &DecayCurve, opts: &SdeOptions) -> Vec<f64> {
    rk4(opts.len(), opts.step, |t, v| -2.0 * drift_rate(curve, t) * v + curve.phi_prime(t))
}

/// Rescaled simulated paths `(x_0(N^{d-1} t) - N Phi(t)) / sqrt(N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalFluctuation {
    pub grid: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

impl EmpiricalFluctuation {
    pub fn moments(&self) -> MomentCurve {
        let n = self.grid.len();
        let mut sums = Sums::new(n);
        for p in &self.paths {
            sums.push(p);
        }
        let step = if n > 1 { self.grid[1] - self.grid[0] } else { 0.0 };
        sums.finish(step, self.paths.len() as u64)
    }
}

pub fn empirical_fluctuation(trajectories: &[Trajectory], curve: &DecayCurve) -> Result<EmpiricalFluctuation> {
    let params = curve.params();
    let n = params.n_servers() as f64;
    let scale = n.powi(params.d() as i32 - 1);
    let first = trajectories
        .first()
        .ok_or_else(|| Error::GridMismatch("no trajectories".into()))?;
    let grid = first.grid.clone();
    let phi: Vec<f64> = grid.iter().map(|&t| curve.phi_of_t(t)).collect();
    let mut paths = Vec::with_capacity(trajectories.len());
    for (r, traj) in trajectories.iter().enumerate() {
        if traj.grid != grid {
            return Err(Error::GridMismatch(format!("trajectory {r} has a different grid")));
        }
        if (traj.scale - scale).abs() > 1e-9 * scale {
            return Err(Error::GridMismatch(format!(
                "trajectory {r} observed on scale {} instead of N^(d-1) = {scale}",
                traj.scale
            )));
        }
        if traj.states.len() != grid.len() {
            return Err(Error::GridMismatch(format!("trajectory {r} is incomplete")));
        }
        paths.push(
            traj.lost()
                .zip(&phi)
                .map(|(x0, f)| (x0 as f64 - n * f) / n.sqrt())
                .collect(),
        );
    }
    Ok(EmpiricalFluctuation { grid, paths })
}

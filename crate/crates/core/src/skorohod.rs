//! Classical and generalized Skorohod problems on a uniform time grid.
//!
//! A solution of the classical problem for a free path `Z` and a nilpotent
//! reflection matrix `P` is a pair `(X, R)` with `X = Z + (I - P) R >= 0`,
//! `R` non-decreasing from 0 and `R_k` increasing only when `X_k = 0`. In the
//! generalized problem `Z = G(X)` for a non-anticipating functional `G`, and
//! the solution is the fixed point of `X -> SP(G(X))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Non-negative square matrix with `P^K = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionMatrix {
    entries: Vec<Vec<f64>>,
}

impl ReflectionMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        if k == 0 || entries.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidParams("reflection matrix must be square and non-empty".into()));
        }
        if entries.iter().flatten().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParams("reflection matrix entries must be finite and >= 0".into()));
        }
        let matrix = Self { entries };
        let mut power = matrix.entries.clone();
        for _ in 1..k {
            power = matrix.mul(&power);
        }
        if power.iter().flatten().any(|&p| p != 0.0) {
            return Err(Error::InvalidParams("reflection matrix is not nilpotent".into()));
        }
        Ok(matrix)
    }

    /// `P[i][i-1] = 1`, the matrix of the duplication chain.
    pub fn lower_shift(k: usize) -> Self {
        let mut entries = vec![vec![0.0; k]; k];
        for i in 1..k {
            entries[i][i - 1] = 1.0;
        }
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    fn mul(&self, other: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.dim();
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for l in 0..k {
                let a = self.entries[i][l];
                if a != 0.0 {
                    for j in 0..k {
                        out[i][j] += a * other[l][j];
                    }
                }
            }
        }
        out
    }
}

/// Vector path sampled at `i * step`, stored as `values[k][i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    step: f64,
    values: Vec<Vec<f64>>,
}

impl GridPath {
    pub fn new(step: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Domain(format!("grid step must be positive, got {step}")));
        }
        let len = values.first().map_or(0, Vec::len);
        if values.is_empty() || len == 0 || values.iter().any(|v| v.len() != len) {
            return Err(Error::GridMismatch("components must be non-empty and of equal length".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("path values must be finite".into()));
        }
        Ok(Self { step, values })
    }

    /// Samples `f(t)` on `0, step, ..., floor(horizon / step) * step`.
    pub fn from_fn(dim: usize, step: f64, horizon: f64, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let n = grid_len(step, horizon);
        let mut values = vec![Vec::with_capacity(n); dim];
        for i in 0..n {
            let v = f(i as f64 * step);
            for (comp, x) in values.iter_mut().zip(v) {
                comp.push(x);
            }
        }
        Self::new(step, values)
    }

    fn zeros(dim: usize, step: f64, len: usize) -> Self {
        Self {
            step,
            values: vec![vec![0.0; len]; dim],
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k][i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// First `len` grid points.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            step: self.step,
            values: self.values.iter().map(|v| v[..len].to_vec()).collect(),
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_diff(&self.values, &other.values, 0)
    }
}

fn grid_len(step: f64, horizon: f64) -> usize {
    (horizon / step + 1e-9).floor() as usize + 1
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>], from: usize) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(u, v)| u[from..].iter().zip(&v[from..]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkorohodSolution {
    pub x: GridPath,
    pub r: GridPath,
}

impl SkorohodSolution {
    /// `sum_i X_k(t_i) (R_k(t_i) - R_k(t_{i-1}))`.
    pub fn complementarity(&self, k: usize) -> f64 {
        let (x, r) = (self.x.component(k), self.r.component(k));
        (1..x.len()).map(|i| x[i] * (r[i] - r[i - 1])).sum()
    }

    /// Default complementarity tolerance `10 h max|X|`.
    pub fn default_tolerance(&self) -> f64 {
        let max = self.x.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        10.0 * self.x.step * max
    }

    /// Checks `X >= 0`, `R(0) = 0`, `R` non-decreasing and discrete
    /// complementarity within `tol_comp`, reporting the first violation.
    pub fn check(&self, tol_comp: f64) -> std::result::Result<(), String> {
        for k in 0..self.x.dim() {
            let (x, r) = (self.x.component(k), self.r.component(k));
            if let Some(i) = x.iter().position(|&v| v < -1e-12) {
                return Err(format!("X_{} = {} < 0 at index {i}", k + 1, x[i]));
            }
            if r[0] != 0.0 {
                return Err(format!("R_{}(0) = {}", k + 1, r[0]));
            }
            if let Some(i) = (1..r.len()).find(|&i| r[i] < r[i - 1]) {
                return Err(format!("R_{} decreases at index {i}", k + 1));
            }
            let c = self.complementarity(k);
            if c > tol_comp {
                return Err(format!("complementarity of component {} is {c:e} > {tol_comp:e}", k + 1));
            }
        }
        Ok(())
    }
}

/// Classical Skorohod problem. The regulator map
/// `R_k(t) = sup_{s<=t} [-Z_k(s) + (P R)_k(s)]^+` is iterated `K + 1` times
/// from `R = 0`, which is exact for a nilpotent `P`.
pub fn solve_sp(z: &GridPath, p: &ReflectionMatrix, tol: f64) -> Result<SkorohodSolution> {
    let k = z.dim();
    if p.dim() != k {
        return Err(Error::GridMismatch(format!("path has {k} components, matrix has dimension {}", p.dim())));
    }
    if let Some(j) = (0..k).find(|&j| z.value(j, 0) < 0.0) {
        return Err(Error::Domain(format!("Z_{}(0) = {} < 0", j + 1, z.value(j, 0))));
    }
    let n = z.len();
    let mut r = vec![vec![0.0; n]; k];
    let mut change = f64::INFINITY;
    for _ in 0..=k {
        let next = regulator_sweep(z, p, &r, &[], 0);
        change = sup_diff(&next, &r, 0);
        r = next;
    }
    if change > tol {
        return Err(Error::NoConvergence {
            iterations: k + 1,
            residual: change,
        });
    }
    let x = reflect(z, p, &r);
    Ok(SkorohodSolution {
        x: GridPath { step: z.step, values: x },
        r: GridPath { step: z.step, values: r },
    })
}

/// One Jacobi sweep of the regulator map on indices `from..`, continuing the
/// running supremum from `base` (the regulator values at `from - 1`).
fn regulator_sweep(z: &GridPath, p: &ReflectionMatrix, r: &[Vec<f64>], base: &[f64], from: usize) -> Vec<Vec<f64>> {
    let k = z.dim();
    let n = z.len();
    let mut out = vec![vec![0.0; n]; k];
    for i in 0..k {
        let mut running = if from == 0 { 0.0 } else { base[i] };
        out[i][..from].copy_from_slice(&r[i][..from]);
        for t in from..n {
            let mut push = -z.values[i][t];
            for (j, rj) in r.iter().enumerate() {
                let pij = p.entries[i][j];
                if pij != 0.0 {
                    push += pij * rj[t];
                }
            }
            running = running.max(push);
            out[i][t] = running;
        }
    }
    out
}

fn reflect(z: &GridPath, p: &ReflectionMatrix, r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = z.dim();
    let mut x = z.values.clone();
    for i in 0..k {
        for t in 0..z.len() {
            let mut v = r[i][t];
            for (j, rj) in r.iter().enumerate() {
                let pij = p.entries[i][j];
                if pij != 0.0 {
                    v -= pij * rj[t];
                }
            }
            x[i][t] += v;
        }
    }
    x
}

/// A non-anticipating path functional: the output at grid index `i` depends
/// only on the input at indices `0..=i`.
pub trait Functional {
    fn dim(&self) -> usize;

    /// Evaluates on the grid of `h` (same step and length).
    fn eval(&self, h: &GridPath) -> GridPath;

    /// Constant `C` with `|G(h) - G(h')|(t) <= C int_0^t |h - h'|` on `[0, horizon]`.
    fn lipschitz_constant(&self, horizon: f64) -> f64;
}

/// `G(h) = Z` regardless of `h`.
#[derive(Debug, Clone)]
pub struct ConstantG(pub GridPath);

impl Functional for ConstantG {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, h: &GridPath) -> GridPath {
        self.0.prefix(h.len())
    }

    fn lipschitz_constant(&self, _horizon: f64) -> f64 {
        0.0
    }
}

/// Free path of the fluid duplication system on the partial sums
/// `(s_1, ..., s_{d-1})`:
///
/// - `G_1 = mu int (2 h_2 - 3 h_1) - eta t`
/// - `G_k = mu int ((k+1) h_{k+1} - (k+1) h_k - h_1)` for `1 < k < d-1`
/// - `G_{d-1} = d mu int (F - h_{d-1} - mu int h_1) - mu int h_1`
///
/// For `d = 2` the single component combines the first and last rules.
/// Integrals use the trapezoidal rule on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidG {
    pub d: usize,
    pub mu: f64,
    /// Total mass `F`.
    pub mass: f64,
    /// Drift constant `eta`.
    pub eta: f64,
}

impl FluidG {
    /// Coefficient of `h_j` in the integrand of component `k` (both 1-based),
    /// excluding the nested `h_1` term of the last component.
    fn coefficient(&self, k: usize, j: usize) -> f64 {
        let d = self.d;
        let mut c = 0.0;
        if j == 1 {
            c -= 1.0;
        }
        if k == d - 1 {
            if j == d - 1 {
                c -= d as f64;
            }
        } else {
            if j == k + 1 {
                c += (k + 1) as f64;
            }
            if j == k {
                c -= (k + 1) as f64;
            }
        }
        c
    }
}

impl Functional for FluidG {
    fn dim(&self) -> usize {
        self.d - 1
    }

    fn eval(&self, h: &GridPath) -> GridPath {
        let (d, mu, step, n) = (self.d, self.mu, h.step, h.len());
        let kdim = d - 1;
        let mut out = GridPath::zeros(kdim, step, n);
        let integrand_at = |k: usize, i: usize| -> f64 {
            (1..=kdim).map(|j| self.coefficient(k, j) * h.values[j - 1][i]).sum()
        };
        // int_0^t h_1, needed by the refill term of the last component
        let mut int_h1 = vec![0.0; n];
        for i in 1..n {
            int_h1[i] = int_h1[i - 1] + 0.5 * step * (h.values[0][i - 1] + h.values[0][i]);
        }
        for k in 1..=kdim {
            let mut acc = 0.0;
            let mut prev = integrand_at(k, 0);
            if k == d - 1 {
                prev += d as f64 * (self.mass - mu * int_h1[0]);
            }
            let comp = &mut out.values[k - 1];
            comp[0] = 0.0;
            for i in 1..n {
                let mut cur = integrand_at(k, i);
                if k == d - 1 {
                    cur += d as f64 * (self.mass - mu * int_h1[i]);
                }
                acc += 0.5 * step * (prev + cur);
                prev = cur;
                comp[i] = mu * acc;
            }
            if k == 1 {
                for (i, v) in comp.iter_mut().enumerate() {
                    *v -= self.eta * i as f64 * step;
                }
            }
        }
        out
    }

    fn lipschitz_constant(&self, horizon: f64) -> f64 {
        let kdim = self.d - 1;
        (1..=kdim)
            .map(|k| {
                let direct: f64 = (1..=kdim).map(|j| self.coefficient(k, j).abs()).sum();
                let nested = if k == kdim { self.d as f64 * self.mu * horizon } else { 0.0 };
                self.mu * (direct + nested)
            })
            .fold(0.0, f64::max)
    }
}

/// Functional of the fluid system at fluid scale: `F = beta`, `eta = lambda`.
/// Supports every `d >= 2`; `d = 2` is the one-dimensional degenerate case.
pub fn build_fluid_g(params: &ModelParams) -> Result<FluidG> {
    if params.d() < 2 {
        return Err(Error::UnsupportedDimension(params.d()));
    }
    Ok(FluidG {
        d: params.d(),
        mu: params.mu(),
        mass: params.beta(),
        eta: params.lambda(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GspOptions {
    /// Sup-norm change at which Picard iteration stops.
    pub tol: f64,
    /// Iteration budget per window.
    pub max_iter: usize,
    /// Length of the time windows solved one after the other. `None` picks
    /// `1 / C` from the Lipschitz constant `C` of the functional.
    pub window: Option<f64>,
}

impl Default for GspOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GspSolution {
    pub solution: SkorohodSolution,
    /// Picard iterations used on each window.
    pub iterations: Vec<usize>,
    /// Sup-norm change after each iteration, per window.
    pub residuals: Vec<Vec<f64>>,
    /// Window boundaries as grid indices `(first, last)`.
    pub windows: Vec<(usize, usize)>,
}

impl GspSolution {
    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }
}

/// Generalized Skorohod problem `X = G(X) + (I - P) R` on `[0, horizon]`.
///
/// Picard iteration `X <- SP(G(X))` is run window by window: once `X` has
/// converged on `[0, a]` it is frozen and the iteration continues on the
/// next window, started from the constant extension of `X(a)`. Because `G`
/// is non-anticipating this gives the same fixed point as iterating on the
/// whole horizon, with a contraction factor set by the window length.
pub fn solve_gsp(g: &dyn Functional, p: &ReflectionMatrix, step: f64, horizon: f64, opts: &GspOptions) -> Result<GspSolution> {
    let k = g.dim();
    if p.dim() != k {
        return Err(Error::GridMismatch(format!("functional has {k} components, matrix has dimension {}", p.dim())));
    }
    if !(step > 0.0 && horizon >= step) {
        return Err(Error::Domain(format!("need 0 < step <= horizon, got step {step}, horizon {horizon}")));
    }
    let n = grid_len(step, horizon);
    let window = opts.window.unwrap_or_else(|| {
        let c = g.lipschitz_constant(horizon);
        if c > 0.0 {
            1.0 / c
        } else {
            horizon
        }
    });
    let per_window = ((window / step).round() as usize).max(1);

    let mut x = GridPath::zeros(k, step, n);
    let mut r = vec![vec![0.0; n]; k];
    let mut iterations = Vec::new();
    let mut residuals = Vec::new();
    let mut windows = Vec::new();

    let mut first = 0;
    while first < n {
        let last = (first + per_window).min(n - 1);
        let len = last + 1;
        let frozen = first.saturating_sub(1);
        if first > 0 {
            for comp in x.values.iter_mut() {
                let v = comp[frozen];
                comp[first..len].fill(v);
            }
        }
        let base: Vec<f64> = r.iter().map(|c| if first == 0 { 0.0 } else { c[frozen] }).collect();
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let z = g.eval(&x.prefix(len));
            let mut rw: Vec<Vec<f64>> = r.iter().map(|c| c[..len].to_vec()).collect();
            for _ in 0..=k {
                rw = regulator_sweep(&z, p, &rw, &base, first);
            }
            let xw = reflect(&z, p, &rw);
            let change = sup_diff(&xw, &x.prefix(len).values, first);
            for j in 0..k {
                x.values[j][first..len].copy_from_slice(&xw[j][first..len]);
                r[j][first..len].copy_from_slice(&rw[j][first..len]);
            }
            history.push(change);
            if change < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                iterations: opts.max_iter,
                residual: history.last().copied().unwrap_or(f64::NAN),
            });
        }
        iterations.push(history.len());
        residuals.push(history);
        windows.push((first, last));
        first = len;
    }
    Ok(GspSolution {
        solution: SkorohodSolution {
            x,
            r: GridPath { step, values: r },
        },
        iterations,
        residuals,
        windows,
    })
}

//! Fluid limits of the scaled occupancy vector on the normal time scale.
//!
//! With partial sums `s_k = x_1 + ... + x_k` (`s_d = beta - x_0`), the
//! overloaded fluid limit runs through segments `l = d-1, d-2, ..., p`. On
//! segment `l`, i.e. for `t_{l+1} <= t <= t_l`:
//!
//! - `s_k = 0` for `k < l`,
//! - `s_l' = mu (l+1) s_{l+1} - mu s_l - lambda` (level `l` absorbs the repair capacity),
//! - `s_k' = mu (k+1) (s_{k+1} - s_k)` for `l < k < d`, and `s_d = beta`.
//!
//! `t_l` is the time at which `s_l` reaches `rho / l`; `t_d = 0` and
//! `t_p = +inf`. Every `s_k` is a finite sum of exponentials `e^{-j mu t}`,
//! stored relative to the start of its segment.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};
use crate::skorohod::{build_fluid_g, solve_gsp, GridPath, GspOptions, GspSolution, ReflectionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Segment {
    level: usize,
    start: f64,
    end: f64,
    /// `s_k(t) = sum_j coeffs[k][j] exp(-j mu (t - start))` for `k = 0..=d`.
    coeffs: Vec<Vec<f64>>,
}

impl Segment {
    fn s(&self, k: usize, t: f64, mu: f64) -> f64 {
        let tau = t - self.start;
        self.coeffs[k]
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| c * (-(j as f64) * mu * tau).exp())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSolution {
    d: usize,
    mu: f64,
    beta: f64,
    rho: f64,
    regime: Regime,
    segments: Vec<Segment>,
}

impl FluidSolution {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `t_l`: `Some(0)` for `l = d`, `Some(+inf)` for `l = p`, the finite
    /// thresholds in between, `None` outside `p..=d` or in the stable regime.
    pub fn threshold(&self, l: usize) -> Option<f64> {
        if l == self.d {
            return Some(0.0);
        }
        self.segments.iter().find(|s| s.level == l).map(|s| s.end)
    }

    /// Finite thresholds `(l, t_l)` for `l = d-1` down to `p+1`, increasing in time.
    pub fn thresholds(&self) -> Vec<(usize, f64)> {
        self.segments
            .iter()
            .filter(|s| s.end.is_finite())
            .map(|s| (s.level, s.end))
            .collect()
    }

    fn segment_at(&self, t: f64) -> Option<&Segment> {
        self.segments.iter().find(|s| t <= s.end).or(self.segments.last())
    }

    /// Partial sums `(s_0, s_1, ..., s_d)` with `s_0 = x_0 = 0`.
    pub fn s(&self, t: f64) -> Vec<f64> {
        let d = self.d;
        match self.segment_at(t) {
            None => {
                let mut s = vec![0.0; d + 1];
                s[d] = self.beta;
                s
            }
            Some(seg) => (0..=d).map(|k| seg.s(k, t, self.mu)).collect(),
        }
    }

    /// `s_k` from the representation of an explicit segment, so values on
    /// both sides of a threshold can be compared.
    pub fn s_on_segment(&self, level: usize, k: usize, t: f64) -> Option<f64> {
        self.segments
            .iter()
            .find(|s| s.level == level)
            .map(|seg| seg.s(k, t, self.mu))
    }

    /// Passive-level coefficients in the absolute basis:
    /// `s_k(t) = beta (1 - sum_{i>k} alpha(k, i) e^{-i mu t})` for `t >= t_k`.
    /// Defined for `p < k < d`.
    pub fn alpha(&self, k: usize, i: usize) -> Option<f64> {
        let seg = self.segments.iter().find(|s| s.level + 1 == k)?;
        if i <= k || i > self.d {
            return Some(0.0);
        }
        Some(-seg.coeffs[k][i] * (i as f64 * self.mu * seg.start).exp() / self.beta)
    }

    /// Active-level coefficients in the absolute basis:
    /// `s_l(t) = (l+1) beta - rho + sum_i xi(l, i) e^{-i mu t}` on segment `l`.
    pub fn xi(&self, l: usize, i: usize) -> Option<f64> {
        let seg = self.segments.iter().find(|s| s.level == l)?;
        if i == 0 || i > self.d {
            return Some(0.0);
        }
        Some(seg.coeffs[l][i] * (i as f64 * self.mu * seg.start).exp())
    }
}

/// Closed-form fluid limit from the all-`d` initial state.
pub fn fluid_limit(params: &ModelParams) -> Result<FluidSolution> {
    let (d, mu, beta, rho) = (params.d(), params.mu(), params.beta(), params.rho());
    let regime = params.regime();
    let mut sol = FluidSolution {
        d,
        mu,
        beta,
        rho,
        regime,
        segments: Vec::new(),
    };
    let p = match regime {
        Regime::Stable => return Ok(sol),
        Regime::Rejected(reason) => return Err(Error::RegimeRejected(reason.to_string())),
        Regime::Overloaded { p } => p,
    };

    let mut start = 0.0;
    let mut values = vec![0.0; d + 1];
    values[d] = beta;
    for l in (p..d).rev() {
        let mut coeffs = vec![vec![0.0; d + 1]; d + 1];
        coeffs[d][0] = beta;
        for k in (l + 1..d).rev() {
            let above = coeffs[k + 1].clone();
            let kk = (k + 1) as f64;
            for (j, a) in above.iter().enumerate() {
                if *a != 0.0 {
                    coeffs[k][j] = kk / (kk - j as f64) * a;
                }
            }
            let particular: f64 = coeffs[k].iter().sum();
            coeffs[k][k + 1] = values[k] - particular;
        }
        let above = coeffs[l + 1].clone();
        let ll = (l + 1) as f64;
        coeffs[l][0] = ll * above[0] - rho;
        for (j, a) in above.iter().enumerate().skip(2) {
            if *a != 0.0 {
                coeffs[l][j] = ll * a / (1.0 - j as f64);
            }
        }
        let particular: f64 = coeffs[l].iter().sum();
        coeffs[l][1] = values[l] - particular;

        let mut seg = Segment {
            level: l,
            start,
            end: f64::INFINITY,
            coeffs,
        };
        if l > p {
            seg.end = start + crossing_time(&seg, rho / l as f64, mu)?;
            values = (0..=d).map(|k| seg.s(k, seg.end, mu)).collect();
            values[l - 1] = 0.0;
            start = seg.end;
        }
        sol.segments.push(seg);
    }
    Ok(sol)
}

/// First `tau > 0` with `s_l(start + tau) = target`, located by a forward
/// scan whose step doubles, then bisected to `1e-12` absolute.
fn crossing_time(seg: &Segment, target: f64, mu: f64) -> Result<f64> {
    let l = seg.level;
    let f = |tau: f64| seg.s(l, seg.start + tau, mu) - target;
    let mut lo = 0.0;
    let mut step = 1e-3 / mu;
    let limit = 200.0 / mu;
    let mut hi = step;
    while f(hi) < 0.0 {
        if hi > limit {
            return Err(Error::RootBracketFailure {
                level: l,
                detail: format!(
                    "s_{l} stays below {target} up to t = {}; its limit is {}",
                    seg.start + hi,
                    seg.coeffs[l][0]
                ),
            });
        }
        lo = hi;
        step *= 2.0;
        hi += step;
    }
    while hi - lo > 1e-12 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(x_0, ..., x_d)` at time `t`.
pub fn eval_fluid(sol: &FluidSolution, t: f64) -> Vec<f64> {
    let s = sol.s(t);
    let mut x = vec![0.0; sol.d + 1];
    for k in 1..=sol.d {
        x[k] = s[k] - s[k - 1];
    }
    x[0] = sol.beta - s[sol.d];
    x
}

/// Fluid limit obtained by solving the generalized Skorohod problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidNumeric {
    pub beta: f64,
    pub mu: f64,
    /// `(s_1, ..., s_{d-1})`.
    pub s: GridPath,
    /// Regulators at fluid scale, `Y / lambda`.
    pub r: GridPath,
    /// `x_0 = mu int s_1` at every grid point.
    pub lost: Vec<f64>,
    pub gsp: GspSolution,
}

impl FluidNumeric {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.s.time(i)
    }

    /// `(x_0, ..., x_d)` at grid index `i`.
    pub fn x_at(&self, i: usize) -> Vec<f64> {
        let dm1 = self.s.dim();
        let d = dm1 + 1;
        let x0 = self.lost[i];
        let mut s = vec![0.0; d + 1];
        for k in 1..d {
            s[k] = self.s.value(k - 1, i);
        }
        s[d] = self.beta - x0;
        let mut x = vec![x0; d + 1];
        for k in 1..=d {
            x[k] = s[k] - s[k - 1];
        }
        x
    }
}

pub fn fluid_numeric(params: &ModelParams, step: f64, horizon: f64, opts: &GspOptions) -> Result<FluidNumeric> {
    if let Regime::Rejected(reason) = params.regime() {
        return Err(Error::RegimeRejected(reason.to_string()));
    }
    let g = build_fluid_g(params)?;
    let p = ReflectionMatrix::lower_shift(params.d() - 1);
    let gsp = solve_gsp(&g, &p, step, horizon, opts)?;
    let lambda = params.lambda();
    let r = GridPath::new(
        step,
        gsp.solution
            .r
            .components()
            .iter()
            .map(|c| c.iter().map(|v| v / lambda).collect())
            .collect(),
    )?;
    let s1 = gsp.solution.x.component(0);
    let mu = params.mu();
    let mut lost = vec![0.0; s1.len()];
    for i in 1..s1.len() {
        lost[i] = lost[i - 1] + 0.5 * step * mu * (s1[i - 1] + s1[i]);
    }
    Ok(FluidNumeric {
        beta: params.beta(),
        mu,
        s: gsp.solution.x.clone(),
        r,
        lost,
        gsp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ModelParams {
        ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 1).unwrap()
    }

    #[test]
    fn golden_threshold() {
        let sol = fluid_limit(&example()).unwrap();
        let t3 = sol.threshold(3).unwrap();
        let closed = 10.0 * (0.75 * 1.8 / 0.8f64).ln();
        assert!((t3 - closed).abs() < 1e-9, "{t3} vs {closed}");
        assert!((t3 - 5.23).abs() < 0.01);
        assert_eq!(sol.threshold(4), Some(0.0));
        assert_eq!(sol.threshold(2), Some(f64::INFINITY));
        assert_eq!(sol.threshold(1), None);
        assert_eq!(sol.thresholds(), vec![(3, t3)]);
    }

    #[test]
    fn example_closed_forms() {
        let sol = fluid_limit(&example()).unwrap();
        let (beta, rho, mu) = (1.0, 2.2, 0.1f64);
        let t3 = sol.threshold(3).unwrap();
        let c = 27.0 / 256.0 * (4.0 * beta - rho as f64).powi(4) / (3.0 * beta - rho as f64).powi(3);
        for &t in &[0.0, 1.0, 3.0, 5.0, t3, 6.0, 10.0, 30.0, 100.0] {
            let s = sol.s(t);
            let (s3, s2) = if t <= t3 {
                ((4.0 * beta - rho) * (1.0 - (-mu * t).exp()), 0.0)
            } else {
                (
                    beta - c * (-4.0 * mu * t).exp(),
                    (3.0 * beta - rho) - (4.0 * beta - rho) * (-mu * t).exp() + c * (-4.0 * mu * t).exp(),
                )
            };
            assert!((s[3] - s3).abs() < 1e-12, "s3({t})");
            assert!((s[2] - s2).abs() < 1e-12, "s2({t})");
            assert_eq!(s[1], 0.0);
        }
        assert!((sol.s(t3)[3] - rho / 3.0).abs() < 1e-9);
        assert!((sol.alpha(3, 4).unwrap() - c).abs() < 1e-12);
        assert!((sol.xi(2, 1).unwrap() + (4.0 * beta - rho)).abs() < 1e-12);
        assert!((sol.xi(2, 4).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn example_limits() {
        let sol = fluid_limit(&example()).unwrap();
        assert_eq!(eval_fluid(&sol, 0.0), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let x = eval_fluid(&sol, 400.0);
        assert!((x[2] - 0.8).abs() < 1e-9);
        assert!((x[3] - 0.2).abs() < 1e-9);
        assert!(x[4].abs() < 1e-9 && x[1] == 0.0 && x[0] == 0.0);
    }

    #[test]
    fn stable_is_constant() {
        let p = ModelParams::new(3, 1.0, 0.1, 2.0, 0.0, 1).unwrap();
        let sol = fluid_limit(&p).unwrap();
        for t in [0.0, 1.0, 1e3] {
            assert_eq!(eval_fluid(&sol, t), vec![0.0, 0.0, 0.0, 2.0]);
        }
        assert!(sol.thresholds().is_empty());
    }

    #[test]
    fn rejected_regime() {
        let p = ModelParams::new(4, 0.15, 0.1, 1.0, 0.0, 1).unwrap();
        assert!(matches!(fluid_limit(&p), Err(Error::RegimeRejected(_))));
    }

    #[test]
    fn absolute_basis_recursion_reproduces_coefficients() {
        // d = 6, p = 2: four finite thresholds.
        let p = ModelParams::new(6, 0.25, 0.1, 1.0, 0.0, 1).unwrap();
        let sol = fluid_limit(&p).unwrap();
        let (d, mu, beta, rho) = (6usize, 0.1, 1.0, 2.5);
        for l in (3..d).rev() {
            let tl = sol.threshold(l).unwrap();
            // alpha_{l,j} = (l+1)/(l+1-j) alpha_{l+1,j}, j > l+1
            for j in l + 2..=d {
                if l + 1 < d {
                    let expect = (l + 1) as f64 / ((l + 1) as f64 - j as f64) * sol.alpha(l + 1, j).unwrap();
                    assert!((sol.alpha(l, j).unwrap() - expect).abs() < 1e-9 * (1.0 + expect.abs()));
                }
            }
            // boundary coefficient from s_l(t_l) = rho / l
            let sum: f64 = (l + 2..=d)
                .map(|k| sol.alpha(l, k).unwrap() * (-(k as f64) * mu * tl).exp())
                .sum();
            let expect = ((l + 1) as f64 * mu * tl).exp() * (1.0 - rho / (l as f64 * beta) - sum);
            let got = sol.alpha(l, l + 1).unwrap();
            assert!((got - expect).abs() < 1e-9 * (1.0 + expect.abs()), "alpha({l},{})", l + 1);
            // xi_{l-1,j} = beta l / (j-1) alpha_{l,j}
            for j in l + 1..=d {
                let expect = beta * l as f64 / (j - 1) as f64 * sol.alpha(l, j).unwrap();
                let got = sol.xi(l - 1, j).unwrap();
                assert!((got - expect).abs() < 1e-9 * (1.0 + expect.abs()), "xi({},{j})", l - 1);
            }
        }
    }

    #[test]
    fn thresholds_and_continuity() {
        let p = ModelParams::new(6, 0.25, 0.1, 1.0, 0.0, 1).unwrap();
        let sol = fluid_limit(&p).unwrap();
        let ts = sol.thresholds();
        assert_eq!(ts.iter().map(|t| t.0).collect::<Vec<_>>(), vec![5, 4, 3]);
        assert!(ts.windows(2).all(|w| w[0].1 < w[1].1));
        for &(l, t) in &ts {
            assert!((sol.s(t)[l] - 2.5 / l as f64).abs() < 1e-9);
            for k in 0..=6 {
                let before = sol.s_on_segment(l, k, t).unwrap();
                let after = sol.s_on_segment(l - 1, k, t).unwrap();
                assert!((before - after).abs() < 1e-9, "s_{k} at t_{l}");
            }
        }
    }

    #[test]
    fn ode_residual() {
        let p = ModelParams::new(6, 0.25, 0.1, 1.0, 0.0, 1).unwrap();
        let sol = fluid_limit(&p).unwrap();
        let (mu, lambda, h) = (0.1, 0.25, 1e-5);
        let bounds: Vec<f64> = std::iter::once(0.0).chain(sol.thresholds().iter().map(|t| t.1)).collect();
        for w in bounds.windows(2).chain(std::iter::once(&[bounds[bounds.len() - 1], 200.0][..])) {
            let l = sol.segment_at(0.5 * (w[0] + w[1])).unwrap().level;
            for frac in [0.25, 0.5, 0.75] {
                let t = w[0] + frac * (w[1] - w[0]);
                let (sp, sm, s) = (sol.s(t + h), sol.s(t - h), sol.s(t));
                let ds = |k: usize| (sp[k] - sm[k]) / (2.0 * h);
                let active = mu * (l + 1) as f64 * s[l + 1] - mu * s[l] - lambda;
                assert!((ds(l) - active).abs() < 1e-6);
                for k in l + 1..6 {
                    assert!((ds(k) - mu * (k + 1) as f64 * (s[k + 1] - s[k])).abs() < 1e-6);
                }
                assert!(s.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            }
        }
    }

    #[test]
    fn gsp_agrees_with_closed_form() {
        let p = example();
        let sol = fluid_limit(&p).unwrap();
        let num = fluid_numeric(&p, 1e-2, 15.0, &GspOptions::default()).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..num.len() {
            let exact = eval_fluid(&sol, num.time(i));
            for (a, b) in num.x_at(i).iter().zip(&exact) {
                err = err.max((a - b).abs());
            }
        }
        assert!(err < 1e-2, "{err}");
    }
}

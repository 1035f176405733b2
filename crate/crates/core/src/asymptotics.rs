//! Decay of the stable network on the time scale `N^{d-1}` and of the
//! overloaded network started at its local equilibrium.
//!
//! Both laws have the form `(1 - y/b)^a e^y = e^{-c t}` with `a > b`. With
//! `y = b (1 - e^{-z})` the root solves `-a z + b (1 - e^{-z}) + c t = 0`,
//! a strictly decreasing function of `z`, which keeps full relative
//! precision of `b - y` for large `t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Root `y in [0, b)` of `a ln(1 - y/b) + y + ct = 0`.
fn solve_decay(a: f64, b: f64, ct: f64) -> f64 {
    if ct <= 0.0 {
        return 0.0;
    }
    let f = |z: f64| -a * z + b * (-(-z).exp_m1()) + ct;
    // f is concave and decreasing, so Newton started right of the root
    // decreases monotonically to it. Stop once an iterate fails to decrease.
    let mut z = (ct + b) / a;
    loop {
        let next = z - f(z) / (b * (-z).exp() - a);
        if next.is_nan() || next >= z {
            break;
        }
        z = next;
    }
    // Stay strictly below b once b - y is under one ulp.
    let y = -b * (-z).exp_m1();
    y.min(b.next_down())
}

/// Closed-form inverse: `t = -(a ln(1 - y/b) + y) / c`.
fn decay_time(a: f64, b: f64, c: f64, y: f64) -> Result<f64> {
    if !(0.0..b).contains(&y) {
        return Err(Error::Domain(format!("value {y} outside [0, {b})")));
    }
    Ok(-(a * (-y / b).ln_1p() + y) / c)
}

/// Limiting fraction `Phi(t)` of lost files at scaled time `t` in the stable
/// regime: `(1 - y/beta)^{rho/d} e^y = e^{-c t}`, `c = lambda (d-1)! / rho^{d-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    params: ModelParams,
    c: f64,
}

impl DecayCurve {
    pub fn new(params: &ModelParams) -> Result<Self> {
        if params.regime() != Regime::Stable {
            return Err(Error::RegimeRejected(format!(
                "the decay law needs the stable regime, got {}",
                params.regime()
            )));
        }
        let d = params.d();
        let c = params.lambda() * factorial(d - 1) / params.rho().powi(d as i32 - 1);
        Ok(Self { params: params.clone(), c })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn decay_constant(&self) -> f64 {
        self.c
    }

    fn exponent(&self) -> f64 {
        self.params.rho() / self.params.d() as f64
    }

    pub fn phi_of_t(&self, t: f64) -> f64 {
        solve_decay(self.exponent(), self.params.beta(), self.c * t)
    }

    pub fn t_of_phi(&self, y: f64) -> Result<f64> {
        decay_time(self.exponent(), self.params.beta(), self.c, y)
    }

    /// Arrival rate `d mu (beta - y)` of the fast level-`(d-1)` queue.
    fn arrival(&self, y: f64) -> f64 {
        let p = &self.params;
        p.d() as f64 * p.mu() * (p.beta() - y)
    }

    /// `Phi'` from the integral equation, `c u / (lambda - u)` with `u = d mu (beta - Phi)`.
    pub fn derivative_at(&self, y: f64) -> f64 {
        let u = self.arrival(y);
        self.c * u / (self.params.lambda() - u)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        self.derivative_at(self.phi_of_t(t))
    }

    /// Classical RK4 on `Phi' = c u / (lambda - u)` over `0, h, ..., horizon`.
    pub fn phi_via_ode(&self, step: f64, horizon: f64) -> Vec<f64> {
        let n = (horizon / step + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(n + 1);
        let mut y = 0.0;
        out.push(y);
        let f = |y: f64| self.derivative_at(y);
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * step * k1);
            let k3 = f(y + 0.5 * step * k2);
            let k4 = f(y + step * k3);
            y += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            out.push(y);
        }
        out
    }

    /// Geometric parameter `d mu (beta - Phi(t)) / lambda` of the level-`(d-1)` occupancy.
    pub fn occupancy_parameter(&self, t: f64) -> f64 {
        self.arrival(self.phi_of_t(t)) / self.params.lambda()
    }
}

/// Limit of `T_N(delta) / N^{d-1}`:
/// `rho^{d-1} / (lambda (d-1)!) (-(rho/d) ln(1 - delta) - beta delta)`.
pub fn decay_time_asymptote(params: &ModelParams, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let curve = DecayCurve::new(params)?;
    let (rho, beta, d) = (params.rho(), params.beta(), params.d());
    Ok((-(rho / d as f64) * (-delta).ln_1p() - beta * delta) / curve.c)
}

/// Decay of an overloaded network (`p beta < rho < (p+1) beta`) started at
/// its local equilibrium, on the time scale `N^{p-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverloadDecay {
    p: usize,
    beta: f64,
    rho: f64,
    /// `beta - rho / (p+1)`.
    limit: f64,
    exponent: f64,
    c: f64,
}

/// `(Phi_0, Phi_p, Phi_{p+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverloadState {
    pub lost: f64,
    pub at_p: f64,
    pub above_p: f64,
}

impl OverloadDecay {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let p = match params.regime() {
            Regime::Overloaded { p } => p,
            other => {
                return Err(Error::RegimeRejected(format!(
                    "overload decay needs an overloaded regime, got {other}"
                )))
            }
        };
        let (beta, rho, lambda) = (params.beta(), params.rho(), params.lambda());
        Ok(Self {
            p,
            beta,
            rho,
            limit: beta - rho / (p + 1) as f64,
            exponent: rho / (p * (p + 1)) as f64,
            c: lambda * factorial(p - 1) / rho.powi(p as i32 - 1),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn decay_constant(&self) -> f64 {
        self.c
    }

    /// Limit `beta - rho/(p+1)` of `Phi_0`.
    pub fn lost_limit(&self) -> f64 {
        self.limit
    }

    pub fn phi_lost(&self, t: f64) -> f64 {
        solve_decay(self.exponent, self.limit, self.c * t)
    }

    pub fn t_of_lost(&self, y: f64) -> Result<f64> {
        decay_time(self.exponent, self.limit, self.c, y)
    }

    pub fn phi(&self, t: f64) -> OverloadState {
        let lost = self.phi_lost(t);
        let alive = self.beta - lost;
        OverloadState {
            lost,
            at_p: (self.p + 1) as f64 * alive - self.rho,
            above_p: self.rho - self.p as f64 * alive,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable(d: usize) -> ModelParams {
        ModelParams::new(d, 1.0, 0.1, 2.0, 0.0, 100).unwrap()
    }

    #[test]
    fn decay_examples() {
        let c2 = DecayCurve::new(&stable(2)).unwrap();
        assert_eq!(c2.phi_of_t(0.0), 0.0);
        assert_eq!(c2.t_of_phi(0.0).unwrap(), 0.0);
        let expect = 10.0 * (5.0 * 2f64.ln() - 1.0);
        assert!((decay_time_asymptote(&stable(2), 0.5).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 24.657).abs() < 5e-4);

        let c3 = DecayCurve::new(&stable(3)).unwrap();
        let t = c3.t_of_phi(1.0).unwrap();
        let expect = 50.0 * (10.0 / 3.0 * 2f64.ln() - 1.0);
        assert!((t - expect).abs() < 1e-10);
        assert!((t - 65.52).abs() < 5e-3);
        assert!((c3.phi_of_t(expect) - 1.0).abs() < 1e-12);
        assert!((c3.occupancy_parameter(expect) - 0.3).abs() < 1e-12);
        assert!((c3.occupancy_parameter(0.0) - 0.6).abs() < 1e-15);
        // (1 - 0.5)^{10/3} e = e^{-0.02 t}
        assert!((0.5f64.powf(10.0 / 3.0) * 1f64.exp() - (-0.02 * t).exp()).abs() < 1e-12);
    }

    #[test]
    fn residual_and_round_trip() {
        for d in 2..=4 {
            let curve = DecayCurve::new(&stable(d)).unwrap();
            let (a, b, c) = (curve.exponent(), 2.0, curve.c);
            for t in [0.1, 1.0, 10.0, 100.0, 300.0] {
                let y = curve.phi_of_t(t);
                assert!(y < b);
                let residual = a * (-y / b).ln_1p() + y + c * t;
                assert!(residual.abs() < 1e-12 * (1.0 + c * t), "d={d} t={t} residual {residual}");
                let back = curve.t_of_phi(y).unwrap();
                assert!((back - t).abs() < 1e-9 * t, "d={d} t={t} back {back}");
            }
            assert!(curve.t_of_phi(2.0).is_err());
            let far = curve.phi_of_t(1e9);
            assert!(far < 2.0 && far > 2.0 - 1e-12);
        }
    }

    #[test]
    fn asymptote_equals_inverse() {
        for d in 2..=4 {
            let p = stable(d);
            let curve = DecayCurve::new(&p).unwrap();
            for delta in [0.01, 0.3, 0.5, 0.9] {
                let a = decay_time_asymptote(&p, delta).unwrap();
                let b = curve.t_of_phi(delta * 2.0).unwrap();
                assert!((a - b).abs() < 1e-12 * a);
            }
        }
        assert!(decay_time_asymptote(&stable(2), 1.0).is_err());
        let overloaded = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 1).unwrap();
        assert!(matches!(decay_time_asymptote(&overloaded, 0.5), Err(Error::RegimeRejected(_))));
    }

    #[test]
    fn ode_matches_implicit_solution() {
        let curve = DecayCurve::new(&stable(3)).unwrap();
        let h = 1e-3;
        let ys = curve.phi_via_ode(h, 50.0);
        assert!((curve.derivative_at(0.0) - curve.c * 0.6 / 0.4).abs() < 1e-15);
        for (i, y) in ys.iter().enumerate() {
            assert!((y - curve.phi_of_t(i as f64 * h)).abs() < 1e-9);
        }
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn overload_example() {
        let p = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 500).unwrap();
        let od = OverloadDecay::new(&p).unwrap();
        assert_eq!(od.p(), 2);
        let s0 = od.phi(0.0);
        assert_eq!(s0.lost, 0.0);
        assert!((s0.at_p - 0.8).abs() < 1e-12 && (s0.above_p - 0.2).abs() < 1e-12);
        let inf = od.phi(1e6);
        assert!((inf.lost - (1.0 - 2.2 / 3.0)).abs() < 1e-9);
        assert!(inf.at_p.abs() < 1e-8);
        assert!((inf.above_p - 2.2 / 3.0).abs() < 1e-9);
        for t in [0.5, 3.0, 20.0] {
            let s = od.phi(t);
            assert!((s.lost + s.at_p + s.above_p - 1.0).abs() < 1e-12);
            assert!(s.at_p > 0.0);
            assert!((od.t_of_lost(s.lost).unwrap() - t).abs() < 1e-9 * t);
        }
        assert!(OverloadDecay::new(&stable(3)).is_err());
    }
}

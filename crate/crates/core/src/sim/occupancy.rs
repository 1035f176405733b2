use rayon::prelude::*;
use serde::Serialize;

use super::engine::Engine;
use super::SimConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::stream;

/// Time spent at each integer value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyAccumulator {
    time_at: Vec<f64>,
}

impl OccupancyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: u64, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        let v = value as usize;
        if v >= self.time_at.len() {
            self.time_at.resize(v + 1, 0.0);
        }
        self.time_at[v] += duration;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.time_at.len() > self.time_at.len() {
            self.time_at.resize(other.time_at.len(), 0.0);
        }
        for (a, b) in self.time_at.iter_mut().zip(&other.time_at) {
            *a += b;
        }
    }

    pub fn total_time(&self) -> f64 {
        self.time_at.iter().sum()
    }

    /// Normalised histogram, or `None` if no time was recorded.
    pub fn histogram(&self) -> Option<Histogram> {
        let total = self.total_time();
        (total > 0.0).then(|| Histogram {
            probabilities: self.time_at.iter().map(|t| t / total).collect(),
        })
    }
}

/// Probability mass function on `0, 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub probabilities: Vec<f64>,
}

impl Histogram {
    pub fn pmf(&self, x: u64) -> f64 {
        self.probabilities.get(x as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }

    /// Total-variation distance to the geometric law `(1 - r) r^x`, `x >= 0`.
    pub fn tv_distance_geometric(&self, r: f64) -> f64 {
        assert!((0.0..1.0).contains(&r), "geometric parameter must lie in [0, 1)");
        let mut sum = 0.0;
        let mut g = 1.0 - r;
        for p in &self.probabilities {
            sum += (p - g).abs();
            g *= r;
        }
        // Geometric mass beyond the support of the histogram.
        sum += r.powi(self.probabilities.len() as i32);
        0.5 * sum
    }
}

/// Time-weighted distribution of `x_k` over the scaled window `[t1, t2]`,
/// pooled over all replications.
pub fn empirical_occupancy(params: &ModelParams, cfg: &SimConfig, k: usize, window: (f64, f64)) -> Result<Histogram> {
    let (t1, t2) = window;
    if t2.is_nan() || t1.is_nan() || t2 <= t1 {
        return Err(Error::EmptyWindow { start: t1, end: t2 });
    }
    if t1 < 0.0 || t2 > cfg.horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "window [{t1}, {t2}] is not inside [0, {}]",
            cfg.horizon
        )));
    }
    if k > params.d() {
        return Err(Error::Domain(format!("coordinate {k} exceeds d = {}", params.d())));
    }
    if let crate::model::Regime::Rejected(reason) = params.regime() {
        return Err(Error::RegimeRejected(reason.to_string()));
    }
    cfg.validate()?;
    let start = cfg.start.state(params)?;
    let scale = cfg.scale(params);
    let (a, b) = (t1 * scale, t2 * scale);

    let per_rep: Vec<Result<OccupancyAccumulator>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut acc = OccupancyAccumulator::new();
            let mut engine = Engine::new(params, start.counts().to_vec(), stream(cfg.seed, rep));
            loop {
                let now = engine.time();
                let x = engine.counts()[k];
                let Some(jump) = engine.propose() else {
                    acc.add(x, b - now.max(a));
                    return Ok(acc);
                };
                let until = jump.time.min(b);
                if until > a {
                    acc.add(x, until - now.max(a));
                }
                if jump.time >= b {
                    return Ok(acc);
                }
                if engine.events() >= cfg.event_cap {
                    return Err(Error::EventCapExceeded {
                        cap: cfg.event_cap,
                        replication: rep,
                        partial: Box::new(super::Trajectory {
                            grid: Vec::new(),
                            scale,
                            states: Vec::new(),
                            absorbed_at: None,
                            events: engine.events(),
                        }),
                    });
                }
                engine.commit(jump);
            }
        })
        .collect();

    let mut pooled = OccupancyAccumulator::new();
    for acc in per_rep {
        pooled.merge(&acc?);
    }
    Ok(pooled.histogram().expect("window has positive length"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Start;

    #[test]
    fn constant_value_is_point_mass() {
        let mut acc = OccupancyAccumulator::new();
        acc.add(3, 2.5);
        acc.add(3, 0.5);
        let h = acc.histogram().unwrap();
        assert_eq!(h.pmf(3), 1.0);
        assert_eq!(h.mean(), 3.0);
        assert!(OccupancyAccumulator::new().histogram().is_none());
    }

    #[test]
    fn weights_sum_to_one() {
        let p = ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, 30).unwrap();
        let cfg = SimConfig::new(1, 4.0, 1.0, 3, 4).unwrap();
        let h = empirical_occupancy(&p, &cfg, 1, (1.0, 2.0)).unwrap();
        let total: f64 = h.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbed_window_is_point_mass_at_zero() {
        let p = ModelParams::new(3, 1.0, 0.1, 2.0, 0.0, 5).unwrap();
        let cfg = SimConfig::new(0, 5.0, 1.0, 0, 2)
            .unwrap()
            .with_start(Start::Custom(vec![10, 0, 0, 0]));
        for k in 1..=3 {
            let h = empirical_occupancy(&p, &cfg, k, (1.0, 3.0)).unwrap();
            assert_eq!(h.pmf(0), 1.0);
        }
    }

    #[test]
    fn geometric_distance() {
        let r: f64 = 0.6;
        let exact = Histogram {
            probabilities: (0..200).map(|x| (1.0 - r) * r.powi(x)).collect(),
        };
        assert!(exact.tv_distance_geometric(r) < 1e-12);
        let point = Histogram {
            probabilities: vec![1.0],
        };
        assert!((point.tv_distance_geometric(r) - r).abs() < 1e-12);
    }

    #[test]
    fn window_errors() {
        let p = ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, 30).unwrap();
        let cfg = SimConfig::new(1, 4.0, 1.0, 3, 1).unwrap();
        assert!(matches!(
            empirical_occupancy(&p, &cfg, 1, (2.0, 2.0)),
            Err(Error::EmptyWindow { .. })
        ));
        assert!(empirical_occupancy(&p, &cfg, 1, (3.0, 5.0)).is_err());
    }
}

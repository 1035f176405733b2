use rayon::prelude::*;
use serde::Serialize;

use super::engine::Engine;
use super::{SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{EventKind, ModelParams, NetworkState};
use crate::rng::stream;

fn check_regime(params: &ModelParams) -> Result<()> {
    if let crate::model::Regime::Rejected(reason) = params.regime() {
        return Err(Error::RegimeRejected(reason.to_string()));
    }
    Ok(())
}

/// Simulates replication `rep` and samples it on the configured grid.
///
/// The run stops at the horizon, at absorption (remaining grid points repeat
/// the absorbing state) or when the event cap is hit, which is an error that
/// carries the partial trajectory.
pub fn simulate_path(params: &ModelParams, cfg: &SimConfig, rep: u64) -> Result<Trajectory> {
    check_regime(params)?;
    cfg.validate()?;
    let start = cfg.start.state(params)?;
    sample_on_grid(params, cfg, rep, start)
}

pub(crate) fn sample_on_grid(params: &ModelParams, cfg: &SimConfig, rep: u64, start: NetworkState) -> Result<Trajectory> {
    let grid = cfg.grid();
    let scale = cfg.scale(params);
    let f_n = params.f_n();
    let mut absorbed_at = (start.lost() == f_n).then_some(0.0);
    let mut engine = Engine::new(params, start.into_counts(), stream(cfg.seed, rep));
    let mut states = Vec::with_capacity(grid.len());

    let snapshot = |engine: &Engine| NetworkState::new(engine.counts().to_vec()).expect("valid state");
    let mut i = 0;
    while i < grid.len() {
        match engine.propose() {
            None => {
                let s = snapshot(&engine);
                states.resize(grid.len(), s);
                i = grid.len();
            }
            Some(jump) => {
                while i < grid.len() && grid[i] * scale < jump.time {
                    states.push(snapshot(&engine));
                    i += 1;
                }
                if i == grid.len() {
                    break;
                }
                if engine.events() >= cfg.event_cap {
                    let partial = Trajectory {
                        grid: grid[..states.len()].to_vec(),
                        scale,
                        states,
                        absorbed_at,
                        events: engine.events(),
                    };
                    return Err(Error::EventCapExceeded {
                        cap: cfg.event_cap,
                        replication: rep,
                        partial: Box::new(partial),
                    });
                }
                engine.commit(jump);
                if engine.counts()[0] == f_n {
                    absorbed_at = Some(jump.time);
                }
            }
        }
    }
    Ok(Trajectory {
        grid,
        scale,
        states,
        absorbed_at,
        events: engine.events(),
    })
}

/// Full event record of one replication, for first-passage audits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventLog {
    pub initial: NetworkState,
    /// Unscaled event times.
    pub times: Vec<f64>,
    pub kinds: Vec<EventKind>,
    /// `x_0` right after each event.
    pub lost_after: Vec<u64>,
}

impl EventLog {
    /// First event time at which `x_0 >= threshold`.
    pub fn first_time_lost_at_least(&self, threshold: f64) -> Option<f64> {
        if self.initial.lost() as f64 >= threshold {
            return Some(0.0);
        }
        self.lost_after
            .iter()
            .position(|&x| x as f64 >= threshold)
            .map(|i| self.times[i])
    }
}

/// Same path as [`simulate_path`] for the same `(seed, rep)`, recorded
/// event by event up to the unscaled horizon.
pub fn simulate_event_log(params: &ModelParams, cfg: &SimConfig, rep: u64) -> Result<EventLog> {
    check_regime(params)?;
    cfg.validate()?;
    let start = cfg.start.state(params)?;
    let end = cfg.horizon * cfg.scale(params);
    let mut engine = Engine::new(params, start.counts().to_vec(), stream(cfg.seed, rep));
    let mut log = EventLog {
        initial: start,
        times: Vec::new(),
        kinds: Vec::new(),
        lost_after: Vec::new(),
    };
    while let Some(jump) = engine.propose() {
        if jump.time > end {
            break;
        }
        if engine.events() >= cfg.event_cap {
            return Err(Error::EventCapExceeded {
                cap: cfg.event_cap,
                replication: rep,
                partial: Box::new(Trajectory {
                    grid: Vec::new(),
                    scale: cfg.scale(params),
                    states: Vec::new(),
                    absorbed_at: None,
                    events: engine.events(),
                }),
            });
        }
        engine.commit(jump);
        log.times.push(jump.time);
        log.kinds.push(jump.kind);
        log.lost_after.push(engine.counts()[0]);
    }
    Ok(log)
}

/// Exact (event-resolved) unscaled time of the first instant with
/// `x_0 >= delta * beta * N`. The horizon is not used: the passage happens
/// almost surely.
pub fn first_passage_time(params: &ModelParams, delta: f64, cfg: &SimConfig, rep: u64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    check_regime(params)?;
    cfg.validate()?;
    let start = cfg.start.state(params)?;
    let threshold = delta * params.beta() * params.n_servers() as f64;
    if start.lost() as f64 >= threshold {
        return Ok(0.0);
    }
    let mut engine = Engine::new(params, start.into_counts(), stream(cfg.seed, rep));
    loop {
        let Some(jump) = engine.propose() else {
            return Err(Error::PassageUnreachable {
                lost: engine.counts()[0],
                threshold,
            });
        };
        if engine.events() >= cfg.event_cap {
            return Err(Error::EventCapExceeded {
                cap: cfg.event_cap,
                replication: rep,
                partial: Box::new(Trajectory {
                    grid: Vec::new(),
                    scale: cfg.scale(params),
                    states: Vec::new(),
                    absorbed_at: None,
                    events: engine.events(),
                }),
            });
        }
        engine.commit(jump);
        if engine.counts()[0] as f64 >= threshold {
            return Ok(jump.time);
        }
    }
}

/// First-passage times of replications `0..R`, in replication order.
pub fn first_passage_fraction(params: &ModelParams, delta: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| first_passage_time(params, delta, cfg, rep))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Start;

    fn stable_d2(n: u64) -> ModelParams {
        ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, n).unwrap()
    }

    #[test]
    fn single_file_stays_in_reachable_set() {
        // F = 1: beta * N = 0.5 rounds to 1; rho = 10 > 2 * 0.5.
        let p = ModelParams::new(2, 1.0, 0.1, 0.5, 0.0, 1).unwrap();
        assert_eq!(p.f_n(), 1);
        let cfg = SimConfig::new(0, 200.0, 0.5, 3, 1).unwrap();
        for rep in 0..20 {
            let traj = simulate_path(&p, &cfg, rep).unwrap();
            for s in &traj.states {
                assert!(matches!(s.counts(), [0, 0, 1] | [0, 1, 0] | [1, 0, 0]), "{s:?}");
            }
            let last = traj.last_state().unwrap();
            assert_eq!(last.is_absorbing(), traj.absorbed_at.is_some());
            if traj.absorbed_at.is_some() {
                assert_eq!(last.lost(), p.f_n());
            }
        }
    }

    #[test]
    fn trajectory_is_deterministic_and_conservative() {
        let p = stable_d2(50);
        let cfg = SimConfig::new(1, 5.0, 0.25, 11, 1).unwrap();
        let a = simulate_path(&p, &cfg, 4).unwrap();
        let b = simulate_path(&p, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_path(&p, &cfg, 5).unwrap());
        assert_eq!(a.states.len(), a.grid.len());
        let mut prev = 0;
        for s in &a.states {
            assert_eq!(s.total(), p.f_n());
            assert!(s.lost() >= prev);
            prev = s.lost();
        }
    }

    #[test]
    fn rejected_regime_is_refused() {
        let p = ModelParams::new(3, 0.6, 0.1, 2.0, 0.0, 10).unwrap();
        let cfg = SimConfig::new(0, 1.0, 0.1, 0, 1).unwrap();
        assert!(matches!(simulate_path(&p, &cfg, 0), Err(Error::RegimeRejected(_))));
    }

    #[test]
    fn event_cap_reports_partial_path() {
        let p = stable_d2(100);
        let cfg = SimConfig::new(1, 10.0, 0.5, 1, 1).unwrap().with_event_cap(1000);
        match simulate_path(&p, &cfg, 0) {
            Err(Error::EventCapExceeded { cap, partial, .. }) => {
                assert_eq!(cap, 1000);
                assert_eq!(partial.events, 1000);
                assert_eq!(partial.grid.len(), partial.states.len());
                assert!(partial.states.len() < cfg.grid().len());
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn absorbing_start_is_constant() {
        let p = stable_d2(5);
        let cfg = SimConfig::new(0, 3.0, 1.0, 0, 1)
            .unwrap()
            .with_start(Start::Custom(vec![10, 0, 0]));
        let traj = simulate_path(&p, &cfg, 0).unwrap();
        assert_eq!(traj.absorbed_at, Some(0.0));
        assert!(traj.states.iter().all(|s| s.counts() == [10, 0, 0]));
        assert_eq!(traj.events, 0);
    }

    #[test]
    fn first_passage_is_event_exact() {
        let p = stable_d2(20);
        let cfg = SimConfig::new(1, 200.0, 1.0, 9, 1).unwrap();
        let delta = 0.3;
        let threshold = delta * p.beta() * 20.0;
        for rep in 0..5 {
            let t = first_passage_time(&p, delta, &cfg, rep).unwrap();
            let log = simulate_event_log(&p, &cfg, rep).unwrap();
            assert_eq!(log.first_time_lost_at_least(threshold), Some(t));
            let traj = simulate_path(&p, &cfg, rep).unwrap();
            let grid_hit = traj
                .grid
                .iter()
                .zip(&traj.states)
                .find(|(_, s)| s.lost() as f64 >= threshold)
                .map(|(g, _)| g * traj.scale)
                .unwrap();
            assert!(t <= grid_hit);
            // monotone in delta on the same path
            let t_small = first_passage_time(&p, 0.1, &cfg, rep).unwrap();
            assert!(t_small <= t);
        }
    }

    #[test]
    fn tiny_delta_gives_first_loss_event() {
        let p = stable_d2(20);
        let cfg = SimConfig::new(1, 100.0, 1.0, 2, 1).unwrap();
        let t = first_passage_time(&p, 1e-9, &cfg, 0).unwrap();
        let log = simulate_event_log(&p, &cfg, 0).unwrap();
        let first_loss = log.lost_after.iter().position(|&x| x > 0).map(|i| log.times[i]);
        assert_eq!(Some(t), first_loss);
    }

    #[test]
    fn passage_domain_checked() {
        let p = stable_d2(20);
        let cfg = SimConfig::new(1, 100.0, 1.0, 2, 1).unwrap();
        assert!(first_passage_time(&p, 0.0, &cfg, 0).is_err());
        assert!(first_passage_time(&p, 1.0, &cfg, 0).is_err());
    }
}

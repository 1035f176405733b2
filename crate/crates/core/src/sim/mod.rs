//! Exact event-by-event simulation of the duplication chain.
//!
//! Paths are observed on a grid of *scaled* times: a grid time `t` refers to
//! the unscaled time `t * N^q`, where `q` is the configured time-scale
//! exponent. Each replication draws from its own stream derived from
//! `(seed, replication)`.

mod engine;
mod ensemble;
mod mm1;
mod occupancy;
mod path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{initial_state, local_equilibrium_state, ModelParams, NetworkState};

pub use ensemble::{run_ensemble, simulate_paths, EnsembleStats};
pub use mm1::{coupling_diagnostic, mm1_path, CouplingPaths, Mm1Path};
pub use occupancy::{empirical_occupancy, Histogram, OccupancyAccumulator};
pub use path::{
    first_passage_fraction, first_passage_time, simulate_event_log, simulate_path, EventLog,
};

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Every file with `d` copies.
    #[default]
    Full,
    /// Rounded local equilibrium of the overloaded regime.
    LocalEquilibrium,
    Custom(Vec<u64>),
}

impl Start {
    pub fn state(&self, params: &ModelParams) -> Result<NetworkState> {
        let state = match self {
            Start::Full => initial_state(params),
            Start::LocalEquilibrium => local_equilibrium_state(params)?,
            Start::Custom(counts) => NetworkState::new(counts.clone())?,
        };
        state.validate(params)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Exponent `q` of the observation scale `N^q`.
    #[serde(rename = "q")]
    pub time_scale_exponent: u32,
    /// Last grid time (scaled).
    pub horizon: f64,
    pub grid_step: f64,
    pub seed: u64,
    pub replications: u64,
    pub event_cap: u64,
    pub start: Start,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            time_scale_exponent: 0,
            horizon: 1.0,
            grid_step: 0.1,
            seed: 0,
            replications: 1,
            event_cap: DEFAULT_EVENT_CAP,
            start: Start::Full,
        }
    }
}

impl SimConfig {
    pub fn new(time_scale_exponent: u32, horizon: f64, grid_step: f64, seed: u64, replications: u64) -> Result<Self> {
        let cfg = Self {
            time_scale_exponent,
            horizon,
            grid_step,
            seed,
            replications,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_start(mut self, start: Start) -> Self {
        self.start = start;
        self
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("sim.{field}"),
                message,
            })
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon", format!("must be positive, got {}", self.horizon));
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return bad("grid_step", format!("must be positive, got {}", self.grid_step));
        }
        if self.grid_step > self.horizon * (1.0 + 1e-12) {
            return bad("grid_step", format!("{} exceeds horizon {}", self.grid_step, self.horizon));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.event_cap == 0 {
            return bad("event_cap", "must be at least 1".into());
        }
        Ok(())
    }

    /// Grid `0, h, 2h, ...` up to the horizon.
    pub fn grid(&self) -> Vec<f64> {
        let n = (self.horizon / self.grid_step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.grid_step).collect()
    }

    /// Time-scale factor `N^q`.
    pub fn scale(&self, params: &ModelParams) -> f64 {
        (params.n_servers() as f64).powi(self.time_scale_exponent as i32)
    }
}

/// One replication sampled on the grid. States are the right-continuous
/// values at the unscaled times `grid[i] * scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub scale: f64,
    pub states: Vec<NetworkState>,
    /// Unscaled time at which every file was lost, if it happened.
    pub absorbed_at: Option<f64>,
    pub events: u64,
}

impl Trajectory {
    pub fn lost(&self) -> impl Iterator<Item = u64> + '_ {
        self.states.iter().map(NetworkState::lost)
    }

    pub fn last_state(&self) -> Option<&NetworkState> {
        self.states.last()
    }
}

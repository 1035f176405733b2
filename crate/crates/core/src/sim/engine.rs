//! Exact jump-chain stepping of the duplication chain.

use rand::Rng;
use rand_distr::Exp1;

use crate::model::{apply_kind, duplication_level, EventKind, ModelParams};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Jump {
    pub time: f64,
    pub kind: EventKind,
}

/// Holds the current state and draws holding times and events. A proposed
/// jump is only applied on `commit`, so drivers can sample the state on a
/// time grid before the jump takes effect.
pub(crate) struct Engine {
    /// `mu * k` for `k = 0..=d`.
    loss_rates: Vec<f64>,
    capacity: f64,
    counts: Vec<u64>,
    time: f64,
    events: u64,
    rng: SimRng,
}

impl Engine {
    pub fn new(params: &ModelParams, counts: Vec<u64>, rng: SimRng) -> Self {
        let loss_rates = (0..counts.len()).map(|k| params.mu() * k as f64).collect();
        Self {
            loss_rates,
            capacity: params.capacity(),
            counts,
            time: 0.0,
            events: 0,
            rng,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Next jump from the current state, or `None` at the absorbing state.
    ///
    /// The event is picked by inverse CDF over the fixed order used by
    /// `enumerate_transitions`: losses `1..=d`, then duplication.
    pub fn propose(&mut self) -> Option<Jump> {
        let d = self.counts.len() - 1;
        let mut total = 0.0;
        for k in 1..=d {
            total += self.loss_rates[k] * self.counts[k] as f64;
        }
        let dup = duplication_level(&self.counts);
        if dup.is_some() {
            total += self.capacity;
        }
        if total <= 0.0 {
            return None;
        }

        let hold: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        let target = self.rng.random::<f64>() * total;

        let mut acc = 0.0;
        let mut last = None;
        for k in 1..=d {
            let x = self.counts[k];
            if x == 0 {
                continue;
            }
            acc += self.loss_rates[k] * x as f64;
            last = Some(EventKind::Loss(k));
            if target < acc {
                return Some(Jump {
                    time: self.time + hold,
                    kind: EventKind::Loss(k),
                });
            }
        }
        // Either the duplication slot or, through rounding, the last enabled loss.
        let kind = match dup {
            Some(k) => EventKind::Duplication(k),
            None => last.expect("positive total rate implies an enabled event"),
        };
        Some(Jump {
            time: self.time + hold,
            kind,
        })
    }

    pub fn commit(&mut self, jump: Jump) {
        apply_kind(&mut self.counts, jump.kind).expect("proposed jump is enabled");
        self.time = jump.time;
        self.events += 1;
    }
}

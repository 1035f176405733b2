//! Parameters, state space and transition structure of the duplication model.
//!
//! A network of `N` servers stores `F_N` files, each with at most `d` copies.
//! Every copy is lost after an exponential time of rate `mu`; the total
//! duplication capacity `lambda * N` is always spent on the files with the
//! fewest copies (among those with at least one copy and fewer than `d`).

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance used to reject the boundary cases `rho == k * beta`.
pub const REGIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    d: usize,
    lambda: f64,
    mu: f64,
    beta: f64,
    gamma: f64,
    n_servers: u64,
    rho: f64,
    f_n: u64,
}

impl ModelParams {
    pub fn new(d: usize, lambda: f64, mu: f64, beta: f64, gamma: f64, n_servers: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParams(format!("d must be at least 2, got {d}")));
        }
        for (name, v) in [("lambda", lambda), ("mu", mu), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be non-negative, got {gamma}")));
        }
        if n_servers == 0 {
            return Err(Error::InvalidParams("n_servers must be at least 1".into()));
        }
        let n = n_servers as f64;
        // f64::round rounds half away from zero.
        let f_n = (beta * n + gamma * n.sqrt()).round().max(1.0) as u64;
        Ok(Self {
            d,
            lambda,
            mu,
            beta,
            gamma,
            n_servers,
            rho: lambda / mu,
            f_n,
        })
    }

    /// Same rates, different network size.
    pub fn with_servers(&self, n_servers: u64) -> Result<Self> {
        Self::new(self.d, self.lambda, self.mu, self.beta, self.gamma, n_servers)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_servers(&self) -> u64 {
        self.n_servers
    }

    /// `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Number of files `F_N`.
    pub fn f_n(&self) -> u64 {
        self.f_n
    }

    /// Total duplication capacity `lambda * N`.
    pub fn capacity(&self) -> f64 {
        self.lambda * self.n_servers as f64
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    /// `rho` within `REGIME_EPS` (relative) of `k * beta`.
    Boundary { k: usize },
    /// `rho < 2 * beta`: the overloaded characterization needs `p >= 2`.
    BelowTwoBeta,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Boundary { k } => write!(
                f,
                "rho = {k}*beta within relative tolerance eps_regime = {REGIME_EPS:e} (boundary case, excluded)"
            ),
            RejectReason::BelowTwoBeta => write!(f, "rho < 2*beta is not covered"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `rho > d * beta`.
    Stable,
    /// `p * beta < rho < (p + 1) * beta` with `2 <= p <= d - 1`.
    Overloaded { p: usize },
    Rejected(RejectReason),
}

impl Regime {
    pub fn is_rejected(&self) -> bool {
        matches!(self, Regime::Rejected(_))
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Stable => write!(f, "stable"),
            Regime::Overloaded { p } => write!(f, "overloaded (p = {p})"),
            Regime::Rejected(r) => write!(f, "rejected: {r}"),
        }
    }
}

pub fn classify_regime(params: &ModelParams) -> Regime {
    let (rho, beta, d) = (params.rho, params.beta, params.d);
    for k in 1..=d {
        let kb = k as f64 * beta;
        if (rho - kb).abs() <= REGIME_EPS * kb {
            return Regime::Rejected(RejectReason::Boundary { k });
        }
    }
    if rho < 2.0 * beta {
        return Regime::Rejected(RejectReason::BelowTwoBeta);
    }
    if rho > d as f64 * beta {
        return Regime::Stable;
    }
    let p = ((rho / beta).floor() as usize).clamp(2, d - 1);
    Regime::Overloaded { p }
}

/// Occupancy vector `(x_0, ..., x_d)`: `x_k` files currently have `k` copies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct NetworkState {
    counts: Vec<u64>,
}

impl NetworkState {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 3 {
            return Err(Error::InvalidState(format!(
                "need at least 3 levels (d >= 2), got {}",
                counts.len()
            )));
        }
        Ok(Self { counts })
    }

    /// Checks the state against the parameters: `d + 1` levels summing to `F_N`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.counts.len() != params.d + 1 {
            return Err(Error::InvalidState(format!(
                "expected {} levels, got {}",
                params.d + 1,
                self.counts.len()
            )));
        }
        let total = self.total();
        if total != params.f_n {
            return Err(Error::InvalidState(format!(
                "conservation violated: {total} files, expected {}",
                params.f_n
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }

    pub fn d(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn level(&self, k: usize) -> u64 {
        self.counts[k]
    }

    /// Number of lost files `x_0`.
    pub fn lost(&self) -> u64 {
        self.counts[0]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `S_k = x_1 + ... + x_k`.
    pub fn partial_sum(&self, k: usize) -> u64 {
        self.counts[1..=k].iter().sum()
    }

    /// Smallest level `k` in `1..d` with `x_k > 0`: where duplication goes.
    pub fn duplication_level(&self) -> Option<usize> {
        duplication_level(&self.counts)
    }

    pub fn is_absorbing(&self) -> bool {
        self.counts[1..].iter().all(|&x| x == 0)
    }

    /// `sum_{k=1}^{d-1} (d - k) x_k`, the quantity dominated by an M/M/1 queue
    /// in the stable regime.
    pub fn weighted_deficit(&self) -> u64 {
        let d = self.d();
        (1..d).map(|k| (d - k) as u64 * self.counts[k]).sum()
    }
}

pub(crate) fn duplication_level(counts: &[u64]) -> Option<usize> {
    let d = counts.len() - 1;
    (1..d).find(|&k| counts[k] > 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    /// A file with `k` copies loses one.
    Loss(usize),
    /// A file with `k` copies gains one.
    Duplication(usize),
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Loss(k) => write!(f, "Loss({k})"),
            EventKind::Duplication(k) => write!(f, "Duplication({k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionEvent {
    pub kind: EventKind,
    pub rate: f64,
}

pub fn initial_state(params: &ModelParams) -> NetworkState {
    let mut counts = vec![0; params.d + 1];
    counts[params.d] = params.f_n;
    NetworkState { counts }
}

/// Rounded local equilibrium of the overloaded regime: `((p+1) beta - rho) N`
/// files with `p` copies, the remainder of `F_N` with `p + 1` copies.
pub fn local_equilibrium_state(params: &ModelParams) -> Result<NetworkState> {
    let p = match params.regime() {
        Regime::Overloaded { p } => p,
        other => return Err(Error::RegimeRejected(format!("local equilibrium needs an overloaded regime, got {other}"))),
    };
    let n = params.n_servers as f64;
    let at_p = ((((p + 1) as f64) * params.beta - params.rho) * n).round().max(0.0) as u64;
    let at_p = at_p.min(params.f_n);
    let mut counts = vec![0; params.d + 1];
    counts[p] = at_p;
    counts[p + 1] = params.f_n - at_p;
    Ok(NetworkState { counts })
}

/// All enabled transitions out of `state`, losses `k = 1..=d` first and then
/// the (at most one) duplication.
pub fn enumerate_transitions(params: &ModelParams, state: &NetworkState) -> Result<Vec<TransitionEvent>> {
    state.validate(params)?;
    let mut events = Vec::with_capacity(params.d + 1);
    for k in 1..=params.d {
        let x = state.counts[k];
        if x > 0 {
            events.push(TransitionEvent {
                kind: EventKind::Loss(k),
                rate: params.mu * k as f64 * x as f64,
            });
        }
    }
    if let Some(k) = state.duplication_level() {
        events.push(TransitionEvent {
            kind: EventKind::Duplication(k),
            rate: params.capacity(),
        });
    }
    Ok(events)
}

pub fn apply_event(state: &NetworkState, event: &TransitionEvent) -> Result<NetworkState> {
    let mut next = state.clone();
    apply_kind(&mut next.counts, event.kind).map_err(|()| Error::InvalidEvent {
        event: event.kind.to_string(),
        state: state.counts.clone(),
    })?;
    Ok(next)
}

/// In-place transition used by the simulator.
pub(crate) fn apply_kind(counts: &mut [u64], kind: EventKind) -> std::result::Result<(), ()> {
    let d = counts.len() - 1;
    match kind {
        EventKind::Loss(k) if (1..=d).contains(&k) && counts[k] > 0 => {
            counts[k] -= 1;
            counts[k - 1] += 1;
            Ok(())
        }
        EventKind::Duplication(k) if duplication_level(counts) == Some(k) => {
            counts[k] -= 1;
            counts[k + 1] += 1;
            Ok(())
        }
        _ => Err(()),
    }
}

/// Sum of all exit rates of `state`; zero exactly at the absorbing state.
pub fn total_rate(params: &ModelParams, state: &NetworkState) -> f64 {
    total_rate_counts(params, &state.counts)
}

pub(crate) fn total_rate_counts(params: &ModelParams, counts: &[u64]) -> f64 {
    let losses: f64 = (1..counts.len()).map(|k| params.mu * k as f64 * counts[k] as f64).sum();
    match duplication_level(counts) {
        Some(_) => losses + params.capacity(),
        None => losses,
    }
}

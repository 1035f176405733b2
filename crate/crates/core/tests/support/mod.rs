//! Invariant checks shared by the property suite and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use replica_decay::asymptotics::{DecayCurve, OverloadDecay};
use replica_decay::model::{ModelParams, Regime};
use replica_decay::sim::{run_ensemble, simulate_path, SimConfig, Start};
use replica_decay::skorohod::{solve_sp, GridPath, ReflectionMatrix};

/// Parameters strictly inside the stable regime.
pub fn stable_params(max_n: u64) -> impl Strategy<Value = ModelParams> {
    (2usize..=5, 0.5f64..3.0, 0.05f64..0.5, 0.05f64..2.0, 0.0f64..1.0, 1u64..=max_n).prop_map(
        |(d, beta, mu, excess, gamma, n)| {
            let rho = d as f64 * beta * (1.0 + excess);
            ModelParams::new(d, rho * mu, mu, beta, gamma, n).unwrap()
        },
    )
}

/// Parameters strictly inside an overloaded regime `p in 2..d`.
pub fn overloaded_params(max_n: u64) -> impl Strategy<Value = ModelParams> {
    (3usize..=5, 0.5f64..3.0, 0.05f64..0.5, 0.05f64..0.95, 0.0f64..1.0, 1u64..=max_n)
        .prop_flat_map(|(d, beta, mu, frac, gamma, n)| {
            (2..d).prop_map(move |p| {
                let rho = beta * (p as f64 + frac);
                ModelParams::new(d, rho * mu, mu, beta, gamma, n).unwrap()
            })
        })
}

pub fn accepted_params(max_n: u64) -> impl Strategy<Value = ModelParams> {
    prop_oneof![stable_params(max_n), overloaded_params(max_n)]
}

/// Piecewise-linear path with `Z(0) >= 0`, stored componentwise.
pub fn free_path() -> impl Strategy<Value = GridPath> {
    (1usize..=4, 2usize..60).prop_flat_map(|(dim, len)| {
        let start = prop::collection::vec(0.0f64..1.0, dim);
        let steps = prop::collection::vec(prop::collection::vec(-1.0f64..1.0, len), dim);
        (start, steps).prop_map(|(start, steps)| {
            let values = start
                .iter()
                .zip(steps)
                .map(|(&z0, inc)| {
                    let mut v = Vec::with_capacity(inc.len() + 1);
                    v.push(z0);
                    for dz in inc {
                        v.push(v.last().unwrap() + dz);
                    }
                    v
                })
                .collect();
            GridPath::new(0.1, values).unwrap()
        })
    })
}

/// Every sampled state holds exactly `F_N` files and `x_0` never decreases.
pub fn conservation_and_monotone_loss(params: &ModelParams, seed: u64) -> Result<(), TestCaseError> {
    let cfg = SimConfig::new(0, 20.0, 0.5, seed, 1).unwrap();
    let traj = simulate_path(params, &cfg, 0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for s in &traj.states {
        prop_assert_eq!(s.total(), params.f_n());
        prop_assert!(s.validate(params).is_ok());
    }
    let lost: Vec<u64> = traj.lost().collect();
    prop_assert!(lost.windows(2).all(|w| w[0] <= w[1]), "lost counts {:?}", lost);
    Ok(())
}

/// Reflected path stays non-negative, regulators start at zero, never
/// decrease and only push while the component sits at zero.
pub fn regulator_properties(z: &GridPath) -> Result<(), TestCaseError> {
    let p = ReflectionMatrix::lower_shift(z.dim());
    let sol = solve_sp(z, &p, 1e-9).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(sol.check(1e-9).is_ok(), "{:?}", sol.check(1e-9));
    // A larger free path never needs more pushing on the first component.
    let shifted = GridPath::new(
        z.step(),
        z.components().iter().map(|c| c.iter().map(|v| v + 0.5).collect()).collect(),
    )
    .unwrap();
    let lifted = solve_sp(&shifted, &p, 1e-9).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (a, b) in lifted.r.component(0).iter().zip(sol.r.component(0)) {
        prop_assert!(a <= b);
    }
    Ok(())
}

pub fn decay_round_trip(params: &ModelParams, u: f64) -> Result<(), TestCaseError> {
    let curve = DecayCurve::new(params).unwrap();
    let beta = params.beta();
    let y = u * beta;
    let t = curve.t_of_phi(y).unwrap();
    prop_assert!((curve.phi_of_t(t) - y).abs() <= 1e-9 * beta);
    let back = curve.t_of_phi(curve.phi_of_t(t)).unwrap();
    prop_assert!((back - t).abs() <= 1e-9 * t.max(1e-12), "t {} back {}", t, back);
    Ok(())
}

pub fn overload_round_trip(params: &ModelParams, u: f64) -> Result<(), TestCaseError> {
    let od = OverloadDecay::new(params).unwrap();
    let y = u * od.lost_limit();
    let t = od.t_of_lost(y).unwrap();
    prop_assert!((od.phi_lost(t) - y).abs() <= 1e-9 * od.lost_limit());
    let s = od.phi(t);
    prop_assert!((s.lost + s.at_p + s.above_p - params.beta()).abs() <= 1e-9 * params.beta());
    prop_assert!(s.at_p >= -1e-12);
    Ok(())
}

/// Same seed gives the same path and the same ensemble, whatever the
/// number of worker threads.
pub fn determinism(params: &ModelParams, seed: u64) -> Result<(), TestCaseError> {
    let start = match params.regime() {
        Regime::Overloaded { .. } => Start::LocalEquilibrium,
        _ => Start::Full,
    };
    let cfg = SimConfig::new(0, 5.0, 0.5, seed, 6).unwrap().with_start(start);
    let a = simulate_path(params, &cfg, 3).unwrap();
    let b = simulate_path(params, &cfg, 3).unwrap();
    prop_assert_eq!(a, b);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run_ensemble(params, &cfg).unwrap());
    let three = pool(3).install(|| run_ensemble(params, &cfg).unwrap());
    prop_assert_eq!(one, three);
    Ok(())
}

//! Gaussian fluctuations of the lost count around the decay law.

use replica_decay::asymptotics::DecayCurve;
use replica_decay::fluctuations::{clt_ensemble, default_gamma, empirical_fluctuation, variance_ode, SdeOptions};
use replica_decay::model::ModelParams;
use replica_decay::sim::{simulate_paths, SimConfig};

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, 100)?;
    let curve = DecayCurve::new(&params)?;
    let opts = SdeOptions::new(1e-2, 10.0, default_gamma(&params))?;
    let sde = clt_ensemble(&curve, &opts, 2000, 5)?;
    let exact = variance_ode(&curve, &opts);

    let cfg = SimConfig::new(1, 10.0, 5.0, 5, 100)?;
    let paths = simulate_paths(&params, &cfg).into_iter().collect::<replica_decay::Result<Vec<_>>>()?;
    let emp = empirical_fluctuation(&paths, &curve)?.moments();
    for (j, t) in [(1, 5.0), (2, 10.0)] {
        let i = sde.index_of(t).expect("grid point");
        println!(
            "t = {t:4.1}  Var W: simulated {:.3}  SDE {:.3}  ODE {:.3}",
            emp.variance[j], sde.variance[i], exact[i]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

//! Time-weighted occupancy of level d - 1 against the geometric law.

use replica_decay::asymptotics::DecayCurve;
use replica_decay::model::ModelParams;
use replica_decay::sim::{coupling_diagnostic, empirical_occupancy, SimConfig};

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, 100)?;
    let curve = DecayCurve::new(&params)?;
    let t = curve.t_of_phi(0.4)?;
    let cfg = SimConfig::new(1, t + 0.5, 0.5, 3, 20)?;
    let hist = empirical_occupancy(&params, &cfg, 1, (t - 0.5, t + 0.5))?;
    let r = curve.occupancy_parameter(t);
    for j in 0..5 {
        println!("P(x_1 = {j}) = {:.4}   geometric {:.4}", hist.pmf(j), (1.0 - r) * r.powi(j as i32));
    }
    println!("total variation distance {:.4}", hist.tv_distance_geometric(r));

    // The deficit process sits below a stationary M/M/1 queue.
    let short = SimConfig::new(0, 50.0, 5.0, 3, 1)?;
    let c = coupling_diagnostic(&params, &short, 0)?;
    println!("deficit {:?}", c.z);
    println!("queue   {:?}", c.queue);
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

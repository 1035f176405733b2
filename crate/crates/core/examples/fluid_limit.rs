//! Closed-form fluid limit: thresholds, segment coefficients, trajectory.

use replica_decay::fluid::{eval_fluid, fluid_limit};
use replica_decay::model::ModelParams;

pub fn run_example() -> replica_decay::Result<()> {
    // rho = 2.2 lies between 2 beta and 3 beta: overloaded with p = 2.
    let params = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 1000)?;
    let sol = fluid_limit(&params)?;
    println!("regime {}", sol.regime());
    for (level, t) in sol.thresholds() {
        println!("level {level} stops receiving duplications at t = {t:.4}");
    }
    for t in [0.0, 2.0, 5.0, 10.0, 30.0, 100.0] {
        let x = eval_fluid(&sol, t);
        println!("t = {t:5.1}  x = {:?}", x.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    }

    let stable = fluid_limit(&ModelParams::new(3, 1.0, 0.1, 2.0, 0.0, 1000)?)?;
    println!("stable case x(50) = {:?}", eval_fluid(&stable, 50.0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

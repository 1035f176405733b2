//! Slow decay of an overloaded network started at its local equilibrium.

use replica_decay::asymptotics::OverloadDecay;
use replica_decay::model::ModelParams;
use replica_decay::sim::{run_ensemble, SimConfig, Start};

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 200)?;
    let od = OverloadDecay::new(&params)?;
    println!("p = {}, lost fraction tends to {:.4}", od.p(), od.lost_limit());
    let cfg = SimConfig::new(1, 10.0, 2.5, 9, 10)?.with_start(Start::LocalEquilibrium);
    let stats = run_ensemble(&params, &cfg)?;
    for (i, &t) in stats.grid.iter().enumerate() {
        let s = od.phi(t);
        println!(
            "t = {t:4.1}  simulated ({:.3}, {:.3}, {:.3})  limit ({:.3}, {:.3}, {:.3})",
            stats.mean[0][i], stats.mean[2][i], stats.mean[3][i], s.lost, s.at_p, s.above_p
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

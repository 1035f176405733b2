//! Ensemble mean of the overloaded d = 4 network on the fluid time scale.

use replica_decay::fluid::{eval_fluid, fluid_limit};
use replica_decay::model::ModelParams;
use replica_decay::sim::{run_ensemble, simulate_path, SimConfig};

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 200)?;
    println!("regime {}, F_N = {}", params.regime(), params.f_n());
    let cfg = SimConfig::new(0, 20.0, 5.0, 7, 8)?;

    let one = simulate_path(&params, &cfg, 0)?;
    println!("replication 0 used {} events", one.events);

    let stats = run_ensemble(&params, &cfg)?;
    let fluid = fluid_limit(&params)?;
    for (i, &t) in stats.grid.iter().enumerate() {
        let x = eval_fluid(&fluid, t);
        let sim: Vec<String> = (0..=4).map(|k| format!("{:.3}", stats.mean[k][i])).collect();
        let lim: Vec<String> = x.iter().map(|v| format!("{v:.3}")).collect();
        println!("t = {t:4.1}  simulated [{}]  fluid [{}]", sim.join(" "), lim.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

//! First time half of the files are lost, against its large-N asymptote.

use replica_decay::asymptotics::decay_time_asymptote;
use replica_decay::model::ModelParams;
use replica_decay::sim::{first_passage_fraction, SimConfig};

pub fn run_example() -> replica_decay::Result<()> {
    let n = 100;
    let params = ModelParams::new(2, 1.0, 0.1, 2.0, 0.0, n)?;
    let cfg = SimConfig::new(1, 1.0, 1.0, 11, 20)?;
    let times = first_passage_fraction(&params, 0.5, &cfg)?;
    let mean = times.iter().sum::<f64>() / times.len() as f64 / n as f64;
    println!("mean T/N over {} runs: {mean:.3}", times.len());
    println!("asymptote: {:.3}", decay_time_asymptote(&params, 0.5)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

//! Decay of the lost fraction on the time scale N^(d-1).

use replica_decay::asymptotics::{decay_time_asymptote, DecayCurve};
use replica_decay::model::ModelParams;

pub fn run_example() -> replica_decay::Result<()> {
    let params = ModelParams::new(3, 1.0, 0.1, 2.0, 0.0, 1000)?;
    let curve = DecayCurve::new(&params)?;
    println!("decay constant {:.5}", curve.decay_constant());
    for t in [0.0, 10.0, 65.52, 200.0, 1000.0] {
        println!(
            "t = {t:7.2}  Phi = {:.4}  r = {:.4}",
            curve.phi_of_t(t),
            curve.occupancy_parameter(t)
        );
    }
    println!("half the files are lost at t = {:.3}", curve.t_of_phi(1.0)?);
    println!("asymptote of T(0.5) / N^2: {:.3}", decay_time_asymptote(&params, 0.5)?);

    let h = 1e-3;
    let ode = curve.phi_via_ode(h, 100.0);
    let gap = ode
        .iter()
        .enumerate()
        .map(|(i, v)| (v - curve.phi_of_t(i as f64 * h)).abs())
        .fold(0.0, f64::max);
    println!("implicit solution vs ODE integration: {gap:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

//! Skorohod reflection of a path and the fluid limit recovered as the
//! solution of a generalized Skorohod problem.

use replica_decay::fluid::{eval_fluid, fluid_limit, fluid_numeric};
use replica_decay::model::ModelParams;
use replica_decay::skorohod::{solve_sp, GridPath, GspOptions, ReflectionMatrix};

pub fn run_example() -> replica_decay::Result<()> {
    // Plain problem: X = Z + (I - P) R with P the lower shift.
    let z = GridPath::from_fn(2, 0.01, 2.0, |t| vec![-t, 2.0 * t])?;
    let p = ReflectionMatrix::lower_shift(2);
    let sol = solve_sp(&z, &p, 1e-12)?;
    let last = z.len() - 1;
    println!(
        "X(2) = ({:.3}, {:.3}), R(2) = ({:.3}, {:.3})",
        sol.x.value(0, last),
        sol.x.value(1, last),
        sol.r.value(0, last),
        sol.r.value(1, last)
    );
    if let Err(msg) = sol.check(sol.default_tolerance()) {
        println!("check failed: {msg}");
    }

    // Fluid limit of the d = 4 overloaded network by Picard iteration.
    let params = ModelParams::new(4, 0.22, 0.1, 1.0, 0.0, 1000)?;
    let num = fluid_numeric(&params, 1e-2, 30.0, &GspOptions::default())?;
    let closed = fluid_limit(&params)?;
    let mut sup: f64 = 0.0;
    for i in 0..num.len() {
        let exact = eval_fluid(&closed, num.time(i));
        for (a, b) in num.x_at(i).iter().zip(&exact) {
            sup = sup.max((a - b).abs());
        }
    }
    println!(
        "{} windows, at most {} Picard iterations, sup distance to closed form {sup:.2e}",
        num.gsp.windows.len(),
        num.gsp.max_iterations()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> replica_decay::Result<()> {
    run_example()
}

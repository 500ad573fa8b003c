//! Evaluate drivers, compute jump quantiles and run the sampled validity check.

use dyndev::drivers::{check_driver, cvar_nu, var_nu};
use dyndev::{DriverSpec, JumpMeasure, NoiseModel, Result};

pub fn run_example() -> Result<(bool, bool)> {
    let nu = JumpMeasure::scalar(&[-1.0, 2.0], &[0.3, 0.7])?;
    let noise = NoiseModel::new(1, nu.clone())?;
    let (h, ht) = ([0.5], [-1.0, 2.0]);
    for g in [
        DriverSpec::variance(1.0),
        DriverSpec::norm_cd(1.0, 1.0),
        DriverSpec::scaled(2.0, DriverSpec::norm_cd(1.0, 1.0)),
    ] {
        println!("{:<28} g = {:.6}", g.name(), g.eval(0.0, &h, &ht, &nu)?);
    }
    println!("VaR_0.5 = {}, CVaR_0.5 = {}", var_nu(0.5, &ht, &nu)?, cvar_nu(0.5, &ht, &nu)?);

    let good = check_driver(&DriverSpec::norm_cd(1.0, 1.0), &noise, 500, 1)?;
    let cvar = check_driver(&DriverSpec::CvarJump { a: 0.5 }, &noise, 500, 1)?;
    println!("{}: passed = {}", good.driver, good.passed());
    if let Some(w) = &cvar.nonnegativity.witness {
        println!("{}: negative at h~ = {:?}, value {:.6}", cvar.driver, w.points[0].1, w.values[0]);
    }
    Ok((good.passed(), cvar.passed()))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

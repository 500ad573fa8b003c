//! Evaluate a deviation process, check it against the recursive form and compute utility.

use dyndev::deviation::{deterministic_d0, utility};
use dyndev::repr::{lift_analytic, AnalyticPayoff};
use dyndev::{
    evaluate, evaluate_recursive, represent, DriverSpec, Filtration, JumpMeasure, Lattice, NoiseModel, Result, TimeGrid,
};

pub fn run_example() -> Result<(f64, f64)> {
    let noise = NoiseModel::new(1, JumpMeasure::scalar(&[1.0], &[0.4])?)?;
    let lat = Lattice::build(TimeGrid::uniform(1.0, 4)?, noise, 1 << 12)?;
    let driver = DriverSpec::norm_cd(1.0, 1.0);

    let x = lat.payoff_from_terminal(|s| (0.5 * s.w[0]).exp() - s.compensated[0]);
    let pair = represent(&lat, &x)?;
    let dev = evaluate(&lat, &driver, &pair)?;
    let rec = evaluate_recursive(&lat, &driver, &pair, &[0, 1, 3, 4])?;
    let gap = dev.values.max_abs_diff(&rec.values);
    println!("D_0 = {:.8}, recursive gap {gap:.1e}, invariants ok = {}", dev.initial(), dev.check_invariants(&lat));
    println!("U_0 = {:.8}", utility(&lat, &x, &dev, 0)?[0]);

    // deterministic integrands: D_0 is a plain time integral
    let ap = AnalyticPayoff::constant(lat.grid().clone(), vec![0.8], vec![0.5])?;
    let lifted = evaluate(&lat, &driver, &lift_analytic(&ap, &lat)?)?;
    let exact = deterministic_d0(lat.grid(), &driver, &ap, &lat.noise().jumps)?;
    println!("deterministic: lattice {:.12}, integral {exact:.12}", lifted.initial());
    Ok((gap, (lifted.initial() - exact).abs()))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

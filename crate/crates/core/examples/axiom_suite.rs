//! Run the axiom checks on a convex driver and on a deliberately concave one.

use dyndev::deviation::axiom_report;
use dyndev::drivers::CustomDriver;
use dyndev::{DriverSpec, Filtration, Lattice, NoiseModel, RandomVariable, Result, TimeGrid};

pub fn run_example() -> Result<(bool, bool)> {
    let lat = Lattice::build(TimeGrid::uniform(1.0, 3)?, NoiseModel::brownian(1)?, 1 << 10)?;
    let payoffs: Vec<RandomVariable> =
        (0..3).map(|k| lat.payoff_from_terminal(|s| (s.w[0] * (k + 1) as f64).sin() + s.w[0] * k as f64)).collect();

    let report = axiom_report(&lat, &DriverSpec::variance(1.0), &payoffs, 7)?;
    println!("{}: passed = {} ({} mixtures)", report.driver, report.passed(), report.d3.tested);

    let concave = DriverSpec::Custom(CustomDriver::new("sqrt", |_, h, _| h[0].abs().sqrt()));
    let bad = axiom_report(&lat, &concave, &payoffs, 7)?;
    if let Some(w) = &bad.d3.witness {
        println!("sqrt fails convexity at level {} node {}: {:.6} > {:.6}", w.level, w.node, w.lhs, w.rhs);
    }
    Ok((report.passed(), bad.d3.passed))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

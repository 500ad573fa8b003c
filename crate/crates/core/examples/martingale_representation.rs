//! Recover predictable integrands from a payoff and rebuild it.

use dyndev::repr::assemble;
use dyndev::{represent, Filtration, JumpMeasure, Lattice, NoiseModel, Result, TimeGrid};

pub fn run_example() -> Result<(f64, f64)> {
    // one Brownian factor only: every payoff is spanned
    let binomial = Lattice::build(TimeGrid::uniform(1.0, 4)?, NoiseModel::brownian(1)?, 1 << 10)?;
    let x = binomial.payoff_from_terminal(|s| s.w[0].max(0.0));
    let pair = represent(&binomial, &x)?;
    let rebuilt = assemble(&binomial, &pair)?;
    println!(
        "complete: mean {:.6}, residual {:.1e}, rebuild error {:.1e}",
        pair.mean,
        pair.max_residual(),
        rebuilt.max_abs_diff(&x)
    );

    // a Brownian factor plus one mark: four branches, three directions
    let noise = NoiseModel::new(1, JumpMeasure::scalar(&[1.0], &[0.4])?)?;
    let lat = Lattice::build(TimeGrid::uniform(1.0, 2)?, noise, 1 << 10)?;
    let y = lat.payoff_from_terminal(|s| s.w[0] * s.compensated[0]);
    let pair = represent(&lat, &y)?;
    for (level, steps) in pair.steps.iter().enumerate() {
        let s = &steps[0];
        println!("level {level} node 0: h = {:?}, h~ = {:?}", s.h, s.htilde);
    }
    println!("incomplete: residual {:.3e}", pair.max_residual());
    Ok((rebuilt.max_abs_diff(&x), pair.max_residual()))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

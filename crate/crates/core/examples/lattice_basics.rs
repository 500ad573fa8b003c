//! Build a Brownian-plus-jump lattice and take conditional expectations.

use dyndev::lattice::{cond_exp, expectation, law, martingale};
use dyndev::{Filtration, JumpMeasure, Lattice, NoiseModel, Result, TimeGrid};

pub fn run_example() -> Result<(usize, f64)> {
    let noise = NoiseModel::new(1, JumpMeasure::scalar(&[1.0], &[0.4])?)?;
    let lat = Lattice::build(TimeGrid::uniform(1.0, 3)?, noise, 1 << 12)?;
    println!("{} levels, branching {}, {} leaves", lat.depth(), lat.branching(), lat.leaf_count());

    let x = lat.payoff_from_terminal(|s| s.w[0] * s.w[0] + s.compensated[0]);
    let mean = expectation(&lat, &x)?;
    println!("E[X] = {mean:.6}");
    for level in 0..=lat.depth() {
        let m = cond_exp(&lat, &x, level)?;
        println!("E[X | F_{level}] at node 0: {:.6} ({} nodes)", m[0], m.len());
    }
    let path = martingale(&lat, &x)?;
    assert_eq!(path.initial(), mean);

    let dist = law(&lat, &x, 1e-12)?;
    println!("law: {} atoms, variance {:.6}", dist.atoms.len(), dist.variance());
    Ok((lat.leaf_count(), mean))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

//! Deviation of a terminal jump payoff on a recombining lattice with many steps.

use dyndev::lattice::{expectation, MarkovLattice};
use dyndev::{evaluate, represent, DriverSpec, Filtration, JumpMeasure, NoiseModel, Result, TimeGrid};

pub fn run_example() -> Result<Vec<f64>> {
    let noise = NoiseModel::new(1, JumpMeasure::scalar(&[1.0], &[0.5])?)?;
    let mut errors = Vec::new();
    for n in [4, 8, 16, 32] {
        let lat = MarkovLattice::build(TimeGrid::uniform(1.0, n)?, noise.clone(), 1 << 16)?;
        let x = lat.payoff_from_terminal(|s| s.compensated[0]);
        let d0 = evaluate(&lat, &DriverSpec::variance(1.0), &represent(&lat, &x)?)?.initial();
        let mean = expectation(&lat, &x)?;
        let var = expectation(&lat, &x.map(|v| (v - mean).powi(2)))?;
        println!("n = {n:>2}: {} nodes, D_0 = {d0:.6}, Var = {var:.6}", lat.node_count());
        errors.push((d0 - var).abs());
    }
    Ok(errors)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

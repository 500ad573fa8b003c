//! Compare deviations of equal-law payoffs: variance cannot tell them apart, a norm driver can.

use dyndev::deviation::{law_probe, ProbeInput};
use dyndev::repr::AnalyticPayoff;
use dyndev::{DriverSpec, Lattice, NoiseModel, Result, TimeGrid};

pub fn run_example() -> Result<(f64, f64)> {
    let lat = Lattice::build(TimeGrid::uniform(1.0, 4)?, NoiseModel::brownian(1)?, 1 << 10)?;
    let x = lat.payoff_from_path(|e| (2.0 * e[0] as f64 - 1.0) * e[1] as f64 + (e[2] * e[3]) as f64);
    let y = lat.permute_steps(&x, &[1, 0, 2, 3])?;
    let pair = ProbeInput::Lattice { label: "swap first steps".into(), x, y };
    let variance = law_probe(&lat, &DriverSpec::variance(1.0), std::slice::from_ref(&pair))?;
    let norm = law_probe(&lat, &DriverSpec::norm_cd(1.0, 0.0), &[pair])?;
    println!("variance gap {:.1e}, norm gap {:.6}", variance.max_gap, norm.max_gap);

    // h = 1 on [0, 1] against h = sqrt(2) on [0, 1/2]: both N(0, 1)
    let grid = TimeGrid::uniform(1.0, 2)?;
    let flat = AnalyticPayoff::constant(grid.clone(), vec![1.0], vec![])?;
    let front = AnalyticPayoff::new(grid, vec![vec![2f64.sqrt()], vec![0.0]], vec![vec![], vec![]])?;
    let analytic = law_probe(
        &lat,
        &DriverSpec::norm_cd(1.0, 0.0),
        &[ProbeInput::Analytic { label: "gaussian".into(), x: flat, y: front }],
    )?;
    let e = &analytic.entries[0];
    println!("norm driver on equal Gaussians: {:.8} vs {:.8}", e.d0[0], e.d0[1]);
    Ok((variance.max_gap, e.gap))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

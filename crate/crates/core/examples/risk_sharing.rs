//! Split the combined risk of two agents and price the transfer.

use dyndev::sharing::residual_check;
use dyndev::{
    solve_sharing, DriverSpec, Filtration, JumpMeasure, Lattice, NoiseModel, Result, SharingProblem, TimeGrid,
};

pub fn run_example() -> Result<(f64, f64)> {
    let noise = NoiseModel::new(1, JumpMeasure::scalar(&[1.0], &[0.4])?)?;
    let lat = Lattice::build(TimeGrid::uniform(1.0, 3)?, noise, 1 << 12)?;
    let xa = lat.payoff_from_terminal(|s| s.w[0].powi(3) + 0.7 * s.compensated[0]);
    let xb = lat.payoff_from_terminal(|s| (0.5 * s.w[0]).exp() - s.compensated[0].powi(2));

    let prob = SharingProblem::new(xa, xb, DriverSpec::variance(1.0), DriverSpec::variance(2.0));
    let sol = solve_sharing(&lat, &prob)?;
    let s = sol.summary();
    println!("D_A alone {:.6}, D_B alone {:.6}, shared {:.6}", s.d_a_alone, s.d_b_alone, s.infconv_d0);
    println!(
        "price {:.6}, dU_A {:.6}, dU_B {:.1e}, share of B {:?}",
        s.price, s.delta_u_a, s.delta_u_b, s.share_factor
    );

    let r = residual_check(&lat, &sol, &prob)?;
    println!("{} of {} risky nodes split strictly: {}", r.interior_nodes, r.risky_nodes, r.note);
    Ok((s.delta_u_a, s.delta_u_b))
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}

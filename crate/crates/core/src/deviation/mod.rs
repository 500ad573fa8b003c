//! Driver-based dynamic deviation measures.
//!
//! `D_t(X) = E[ sum_{i >= t} g(t_i, H_i, H~_i) dt_i | F_t ]`, with the
//! integrands sampled at the left endpoint of each step. [`evaluate`] runs the
//! backward recursion directly; [`evaluate_recursive`] rebuilds the same
//! process from block deviations of the martingale increments over a coarser
//! partition and is kept as a cross-check.

mod axioms;
mod law;

pub use axioms::{axiom_report, AxiomCheck, AxiomReport, AxiomWitness};
pub use law::{independence_spread, law_probe, LawProbeEntry, LawProbeReport, ProbeInput};

use crate::drivers::DriverSpec;
use crate::error::{invalid, Error, Result};
use crate::lattice::{cond_exp, one_step, AdaptedProcess, Filtration, JumpMeasure, RandomVariable, TimeGrid};
use crate::repr::{AnalyticPayoff, RepresentingPair};

/// Supermartingale and positivity checks use this slack.
pub const MONOTONE_TOL: f64 = 1e-12;

/// `D_t(X)` at every node, with the driver that produced it.
#[derive(Debug, Clone)]
pub struct DeviationProcess {
    pub values: AdaptedProcess,
    pub driver: DriverSpec,
}

impl DeviationProcess {
    /// `D_0`.
    pub fn initial(&self) -> f64 {
        self.values.initial()
    }

    pub fn level(&self, level: usize) -> &[f64] {
        self.values.level(level)
    }

    /// `D >= 0`, `D_T = 0` and `D_t >= E[D_{t+1} | F_t]` up to [`MONOTONE_TOL`].
    pub fn check_invariants(&self, lat: &impl Filtration) -> bool {
        let n = self.values.depth();
        self.values.min_value() >= -MONOTONE_TOL
            && self.values.level(n).iter().all(|&v| v == 0.0)
            && self.values.supermartingale_excess(lat) <= MONOTONE_TOL
    }

    /// `(level, node, value)` rows in level order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .levels()
            .iter()
            .enumerate()
            .flat_map(|(l, vals)| vals.iter().enumerate().map(move |(k, &v)| (l, k, v)))
    }
}

/// `g(t_i, H, H~) dt_i` per non-terminal node.
pub(crate) fn driver_rates(
    lat: &impl Filtration,
    driver: &DriverSpec,
    pair: &RepresentingPair,
) -> Result<Vec<Vec<f64>>> {
    pair.check_shape(lat).map_err(|e| match e {
        Error::DimensionMismatch { what, expected, found } => Error::DimensionMismatch { what, expected, found },
        other => other,
    })?;
    let nu = &lat.noise().jumps;
    (0..lat.depth())
        .map(|level| {
            let t = lat.grid().time(level);
            let dt = lat.step(level).dt;
            pair.steps[level].iter().map(|s| Ok(driver.eval(t, &s.h, &s.htilde, nu)? * dt)).collect()
        })
        .collect()
}

/// Backward accumulation `V_i = E[V_{i+1} | F_i] + rate_i`, `V_n = 0`.
pub(crate) fn accumulate(lat: &impl Filtration, rates: &[Vec<f64>]) -> AdaptedProcess {
    let mut values = AdaptedProcess::zeros(lat);
    for level in (0..lat.depth()).rev() {
        let next = one_step(lat, values.level(level + 1), level);
        for ((v, e), r) in values.level_mut(level).iter_mut().zip(next).zip(&rates[level]) {
            *v = e + r;
        }
    }
    values
}

pub fn evaluate(lat: &impl Filtration, driver: &DriverSpec, pair: &RepresentingPair) -> Result<DeviationProcess> {
    let rates = driver_rates(lat, driver, pair)?;
    Ok(DeviationProcess { values: accumulate(lat, &rates), driver: driver.clone() })
}

/// Same process assembled from block deviations over `partition`.
///
/// Each cell `[a, b)` contributes the deviation of the increment
/// `E[X | F_b] - E[X | F_a]`, whose representing pair is `pair` restricted to
/// the cell. `partition` must be strictly increasing from `0` to `n`.
pub fn evaluate_recursive(
    lat: &impl Filtration,
    driver: &DriverSpec,
    pair: &RepresentingPair,
    partition: &[usize],
) -> Result<DeviationProcess> {
    let n = lat.depth();
    if partition.first() != Some(&0) || partition.last() != Some(&n) {
        return Err(invalid(format!("partition must start at 0 and end at {n}")));
    }
    if partition.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("partition must be strictly increasing"));
    }
    pair.check_shape(lat)?;
    let mut values = AdaptedProcess::zeros(lat);
    for cell in partition.windows(2).rev() {
        let (a, b) = (cell[0], cell[1]);
        let block = restrict(pair, a, b);
        let block_dev = evaluate(lat, driver, &block)?;
        let mut carried = values.level(b).to_vec();
        for level in (a..b).rev() {
            carried = one_step(lat, &carried, level);
            for ((v, c), p) in values.level_mut(level).iter_mut().zip(&carried).zip(block_dev.level(level)) {
                *v = p + c;
            }
        }
    }
    Ok(DeviationProcess { values, driver: driver.clone() })
}

/// Pair of the increment `E[X | F_b] - E[X | F_a]`.
fn restrict(pair: &RepresentingPair, a: usize, b: usize) -> RepresentingPair {
    let mut out = pair.clone();
    out.mean = 0.0;
    for (level, nodes) in out.steps.iter_mut().enumerate() {
        if level < a || level >= b {
            nodes.iter_mut().for_each(|s| {
                s.h.iter_mut().for_each(|v| *v = 0.0);
                s.htilde.iter_mut().for_each(|v| *v = 0.0);
            });
        }
    }
    out
}

/// `sum_i g(t_i, h_i, h~_i) dt_i` for deterministic integrands.
pub fn deterministic_d0(grid: &TimeGrid, driver: &DriverSpec, ap: &AnalyticPayoff, nu: &JumpMeasure) -> Result<f64> {
    ap.validate()?;
    if ap.grid != *grid {
        return Err(Error::GridMismatch("analytic payoff grid differs from the given grid".into()));
    }
    (0..grid.steps())
        .try_fold(0.0, |acc, i| Ok(acc + driver.eval(grid.time(i), &ap.h[i], &ap.htilde[i], nu)? * grid.dt(i)))
}

/// `U_t(X) = E[X | F_t] - D_t(X)` at the nodes of `level`.
pub fn utility(lat: &impl Filtration, x: &RandomVariable, dev: &DeviationProcess, level: usize) -> Result<Vec<f64>> {
    if dev.values.depth() != lat.depth() {
        return Err(Error::DimensionMismatch {
            what: "deviation levels",
            expected: lat.depth(),
            found: dev.values.depth(),
        });
    }
    let mean = cond_exp(lat, x, level)?;
    Ok(mean.iter().zip(dev.level(level)).map(|(m, d)| m - d).collect())
}

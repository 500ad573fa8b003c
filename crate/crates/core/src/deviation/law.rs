use serde::Serialize;

use super::{deterministic_d0, evaluate};
use crate::drivers::DriverSpec;
use crate::error::{invalid, Result};
use crate::lattice::{default_merge_tol, law, Filtration, Lattice, RandomVariable};
use crate::repr::{represent, AnalyticPayoff};

/// Two payoffs expected to share a law.
#[derive(Debug, Clone)]
pub enum ProbeInput {
    /// Payoffs on the lattice; their laws are compared atom by atom.
    Lattice { label: String, x: RandomVariable, y: RandomVariable },
    /// Deterministic Brownian integrands: Gaussian in the continuum with
    /// variance `int |h|^2 dt`, so equal variances mean equal laws there.
    Analytic { label: String, x: AnalyticPayoff, y: AnalyticPayoff },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawProbeEntry {
    pub label: String,
    pub d0: [f64; 2],
    pub gap: f64,
    /// Atom distance for lattice pairs, variance gap for analytic pairs.
    pub law_distance: f64,
    /// The two laws agree only in the continuous-time limit.
    pub continuum_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawProbeReport {
    pub driver: String,
    pub entries: Vec<LawProbeEntry>,
    pub max_law_distance: f64,
    pub max_gap: f64,
}

fn analytic_variance(ap: &AnalyticPayoff) -> f64 {
    (0..ap.grid.steps()).map(|i| ap.h[i].iter().map(|v| v * v).sum::<f64>() * ap.grid.dt(i)).sum()
}

/// `D_0` for pairs of equal-law payoffs. A law-invariant measure shows zero gaps.
pub fn law_probe(lat: &Lattice, driver: &DriverSpec, inputs: &[ProbeInput]) -> Result<LawProbeReport> {
    driver.validate(lat.noise())?;
    let nu = &lat.noise().jumps;
    let mut entries = Vec::with_capacity(inputs.len());
    for input in inputs {
        let entry = match input {
            ProbeInput::Lattice { label, x, y } => {
                let tol = default_merge_tol(x).max(default_merge_tol(y));
                let (lx, ly) = (law(lat, x, tol)?, law(lat, y, tol)?);
                let dist = lx.distance(&ly);
                if dist > 10.0 * tol + 1e-12 {
                    return Err(invalid(format!("pair '{label}' does not share a law (distance {dist})")));
                }
                let dx = evaluate(lat, driver, &represent(lat, x)?)?.initial();
                let dy = evaluate(lat, driver, &represent(lat, y)?)?.initial();
                LawProbeEntry {
                    label: label.clone(),
                    d0: [dx, dy],
                    gap: (dx - dy).abs(),
                    law_distance: dist,
                    continuum_only: false,
                }
            }
            ProbeInput::Analytic { label, x, y } => {
                if x.htilde.iter().chain(&y.htilde).flatten().any(|&v| v != 0.0) {
                    return Err(invalid(format!("analytic pair '{label}' has jump integrands; laws are not Gaussian")));
                }
                let dist = (analytic_variance(x) - analytic_variance(y)).abs();
                if dist > 1e-12 {
                    return Err(invalid(format!("analytic pair '{label}' has different variances (gap {dist})")));
                }
                let dx = deterministic_d0(&x.grid, driver, x, nu)?;
                let dy = deterministic_d0(&y.grid, driver, y, nu)?;
                LawProbeEntry {
                    label: label.clone(),
                    d0: [dx, dy],
                    gap: (dx - dy).abs(),
                    law_distance: dist,
                    continuum_only: true,
                }
            }
        };
        entries.push(entry);
    }
    Ok(LawProbeReport {
        driver: driver.name(),
        max_law_distance: entries.iter().map(|e| e.law_distance).fold(0.0, f64::max),
        max_gap: entries.iter().map(|e| e.gap).fold(0.0, f64::max),
        entries,
    })
}

/// Spread of `D_t(Y)` across the nodes of `level`; zero when the measure
/// assigns a constant to payoffs independent of `F_t`.
pub fn independence_spread(lat: &Lattice, driver: &DriverSpec, y: &RandomVariable, level: usize) -> Result<f64> {
    if level > lat.depth() {
        return Err(invalid(format!("level {level} beyond depth {}", lat.depth())));
    }
    let dev = evaluate(lat, driver, &represent(lat, y)?)?;
    let vals = dev.level(level);
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(hi - lo)
}

//! Small-dimensional convex minimization for the inf-convolution solver.
//!
//! [`minimize`] runs a normalized subgradient method with diminishing steps
//! `r / (1 + k)` inside epochs of fixed length. After each epoch the method
//! restarts from the best iterate and rescales the trust radius `r`: it
//! doubles while the best iterate keeps moving at the end of the epoch and
//! halves otherwise. Convergence is declared when `r` has shrunk below the
//! tolerance or a zero subgradient is hit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const EPOCH: usize = 40;
const GRID_BUDGET: u128 = 50_000_000;

/// Starting point for inf-convolution solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// `z = h / 2`
    #[default]
    Half,
    /// `z = 0`
    Zero,
    /// `z = h`
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init: InitRule,
    /// A node counts as attained when the subdifferential gap is below this.
    pub certificate_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_iterations: 20_000, init: InitRule::Half, certificate_tolerance: 1e-6 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("solver needs max_iterations >= 1"));
        }
        if !(self.certificate_tolerance > 0.0) {
            return Err(invalid("certificate tolerance must be positive"));
        }
        Ok(())
    }
}

/// A convex function with a subgradient selection.
pub trait ObjectiveOracle {
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Closure-backed oracle.
pub struct FnOracle<F, G> {
    pub value: F,
    pub subgradient: G,
}

impl<F, G> ObjectiveOracle for FnOracle<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (self.subgradient)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gap_estimate: f64,
    /// Best value after each iteration.
    pub best_values: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Best {
    x: Vec<f64>,
    f: f64,
    norm: f64,
}

impl Best {
    /// Lower value wins; equal values go to the smaller norm.
    fn offer(&mut self, x: &[f64], f: f64) -> bool {
        let n = norm(x);
        if f < self.f || (f == self.f && n < self.norm) {
            self.x.clear();
            self.x.extend_from_slice(x);
            self.f = f;
            self.norm = n;
            true
        } else {
            false
        }
    }
}

pub fn minimize(obj: &impl ObjectiveOracle, init: &[f64], cfg: &SolverConfig) -> Result<MinimizeResult> {
    cfg.validate()?;
    let f0 = obj.value(init);
    if !f0.is_finite() {
        return Err(invalid("objective is not finite at the initial point"));
    }
    let mut best = Best { x: init.to_vec(), f: f0, norm: norm(init) };
    let mut best_values = Vec::new();
    let mut iterations = 0;
    let mut radius = norm(init).max(1.0);
    let mut converged = false;
    let mut x = init.to_vec();

    'outer: while iterations < cfg.max_iterations {
        x.clone_from(&best.x);
        let mut last_improvement = None;
        for k in 0..EPOCH {
            let g = obj.subgradient(&x);
            let gn = norm(&g);
            if gn <= cfg.tolerance {
                let fx = obj.value(&x);
                best.offer(&x, fx);
                converged = true;
                break 'outer;
            }
            let step = radius / (1.0 + k as f64);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= step * gi / gn;
            }
            let fx = obj.value(&x);
            iterations += 1;
            if fx.is_finite() && best.offer(&x, fx) {
                last_improvement = Some(k);
            }
            best_values.push(best.f);
            if iterations >= cfg.max_iterations {
                break 'outer;
            }
        }
        match last_improvement {
            Some(k) if k + 1 == EPOCH => radius *= 2.0,
            _ => radius *= 0.5,
        }
        if radius <= cfg.tolerance * best.norm.max(1.0) {
            converged = true;
            break;
        }
    }

    let g = obj.subgradient(&best.x);
    Ok(MinimizeResult {
        gap_estimate: norm(&g) * radius,
        argmin: best.x,
        value: best.f,
        iterations,
        converged,
        best_values,
    })
}

/// Exhaustive grid search over a box; test and provenance use only.
pub fn brute_force_min(f: impl Fn(&[f64]) -> f64, bounds: &[(f64, f64)], step: f64) -> Result<(Vec<f64>, f64)> {
    if bounds.is_empty() || bounds.len() > 3 {
        return Err(invalid(format!("brute force supports 1 to 3 dimensions, got {}", bounds.len())));
    }
    if !(step > 0.0) {
        return Err(invalid(format!("grid step must be positive, got {step}")));
    }
    let mut counts = Vec::with_capacity(bounds.len());
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(invalid(format!("invalid box [{lo}, {hi}]")));
        }
        counts.push(((hi - lo) / step + 1e-9).floor() as u128 + 1);
    }
    let total: u128 = counts.iter().product();
    if total > GRID_BUDGET {
        return Err(invalid(format!("grid has {total} points, budget is {GRID_BUDGET}")));
    }
    let mut best = Best { x: Vec::new(), f: f64::INFINITY, norm: f64::INFINITY };
    let mut idx = vec![0u128; bounds.len()];
    let mut x = vec![0.0; bounds.len()];
    for _ in 0..total {
        for (i, &(lo, _)) in bounds.iter().enumerate() {
            x[i] = lo + idx[i] as f64 * step;
        }
        best.offer(&x, f(&x));
        for i in (0..idx.len()).rev() {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok((best.x, best.f))
}

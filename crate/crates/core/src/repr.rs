//! Martingale representation on a lattice.
//!
//! At each node the one-step martingale increment `dM` is projected, under the
//! node's child probabilities, onto the span of the Brownian increments and
//! the compensated jump indicators. The coefficients are the representing
//! integrands `(H, H~)`; the projection error is kept as a residual. With no
//! jumps and `d = 1` the binomial tree is complete and every residual is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_len, martingale, Filtration, Lattice, RandomVariable, TimeGrid};
use crate::linalg::Lu;

/// Residuals below this are treated as an exact representation.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-10;

/// Integrands at one node: `h` per Brownian component, `htilde` per mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandStep {
    pub h: Vec<f64>,
    pub htilde: Vec<f64>,
}

impl IntegrandStep {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self { h: vec![0.0; d], htilde: vec![0.0; m] }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { h: self.h.iter().map(|v| a * v).collect(), htilde: self.htilde.iter().map(|v| a * v).collect() }
    }

    /// Euclidean norm of `(h, htilde)`.
    pub fn norm(&self) -> f64 {
        self.h.iter().chain(&self.htilde).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().chain(&self.htilde).all(|&v| v == 0.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.h
            .iter()
            .zip(&other.h)
            .chain(self.htilde.iter().zip(&other.htilde))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn increment(&self, edge: &crate::lattice::Edge) -> f64 {
        let w: f64 = self.h.iter().zip(&edge.dw).map(|(a, b)| a * b).sum();
        let j: f64 = self.htilde.iter().zip(&edge.compensated).map(|(a, b)| a * b).sum();
        w + j
    }
}

/// Mean plus integrands and residual norms for every non-terminal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentingPair {
    pub mean: f64,
    /// `steps[level][node]` for `level < n`.
    pub steps: Vec<Vec<IntegrandStep>>,
    /// Conditional L2 norm of the unexplained increment, same layout as `steps`.
    pub residuals: Vec<Vec<f64>>,
}

impl RepresentingPair {
    /// Constant payoff `mean`.
    pub fn zero(lat: &impl Filtration, mean: f64) -> Self {
        let (d, m) = (lat.noise().d(), lat.noise().m());
        let steps = (0..lat.depth()).map(|l| vec![IntegrandStep::zeros(d, m); lat.level_len(l)]).collect();
        let residuals = (0..lat.depth()).map(|l| vec![0.0; lat.level_len(l)]).collect();
        Self { mean, steps, residuals }
    }

    pub fn step(&self, level: usize, node: usize) -> &IntegrandStep {
        &self.steps[level][node]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn is_exact(&self) -> bool {
        self.max_residual() <= EXACT_RESIDUAL_TOL
    }

    /// Same integrands, mean moved by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { mean: self.mean + c, ..self.clone() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            mean: a * self.mean,
            steps: self.steps.iter().map(|l| l.iter().map(|s| s.scale(a)).collect()).collect(),
            residuals: self.residuals.iter().map(|l| l.iter().map(|r| a.abs() * r).collect()).collect(),
        }
    }

    /// Largest entry-wise gap between integrands.
    pub fn max_step_diff(&self, other: &Self) -> f64 {
        self.steps
            .iter()
            .zip(&other.steps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)))
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, lat: &impl Filtration) -> Result<()> {
        check_len("representing pair levels", lat.depth(), self.steps.len())?;
        let (d, m) = (lat.noise().d(), lat.noise().m());
        for (level, nodes) in self.steps.iter().enumerate() {
            check_len("representing pair nodes", lat.level_len(level), nodes.len())?;
            for s in nodes {
                check_len("Brownian integrand", d, s.h.len())?;
                check_len("jump integrand", m, s.htilde.len())?;
            }
        }
        Ok(())
    }

    /// Flat node-id keyed form for JSON output.
    pub fn export(&self) -> PairExport {
        let mut nodes = Vec::new();
        let mut id = 0;
        for (level, steps) in self.steps.iter().enumerate() {
            for (index, s) in steps.iter().enumerate() {
                nodes.push(NodeIntegrand {
                    id,
                    level,
                    index,
                    h: s.h.clone(),
                    htilde: s.htilde.clone(),
                    residual: self.residuals[level][index],
                });
                id += 1;
            }
        }
        PairExport { mean: self.mean, nodes }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairExport {
    pub mean: f64,
    pub nodes: Vec<NodeIntegrand>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeIntegrand {
    pub id: usize,
    pub level: usize,
    pub index: usize,
    pub h: Vec<f64>,
    pub htilde: Vec<f64>,
    pub residual: f64,
}

/// Conditional least-squares representing pair of `x`.
pub fn represent(lat: &impl Filtration, x: &RandomVariable) -> Result<RepresentingPair> {
    x.check_finite()?;
    let mart = martingale(lat, x)?;
    let (d, m) = (lat.noise().d(), lat.noise().m());
    let p = d + m;
    let mut steps = Vec::with_capacity(lat.depth());
    let mut residuals = Vec::with_capacity(lat.depth());
    for level in 0..lat.depth() {
        let edges = &lat.step(level).edges;
        let basis: Vec<Vec<f64>> = edges.iter().map(|e| e.dw.iter().chain(&e.compensated).copied().collect()).collect();
        let mut gram = vec![0.0; p * p];
        for (e, phi) in edges.iter().zip(&basis) {
            for r in 0..p {
                for c in 0..p {
                    gram[r * p + c] += e.prob * phi[r] * phi[c];
                }
            }
        }
        let lu = Lu::factor(gram, p).ok_or(Error::Singular { level, node: 0 })?;
        let here = mart.level(level);
        let next = mart.level(level + 1);
        let mut level_steps = Vec::with_capacity(here.len());
        let mut level_res = Vec::with_capacity(here.len());
        for (k, &mk) in here.iter().enumerate() {
            let dm: Vec<f64> = (0..edges.len()).map(|e| next[lat.child(level, k, e)] - mk).collect();
            let mut rhs = vec![0.0; p];
            for ((e, phi), dme) in edges.iter().zip(&basis).zip(&dm) {
                for r in 0..p {
                    rhs[r] += e.prob * phi[r] * dme;
                }
            }
            let theta = lu.solve(&rhs);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Singular { level, node: k });
            }
            let res2: f64 = edges
                .iter()
                .zip(&basis)
                .zip(&dm)
                .map(|((e, phi), dme)| {
                    let fit: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
                    e.prob * (dme - fit).powi(2)
                })
                .sum();
            level_steps.push(IntegrandStep { h: theta[..d].to_vec(), htilde: theta[d..].to_vec() });
            level_res.push(res2.sqrt());
        }
        steps.push(level_steps);
        residuals.push(level_res);
    }
    Ok(RepresentingPair { mean: mart.initial(), steps, residuals })
}

/// Forward stochastic sum: `mean + sum_i (H_i . dW_i + H~_i . dN~_i)` along every path.
pub fn assemble(lat: &Lattice, pair: &RepresentingPair) -> Result<RandomVariable> {
    pair.check_shape(lat)?;
    let mut cur = vec![pair.mean];
    for level in 0..lat.depth() {
        let edges = &lat.step(level).edges;
        let mut next = vec![0.0; lat.level_len(level + 1)];
        for (k, &v) in cur.iter().enumerate() {
            let s = &pair.steps[level][k];
            for (e, edge) in edges.iter().enumerate() {
                next[lat.child(level, k, e)] = v + s.increment(edge);
            }
        }
        cur = next;
    }
    Ok(RandomVariable::new(cur))
}

/// Payoff given by deterministic integrands per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPayoff {
    pub grid: TimeGrid,
    /// `h[i]` on step `i`, length `d`.
    pub h: Vec<Vec<f64>>,
    /// `htilde[i]` on step `i`, length `m`.
    pub htilde: Vec<Vec<f64>>,
}

impl AnalyticPayoff {
    pub fn new(grid: TimeGrid, h: Vec<Vec<f64>>, htilde: Vec<Vec<f64>>) -> Result<Self> {
        let ap = Self { grid, h, htilde };
        ap.validate()?;
        Ok(ap)
    }

    /// Same integrands on every step.
    pub fn constant(grid: TimeGrid, h: Vec<f64>, htilde: Vec<f64>) -> Result<Self> {
        let n = grid.steps();
        Self::new(grid, vec![h; n], vec![htilde; n])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.steps();
        check_len("analytic Brownian integrands", n, self.h.len())?;
        check_len("analytic jump integrands", n, self.htilde.len())?;
        if n > 0 {
            let (d, m) = (self.h[0].len(), self.htilde[0].len());
            for i in 0..n {
                check_len("analytic Brownian integrand", d, self.h[i].len())?;
                check_len("analytic jump integrand", m, self.htilde[i].len())?;
            }
        }
        if self.h.iter().chain(&self.htilde).flatten().any(|v| !v.is_finite()) {
            return Err(crate::error::invalid("analytic integrands must be finite"));
        }
        Ok(())
    }

    pub fn step(&self, i: usize) -> IntegrandStep {
        IntegrandStep { h: self.h[i].clone(), htilde: self.htilde[i].clone() }
    }
}

/// Broadcasts deterministic integrands to every node; the mean is zero.
pub fn lift_analytic(ap: &AnalyticPayoff, lat: &impl Filtration) -> Result<RepresentingPair> {
    ap.validate()?;
    if ap.grid.steps() == 0 {
        return Err(crate::error::invalid("analytic payoff has no steps"));
    }
    if ap.grid.steps() != lat.grid().steps()
        || ap.grid.times().iter().zip(lat.grid().times()).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::GridMismatch("analytic payoff grid differs from lattice grid".into()));
    }
    let mut pair = RepresentingPair::zero(lat, 0.0);
    for (level, nodes) in pair.steps.iter_mut().enumerate() {
        let s = ap.step(level);
        nodes.iter_mut().for_each(|n| *n = s.clone());
    }
    pair.check_shape(lat)?;
    Ok(pair)
}

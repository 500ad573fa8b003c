//! Finite filtered probability spaces.
//!
//! A lattice discretizes a Brownian motion of dimension `d` together with a
//! finite-support Poisson random measure with `m` marks. Every step carries
//! the same edge table at every node: each Brownian component moves by
//! `±sqrt(dt)` with probability 1/2, independently, and at most one jump
//! happens, mark `j` with probability `nu_j * dt`.
//!
//! Two concrete spaces implement [`Filtration`]:
//!
//! * [`Lattice`], the non-recombining event tree. Every history is its own
//!   node, so any payoff of the path can be represented.
//! * [`MarkovLattice`], which merges nodes with equal state (Brownian up-move
//!   counts and jump counts) on a uniform grid. It only carries payoffs of the
//!   terminal state, but reaches depths the tree cannot.
//!
//! Conditional expectations, laws and everything downstream are written
//! against the trait and work on both.

mod markov;
mod tree;

pub use markov::{MarkovLattice, MarkovState};
pub use tree::{EdgeDesc, Lattice, LatticeDescription, NodeDesc};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Child probabilities at a node must sum to one within this bound.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Strictly increasing time points starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(invalid("time grid must contain t_0 = 0"));
        }
        if times[0] != 0.0 {
            return Err(invalid(format!("time grid must start at 0, got {}", times[0])));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(invalid(format!(
                    "time grid must be strictly increasing: t_{} = {}, t_{} = {}",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    /// `steps` equal steps on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) && steps > 0 {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        let dt = horizon / steps.max(1) as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        if steps > 0 {
            times[steps] = horizon;
        }
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        let n = self.steps();
        if n == 0 {
            return true;
        }
        let h = self.horizon() / n as f64;
        (0..n).all(|i| (self.dt(i) - h).abs() <= 1e-12 * h.max(1.0))
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        Self::new(times)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.times
    }
}

/// Finite Lévy measure: distinct nonzero marks with positive intensities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpMeasure {
    marks: Vec<Vec<f64>>,
    intensities: Vec<f64>,
}

impl JumpMeasure {
    pub fn new(marks: Vec<Vec<f64>>, intensities: Vec<f64>) -> Result<Self> {
        let measure = Self { marks, intensities };
        measure.validate()?;
        Ok(measure)
    }

    /// No jumps at all.
    pub fn none() -> Self {
        Self::default()
    }

    /// One-dimensional marks.
    pub fn scalar(marks: &[f64], intensities: &[f64]) -> Result<Self> {
        Self::new(marks.iter().map(|&x| vec![x]).collect(), intensities.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.marks.len() != self.intensities.len() {
            return Err(Error::DimensionMismatch {
                what: "jump intensities",
                expected: self.marks.len(),
                found: self.intensities.len(),
            });
        }
        let k = self.marks.first().map_or(0, Vec::len);
        for (j, (x, &nu)) in self.marks.iter().zip(&self.intensities).enumerate() {
            if x.len() != k || k == 0 {
                return Err(invalid(format!("mark {j} has dimension {}, expected {k} > 0", x.len())));
            }
            if x.iter().all(|&v| v == 0.0) {
                return Err(invalid(format!("mark {j} is zero")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("mark {j} is not finite")));
            }
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(invalid(format!("intensity {j} must be positive, got {nu}")));
            }
            if self.marks[..j].iter().any(|y| y == x) {
                return Err(invalid(format!("mark {j} duplicates an earlier mark")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn marks(&self) -> &[Vec<f64>] {
        &self.marks
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Total mass `nu(R^k \ {0})`.
    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }
}

/// Brownian dimension plus jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub brownian_dim: usize,
    #[serde(default)]
    pub jumps: JumpMeasure,
}

impl NoiseModel {
    pub fn new(brownian_dim: usize, jumps: JumpMeasure) -> Result<Self> {
        let noise = Self { brownian_dim, jumps };
        noise.validate()?;
        Ok(noise)
    }

    pub fn brownian(d: usize) -> Result<Self> {
        Self::new(d, JumpMeasure::none())
    }

    pub fn validate(&self) -> Result<()> {
        self.jumps.validate()?;
        if self.brownian_dim + self.jumps.len() == 0 {
            return Err(invalid("noise model needs d + m >= 1"));
        }
        if self.brownian_dim >= 16 {
            return Err(invalid(format!("Brownian dimension {} is too large", self.brownian_dim)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.brownian_dim
    }

    pub fn m(&self) -> usize {
        self.jumps.len()
    }

    /// Children per node: `2^d * (m + 1)`.
    pub fn branching(&self) -> usize {
        (1usize << self.brownian_dim) * (self.m() + 1)
    }
}

/// One outcome of a single step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    /// Brownian increments `s_i * sqrt(dt)`.
    pub dw: Vec<f64>,
    /// 0 for no jump, `j` for mark `j - 1`.
    pub jump: usize,
    /// Compensated jump indicators `1{jump = j} - nu_j dt`, one per mark.
    pub compensated: Vec<f64>,
    pub prob: f64,
}

/// The edge table shared by all nodes at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEdges {
    pub dt: f64,
    pub edges: Vec<Edge>,
}

impl StepEdges {
    /// Edge `e` has jump label `e / 2^d`; bit `i` of `e % 2^d` set means `+sqrt(dt)`
    /// for component `i`.
    pub(crate) fn build(noise: &NoiseModel, dt: f64) -> Result<Self> {
        let d = noise.d();
        let m = noise.m();
        let nu = noise.jumps.intensities();
        let jump_mass: f64 = nu.iter().map(|v| v * dt).sum();
        let sq = dt.sqrt();
        let half_d = 0.5f64.powi(d as i32);
        let mut edges = Vec::with_capacity(noise.branching());
        for jump in 0..=m {
            let pj = if jump == 0 { 1.0 - jump_mass } else { nu[jump - 1] * dt };
            for bits in 0..(1usize << d) {
                let dw = (0..d).map(|i| if bits >> i & 1 == 1 { sq } else { -sq }).collect();
                let compensated = (0..m).map(|k| f64::from(u8::from(jump == k + 1)) - nu[k] * dt).collect();
                edges.push(Edge { dw, jump, compensated, prob: half_d * pj });
            }
        }
        let total: f64 = edges.iter().map(|e| e.prob).sum();
        if (total - 1.0).abs() > PROBABILITY_TOL || edges.iter().any(|e| !(e.prob > 0.0)) {
            return Err(invalid(format!("degenerate edge probabilities (sum {total})")));
        }
        Ok(Self { dt, edges })
    }
}

/// State at a terminal node.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalState {
    /// `W_T` per Brownian component.
    pub w: Vec<f64>,
    /// `N_T` per mark.
    pub counts: Vec<usize>,
    /// `N_T - nu_j T` per mark.
    pub compensated: Vec<f64>,
}

/// A finite filtered probability space laid out level by level.
///
/// Nodes at a level are indexed `0..level_len(level)`; the edge table for the
/// step out of level `i` is `step(i)`, identical at every node of that level.
pub trait Filtration {
    fn grid(&self) -> &TimeGrid;
    fn noise(&self) -> &NoiseModel;
    fn step(&self, level: usize) -> &StepEdges;
    fn level_len(&self, level: usize) -> usize;
    fn child(&self, level: usize, node: usize, edge: usize) -> usize;
    fn terminal_state(&self, leaf: usize) -> TerminalState;

    fn depth(&self) -> usize {
        self.grid().steps()
    }

    fn leaf_count(&self) -> usize {
        self.level_len(self.depth())
    }

    fn node_count(&self) -> usize {
        (0..=self.depth()).map(|l| self.level_len(l)).sum()
    }

    /// Payoff given as a function of the terminal state.
    fn payoff_from_terminal(&self, f: impl Fn(&TerminalState) -> f64) -> RandomVariable
    where
        Self: Sized,
    {
        RandomVariable::new((0..self.leaf_count()).map(|l| f(&self.terminal_state(l))).collect())
    }
}

/// Real payoff per terminal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVariable(Vec<f64>);

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, leaves: usize) -> Self {
        Self(vec![value; leaves])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        check_len("random variable", self.len(), other.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(invalid(format!("payoff value at leaf {i} is not finite"))),
            None => Ok(()),
        }
    }
}

/// Real value per node at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedProcess {
    levels: Vec<Vec<f64>>,
}

impl AdaptedProcess {
    pub fn new(levels: Vec<Vec<f64>>) -> Self {
        Self { levels }
    }

    pub fn zeros(lat: &impl Filtration) -> Self {
        Self::new((0..=lat.depth()).map(|l| vec![0.0; lat.level_len(l)]).collect())
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn level_mut(&mut self, level: usize) -> &mut [f64] {
        &mut self.levels[level]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn value(&self, level: usize, node: usize) -> f64 {
        self.levels[level][node]
    }

    /// Value at the root.
    pub fn initial(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.levels.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `E[V_{i+1} | F_i] - V_i` over all nodes; nonpositive for a supermartingale.
    pub fn supermartingale_excess(&self, lat: &impl Filtration) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for level in 0..self.depth() {
            let next = one_step(lat, &self.levels[level + 1], level);
            for (v, e) in self.levels[level].iter().zip(next) {
                worst = worst.max(e - v);
            }
        }
        worst
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

/// `E[V_{level+1} | F_level]` for values given at level `level + 1`.
pub(crate) fn one_step(lat: &impl Filtration, next: &[f64], level: usize) -> Vec<f64> {
    let edges = &lat.step(level).edges;
    (0..lat.level_len(level))
        .map(|k| edges.iter().enumerate().map(|(e, edge)| edge.prob * next[lat.child(level, k, e)]).sum())
        .collect()
}

/// Backward averaging of level-`from` values down to level `to`.
pub fn project(lat: &impl Filtration, values: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
    if to > from || from > lat.depth() {
        return Err(invalid(format!("cannot project from level {from} to level {to}")));
    }
    check_len("level values", lat.level_len(from), values.len())?;
    let mut cur = values.to_vec();
    for level in (to..from).rev() {
        cur = one_step(lat, &cur, level);
    }
    Ok(cur)
}

/// `E[X | F_level]` as one value per level-`level` node.
pub fn cond_exp(lat: &impl Filtration, x: &RandomVariable, level: usize) -> Result<Vec<f64>> {
    check_len("payoff leaves", lat.leaf_count(), x.len())?;
    project(lat, x.values(), lat.depth(), level)
}

/// The whole martingale `(E[X | F_i])_i`.
pub fn martingale(lat: &impl Filtration, x: &RandomVariable) -> Result<AdaptedProcess> {
    check_len("payoff leaves", lat.leaf_count(), x.len())?;
    let n = lat.depth();
    let mut levels = vec![Vec::new(); n + 1];
    levels[n] = x.values().to_vec();
    for level in (0..n).rev() {
        levels[level] = one_step(lat, &levels[level + 1], level);
    }
    Ok(AdaptedProcess::new(levels))
}

pub fn expectation(lat: &impl Filtration, x: &RandomVariable) -> Result<f64> {
    Ok(cond_exp(lat, x, 0)?[0])
}

/// Unconditional probability of each terminal node (forward pass).
pub fn leaf_probabilities(lat: &impl Filtration) -> Vec<f64> {
    let mut cur = vec![1.0];
    for level in 0..lat.depth() {
        let mut next = vec![0.0; lat.level_len(level + 1)];
        for (k, &p) in cur.iter().enumerate() {
            for (e, edge) in lat.step(level).edges.iter().enumerate() {
                next[lat.child(level, k, e)] += p * edge.prob;
            }
        }
        cur = next;
    }
    cur
}

/// Sorted atoms `(value, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub atoms: Vec<(f64, f64)>,
}

impl Distribution {
    /// Sorts and merges values closer than `merge_tol` to the first value of their group.
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>, merge_tol: f64) -> Result<Self> {
        if !(merge_tol >= 0.0) {
            return Err(invalid(format!("merge tolerance must be >= 0, got {merge_tol}")));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut anchor = f64::NEG_INFINITY;
        for (v, p) in pairs {
            match atoms.last_mut() {
                Some(last) if v - anchor <= merge_tol => last.1 += p,
                _ => {
                    anchor = v;
                    atoms.push((v, p));
                }
            }
        }
        Ok(Self { atoms })
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms.iter().map(|(v, p)| p * (v - mu).powi(2)).sum()
    }

    /// Largest atom-wise gap in value or probability; infinite when the atom counts differ.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.atoms.len() != other.atoms.len() {
            return f64::INFINITY;
        }
        self.atoms.iter().zip(&other.atoms).map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs())).fold(0.0, f64::max)
    }
}

/// `1e-9` times the value range.
pub fn default_merge_tol(x: &RandomVariable) -> f64 {
    let (lo, hi) = x.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        1e-9 * (hi - lo)
    } else {
        0.0
    }
}

/// Law of `X` under the lattice measure.
pub fn law(lat: &impl Filtration, x: &RandomVariable, merge_tol: f64) -> Result<Distribution> {
    check_len("payoff leaves", lat.leaf_count(), x.len())?;
    let probs = leaf_probabilities(lat);
    Distribution::from_weighted(x.values().iter().copied().zip(probs).collect(), merge_tol)
}

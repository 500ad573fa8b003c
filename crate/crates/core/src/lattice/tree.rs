use serde::{Deserialize, Serialize};

use super::{check_len, Filtration, JumpMeasure, NoiseModel, RandomVariable, StepEdges, TerminalState, TimeGrid};
use crate::error::{invalid, Error, Result};

/// Non-recombining event tree with `2^d (m + 1)` children per node.
///
/// Node `k` at level `i` has children `k * b + e` at level `i + 1`, so the
/// base-`b` digits of a leaf index spell out its path.
#[derive(Debug, Clone)]
pub struct Lattice {
    grid: TimeGrid,
    noise: NoiseModel,
    branching: usize,
    steps: Vec<StepEdges>,
    level_len: Vec<usize>,
}

impl Lattice {
    /// Fails when `b^n` exceeds `max_nodes` or when `sum(nu) * max dt > 0.5`.
    pub fn build(grid: TimeGrid, noise: NoiseModel, max_nodes: usize) -> Result<Self> {
        noise.validate()?;
        let n = grid.steps();
        let bound = noise.jumps.total() * grid.max_dt();
        if bound > 0.5 {
            let step = (0..n).max_by(|&a, &b| grid.dt(a).total_cmp(&grid.dt(b))).unwrap_or(0);
            return Err(Error::IntensityBound { value: bound, step });
        }
        let branching = noise.branching();
        let leaves = (branching as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if leaves > max_nodes as u128 {
            return Err(Error::NodeBudget { needed: leaves, max: max_nodes });
        }
        let steps = (0..n).map(|i| StepEdges::build(&noise, grid.dt(i))).collect::<Result<Vec<_>>>()?;
        let level_len = (0..=n).map(|i| branching.pow(i as u32)).collect();
        Ok(Self { grid, noise, branching, steps, level_len })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Global node id: nodes are numbered level by level.
    pub fn node_id(&self, level: usize, node: usize) -> usize {
        self.level_len[..level].iter().sum::<usize>() + node
    }

    /// Edge labels along the path to `leaf`, first step first.
    pub fn path_edges(&self, leaf: usize) -> Vec<usize> {
        let n = self.depth();
        let mut digits = vec![0; n];
        let mut rest = leaf;
        for i in (0..n).rev() {
            digits[i] = rest % self.branching;
            rest /= self.branching;
        }
        digits
    }

    fn leaf_from_edges(&self, edges: &[usize]) -> usize {
        edges.iter().fold(0, |acc, &e| acc * self.branching + e)
    }

    /// Level-`level` ancestor of a node at level `from`.
    pub fn ancestor(&self, from: usize, node: usize, level: usize) -> usize {
        node / self.branching.pow((from - level) as u32)
    }

    /// Leaves below node `node` at `level`.
    pub fn subtree_leaves(&self, level: usize, node: usize) -> std::ops::Range<usize> {
        let width = self.branching.pow((self.depth() - level) as u32);
        node * width..(node + 1) * width
    }

    /// Payoff as a function of the edge labels along each path.
    pub fn payoff_from_path(&self, f: impl Fn(&[usize]) -> f64) -> RandomVariable {
        RandomVariable::new((0..self.leaf_count()).map(|l| f(&self.path_edges(l))).collect())
    }

    /// Broadcast level-`level` values to the leaves: an `F_level`-measurable payoff.
    pub fn lift_level(&self, level: usize, values: &[f64]) -> Result<RandomVariable> {
        check_len("level values", self.level_len(level), values.len())?;
        let n = self.depth();
        Ok(RandomVariable::new((0..self.leaf_count()).map(|l| values[self.ancestor(n, l, level)]).collect()))
    }

    /// `Y(path) = X(path with steps reordered by perm)`, i.e. step `i` of the
    /// new path is read from step `perm[i]`. Only steps of equal length may be
    /// exchanged, so the law is preserved.
    pub fn permute_steps(&self, x: &RandomVariable, perm: &[usize]) -> Result<RandomVariable> {
        check_len("payoff leaves", self.leaf_count(), x.len())?;
        let n = self.depth();
        check_len("step permutation", n, perm.len())?;
        let mut seen = vec![false; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || seen[p] {
                return Err(invalid("step permutation is not a permutation"));
            }
            seen[p] = true;
            if (self.grid.dt(i) - self.grid.dt(p)).abs() > 1e-12 {
                return Err(invalid(format!("steps {i} and {p} have different lengths")));
            }
        }
        Ok(self.payoff_from_path(|edges| {
            let source: Vec<usize> = perm.iter().map(|&p| edges[p]).collect();
            x.values()[self.leaf_from_edges(&source)]
        }))
    }

    /// `Y(path) = X(path with Brownian component `component` negated at `step`)`.
    pub fn flip_sign(&self, x: &RandomVariable, step: usize, component: usize) -> Result<RandomVariable> {
        check_len("payoff leaves", self.leaf_count(), x.len())?;
        if step >= self.depth() || component >= self.noise.d() {
            return Err(invalid("sign flip outside the lattice"));
        }
        Ok(self.payoff_from_path(|edges| {
            let mut source = edges.to_vec();
            source[step] ^= 1 << component;
            x.values()[self.leaf_from_edges(&source)]
        }))
    }

    pub fn describe(&self) -> LatticeDescription {
        let edges = self
            .steps
            .iter()
            .map(|s| s.edges.iter().map(|e| EdgeDesc { dw: e.dw.clone(), jump: e.jump, prob: e.prob }).collect())
            .collect();
        let mut nodes = Vec::with_capacity(self.node_count());
        for level in 0..=self.depth() {
            for index in 0..self.level_len(level) {
                let (parent, edge) = if level == 0 {
                    (None, None)
                } else {
                    (Some(self.node_id(level - 1, index / self.branching)), Some(index % self.branching))
                };
                nodes.push(NodeDesc { id: self.node_id(level, index), level, index, parent, edge });
            }
        }
        LatticeDescription {
            times: self.grid.times().to_vec(),
            brownian_dim: self.noise.d(),
            jumps: self.noise.jumps.clone(),
            branching: self.branching,
            level_sizes: self.level_len.clone(),
            edges,
            nodes,
        }
    }

    /// Rebuilds a lattice from its description; node and edge arrays are
    /// regenerated and must agree with the stored ones.
    pub fn from_description(desc: &LatticeDescription, max_nodes: usize) -> Result<Self> {
        let grid = TimeGrid::new(desc.times.clone())?;
        let noise = NoiseModel::new(desc.brownian_dim, desc.jumps.clone())?;
        let lat = Self::build(grid, noise, max_nodes)?;
        if lat.level_len != desc.level_sizes || lat.branching != desc.branching {
            return Err(invalid("lattice description has inconsistent level sizes"));
        }
        Ok(lat)
    }
}

impl Filtration for Lattice {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn step(&self, level: usize) -> &StepEdges {
        &self.steps[level]
    }

    fn level_len(&self, level: usize) -> usize {
        self.level_len[level]
    }

    fn child(&self, _level: usize, node: usize, edge: usize) -> usize {
        node * self.branching + edge
    }

    fn terminal_state(&self, leaf: usize) -> TerminalState {
        let d = self.noise.d();
        let m = self.noise.m();
        let mut w = vec![0.0; d];
        let mut counts = vec![0; m];
        for (i, e) in self.path_edges(leaf).into_iter().enumerate() {
            let edge = &self.steps[i].edges[e];
            for (wi, dwi) in w.iter_mut().zip(&edge.dw) {
                *wi += dwi;
            }
            if edge.jump > 0 {
                counts[edge.jump - 1] += 1;
            }
        }
        let t = self.grid.horizon();
        let compensated = counts.iter().zip(self.noise.jumps.intensities()).map(|(&c, nu)| c as f64 - nu * t).collect();
        TerminalState { w, counts, compensated }
    }
}

/// JSON form of a lattice: grid, noise, and node/edge arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeDescription {
    pub times: Vec<f64>,
    pub brownian_dim: usize,
    pub jumps: JumpMeasure,
    pub branching: usize,
    pub level_sizes: Vec<usize>,
    /// Per level, the edge table out of every node at that level.
    pub edges: Vec<Vec<EdgeDesc>>,
    pub nodes: Vec<NodeDesc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDesc {
    pub dw: Vec<f64>,
    pub jump: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDesc {
    pub id: usize,
    pub level: usize,
    pub index: usize,
    pub parent: Option<usize>,
    /// Edge label from the parent.
    pub edge: Option<usize>,
}

use std::collections::HashMap;

use super::{Filtration, NoiseModel, StepEdges, TerminalState, TimeGrid};
use crate::error::{invalid, Error, Result};

/// Up-move counts per Brownian component and jump counts per mark.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MarkovState {
    pub ups: Vec<u32>,
    pub counts: Vec<u32>,
}

/// Recombining lattice on a uniform grid.
///
/// Nodes with equal [`MarkovState`] are merged, so a payoff of the terminal
/// state has the same conditional expectations, representing integrands and
/// deviations as on the full [`super::Lattice`], at polynomial instead of
/// exponential size. Path-dependent payoffs cannot be expressed here.
#[derive(Debug, Clone)]
pub struct MarkovLattice {
    grid: TimeGrid,
    noise: NoiseModel,
    branching: usize,
    steps: Vec<StepEdges>,
    states: Vec<Vec<MarkovState>>,
    /// `children[level][node * branching + edge]`.
    children: Vec<Vec<usize>>,
}

impl MarkovLattice {
    /// `max_nodes` bounds the number of terminal states.
    pub fn build(grid: TimeGrid, noise: NoiseModel, max_nodes: usize) -> Result<Self> {
        noise.validate()?;
        if !grid.is_uniform() {
            return Err(invalid("recombining lattice needs a uniform time grid"));
        }
        let n = grid.steps();
        let bound = noise.jumps.total() * grid.max_dt();
        if bound > 0.5 {
            return Err(Error::IntensityBound { value: bound, step: 0 });
        }
        let d = noise.d();
        let m = noise.m();
        let branching = noise.branching();
        let uniform_dt = if n > 0 { grid.horizon() / n as f64 } else { 0.0 };
        let step = StepEdges::build(&noise, uniform_dt)?;
        let steps = vec![step; n];

        let mut states = vec![vec![MarkovState { ups: vec![0; d], counts: vec![0; m] }]];
        let mut children = Vec::with_capacity(n);
        for _ in 0..n {
            let cur = states.last().unwrap();
            let mut index: HashMap<MarkovState, usize> = HashMap::new();
            let mut next = Vec::new();
            let mut table = Vec::with_capacity(cur.len() * branching);
            for s in cur {
                for e in 0..branching {
                    let bits = e % (1 << d);
                    let jump = e >> d;
                    let mut child = s.clone();
                    for (i, u) in child.ups.iter_mut().enumerate() {
                        *u += (bits >> i & 1) as u32;
                    }
                    if jump > 0 {
                        child.counts[jump - 1] += 1;
                    }
                    let id = *index.entry(child.clone()).or_insert_with(|| {
                        next.push(child);
                        next.len() - 1
                    });
                    table.push(id);
                }
            }
            if next.len() > max_nodes {
                return Err(Error::NodeBudget { needed: next.len() as u128, max: max_nodes });
            }
            states.push(next);
            children.push(table);
        }
        Ok(Self { grid, noise, branching, steps, states, children })
    }

    pub fn state(&self, level: usize, node: usize) -> &MarkovState {
        &self.states[level][node]
    }
}

impl Filtration for MarkovLattice {
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
        self.states[level].len()
    }

    fn child(&self, level: usize, node: usize, edge: usize) -> usize {
        self.children[level][node * self.branching + edge]
    }

    fn terminal_state(&self, leaf: usize) -> TerminalState {
        let n = self.depth();
        let s = &self.states[n][leaf];
        let sq = if n > 0 { self.steps[0].dt.sqrt() } else { 0.0 };
        let w = s.ups.iter().map(|&u| (2.0 * f64::from(u) - n as f64) * sq).collect();
        let t = self.grid.horizon();
        let compensated =
            s.counts.iter().zip(self.noise.jumps.intensities()).map(|(&c, nu)| f64::from(c) - nu * t).collect();
        TerminalState { w, counts: s.counts.iter().map(|&c| c as usize).collect(), compensated }
    }
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{evaluate, evaluate_recursive, DeviationProcess, MONOTONE_TOL};
use crate::drivers::DriverSpec;
use crate::error::{invalid, Result};
use crate::lattice::{cond_exp, Filtration, Lattice, RandomVariable};
use crate::repr::{represent, RepresentingPair};

/// Tolerance for D1 through D3 and the local property.
pub const AXIOM_TOL: f64 = 1e-10;
/// Relative tolerance for evaluate vs evaluate_recursive.
pub const RECURSION_TOL: f64 = 1e-12;

const MIXTURES: usize = 50;
const SHIFTS: [f64; 2] = [-3.5, 2.25];
const PERTURBATIONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Reproducing data for a failed check. Payoffs are indices into the sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomWitness {
    pub payoffs: Vec<usize>,
    pub level: usize,
    pub node: usize,
    /// Mixture weights or set indicators at `level`, when the check uses them.
    pub weights: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub passed: bool,
    pub tested: usize,
    /// Largest violation seen, in the check's own units.
    pub max_error: f64,
    pub witness: Option<AxiomWitness>,
}

impl AxiomCheck {
    fn new() -> Self {
        Self { passed: true, tested: 0, max_error: 0.0, witness: None }
    }

    fn observe(&mut self, error: f64, tol: f64, witness: impl FnOnce() -> AxiomWitness) {
        self.tested += 1;
        let error = if error.is_nan() { f64::INFINITY } else { error };
        if error > self.max_error {
            self.max_error = error;
        }
        if error > tol && self.passed {
            self.passed = false;
            self.witness = Some(witness());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub driver: String,
    pub payoff_count: usize,
    pub seed: u64,
    /// `D_t(X + m) = D_t(X)`.
    pub d1: AxiomCheck,
    /// `D_t >= 0`, zero on `F_t`-measurable payoffs, positive otherwise.
    pub d2: AxiomCheck,
    /// Nodes where the "only if" half of D2 could not be tested because the
    /// payoff varies only in directions the representation cannot see.
    pub d2_only_if_vacuous: usize,
    /// Convexity under `F_t`-measurable mixtures.
    pub d3: AxiomCheck,
    /// Continuity proxy: bounded response to small perturbations.
    pub d4_proxy: AxiomCheck,
    /// Recursive decomposition over random partitions.
    pub d5: AxiomCheck,
    /// `D_t(1_A X + 1_{A^c} Y) = 1_A D_t(X) + 1_{A^c} D_t(Y)`.
    pub local: AxiomCheck,
    /// Positivity and supermartingale property of every process evaluated.
    pub invariants: AxiomCheck,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        [&self.d1, &self.d2, &self.d3, &self.d4_proxy, &self.d5, &self.local, &self.invariants].iter().all(|c| c.passed)
    }
}

struct Suite<'a> {
    lat: &'a Lattice,
    driver: &'a DriverSpec,
    invariants: AxiomCheck,
}

impl Suite<'_> {
    fn eval_pair(&mut self, pair: &RepresentingPair) -> Result<DeviationProcess> {
        let dev = evaluate(self.lat, self.driver, pair)?;
        let excess = dev.values.supermartingale_excess(self.lat).max(-dev.values.min_value());
        self.invariants.observe(excess, MONOTONE_TOL, || AxiomWitness {
            payoffs: vec![],
            level: 0,
            node: 0,
            weights: vec![],
            lhs: excess,
            rhs: MONOTONE_TOL,
            note: "deviation process is negative or not a supermartingale".into(),
        });
        Ok(dev)
    }

    fn eval(&mut self, x: &RandomVariable) -> Result<DeviationProcess> {
        let pair = represent(self.lat, x)?;
        self.eval_pair(&pair)
    }
}

fn scale_of(values: &[f64]) -> f64 {
    values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Randomized axiom suite over the sample payoffs. Everything random derives from `seed`.
pub fn axiom_report(lat: &Lattice, driver: &DriverSpec, payoffs: &[RandomVariable], seed: u64) -> Result<AxiomReport> {
    if payoffs.len() < 2 {
        return Err(invalid("axiom report needs at least two sample payoffs"));
    }
    driver.validate(lat.noise())?;
    let n = lat.depth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite { lat, driver, invariants: AxiomCheck::new() };
    let pairs: Vec<RepresentingPair> = payoffs.iter().map(|x| represent(lat, x)).collect::<Result<_>>()?;
    let devs: Vec<DeviationProcess> = pairs.iter().map(|p| suite.eval_pair(p)).collect::<Result<_>>()?;

    // D1: a shifted pair evaluates identically; re-representing X + m agrees to tolerance.
    let mut d1 = AxiomCheck::new();
    for (i, (x, dev)) in payoffs.iter().zip(&devs).enumerate() {
        for m in SHIFTS {
            let same = suite.eval_pair(&pairs[i].shifted(m))?;
            let exact = if same.values == dev.values { 0.0 } else { f64::INFINITY };
            let moved = suite.eval(&x.shift(m))?;
            let err = moved.values.max_abs_diff(&dev.values).max(exact);
            d1.observe(err, AXIOM_TOL * scale_of(&[dev.initial()]), || AxiomWitness {
                payoffs: vec![i],
                level: 0,
                node: 0,
                weights: vec![m],
                lhs: moved.initial(),
                rhs: dev.initial(),
                note: "D(X + m) != D(X)".into(),
            });
        }
    }

    // D2: nonnegativity, zero on F_t-measurable payoffs, positivity where the payoff is still random.
    let mut d2 = AxiomCheck::new();
    let mut vacuous = 0;
    for (i, (x, dev)) in payoffs.iter().zip(&devs).enumerate() {
        let neg = -dev.values.min_value();
        d2.observe(neg, MONOTONE_TOL, || AxiomWitness {
            payoffs: vec![i],
            level: 0,
            node: 0,
            weights: vec![],
            lhs: -neg,
            rhs: 0.0,
            note: "D_t < 0".into(),
        });
        let active = active_subtrees(lat, &pairs[i]);
        for (level, active_level) in active.iter().enumerate().take(n) {
            let measurable = lat.lift_level(level, &cond_exp(lat, x, level)?)?;
            let dm = suite.eval(&measurable)?;
            for (k, &v) in dm.level(level).iter().enumerate() {
                d2.observe(v.abs(), AXIOM_TOL, || AxiomWitness {
                    payoffs: vec![i],
                    level,
                    node: k,
                    weights: vec![],
                    lhs: v,
                    rhs: 0.0,
                    note: "D_t of an F_t-measurable payoff is not zero".into(),
                });
            }
            for (k, &on) in active_level.iter().enumerate() {
                let leaves = &x.values()[lat.subtree_leaves(level, k)];
                let (lo, hi) =
                    leaves.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                if hi - lo <= AXIOM_TOL * scale_of(leaves) {
                    continue;
                }
                if !on {
                    vacuous += 1;
                    continue;
                }
                let v = dev.level(level)[k];
                d2.observe(if v > 0.0 { 0.0 } else { f64::INFINITY }, AXIOM_TOL, || AxiomWitness {
                    payoffs: vec![i],
                    level,
                    node: k,
                    weights: vec![],
                    lhs: v,
                    rhs: 0.0,
                    note: "D_t = 0 although X is not F_t-measurable".into(),
                });
            }
        }
    }

    // D3: F_t-measurable mixtures.
    let mut d3 = AxiomCheck::new();
    for _ in 0..MIXTURES {
        let (i, j) = distinct_pair(&mut rng, payoffs.len());
        let level = rng.random_range(0..n.max(1));
        let weights: Vec<f64> = (0..lat.level_len(level))
            .map(|_| match rng.random_range(0..8) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            })
            .collect();
        let lambda = lat.lift_level(level, &weights)?;
        let mix = mixture(&payoffs[i], &payoffs[j], &lambda);
        let dmix = suite.eval(&mix)?;
        for (k, &w) in weights.iter().enumerate() {
            let lhs = dmix.level(level)[k];
            let rhs = w * devs[i].level(level)[k] + (1.0 - w) * devs[j].level(level)[k];
            d3.observe(lhs - rhs, AXIOM_TOL * scale_of(&[rhs]), || AxiomWitness {
                payoffs: vec![i, j],
                level,
                node: k,
                weights: weights.clone(),
                lhs,
                rhs,
                note: "D_t(lambda X + (1 - lambda) Y) > lambda D_t(X) + (1 - lambda) D_t(Y)".into(),
            });
        }
    }

    // D4 proxy: |D_0(X + eps Z) - D_0(X)| / eps must not blow up as eps shrinks.
    let mut d4 = AxiomCheck::new();
    for (i, (x, dev)) in payoffs.iter().zip(&devs).enumerate() {
        let z = RandomVariable::new((0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mut slopes = Vec::new();
        for eps in PERTURBATIONS {
            let moved = suite.eval(&x.combine(1.0, &z, eps)?)?;
            slopes.push((moved.initial() - dev.initial()).abs() / eps);
        }
        let bound = 2.0 * slopes[0] + 1e-6;
        let worst = slopes.iter().copied().fold(0.0, f64::max);
        d4.observe((worst - bound).max(0.0), 0.0, || AxiomWitness {
            payoffs: vec![i],
            level: 0,
            node: 0,
            weights: PERTURBATIONS.to_vec(),
            lhs: worst,
            rhs: bound,
            note: "response to vanishing perturbations does not vanish".into(),
        });
    }

    // D5: recursive decomposition over random partitions.
    let mut d5 = AxiomCheck::new();
    for (i, dev) in devs.iter().enumerate() {
        let partition = random_partition(&mut rng, n);
        let rec = evaluate_recursive(lat, driver, &pairs[i], &partition)?;
        let err = rec.values.max_abs_diff(&dev.values);
        d5.observe(err, RECURSION_TOL * scale_of(&[dev.initial()]), || AxiomWitness {
            payoffs: vec![i],
            level: 0,
            node: 0,
            weights: partition.iter().map(|&p| p as f64).collect(),
            lhs: rec.initial(),
            rhs: dev.initial(),
            note: "evaluate_recursive differs from evaluate".into(),
        });
    }

    // Local property: pasting along an F_t-measurable set.
    let mut local = AxiomCheck::new();
    for _ in 0..payoffs.len().max(MIXTURES / 5) {
        let (i, j) = distinct_pair(&mut rng, payoffs.len());
        let level = rng.random_range(0..n.max(1));
        let set: Vec<f64> = (0..lat.level_len(level)).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let ind = lat.lift_level(level, &set)?;
        let pasted = mixture(&payoffs[i], &payoffs[j], &ind);
        let dp = suite.eval(&pasted)?;
        for (k, &a) in set.iter().enumerate() {
            let lhs = dp.level(level)[k];
            let rhs = if a == 1.0 { devs[i].level(level)[k] } else { devs[j].level(level)[k] };
            local.observe((lhs - rhs).abs(), AXIOM_TOL * scale_of(&[rhs]), || AxiomWitness {
                payoffs: vec![i, j],
                level,
                node: k,
                weights: set.clone(),
                lhs,
                rhs,
                note: "D_t is not local on an F_t-measurable set".into(),
            });
        }
    }

    Ok(AxiomReport {
        driver: driver.name(),
        payoff_count: payoffs.len(),
        seed,
        d1,
        d2,
        d2_only_if_vacuous: vacuous,
        d3,
        d4_proxy: d4,
        d5,
        local,
        invariants: suite.invariants,
    })
}

/// `lambda X + (1 - lambda) Y` leaf by leaf.
pub(crate) fn mixture(x: &RandomVariable, y: &RandomVariable, lambda: &RandomVariable) -> RandomVariable {
    RandomVariable::new(
        x.values().iter().zip(y.values()).zip(lambda.values()).map(|((a, b), l)| l * a + (1.0 - l) * b).collect(),
    )
}

fn distinct_pair(rng: &mut ChaCha8Rng, len: usize) -> (usize, usize) {
    let i = rng.random_range(0..len);
    let j = (i + rng.random_range(1..len)) % len;
    (i, j)
}

/// Sorted subset of `1..n` with `0` and `n` added.
pub(crate) fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut inner: Vec<usize> = (1..n).collect();
    inner.shuffle(rng);
    let keep = if inner.is_empty() { 0 } else { rng.random_range(0..=inner.len()) };
    let mut p: Vec<usize> = inner[..keep].to_vec();
    p.push(0);
    p.push(n);
    p.sort_unstable();
    p.dedup();
    p
}

/// `active[level][k]`: some node in the subtree of `k` has nonzero integrands.
fn active_subtrees(lat: &Lattice, pair: &RepresentingPair) -> Vec<Vec<bool>> {
    let n = lat.depth();
    let mut active: Vec<Vec<bool>> = vec![vec![false; lat.level_len(n)]];
    for level in (0..n).rev() {
        let below = active.last().unwrap();
        let here: Vec<bool> = (0..lat.level_len(level))
            .map(|k| !pair.steps[level][k].is_zero() || (0..lat.branching()).any(|e| below[lat.child(level, k, e)]))
            .collect();
        active.push(here);
    }
    active.reverse();
    active
}

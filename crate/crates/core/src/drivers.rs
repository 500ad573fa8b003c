//! Driver functions `g(t, h, h~)`.
//!
//! A driver is a convex penalty on the representing integrands, nonnegative
//! and zero exactly at the origin. The deviation of a payoff is the
//! conditional expectation of the time integral of its driver along the
//! representing pair.
//!
//! Jump integrands are vectors indexed by mark, so `sum_j h~_j^2 nu_j` plays
//! the role of the integral against the Lévy measure.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{check_len, JumpMeasure, NoiseModel};
use crate::optim::SolverConfig;
use crate::sharing::infconv_value;

type EvalFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// User-supplied driver: evaluation plus an optional subgradient oracle.
#[derive(Clone)]
pub struct CustomDriver {
    pub name: String,
    eval: Arc<EvalFn>,
    subgradient: Option<Arc<GradFn>>,
}

impl CustomDriver {
    pub fn new(name: impl Into<String>, eval: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), eval: Arc::new(eval), subgradient: None }
    }

    pub fn with_subgradient(mut self, grad: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.subgradient = Some(Arc::new(grad));
        self
    }
}

impl fmt::Debug for CustomDriver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDriver")
            .field("name", &self.name)
            .field("has_subgradient", &self.subgradient.is_some())
            .finish()
    }
}

impl PartialEq for CustomDriver {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.eval, &other.eval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverSpec {
    /// `alpha (|h|^2 + sum_j h~_j^2 nu_j)`: the conditional-variance driver.
    Variance { alpha: f64 },
    /// `c |h| + d sqrt(sum_j h~_j^2 nu_j)`: integrated local volatilities.
    NormCd { c: f64, d: f64 },
    /// Tail average of the jump integrand under `nu` at level `a`.
    CvarJump { a: f64 },
    /// `gamma * base(h / gamma, h~ / gamma)`.
    Scaled { gamma: f64, base: Box<DriverSpec> },
    /// Pointwise inf-convolution `inf_z a(h - z) + b(z)`.
    #[serde(rename = "infconv")]
    InfConv {
        a: Box<DriverSpec>,
        b: Box<DriverSpec>,
        #[serde(default)]
        solver: SolverConfig,
    },
    #[serde(skip)]
    Custom(CustomDriver),
}

impl DriverSpec {
    pub fn variance(alpha: f64) -> Self {
        Self::Variance { alpha }
    }

    pub fn norm_cd(c: f64, d: f64) -> Self {
        Self::NormCd { c, d }
    }

    pub fn scaled(gamma: f64, base: DriverSpec) -> Self {
        Self::Scaled { gamma, base: Box::new(base) }
    }

    pub fn infconv(a: DriverSpec, b: DriverSpec, solver: SolverConfig) -> Self {
        Self::InfConv { a: Box::new(a), b: Box::new(b), solver }
    }

    /// Parameter ranges; `CvarJump` additionally needs `a < nu(R^k \ {0})`.
    pub fn validate(&self, noise: &NoiseModel) -> Result<()> {
        match self {
            Self::Variance { alpha } => {
                if !(*alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid(format!("variance driver needs alpha > 0, got {alpha}")));
                }
            }
            Self::NormCd { c, d } => {
                if !(*c >= 0.0 && *d >= 0.0 && c.is_finite() && d.is_finite()) || (*c == 0.0 && *d == 0.0) {
                    return Err(invalid(format!("norm driver needs c, d >= 0, not both 0; got c = {c}, d = {d}")));
                }
            }
            Self::CvarJump { a } => check_level(*a, &noise.jumps)?,
            Self::Scaled { gamma, base } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(invalid(format!("scaled driver needs gamma > 0, got {gamma}")));
                }
                base.validate(noise)?;
            }
            Self::InfConv { a, b, solver } => {
                a.validate(noise)?;
                b.validate(noise)?;
                solver.validate()?;
            }
            Self::Custom(_) => {}
        }
        Ok(())
    }

    /// `g(t, h, h~)`.
    pub fn eval(&self, t: f64, h: &[f64], htilde: &[f64], nu: &JumpMeasure) -> Result<f64> {
        check_len("jump integrand", nu.len(), htilde.len())?;
        Ok(match self {
            Self::Variance { alpha } => alpha * (sq_norm(h) + jump_sq_norm(htilde, nu)),
            Self::NormCd { c, d } => c * sq_norm(h).sqrt() + d * jump_sq_norm(htilde, nu).sqrt(),
            Self::CvarJump { a } => cvar_nu(*a, htilde, nu)?,
            Self::Scaled { gamma, base } => {
                let (hs, hts) = (scale(h, 1.0 / gamma), scale(htilde, 1.0 / gamma));
                gamma * base.eval(t, &hs, &hts, nu)?
            }
            Self::InfConv { a, b, solver } => infconv_value(a, b, t, h, htilde, nu, solver)?.value,
            Self::Custom(c) => (c.eval)(t, h, htilde),
        })
    }

    /// A subgradient in `R^{d+m}`; at kinks the zero element of the set-valued part.
    pub fn subgradient(&self, t: f64, h: &[f64], htilde: &[f64], nu: &JumpMeasure) -> Result<Vec<f64>> {
        if let Self::Custom(c) = self {
            let grad = c.subgradient.as_ref().ok_or(Error::MissingOracle("custom driver subgradient"))?;
            let g = grad(t, h, htilde);
            check_len("custom subgradient", h.len() + htilde.len(), g.len())?;
            return Ok(g);
        }
        Ok(self.subdifferential(t, h, htilde, nu)?.selection())
    }

    /// The subdifferential at `(h, h~)`, as a product of a Brownian and a jump block.
    pub fn subdifferential(&self, t: f64, h: &[f64], htilde: &[f64], nu: &JumpMeasure) -> Result<Subdifferential> {
        check_len("jump integrand", nu.len(), htilde.len())?;
        Ok(match self {
            Self::Variance { alpha } => Subdifferential {
                brownian: Block::Point(scale(h, 2.0 * alpha)),
                jump: Block::Point(htilde.iter().zip(nu.intensities()).map(|(x, v)| 2.0 * alpha * v * x).collect()),
            },
            Self::NormCd { c, d } => {
                let hn = sq_norm(h).sqrt();
                let brownian =
                    if hn > 0.0 { Block::Point(scale(h, c / hn)) } else { Block::Ball { dim: h.len(), radius: *c } };
                let q = jump_sq_norm(htilde, nu).sqrt();
                let jump = if q > 0.0 {
                    Block::Point(htilde.iter().zip(nu.intensities()).map(|(x, v)| d * v * x / q).collect())
                } else {
                    Block::Ellipsoid { semi_axes: nu.intensities().iter().map(|v| d * v.sqrt()).collect() }
                };
                Subdifferential { brownian, jump }
            }
            Self::CvarJump { a } => Subdifferential {
                brownian: Block::Point(vec![0.0; h.len()]),
                jump: Block::Point(cvar_gradient(*a, htilde, nu)?),
            },
            Self::Scaled { gamma, base } => {
                base.subdifferential(t, &scale(h, 1.0 / gamma), &scale(htilde, 1.0 / gamma), nu)?
            }
            Self::InfConv { a, b, solver } => {
                let r = infconv_value(a, b, t, h, htilde, nu, solver)?;
                let rest_h: Vec<f64> = h.iter().zip(&r.z).map(|(x, z)| x - z).collect();
                let rest_j: Vec<f64> = htilde.iter().zip(&r.ztilde).map(|(x, z)| x - z).collect();
                a.subdifferential(t, &rest_h, &rest_j, nu)?
            }
            Self::Custom(_) => {
                let g = self.subgradient(t, h, htilde, nu)?;
                Subdifferential {
                    brownian: Block::Point(g[..h.len()].to_vec()),
                    jump: Block::Point(g[h.len()..].to_vec()),
                }
            }
        })
    }

    /// `Some(alpha_eff)` when the driver is `alpha_eff (|h|^2 + sum nu_j h~_j^2)`.
    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match self {
            Self::Variance { alpha } => Some(*alpha),
            Self::Scaled { gamma, base } => base.quadratic_coefficient().map(|a| a / gamma),
            _ => None,
        }
    }

    /// Peels `Scaled` layers: `(gamma, g)` with `self = gamma g(./gamma)`.
    pub fn scaled_parts(&self) -> (f64, &DriverSpec) {
        match self {
            Self::Scaled { gamma, base } => {
                let (g, inner) = base.scaled_parts();
                (gamma * g, inner)
            }
            _ => (1.0, self),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Variance { alpha } => format!("variance({alpha})"),
            Self::NormCd { c, d } => format!("norm_cd({c}, {d})"),
            Self::CvarJump { a } => format!("cvar_jump({a})"),
            Self::Scaled { gamma, base } => format!("scaled({gamma}, {})", base.name()),
            Self::InfConv { a, b, .. } => format!("infconv({}, {})", a.name(), b.name()),
            Self::Custom(c) => format!("custom({})", c.name),
        }
    }
}

/// Spec-level entry point for `g(t, h, h~)`.
pub fn eval_driver(spec: &DriverSpec, t: f64, h: &[f64], htilde: &[f64], nu: &JumpMeasure) -> Result<f64> {
    spec.eval(t, h, htilde, nu)
}

pub fn subgradient(spec: &DriverSpec, t: f64, h: &[f64], htilde: &[f64], nu: &JumpMeasure) -> Result<Vec<f64>> {
    spec.subgradient(t, h, htilde, nu)
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn jump_sq_norm(htilde: &[f64], nu: &JumpMeasure) -> f64 {
    htilde.iter().zip(nu.intensities()).map(|(x, v)| x * x * v).sum()
}

fn scale(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

fn check_level(a: f64, nu: &JumpMeasure) -> Result<()> {
    let total = nu.total();
    if !(a > 0.0 && a < total) {
        return Err(invalid(format!("quantile level must lie in (0, {total}), got {a}")));
    }
    Ok(())
}

/// Distinct values of `h~` in increasing order with their `nu`-mass, and the
/// marks in each group.
fn sorted_groups(htilde: &[f64], nu: &JumpMeasure) -> Vec<(f64, f64, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..htilde.len()).collect();
    idx.sort_by(|&a, &b| htilde[a].total_cmp(&htilde[b]).then(a.cmp(&b)));
    let mut groups: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for j in idx {
        let v = htilde[j];
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                g.1 += nu.intensities()[j];
                g.2.push(j);
            }
            _ => groups.push((v, nu.intensities()[j], vec![j])),
        }
    }
    groups
}

/// Left quantile `inf { y : nu(h~ < -y) <= a }` over the finite measure.
pub fn var_nu(a: f64, htilde: &[f64], nu: &JumpMeasure) -> Result<f64> {
    check_len("jump integrand", nu.len(), htilde.len())?;
    check_level(a, nu)?;
    let groups = sorted_groups(htilde, nu);
    let mut below = 0.0;
    for (v, mass, _) in &groups {
        // y = -v leaves exactly the lighter groups strictly below -y.
        if below + mass > a {
            return Ok(-v);
        }
        below += mass;
    }
    Ok(-groups.last().map_or(0.0, |g| g.0))
}

/// Per-mark weights `w_j` with `sum w_j = a`: the share of each mark in the lowest `a` of `nu`-mass.
fn tail_weights(a: f64, htilde: &[f64], nu: &JumpMeasure) -> Vec<f64> {
    let mut w = vec![0.0; htilde.len()];
    let mut below = 0.0;
    for (_, mass, members) in sorted_groups(htilde, nu) {
        if below >= a {
            break;
        }
        let take = (below + mass).min(a) - below;
        for j in members {
            w[j] = take * nu.intensities()[j] / mass;
        }
        below += mass;
    }
    w
}

/// `(1/a) int_0^a var_nu(b) db`, integrated exactly over the quantile's steps.
pub fn cvar_nu(a: f64, htilde: &[f64], nu: &JumpMeasure) -> Result<f64> {
    check_len("jump integrand", nu.len(), htilde.len())?;
    check_level(a, nu)?;
    let mut below = 0.0;
    let mut acc = 0.0;
    for (v, mass, _) in sorted_groups(htilde, nu) {
        if below >= a {
            break;
        }
        let upper = (below + mass).min(a);
        acc += -v * (upper - below);
        below += mass;
    }
    Ok(acc / a)
}

fn cvar_gradient(a: f64, htilde: &[f64], nu: &JumpMeasure) -> Result<Vec<f64>> {
    check_level(a, nu)?;
    Ok(tail_weights(a, htilde, nu).into_iter().map(|w| -w / a).collect())
}

/// One block of a subdifferential.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Point(Vec<f64>),
    /// Centered Euclidean ball.
    Ball {
        dim: usize,
        radius: f64,
    },
    /// Centered axis-aligned ellipsoid `sum v_j^2 / a_j^2 <= 1`.
    Ellipsoid {
        semi_axes: Vec<f64>,
    },
}

impl Block {
    fn selection(&self) -> Vec<f64> {
        match self {
            Self::Point(p) => p.clone(),
            Self::Ball { dim, .. } => vec![0.0; *dim],
            Self::Ellipsoid { semi_axes } => vec![0.0; semi_axes.len()],
        }
    }

    fn contains_origin(&self) -> bool {
        !matches!(self, Self::Point(_))
    }

    /// Euclidean distance from `p` to the set.
    fn distance_to(&self, p: &[f64]) -> f64 {
        match self {
            Self::Point(q) => p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
            Self::Ball { radius, .. } => (sq_norm(p).sqrt() - radius).max(0.0),
            Self::Ellipsoid { semi_axes } => ellipsoid_distance(p, semi_axes),
        }
    }

    fn distance(&self, other: &Self) -> f64 {
        match (self, other) {
            (Self::Point(p), o) | (o, Self::Point(p)) => o.distance_to(p),
            _ => 0.0,
        }
    }
}

fn ellipsoid_distance(p: &[f64], axes: &[f64]) -> f64 {
    let mut flat = 0.0;
    let mut inside = 0.0;
    for (x, a) in p.iter().zip(axes) {
        if *a > 0.0 {
            inside += (x / a).powi(2);
        } else {
            flat += x * x;
        }
    }
    if inside <= 1.0 {
        return flat.sqrt();
    }
    // Projection q_j = a_j^2 p_j / (a_j^2 + lambda) with lambda chosen so q is on the boundary.
    let constraint = |lambda: f64| -> f64 {
        p.iter().zip(axes).filter(|(_, a)| **a > 0.0).map(|(x, a)| (a * x / (a * a + lambda)).powi(2)).sum::<f64>()
            - 1.0
    };
    let mut lo = 0.0;
    let mut hi = p.iter().zip(axes).map(|(x, a)| (a * x).powi(2)).sum::<f64>().sqrt().max(1e-300);
    while constraint(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if constraint(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = hi;
    let d2: f64 =
        p.iter().zip(axes).filter(|(_, a)| **a > 0.0).map(|(x, a)| (x - a * a * x / (a * a + lambda)).powi(2)).sum();
    (d2 + flat).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdifferential {
    pub brownian: Block,
    pub jump: Block,
}

impl Subdifferential {
    pub fn selection(&self) -> Vec<f64> {
        let mut v = self.brownian.selection();
        v.extend(self.jump.selection());
        v
    }

    pub fn contains_origin(&self) -> bool {
        let zero_b = vec![0.0; self.brownian.selection().len()];
        let zero_j = vec![0.0; self.jump.selection().len()];
        (self.brownian.contains_origin() || self.brownian.distance_to(&zero_b) == 0.0)
            && (self.jump.contains_origin() || self.jump.distance_to(&zero_j) == 0.0)
    }

    /// Distance between the two sets; zero iff they intersect.
    pub fn distance(&self, other: &Self) -> f64 {
        self.brownian.distance(&other.brownian).hypot(self.jump.distance(&other.jump))
    }
}

/// Outcome of one validity property, with a reproducing input on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub passed: bool,
    pub witness: Option<DriverWitness>,
}

impl PropertyCheck {
    fn pass() -> Self {
        Self { passed: true, witness: None }
    }

    fn record(&mut self, witness: DriverWitness) {
        if self.passed {
            self.passed = false;
            self.witness = Some(witness);
        }
    }
}

/// Points `(h, h~)` and the driver values that exhibit a failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverWitness {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub values: Vec<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub driver: String,
    pub nonnegativity: PropertyCheck,
    pub zero_iff_zero: PropertyCheck,
    pub convexity: PropertyCheck,
    /// `None` when the driver has no subgradient oracle.
    pub subgradient_inequality: Option<PropertyCheck>,
    pub samples: usize,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.nonnegativity.passed
            && self.zero_iff_zero.passed
            && self.convexity.passed
            && self.subgradient_inequality.as_ref().is_none_or(|c| c.passed)
    }
}

const CHECK_TOL: f64 = 1e-8;

type Point = (Vec<f64>, Vec<f64>);

fn random_point(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Point {
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let mut draw = |n: usize| (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let h = draw(d);
    let ht = draw(m);
    (h, ht)
}

/// Sampled verification of the driver axioms: nonnegativity, zero exactly at
/// the origin, midpoint convexity and the subgradient inequality.
///
/// Besides `sample_count` random points and segments the probe set contains
/// the origin, the "identity" jump integrand `h~_j = x_j` (first mark
/// coordinate) with its negative, and the signed coordinate directions.
pub fn check_driver(spec: &DriverSpec, noise: &NoiseModel, sample_count: usize, seed: u64) -> Result<ValidityReport> {
    if sample_count == 0 {
        return Err(invalid("check_driver needs at least one sample"));
    }
    let (d, m) = (noise.d(), noise.m());
    let nu = &noise.jumps;
    let g = |p: &Point| spec.eval(0.0, &p.0, &p.1, nu);

    let mut probes: Vec<Point> = Vec::new();
    if m > 0 {
        let ident: Vec<f64> = nu.marks().iter().map(|x| x[0]).collect();
        probes.push((vec![0.0; d], ident.clone()));
        probes.push((vec![0.0; d], ident.iter().map(|v| -v).collect()));
    }
    for i in 0..d + m {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; d + m];
            v[i] = sign;
            probes.push((v[..d].to_vec(), v[d..].to_vec()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Point, Point)> =
        (0..sample_count).map(|_| (random_point(&mut rng, d, m), random_point(&mut rng, d, m))).collect();
    probes.extend(pairs.iter().map(|(x, _)| x.clone()));

    let mut nonneg = PropertyCheck::pass();
    let mut zero = PropertyCheck::pass();
    let mut convex = PropertyCheck::pass();

    let origin = (vec![0.0; d], vec![0.0; m]);
    let g0 = g(&origin)?;
    if g0.abs() > 1e-12 {
        zero.record(DriverWitness { points: vec![origin.clone()], values: vec![g0], note: "g(0) != 0".into() });
    }
    for p in &probes {
        let v = g(p)?;
        if v < -1e-12 {
            nonneg.record(DriverWitness { points: vec![p.clone()], values: vec![v], note: "g < 0".into() });
        }
        if v <= 0.0 {
            zero.record(DriverWitness {
                points: vec![p.clone()],
                values: vec![v],
                note: "g <= 0 away from the origin".into(),
            });
        }
    }
    for (x, y) in &pairs {
        let mid: Point = (
            x.0.iter().zip(&y.0).map(|(a, b)| 0.5 * (a + b)).collect(),
            x.1.iter().zip(&y.1).map(|(a, b)| 0.5 * (a + b)).collect(),
        );
        let (gx, gy, gm) = (g(x)?, g(y)?, g(&mid)?);
        if gm > 0.5 * (gx + gy) + CHECK_TOL * (1.0 + gx.abs() + gy.abs()) {
            convex.record(DriverWitness {
                points: vec![x.clone(), y.clone(), mid],
                values: vec![gx, gy, gm],
                note: "g((x+y)/2) > (g(x)+g(y))/2".into(),
            });
        }
    }

    let has_oracle = !matches!(spec, DriverSpec::Custom(c) if c.subgradient.is_none());
    let subgrad = if has_oracle {
        let mut check = PropertyCheck::pass();
        for (x, y) in &pairs {
            let s = spec.subgradient(0.0, &x.0, &x.1, nu)?;
            let (gx, gy) = (g(x)?, g(y)?);
            let lin: f64 = s
                .iter()
                .zip(y.0.iter().chain(&y.1).zip(x.0.iter().chain(&x.1)))
                .map(|(si, (yi, xi))| si * (yi - xi))
                .sum();
            if gy < gx + lin - CHECK_TOL * (1.0 + gx.abs() + gy.abs()) {
                check.record(DriverWitness {
                    points: vec![x.clone(), y.clone()],
                    values: vec![gx, gy, gx + lin],
                    note: "g(y) < g(x) + <s(x), y - x>".into(),
                });
            }
        }
        Some(check)
    } else {
        None
    };

    Ok(ValidityReport {
        driver: spec.name(),
        nonnegativity: nonneg,
        zero_iff_zero: zero,
        convexity: convex,
        subgradient_inequality: subgrad,
        samples: sample_count,
    })
}

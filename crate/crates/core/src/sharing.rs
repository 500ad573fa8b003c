//! Two-agent risk sharing by pointwise inf-convolution of drivers.
//!
//! At each node the representing integrands `h` of the aggregate `X_A + X_B`
//! are split as `(h - z) + z`, with `z` minimizing `g_A(h - z) + g_B(z)`. The
//! argmins integrate to the optimal allocation `Y*` of agent B; the transfer
//! is `Y~* = Y* - X_B` and its price makes B's participation constraint bind
//! at time 0.

use serde::Serialize;

use crate::deviation::{accumulate, evaluate, DeviationProcess};
use crate::drivers::DriverSpec;
use crate::error::{Error, Result};
use crate::lattice::{check_len, expectation, Filtration, JumpMeasure, Lattice, NoiseModel, RandomVariable};
use crate::linalg::Lu;
use crate::optim::{minimize, FnOracle, InitRule, SolverConfig};
use crate::repr::{assemble, represent, IntegrandStep, RepresentingPair};

const POLISH_STEPS: usize = 20;

/// How an inf-convolution value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InfConvMethod {
    /// `h = 0`: both drivers vanish.
    Origin,
    /// Two quadratic drivers.
    Quadratic,
    /// Two scalings of one base driver.
    Proportional,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfConvResult {
    pub value: f64,
    /// Share `z` of the Brownian integrand carried by `B`.
    pub z: Vec<f64>,
    pub ztilde: Vec<f64>,
    pub converged: bool,
    /// Distance between `dg_A(h - z)` and `dg_B(z)`; zero at an exact minimizer.
    pub certificate_gap: f64,
    pub iterations: usize,
    pub method: InfConvMethod,
}

impl InfConvResult {
    pub fn attained(&self, cfg: &SolverConfig) -> bool {
        self.converged && self.certificate_gap <= cfg.certificate_tolerance
    }
}

fn split(v: &[f64], d: usize) -> (&[f64], &[f64]) {
    v.split_at(d)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn scale(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

#[allow(clippy::too_many_arguments)]
fn certificate(
    a: &DriverSpec,
    b: &DriverSpec,
    t: f64,
    h: &[f64],
    htilde: &[f64],
    z: &[f64],
    ztilde: &[f64],
    nu: &JumpMeasure,
) -> Result<f64> {
    if matches!(a, DriverSpec::Custom(_)) || matches!(b, DriverSpec::Custom(_)) {
        // Custom oracles only give one selection; compare those.
        let sa = a.subgradient(t, &diff(h, z), &diff(htilde, ztilde), nu)?;
        let sb = b.subgradient(t, z, ztilde, nu)?;
        return Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
    }
    let da = a.subdifferential(t, &diff(h, z), &diff(htilde, ztilde), nu)?;
    let db = b.subdifferential(t, z, ztilde, nu)?;
    Ok(da.distance(&db))
}

/// `inf_z g_A(h - z) + g_B(z)` with closed forms where available.
pub fn infconv_value(
    a: &DriverSpec,
    b: &DriverSpec,
    t: f64,
    h: &[f64],
    htilde: &[f64],
    nu: &JumpMeasure,
    cfg: &SolverConfig,
) -> Result<InfConvResult> {
    check_len("jump integrand", nu.len(), htilde.len())?;
    cfg.validate()?;
    if h.iter().chain(htilde).all(|&v| v == 0.0) {
        let value = a.eval(t, h, htilde, nu)? + b.eval(t, h, htilde, nu)?;
        let certificate_gap = certificate(a, b, t, h, htilde, h, htilde, nu)?;
        return Ok(InfConvResult {
            value,
            z: h.to_vec(),
            ztilde: htilde.to_vec(),
            converged: true,
            certificate_gap,
            iterations: 0,
            method: InfConvMethod::Origin,
        });
    }
    let share = if let (Some(qa), Some(qb)) = (a.quadratic_coefficient(), b.quadratic_coefficient()) {
        Some((qa / (qa + qb), InfConvMethod::Quadratic))
    } else {
        let ((ga, base_a), (gb, base_b)) = (a.scaled_parts(), b.scaled_parts());
        (base_a == base_b).then(|| (gb / (ga + gb), InfConvMethod::Proportional))
    };
    if let Some((w, method)) = share {
        let (z, ztilde) = (scale(h, w), scale(htilde, w));
        let value = if method == InfConvMethod::Quadratic {
            let qa = a.quadratic_coefficient().unwrap();
            let qb = b.quadratic_coefficient().unwrap();
            let q: f64 = h.iter().map(|v| v * v).sum::<f64>()
                + htilde.iter().zip(nu.intensities()).map(|(v, n)| v * v * n).sum::<f64>();
            qa * qb / (qa + qb) * q
        } else {
            a.eval(t, &diff(h, &z), &diff(htilde, &ztilde), nu)? + b.eval(t, &z, &ztilde, nu)?
        };
        let certificate_gap = certificate(a, b, t, h, htilde, &z, &ztilde, nu)?;
        return Ok(InfConvResult { value, z, ztilde, converged: true, certificate_gap, iterations: 0, method });
    }
    infconv_numeric(a, b, t, h, htilde, nu, cfg)
}

/// The numeric route of [`infconv_value`], without closed forms.
pub fn infconv_numeric(
    a: &DriverSpec,
    b: &DriverSpec,
    t: f64,
    h: &[f64],
    htilde: &[f64],
    nu: &JumpMeasure,
    cfg: &SolverConfig,
) -> Result<InfConvResult> {
    check_len("jump integrand", nu.len(), htilde.len())?;
    let d = h.len();
    let full: Vec<f64> = h.iter().chain(htilde).copied().collect();
    let objective = |x: &[f64]| -> Result<f64> {
        let rest = diff(&full, x);
        let (rh, rj) = split(&rest, d);
        let (zh, zj) = split(x, d);
        Ok(a.eval(t, rh, rj, nu)? + b.eval(t, zh, zj, nu)?)
    };
    let gradient = |x: &[f64]| -> Result<Vec<f64>> {
        let rest = diff(&full, x);
        let (rh, rj) = split(&rest, d);
        let (zh, zj) = split(x, d);
        let sa = a.subgradient(t, rh, rj, nu)?;
        let sb = b.subgradient(t, zh, zj, nu)?;
        Ok(sb.iter().zip(&sa).map(|(y, x)| y - x).collect())
    };
    let init = match cfg.init {
        InitRule::Half => scale(&full, 0.5),
        InitRule::Zero => vec![0.0; full.len()],
        InitRule::Full => full.clone(),
    };
    // Surface dimension and oracle errors before entering the solver.
    objective(&init)?;
    gradient(&init)?;
    let oracle = FnOracle {
        value: |x: &[f64]| objective(x).unwrap_or(f64::NAN),
        subgradient: |x: &[f64]| gradient(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]),
    };
    let res = minimize(&oracle, &init, cfg)?;

    // Kinked drivers put the minimizer on a corner; snap blocks to 0 or h when that is no worse.
    let mut x = res.argmin.clone();
    let mut value = res.value;
    let slack = cfg.tolerance * (1.0 + value.abs());
    let choices = |opt: &[f64], target: &[f64]| [opt.to_vec(), vec![0.0; target.len()], target.to_vec()];
    let (opt_h, opt_j) = split(&res.argmin, d);
    let mut best_snap: Option<(Vec<f64>, f64)> = None;
    for (i, zh) in choices(opt_h, h).iter().enumerate() {
        for (j, zj) in choices(opt_j, htilde).iter().enumerate() {
            if i == 0 && j == 0 {
                continue;
            }
            let cand: Vec<f64> = zh.iter().chain(zj).copied().collect();
            let f = objective(&cand)?;
            if f <= res.value + slack && best_snap.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best_snap = Some((cand, f));
            }
        }
    }
    if let Some((cand, f)) = best_snap {
        x = cand;
        value = f;
    }
    let gap_at = |x: &[f64]| -> Result<f64> {
        let (z, zt) = split(x, d);
        certificate(a, b, t, h, htilde, z, zt, nu)
    };
    let mut certificate_gap = gap_at(&x)?;

    // Subgradient steps stall near smooth interior optima; finish with Newton
    // on the first-order condition over the blocks left off the corners.
    let fixed = |lo: usize, hi: usize, x: &[f64]| {
        let blk = &x[lo..hi];
        blk.iter().all(|&v| v == 0.0) || blk == &full[lo..hi]
    };
    let free: Vec<usize> = [(0, d), (d, full.len())]
        .into_iter()
        .filter(|&(lo, hi)| hi > lo && !fixed(lo, hi, &x))
        .flat_map(|(lo, hi)| lo..hi)
        .collect();
    let k = free.len();
    for _ in 0..POLISH_STEPS {
        if k == 0 || certificate_gap <= 1e-3 * cfg.certificate_tolerance {
            break;
        }
        let g0 = gradient(&x)?;
        let mut jac = vec![0.0; k * k];
        for (col, &j) in free.iter().enumerate() {
            let eps = 1e-6 * x[j].abs().max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += eps;
            down[j] -= eps;
            let (gu, gd) = (gradient(&up)?, gradient(&down)?);
            for (row, &i) in free.iter().enumerate() {
                jac[row * k + col] = (gu[i] - gd[i]) / (2.0 * eps);
            }
        }
        let Some(lu) = Lu::factor(jac, k) else { break };
        let rhs: Vec<f64> = free.iter().map(|&i| g0[i]).collect();
        let step = lu.solve(&rhs);
        let mut cand = x.clone();
        for (&i, s) in free.iter().zip(&step) {
            cand[i] -= s;
        }
        let f = objective(&cand)?;
        let gap = gap_at(&cand)?;
        if !(f <= value + slack && gap < certificate_gap) {
            break;
        }
        x = cand;
        value = f;
        certificate_gap = gap;
    }
    let (z, ztilde) = split(&x, d);
    Ok(InfConvResult {
        value,
        z: z.to_vec(),
        ztilde: ztilde.to_vec(),
        converged: res.converged,
        certificate_gap,
        iterations: res.iterations,
        method: InfConvMethod::Numeric,
    })
}

#[derive(Debug, Clone)]
pub struct SharingProblem {
    pub x_a: RandomVariable,
    pub x_b: RandomVariable,
    pub driver_a: DriverSpec,
    pub driver_b: DriverSpec,
    pub solver: SolverConfig,
    /// Reject aggregates whose representation residual exceeds this.
    pub residual_limit: Option<f64>,
}

impl SharingProblem {
    pub fn new(x_a: RandomVariable, x_b: RandomVariable, driver_a: DriverSpec, driver_b: DriverSpec) -> Self {
        Self { x_a, x_b, driver_a, driver_b, solver: SolverConfig::default(), residual_limit: None }
    }

    pub fn validate(&self, lat: &impl Filtration) -> Result<()> {
        check_len("X_A leaves", lat.leaf_count(), self.x_a.len())?;
        check_len("X_B leaves", lat.leaf_count(), self.x_b.len())?;
        self.driver_a.validate(lat.noise())?;
        self.driver_b.validate(lat.noise())?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SharingSolution {
    /// Per-node `(z*, z~*)`, the integrands of `Y*`.
    pub argmins: Vec<Vec<IntegrandStep>>,
    /// Representing pair of `X_A + X_B`.
    pub aggregate: RepresentingPair,
    pub y_star: RandomVariable,
    pub y_tilde_star: RandomVariable,
    pub price: f64,
    pub infconv_d: DeviationProcess,
    pub attained: bool,
    pub certificate_gap: f64,
    pub non_converged_nodes: usize,
    pub delta_u_a: f64,
    pub delta_u_b: f64,
    /// `D^A_0(X_A)` and `D^B_0(X_B)` before the transfer.
    pub d_a_alone: f64,
    pub d_b_alone: f64,
    pub max_residual: f64,
}

/// Scalar headline numbers of a [`SharingSolution`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharingSummary {
    pub price: f64,
    pub delta_u_a: f64,
    pub delta_u_b: f64,
    pub certificate_gap: f64,
    pub attained: bool,
    pub non_converged_nodes: usize,
    pub infconv_d0: f64,
    pub d_a_alone: f64,
    pub d_b_alone: f64,
    pub share_factor: Option<f64>,
    pub max_residual: f64,
}

impl SharingSolution {
    /// Common ratio `z / h` over all nodes, if the split is proportional.
    pub fn share_factor(&self) -> Option<f64> {
        let mut ratio: Option<f64> = None;
        for (s, z) in self.aggregate.steps.iter().flatten().zip(self.argmins.iter().flatten()) {
            let hs = s.h.iter().chain(&s.htilde);
            let zs = z.h.iter().chain(&z.htilde);
            let scale = s.norm().max(1.0);
            for (&hv, &zv) in hs.zip(zs) {
                if hv.abs() <= 1e-12 * scale {
                    if zv.abs() > 1e-9 * scale {
                        return None;
                    }
                    continue;
                }
                let r = zv / hv;
                match ratio {
                    None => ratio = Some(r),
                    Some(r0) if (r - r0).abs() > 1e-9 => return None,
                    _ => {}
                }
            }
        }
        ratio
    }

    pub fn summary(&self) -> SharingSummary {
        SharingSummary {
            price: self.price,
            delta_u_a: self.delta_u_a,
            delta_u_b: self.delta_u_b,
            certificate_gap: self.certificate_gap,
            attained: self.attained,
            non_converged_nodes: self.non_converged_nodes,
            infconv_d0: self.infconv_d.initial(),
            d_a_alone: self.d_a_alone,
            d_b_alone: self.d_b_alone,
            share_factor: self.share_factor(),
            max_residual: self.max_residual,
        }
    }
}

/// `D_0` of `x` under `driver`.
fn d0(lat: &Lattice, driver: &DriverSpec, x: &RandomVariable) -> Result<f64> {
    Ok(evaluate(lat, driver, &represent(lat, x)?)?.initial())
}

/// `U_0(x) = E[x] - D_0(x)`.
fn u0(lat: &Lattice, driver: &DriverSpec, x: &RandomVariable) -> Result<f64> {
    Ok(expectation(lat, x)? - d0(lat, driver, x)?)
}

pub fn solve_sharing(lat: &Lattice, prob: &SharingProblem) -> Result<SharingSolution> {
    prob.validate(lat)?;
    let total = prob.x_a.add(&prob.x_b)?;
    let aggregate = represent(lat, &total)?;
    let max_residual = aggregate.max_residual();
    if let Some(limit) = prob.residual_limit {
        if max_residual > limit {
            return Err(Error::ResidualTooLarge { residual: max_residual, limit });
        }
    }
    let nu = &lat.noise().jumps;
    let mut argmins = Vec::with_capacity(lat.depth());
    let mut rates = Vec::with_capacity(lat.depth());
    let mut gap = 0.0f64;
    let mut non_converged = 0;
    for level in 0..lat.depth() {
        let t = lat.grid().time(level);
        let dt = lat.step(level).dt;
        let mut level_z = Vec::with_capacity(lat.level_len(level));
        let mut level_r = Vec::with_capacity(lat.level_len(level));
        for s in &aggregate.steps[level] {
            let r = infconv_value(&prob.driver_a, &prob.driver_b, t, &s.h, &s.htilde, nu, &prob.solver)?;
            gap = gap.max(r.certificate_gap);
            if !r.converged {
                non_converged += 1;
            }
            level_r.push(r.value * dt);
            level_z.push(IntegrandStep { h: r.z, htilde: r.ztilde });
        }
        argmins.push(level_z);
        rates.push(level_r);
    }
    let infconv_d = DeviationProcess {
        values: accumulate(lat, &rates),
        driver: DriverSpec::infconv(prob.driver_a.clone(), prob.driver_b.clone(), prob.solver.clone()),
    };
    let mut y_pair = RepresentingPair::zero(lat, 0.0);
    y_pair.steps.clone_from(&argmins);
    let y_star = assemble(lat, &y_pair)?;
    let y_tilde_star = y_star.sub(&prob.x_b)?;

    let d_a_alone = d0(lat, &prob.driver_a, &prob.x_a)?;
    let d_b_alone = d0(lat, &prob.driver_b, &prob.x_b)?;
    let d_b_star = evaluate(lat, &prob.driver_b, &y_pair)?.initial();
    let price = expectation(lat, &y_tilde_star)? - d_b_star + d_b_alone;

    // Recompute both utilities after the priced transfer.
    let paid = y_tilde_star.shift(-price);
    let b_after = paid.add(&prob.x_b)?;
    let a_after = prob.x_a.sub(&paid)?;
    let delta_u_b = u0(lat, &prob.driver_b, &b_after)? - (expectation(lat, &prob.x_b)? - d_b_alone);
    let delta_u_a = u0(lat, &prob.driver_a, &a_after)? - (expectation(lat, &prob.x_a)? - d_a_alone);

    Ok(SharingSolution {
        argmins,
        aggregate,
        y_star,
        y_tilde_star,
        price,
        infconv_d,
        attained: non_converged == 0 && gap <= prob.solver.certificate_tolerance,
        certificate_gap: gap,
        non_converged_nodes: non_converged,
        delta_u_a,
        delta_u_b,
        d_a_alone,
        d_b_alone,
        max_residual,
    })
}

/// `(gamma_B X_A - gamma_A X_B) / (gamma_A + gamma_B)`.
pub fn proportional_transfer(
    gamma_a: f64,
    gamma_b: f64,
    x_a: &RandomVariable,
    x_b: &RandomVariable,
) -> Result<RandomVariable> {
    if !(gamma_a > 0.0 && gamma_b > 0.0) {
        return Err(crate::error::invalid(format!("scales must be positive, got {gamma_a} and {gamma_b}")));
    }
    let s = gamma_a + gamma_b;
    x_a.combine(gamma_b / s, x_b, -gamma_a / s)
}

/// Whether `g` has gradient zero at the origin, judged by `g(eps e) / eps -> 0`
/// along the signed coordinate directions.
pub fn differentiable_at_origin(driver: &DriverSpec, noise: &NoiseModel) -> Result<bool> {
    let (d, m) = (noise.d(), noise.m());
    let slope = |eps: f64| -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..d + m {
            for sign in [1.0, -1.0] {
                let mut v = vec![0.0; d + m];
                v[i] = sign * eps;
                worst = worst.max(driver.eval(0.0, &v[..d], &v[d..], &noise.jumps)?.abs() / eps);
            }
        }
        Ok(worst)
    };
    let (coarse, fine) = (slope(1e-2)?, slope(1e-6)?);
    Ok(fine <= 1e-3 * coarse + 1e-12)
}

/// Outcome of the residual-risk check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub differentiable_a: bool,
    pub differentiable_b: bool,
    /// `X_A + X_B` is constant, so there is nothing to share.
    pub skipped: bool,
    pub risky_nodes: usize,
    /// Nodes with `0 < |z| < |h|`.
    pub interior_nodes: usize,
    /// Nodes with `z = 0` (A keeps everything).
    pub zero_corners: usize,
    /// Nodes with `z = h` (B takes everything).
    pub full_corners: usize,
    /// Smallest `min(|z|, |h| - |z|)` over risky nodes.
    pub min_margin: f64,
    /// `None` when neither driver is differentiable at the origin or the check is skipped.
    pub conclusion_holds: Option<bool>,
    pub note: String,
}

/// Each agent whose driver is flat at the origin must end up carrying some risk.
pub fn residual_check(lat: &Lattice, sol: &SharingSolution, prob: &SharingProblem) -> Result<ResidualReport> {
    let differentiable_a = differentiable_at_origin(&prob.driver_a, lat.noise())?;
    let differentiable_b = differentiable_at_origin(&prob.driver_b, lat.noise())?;
    let mut report = ResidualReport {
        differentiable_a,
        differentiable_b,
        skipped: false,
        risky_nodes: 0,
        interior_nodes: 0,
        zero_corners: 0,
        full_corners: 0,
        min_margin: f64::INFINITY,
        conclusion_holds: None,
        note: String::new(),
    };
    if sol.aggregate.steps.iter().flatten().all(|s| s.norm() <= 1e-12) {
        report.skipped = true;
        report.note = "X_A + X_B is constant; nothing to share".into();
        return Ok(report);
    }
    for (s, z) in sol.aggregate.steps.iter().flatten().zip(sol.argmins.iter().flatten()) {
        let hn = s.norm();
        if hn <= 1e-12 {
            continue;
        }
        report.risky_nodes += 1;
        let zn = z.norm();
        let rest = IntegrandStep { h: diff(&s.h, &z.h), htilde: diff(&s.htilde, &z.htilde) }.norm();
        let tol = 1e-12 * hn;
        if zn <= tol {
            report.zero_corners += 1;
        } else if rest <= tol {
            report.full_corners += 1;
        } else {
            report.interior_nodes += 1;
        }
        report.min_margin = report.min_margin.min(zn.min(hn - zn));
    }
    if !(differentiable_a || differentiable_b) {
        report.note = "neither driver is differentiable at the origin; corner solutions permitted".into();
        return Ok(report);
    }
    let b_carries = report.risky_nodes > report.zero_corners;
    let a_keeps = report.risky_nodes > report.full_corners;
    let holds = (!differentiable_b || b_carries) && (!differentiable_a || a_keeps);
    report.conclusion_holds = Some(holds);
    report.note = if holds {
        "every agent with a flat driver at the origin keeps some risk".into()
    } else {
        "an agent with a flat driver at the origin carries no risk".into()
    };
    Ok(report)
}

//! Batch front end behind the `dyndev` binary.
//!
//! Each subcommand reads one JSON [`RunConfig`], does all validation and
//! computation in memory, and only then writes its artifacts to the output
//! directory. Exit codes: 0 success, 1 invalid input, 2 numeric
//! non-convergence (artifacts are still written), 3 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value};
use serde::{Deserialize, Serialize};

use crate::deviation::{axiom_report, evaluate, evaluate_recursive, independence_spread, law_probe, ProbeInput};
use crate::drivers::{check_driver, DriverSpec};
use crate::error::{invalid, Error, Result};
use crate::io::{payoff_csv, process_csv, read_payoff_csv, to_json};
use crate::lattice::{Filtration, Lattice, NoiseModel, RandomVariable, TimeGrid};
use crate::optim::SolverConfig;
use crate::repr::{assemble, lift_analytic, represent, AnalyticPayoff};
use crate::sharing::{residual_check, solve_sharing, ResidualReport, SharingProblem, SharingSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

const DEFAULT_MAX_NODES: usize = 4_000_000;

#[derive(Debug, Parser)]
#[command(name = "dyndev", version, about = "Dynamic deviation measures and inf-convolution risk sharing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only errors on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Emit the lattice as JSON.
    Build,
    /// Evaluate D_t(X) and cross-check it against the recursive form.
    Deviation,
    /// Run the axiom suite.
    Axioms,
    /// Compare D_0 across equal-law payoffs.
    LawProbe,
    /// Solve the two-agent sharing problem.
    Share,
    /// Sampled validity check of a driver.
    CheckDriver,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub payoffs: BTreeMap<String, PayoffSpec>,
    #[serde(default)]
    pub drivers: BTreeMap<String, DriverSpec>,
    pub deviation: Option<DeviationConfig>,
    pub axioms: Option<AxiomsConfig>,
    pub law_probe: Option<LawProbeConfig>,
    pub share: Option<ShareConfig>,
    pub check_driver: Option<CheckDriverConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

/// Either `times` or `horizon` plus `steps`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub times: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub noise: NoiseModel,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
}

fn default_max_nodes() -> usize {
    DEFAULT_MAX_NODES
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    /// `leaf,value` file, relative to the config file.
    Csv(PathBuf),
    /// Expression in the terminal state: `w0, w1, ...` (Brownian), `n0, ...`
    /// (jump counts), `c0, ...` (compensated counts) and `T`.
    Expr(String),
    /// Deterministic integrands per step.
    Analytic {
        h: Vec<Vec<f64>>,
        #[serde(default)]
        htilde: Option<Vec<Vec<f64>>>,
    },
    /// Another payoff with its steps reordered (equal step lengths only).
    Permuted { of: String, perm: Vec<usize> },
}

/// A driver by name from `drivers`, or inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DriverRef {
    Name(String),
    Inline(DriverSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    pub payoff: String,
    pub driver: DriverRef,
    /// Cross-check partition; every level when absent.
    pub partition: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxiomsConfig {
    pub driver: DriverRef,
    pub payoffs: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub label: Option<String>,
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependenceConfig {
    pub payoff: String,
    pub level: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawProbeConfig {
    pub driver: DriverRef,
    #[serde(default)]
    pub pairs: Vec<PairConfig>,
    #[serde(default)]
    pub independence: Vec<IndependenceConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareConfig {
    pub x_a: String,
    pub x_b: String,
    pub driver_a: DriverRef,
    pub driver_b: DriverRef,
    pub residual_limit: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDriverConfig {
    pub driver: DriverRef,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    1000
}

/// A payoff on the lattice, with its integrands when given analytically.
#[derive(Debug, Clone)]
struct Payoff {
    x: RandomVariable,
    analytic: Option<AnalyticPayoff>,
}

/// Files produced by one command, written only after everything succeeded.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub status: i32,
    pub messages: Vec<String>,
}

impl Outcome {
    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.artifacts.push((name.to_string(), to_json(value)?.into_bytes()));
        Ok(())
    }

    fn csv(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) => EXIT_NONCONVERGENCE,
        Error::Singular { .. } => EXIT_INTERNAL,
        _ => EXIT_INVALID,
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    fn grid(&self) -> Result<TimeGrid> {
        let l = &self.lattice;
        match (&l.times, l.horizon, l.steps) {
            (Some(times), None, None) => TimeGrid::new(times.clone()),
            (None, Some(h), Some(n)) => TimeGrid::uniform(h, n),
            _ => Err(invalid("lattice needs either `times` or both `horizon` and `steps`")),
        }
    }

    pub fn build_lattice(&self) -> Result<Lattice> {
        self.lattice.noise.validate()?;
        Lattice::build(self.grid()?, self.lattice.noise.clone(), self.lattice.max_nodes)
    }

    fn driver(&self, r: &DriverRef, lat: &Lattice) -> Result<DriverSpec> {
        let spec = match r {
            DriverRef::Name(name) => {
                self.drivers.get(name).cloned().ok_or_else(|| invalid(format!("unknown driver '{name}'")))?
            }
            DriverRef::Inline(spec) => spec.clone(),
        };
        spec.validate(lat.noise())?;
        Ok(spec)
    }

    fn payoff(&self, name: &str, lat: &Lattice, base: &Path) -> Result<Payoff> {
        self.payoff_depth(name, lat, base, 0)
    }

    fn payoff_depth(&self, name: &str, lat: &Lattice, base: &Path, depth: usize) -> Result<Payoff> {
        if depth > self.payoffs.len() {
            return Err(invalid(format!("payoff '{name}' refers to itself")));
        }
        let spec = self.payoffs.get(name).ok_or_else(|| invalid(format!("unknown payoff '{name}'")))?;
        match spec {
            PayoffSpec::Csv(path) => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                Ok(Payoff { x: read_payoff_csv(&path, lat.leaf_count())?, analytic: None })
            }
            PayoffSpec::Expr(expr) => Ok(Payoff { x: eval_expression(expr, lat)?, analytic: None }),
            PayoffSpec::Analytic { h, htilde } => {
                let m = lat.noise().m();
                let htilde = htilde.clone().unwrap_or_else(|| vec![vec![0.0; m]; h.len()]);
                let ap = AnalyticPayoff::new(lat.grid().clone(), h.clone(), htilde)?;
                let pair = lift_analytic(&ap, lat)?;
                Ok(Payoff { x: assemble(lat, &pair)?, analytic: Some(ap) })
            }
            PayoffSpec::Permuted { of, perm } => {
                let inner = self.payoff_depth(of, lat, base, depth + 1)?;
                Ok(Payoff { x: lat.permute_steps(&inner.x, perm)?, analytic: None })
            }
        }
    }
}

/// Evaluates `expr` at every leaf.
pub fn eval_expression(expr: &str, lat: &impl Filtration) -> Result<RandomVariable> {
    let tree =
        build_operator_tree::<DefaultNumericTypes>(expr).map_err(|e| invalid(format!("expression '{expr}': {e}")))?;
    let horizon = lat.grid().horizon();
    let mut values = Vec::with_capacity(lat.leaf_count());
    for leaf in 0..lat.leaf_count() {
        let s = lat.terminal_state(leaf);
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let vars =
            s.w.iter()
                .enumerate()
                .map(|(i, v)| (format!("w{i}"), *v))
                .chain(s.counts.iter().enumerate().map(|(i, v)| (format!("n{i}"), *v as f64)))
                .chain(s.compensated.iter().enumerate().map(|(i, v)| (format!("c{i}"), *v)))
                .chain(std::iter::once(("T".to_string(), horizon)));
        for (k, v) in vars {
            ctx.set_value(k, Value::Float(v)).map_err(|e| invalid(e.to_string()))?;
        }
        let v = tree.eval_number_with_context(&ctx).map_err(|e| invalid(format!("expression '{expr}': {e}")))?;
        if !v.is_finite() {
            return Err(invalid(format!("expression '{expr}' is not finite at leaf {leaf}")));
        }
        values.push(v);
    }
    Ok(RandomVariable::new(values))
}

#[derive(Debug, Serialize)]
struct BuildSummary {
    command: &'static str,
    levels: usize,
    leaves: usize,
    nodes: usize,
    branching: usize,
}

#[derive(Debug, Serialize)]
struct DeviationSummary {
    command: &'static str,
    driver: String,
    payoff: String,
    #[serde(rename = "D0")]
    d0: f64,
    #[serde(rename = "recursive_D0")]
    recursive_d0: f64,
    partition: Vec<usize>,
    max_recursion_gap: f64,
    #[serde(rename = "U0")]
    u0: f64,
    /// `sum g dt` from the analytic integrands, when the payoff has them.
    #[serde(rename = "deterministic_D0")]
    deterministic_d0: Option<f64>,
    max_residual: f64,
    invariants_ok: bool,
    levels: usize,
    leaves: usize,
}

#[derive(Debug, Serialize)]
struct ShareReport {
    command: &'static str,
    driver_a: String,
    driver_b: String,
    #[serde(flatten)]
    summary: SharingSummary,
    residual_risk: ResidualReport,
}

#[derive(Debug, Serialize)]
struct IndependenceEntry {
    payoff: String,
    level: usize,
    spread: f64,
}

#[derive(Debug, Serialize)]
struct LawProbeOutput {
    command: &'static str,
    #[serde(flatten)]
    report: crate::deviation::LawProbeReport,
    independence: Vec<IndependenceEntry>,
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| invalid(format!("config has no `{name}` section")))
}

/// Runs one command against a parsed config; no files are touched.
pub fn execute(command: Command, cfg: &RunConfig, base: &Path, seed: u64) -> Result<Outcome> {
    let lat = cfg.build_lattice()?;
    let mut out = Outcome::default();
    match command {
        Command::Build => {
            out.json("lattice.json", &lat.describe())?;
            out.json(
                "summary.json",
                &BuildSummary {
                    command: "build",
                    levels: lat.depth(),
                    leaves: lat.leaf_count(),
                    nodes: lat.node_count(),
                    branching: lat.branching(),
                },
            )?;
        }
        Command::Deviation => {
            let sec = section(&cfg.deviation, "deviation")?;
            let driver = cfg.driver(&sec.driver, &lat)?;
            let payoff = cfg.payoff(&sec.payoff, &lat, base)?;
            let pair = represent(&lat, &payoff.x)?;
            let dev = evaluate(&lat, &driver, &pair)?;
            let partition = sec.partition.clone().unwrap_or_else(|| (0..=lat.depth()).collect());
            let rec = evaluate_recursive(&lat, &driver, &pair, &partition)?;
            let deterministic_d0 = payoff
                .analytic
                .as_ref()
                .map(|ap| crate::deviation::deterministic_d0(lat.grid(), &driver, ap, &lat.noise().jumps))
                .transpose()?;
            let u0 = crate::deviation::utility(&lat, &payoff.x, &dev, 0)?[0];
            out.json(
                "summary.json",
                &DeviationSummary {
                    command: "deviation",
                    driver: driver.name(),
                    payoff: sec.payoff.clone(),
                    d0: dev.initial(),
                    recursive_d0: rec.initial(),
                    partition,
                    max_recursion_gap: dev.values.max_abs_diff(&rec.values),
                    u0,
                    deterministic_d0,
                    max_residual: pair.max_residual(),
                    invariants_ok: dev.check_invariants(&lat),
                    levels: lat.depth(),
                    leaves: lat.leaf_count(),
                },
            )?;
            out.json("pair.json", &pair.export())?;
            out.csv("deviation.csv", process_csv(&dev)?);
        }
        Command::Axioms => {
            let sec = section(&cfg.axioms, "axioms")?;
            let driver = cfg.driver(&sec.driver, &lat)?;
            let xs = sec.payoffs.iter().map(|p| Ok(cfg.payoff(p, &lat, base)?.x)).collect::<Result<Vec<_>>>()?;
            let report = axiom_report(&lat, &driver, &xs, seed)?;
            if !report.passed() {
                out.messages.push(format!("axiom suite reports failures for {}", report.driver));
            }
            out.json("axioms.json", &report)?;
        }
        Command::LawProbe => {
            let sec = section(&cfg.law_probe, "law_probe")?;
            let driver = cfg.driver(&sec.driver, &lat)?;
            let mut inputs = Vec::with_capacity(sec.pairs.len());
            for (i, p) in sec.pairs.iter().enumerate() {
                let label = p.label.clone().unwrap_or_else(|| format!("pair{i}"));
                let (x, y) = (cfg.payoff(&p.x, &lat, base)?, cfg.payoff(&p.y, &lat, base)?);
                inputs.push(match (x.analytic, y.analytic) {
                    (Some(x), Some(y)) => ProbeInput::Analytic { label, x, y },
                    _ => ProbeInput::Lattice { label, x: x.x, y: y.x },
                });
            }
            let report = law_probe(&lat, &driver, &inputs)?;
            let independence = sec
                .independence
                .iter()
                .map(|c| {
                    let y = cfg.payoff(&c.payoff, &lat, base)?;
                    Ok(IndependenceEntry {
                        payoff: c.payoff.clone(),
                        level: c.level,
                        spread: independence_spread(&lat, &driver, &y.x, c.level)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.json("law_probe.json", &LawProbeOutput { command: "law-probe", report, independence })?;
        }
        Command::Share => {
            let sec = section(&cfg.share, "share")?;
            let driver_a = cfg.driver(&sec.driver_a, &lat)?;
            let driver_b = cfg.driver(&sec.driver_b, &lat)?;
            let prob = SharingProblem {
                x_a: cfg.payoff(&sec.x_a, &lat, base)?.x,
                x_b: cfg.payoff(&sec.x_b, &lat, base)?.x,
                driver_a: driver_a.clone(),
                driver_b: driver_b.clone(),
                solver: cfg.solver.clone(),
                residual_limit: sec.residual_limit,
            };
            let sol = solve_sharing(&lat, &prob)?;
            let residual_risk = residual_check(&lat, &sol, &prob)?;
            if !sol.attained {
                out.status = EXIT_NONCONVERGENCE;
                out.messages.push(format!(
                    "inf-convolution not attained: {} nodes did not converge, certificate gap {:e}",
                    sol.non_converged_nodes, sol.certificate_gap
                ));
            }
            out.json(
                "summary.json",
                &ShareReport {
                    command: "share",
                    driver_a: driver_a.name(),
                    driver_b: driver_b.name(),
                    summary: sol.summary(),
                    residual_risk,
                },
            )?;
            out.csv("argmins.csv", argmin_csv(&lat, &sol)?);
            out.csv("transfer.csv", payoff_csv(&sol.y_tilde_star)?);
            out.csv("allocation.csv", payoff_csv(&sol.y_star)?);
            out.csv("infconv_deviation.csv", process_csv(&sol.infconv_d)?);
        }
        Command::CheckDriver => {
            let sec = section(&cfg.check_driver, "check_driver")?;
            let driver = cfg.driver(&sec.driver, &lat)?;
            let report = check_driver(&driver, lat.noise(), sec.samples, seed)?;
            if !report.passed() {
                out.messages.push(format!("{} fails the driver checks", report.driver));
            }
            out.json("check_driver.json", &report)?;
        }
    }
    Ok(out)
}

/// `level,node,h0..,ht0..,z0..,zt0..`, one row per non-terminal node.
fn argmin_csv(lat: &Lattice, sol: &crate::sharing::SharingSolution) -> Result<Vec<u8>> {
    let (d, m) = (lat.noise().d(), lat.noise().m());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["level".to_string(), "node".to_string()];
    for prefix in ["h", "ht", "z", "zt"] {
        let count = if prefix.ends_with('t') { m } else { d };
        header.extend((0..count).map(|i| format!("{prefix}{i}")));
    }
    w.write_record(&header)?;
    for (level, (steps, zs)) in sol.aggregate.steps.iter().zip(&sol.argmins).enumerate() {
        for (node, (s, z)) in steps.iter().zip(zs).enumerate() {
            let mut row = vec![level.to_string(), node.to_string()];
            row.extend(s.h.iter().chain(&s.htilde).chain(&z.h).chain(&z.htilde).map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

fn write_artifacts(dir: &Path, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn run_parsed(cli: &Cli) -> Result<i32> {
    let config = cli.config.as_ref().ok_or_else(|| invalid("--config is required"))?;
    let cfg = RunConfig::from_path(config)?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    let seed = cli.seed.unwrap_or(cfg.seed);
    let outcome = execute(cli.command, &cfg, &base, seed)?;
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    write_artifacts(&dir, &outcome)?;
    for msg in &outcome.messages {
        eprintln!("dyndev: {msg}");
    }
    if !cli.quiet {
        for (name, _) in &outcome.artifacts {
            eprintln!("wrote {}", dir.join(name).display());
        }
    }
    Ok(outcome.status)
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match catch_unwind(AssertUnwindSafe(|| run_parsed(&cli))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("dyndev: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("dyndev: internal error");
            EXIT_INTERNAL
        }
    }
}

//! One job per command: `resolve` reads every key up front, `run` calls the library and writes
//! artifacts as it goes so a failing step still leaves the earlier files behind.

use std::fmt;
use std::io;
use std::path::PathBuf;

use recession_lab::density::{default_delta, verify_collar};
use recession_lab::diagnostics::{
    decay_curve, distribution_function, fit_power_law, hessian_field, jn_equivalence_check, lemma_thresholds,
    lp_norm_pow, lp_via_distribution, opening_schedule, theta_field, touching_sets, Side, SubSquare,
};
use recession_lab::io::{csv_table, fmt_num};
use recession_lab::meshsolve::{
    approximation_experiment, mms_convergence, solve_dirichlet, BoundaryProfile, GridSpec,
    ManufacturedCase, ScalarField, SolveOptions,
};
use recession_lab::operators::{audit_ellipticity_in, DensityParams, EllipticityPair, OperatorSpec};
use recession_lab::recession::{
    check_homogeneity, estimate_recession, geometric_schedule, modulus_omega_capped, RecessionReport,
};
use recession_lab::LabError;
use serde_json::json;

use crate::artifacts::Artifacts;
use crate::config::{ConfigError, Resolver};

pub const COMMANDS: &[&str] =
    &["audit", "recession", "omega", "density", "solve", "mms-convergence", "approx", "diagnose", "bmo"];

/// How a run that completed its computation ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    VerificationFailed(String),
    NotConverged(String),
}

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Io(io::Error),
    Lab(LabError),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
            Failure::Lab(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Lab(e)
    }
}

type Run = Result<Outcome, Failure>;

fn invalid(e: LabError) -> ConfigError {
    ConfigError::new(e.to_string())
}

// ---- shared blocks ----

const OPERATORS: &[&str] = &[
    "pucci_plus",
    "pucci_minus",
    "extremal_ldelta",
    "q_momentum",
    "perturbed_lagrangian",
    "sine_perturbed",
    "weighted_trace",
];

fn resolve_pair(r: &Resolver) -> Result<EllipticityPair<f64>, ConfigError> {
    let lambda = r.f64("operator", "lambda", 1.0)?;
    let big = r.f64("operator", "big_lambda", 2.0)?;
    EllipticityPair::new(lambda, big).map_err(invalid)
}

pub fn resolve_operator(r: &Resolver) -> Result<OperatorSpec<f64>, ConfigError> {
    let name = r.choice("operator", "name", None, OPERATORS)?;
    let op = match name.as_str() {
        "pucci_plus" => OperatorSpec::pucci_plus(resolve_pair(r)?),
        "pucci_minus" => OperatorSpec::pucci_minus(resolve_pair(r)?),
        "extremal_ldelta" => {
            let pair = resolve_pair(r)?;
            let delta = r.f64("operator", "delta", default_delta(&pair))?;
            OperatorSpec::extremal_ldelta(pair, delta).map_err(invalid)?
        }
        "q_momentum" => {
            let q = r.usize("operator", "q", 3)?;
            let dim = r.usize("operator", "dim", 2)?;
            let q = u32::try_from(q).map_err(|_| ConfigError::new("q is too large"))?;
            OperatorSpec::q_momentum(q, dim).map_err(invalid)?
        }
        "perturbed_lagrangian" => OperatorSpec::perturbed_lagrangian(r.f64_list("operator", "alpha", &[1.0, 1.0])?).map_err(invalid)?,
        "sine_perturbed" => OperatorSpec::sine_perturbed(r.f64_list("operator", "alpha", &[1.0, 1.0])?).map_err(invalid)?,
        _ => OperatorSpec::weighted_trace(r.f64_list("operator", "weights", &[1.0, 1.0])?).map_err(invalid)?,
    };
    Ok(op)
}

fn resolve_grid(r: &Resolver) -> Result<GridSpec, ConfigError> {
    let n = r.usize("grid", "n", 63)?;
    let a = r.f64("grid", "a", -1.0)?;
    let b = r.f64("grid", "b", 1.0)?;
    let k = r.usize("grid", "stencil_k", recession_lab::meshsolve::DEFAULT_STENCIL_K)?;
    GridSpec::new(n, a, b, k).map_err(invalid)
}

fn resolve_solve_options(r: &Resolver) -> Result<SolveOptions, ConfigError> {
    let tol = r.opt_f64("solve", "tol")?;
    if tol.is_some_and(|t| !(t > 0.0)) {
        return Err(ConfigError::new("solve tol must be positive"));
    }
    let max_iter = r.usize("solve", "max_iter", SolveOptions::default().max_iter)?;
    Ok(SolveOptions { tol, max_iter })
}

fn resolve_case(r: &Resolver, section: &str, default: &str) -> Result<ManufacturedCase, ConfigError> {
    let name = r.choice(section, "case", Some(default), &["quartic", "saddle", "radial"])?;
    ManufacturedCase::parse(&name).map_err(invalid)
}

#[derive(Clone, Debug)]
pub struct RecessionSetup {
    directions: usize,
    schedule: Vec<f64>,
    tol: f64,
}

fn resolve_recession(r: &Resolver) -> Result<RecessionSetup, ConfigError> {
    let directions = r.usize("recession", "directions", 256)?;
    let first = r.f64("recession", "mu_first", 0.5)?;
    let ratio = r.f64("recession", "mu_ratio", 0.5)?;
    let count = r.usize("recession", "mu_count", 14)?;
    let tol = r.f64("recession", "tol", 1e-3)?;
    if directions == 0 || !(first > 0.0) || !(ratio > 0.0 && ratio < 1.0) {
        return Err(ConfigError::new("recession needs directions >= 1, mu_first > 0 and mu_ratio in (0, 1)"));
    }
    Ok(RecessionSetup { directions, schedule: geometric_schedule(first, ratio, count), tol })
}

fn recession_summary(report: &RecessionReport<f64>) -> serde_json::Value {
    json!({
        "operator": report.operator,
        "dim": report.dim,
        "directions": report.values.len(),
        "mu_schedule": report.mu_schedule,
        "sup_deviation_per_mu": report.sup_deviation_per_mu,
        "last_step_change": report.last_step_change,
        "tol": report.tol,
        "converged": report.converged,
        "closed_form_deviation": report.closed_form_deviation,
    })
}

fn run_recession_setup(
    op: &OperatorSpec<f64>,
    s: &RecessionSetup,
    seed: u64,
    out: &mut Artifacts,
) -> Result<Option<RecessionReport<f64>>, Failure> {
    let report = estimate_recession(op, s.directions, seed, &s.schedule, s.tol)?;
    out.write("recession.csv", &report.to_csv())?;
    Ok(report.converged.then_some(report))
}

#[derive(Clone, Debug)]
pub struct DataSetup {
    source: f64,
    boundary: BoundaryProfile,
}

fn resolve_data(r: &Resolver) -> Result<DataSetup, ConfigError> {
    let source = r.f64("data", "source", 0.0)?;
    let boundary = match r.choice("data", "boundary", Some("zero"), &["zero", "affine", "case"])?.as_str() {
        "zero" => BoundaryProfile::Zero,
        "affine" => BoundaryProfile::Affine {
            a1: r.f64("data", "a1", 0.0)?,
            a2: r.f64("data", "a2", 0.0)?,
            c: r.f64("data", "c", 0.0)?,
        },
        _ => BoundaryProfile::TraceOfCase { case: resolve_case(r, "data", "saddle")? },
    };
    Ok(DataSetup { source, boundary })
}

#[derive(Clone, Debug)]
pub struct SolveSetup {
    op: OperatorSpec<f64>,
    grid: GridSpec,
    data: DataSetup,
    opts: SolveOptions,
}

fn resolve_solve_setup(r: &Resolver) -> Result<SolveSetup, ConfigError> {
    Ok(SolveSetup { op: resolve_operator(r)?, grid: resolve_grid(r)?, data: resolve_data(r)?, opts: resolve_solve_options(r)? })
}

/// Solves, writes `solution.csv` and `solve.json`, and reports whether the residual target was met.
fn run_solve_setup(s: &SolveSetup, out: &mut Artifacts) -> Result<(ScalarField, bool), Failure> {
    let f = ScalarField::from_fn(s.grid, |_| s.data.source);
    let g = s.data.boundary.field(s.grid);
    let r = solve_dirichlet(&s.op, &f, &g, s.opts)?;
    out.write("solution.csv", &r.u.to_csv())?;
    out.write_json(
        "solve.json",
        &json!({
            "operator": s.op.name(),
            "n": s.grid.n,
            "h": s.grid.h(),
            "iterations": r.iterations,
            "residual_sup": r.residual_sup,
            "converged": r.converged,
            "dt_used": r.dt_used,
            "tol": r.tol,
        }),
    )?;
    Ok((r.u, r.converged))
}

/// `C^∞` step equal to 1 on `r ≤ 1/2` and 0 on `r ≥ 1`.
fn smooth_cutoff(r: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (psi(1.0 - r), psi(r - 0.5));
    a / (a + b)
}

#[derive(Clone, Debug)]
pub enum FieldSource {
    Manufactured(ManufacturedCase, GridSpec),
    /// `|x|^s`, optionally times the smooth cutoff; the origin is masked when `s < 0`.
    RadialPower { exponent: f64, cutoff: bool, grid: GridSpec },
    LogRadius(GridSpec),
    Solve(Box<SolveSetup>),
    Csv(PathBuf),
}

fn resolve_field(r: &Resolver) -> Result<FieldSource, ConfigError> {
    let kind = r.choice("field", "kind", None, &["manufactured", "radial_power", "log_radius", "solve", "csv"])?;
    Ok(match kind.as_str() {
        "manufactured" => FieldSource::Manufactured(resolve_case(r, "field", "quartic")?, resolve_grid(r)?),
        "radial_power" => FieldSource::RadialPower {
            exponent: r.f64("field", "exponent", 1.5)?,
            cutoff: r.bool("field", "cutoff", true)?,
            grid: resolve_grid(r)?,
        },
        "log_radius" => FieldSource::LogRadius(resolve_grid(r)?),
        "solve" => FieldSource::Solve(Box::new(resolve_solve_setup(r)?)),
        _ => FieldSource::Csv(PathBuf::from(r.string("field", "path", None)?)),
    })
}

/// Reads the `x1,x2,value` layout written by `ScalarField::to_csv`.
fn load_field_csv(path: &PathBuf) -> Result<ScalarField, Failure> {
    let text = std::fs::read_to_string(path)?;
    let bad = |m: String| Failure::Config(ConfigError::new(format!("{}: {m}", path.display())));
    let mut lines = text.lines();
    if lines.next() != Some("x1,x2,value") {
        return Err(bad("expected header `x1,x2,value`".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let nums: Option<Vec<f64>> = (cells.len() == 3).then(|| cells.iter().map(|c| c.parse().ok()).collect()).flatten();
        rows.push(nums.ok_or_else(|| bad(format!("bad row {}", k + 2)))?);
    }
    let side = (rows.len() as f64).sqrt().round() as usize;
    if side * side != rows.len() || side < 10 {
        return Err(bad(format!("{} rows do not form a square grid of side >= 10", rows.len())));
    }
    let (a, b) = (rows[0][0], rows[side - 1][0]);
    let grid = GridSpec::new(side - 2, a, b, recession_lab::meshsolve::DEFAULT_STENCIL_K).map_err(Failure::Lab)?;
    let tol = 1e-9 * (b - a);
    let mut field = ScalarField::zeros(grid);
    for (k, row) in rows.iter().enumerate() {
        let p = grid.point(k % side, k / side);
        if (p[0] - row[0]).abs() > tol || (p[1] - row[1]).abs() > tol {
            return Err(bad(format!("row {} is not at grid node {:?}", k + 2, p)));
        }
        field.values[k] = row[2];
    }
    Ok(field)
}

/// The field plus whether producing it converged (only a solve can fail to).
fn produce_field(src: &FieldSource, out: &mut Artifacts) -> Result<(ScalarField, bool), Failure> {
    let radius = |x: [f64; 2]| (x[0] * x[0] + x[1] * x[1]).sqrt();
    let field = match src {
        FieldSource::Manufactured(case, grid) => ScalarField::from_fn(*grid, |x| case.exact(x)),
        FieldSource::RadialPower { exponent, cutoff, grid } => ScalarField::from_fn(*grid, |x| {
            let r = radius(x);
            let chi = if *cutoff { smooth_cutoff(r) } else { 1.0 };
            if r == 0.0 && *exponent < 0.0 {
                f64::INFINITY
            } else {
                r.powf(*exponent) * chi
            }
        }),
        FieldSource::LogRadius(grid) => ScalarField::from_fn(*grid, |x| radius(x).ln()),
        FieldSource::Solve(s) => return run_solve_setup(s, out),
        FieldSource::Csv(path) => load_field_csv(path)?,
    };
    Ok((field, true))
}

// ---- jobs ----

#[derive(Clone, Debug)]
pub enum Job {
    Audit { op: OperatorSpec<f64>, dim: usize, samples: usize, scale: f64 },
    Recession { op: OperatorSpec<f64>, setup: RecessionSetup, scales: Vec<f64> },
    Omega { op: OperatorSpec<f64>, setup: RecessionSetup, epsilons: Vec<f64>, samples: usize, mu_cap: f64 },
    Density { op: OperatorSpec<f64>, pair: EllipticityPair<f64>, delta: f64, j_min: u32, j_max: u32, inner: usize, outer: usize },
    Solve(SolveSetup),
    Mms { op: OperatorSpec<f64>, case: ManufacturedCase, a: f64, b: f64, spacings: Vec<f64>, stencil_k: usize, opts: SolveOptions },
    Approx { op: OperatorSpec<f64>, setup: RecessionSetup, grid: GridSpec, opts: SolveOptions, mus: Vec<f64>, source: f64, case: ManufacturedCase },
    Diagnose(Box<DiagnoseSetup>),
    Bmo { field: FieldSource, p: f64, q: f64, rho_max: Option<f64>, rho_min: Option<f64>, stride: usize, window: (f64, f64) },
}

#[derive(Clone, Debug)]
pub struct DiagnoseSetup {
    field: FieldSource,
    of_field: bool,
    p: f64,
    eta: f64,
    mbase: f64,
    window: (f64, f64),
    openings: Vec<f64>,
    side: Side,
    theta_schedule: Vec<f64>,
    t_schedule: Vec<f64>,
    sub: Option<([f64; 2], f64)>,
}

fn resolve_j(r: &Resolver, key: &str, default: usize) -> Result<u32, ConfigError> {
    u32::try_from(r.usize("density", key, default)?).map_err(|_| ConfigError::new(format!("{key} is too large")))
}

fn resolve_subsquare(r: &Resolver, section: &str) -> Result<Option<([f64; 2], f64)>, ConfigError> {
    let cx = r.f64(section, "sub_cx", 0.0)?;
    let cy = r.f64(section, "sub_cy", 0.0)?;
    Ok(r.opt_f64(section, "sub_half")?.map(|h| ([cx, cy], h)))
}

impl Job {
    pub fn resolve(command: &str, r: &Resolver) -> Result<Job, ConfigError> {
        Ok(match command {
            "audit" => {
                let op = resolve_operator(r)?;
                let dim = r.usize("audit", "dim", op.arity().unwrap_or(2))?;
                Job::Audit { dim, samples: r.usize("audit", "samples", 10_000)?, scale: r.f64("audit", "scale", 4.0)?, op }
            }
            "recession" => Job::Recession {
                op: resolve_operator(r)?,
                setup: resolve_recession(r)?,
                scales: r.f64_list("recession", "homogeneity_scales", &[0.5, 2.0, 10.0])?,
            },
            "omega" => Job::Omega {
                op: resolve_operator(r)?,
                setup: resolve_recession(r)?,
                epsilons: r.f64_list("omega", "epsilons", &[0.1, 0.03, 0.01, 0.003, 0.001])?,
                samples: r.usize("omega", "samples", 256)?,
                mu_cap: r.f64("omega", "mu_cap", 1.0)?,
            },
            "density" => {
                let op = resolve_operator(r)?;
                let pair = op
                    .declared
                    .pair()
                    .ok_or_else(|| ConfigError::new(format!("density needs an operator with a declared pair, `{}` is degenerate", op.name())))?;
                let delta = r.f64("density", "delta", default_delta(&pair))?;
                let (j_min, j_max) = (resolve_j(r, "j_min", 1)?, resolve_j(r, "j_max", 10)?);
                if j_min < 1 || j_max < j_min {
                    return Err(ConfigError::new("density needs 1 <= j_min <= j_max"));
                }
                DensityParams::new(pair, delta, j_min).map_err(invalid)?;
                Job::Density {
                    op,
                    pair,
                    delta,
                    j_min,
                    j_max,
                    inner: r.usize("density", "inner_samples", 200)?,
                    outer: r.usize("density", "outer_samples", 200)?,
                }
            }
            "solve" => Job::Solve(resolve_solve_setup(r)?),
            "mms-convergence" => Job::Mms {
                op: resolve_operator(r)?,
                case: resolve_case(r, "mms", "quartic")?,
                a: r.f64("mms", "a", 0.0)?,
                b: r.f64("mms", "b", 1.0)?,
                spacings: r.f64_list("mms", "spacings", &[1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0])?,
                stencil_k: r.usize("mms", "stencil_k", recession_lab::meshsolve::DEFAULT_STENCIL_K)?,
                opts: resolve_solve_options(r)?,
            },
            "approx" => Job::Approx {
                op: resolve_operator(r)?,
                setup: resolve_recession(r)?,
                grid: resolve_grid(r)?,
                opts: resolve_solve_options(r)?,
                mus: r.f64_list("approx", "mus", &[1.0, 0.1, 0.01])?,
                source: r.f64("approx", "source", 0.0)?,
                case: resolve_case(r, "approx", "saddle")?,
            },
            "diagnose" => {
                let field = resolve_field(r)?;
                let of_field = r.choice("diagnose", "distribution_of", Some("hessian_norm"), &["hessian_norm", "field"])? == "field";
                let theta_m0 = r.f64("diagnose", "theta_m0", recession_lab::diagnostics::DEFAULT_THETA_M0)?;
                let theta_ratio = r.f64("diagnose", "theta_ratio", 2.0)?;
                let theta_kmax = r.usize("diagnose", "theta_kmax", recession_lab::diagnostics::DEFAULT_THETA_KMAX)?;
                let t_first = r.f64("diagnose", "t_first", 1.0)?;
                let t_ratio = r.f64("diagnose", "t_ratio", 2f64.powf(0.25))?;
                let t_count = r.usize("diagnose", "t_count", 24)?;
                let side = Side::parse(&r.choice("diagnose", "side", Some("both"), &["below", "above", "both"])?).map_err(invalid)?;
                Job::Diagnose(Box::new(DiagnoseSetup {
                    field,
                    of_field,
                    p: r.f64("diagnose", "p", 3.0)?,
                    eta: r.f64("diagnose", "eta", 1.0)?,
                    mbase: r.f64("diagnose", "mbase", 2.0)?,
                    window: (
                        r.f64("diagnose", "window_lo", recession_lab::diagnostics::LEMMA_WINDOW.0)?,
                        r.f64("diagnose", "window_hi", recession_lab::diagnostics::LEMMA_WINDOW.1)?,
                    ),
                    openings: r.f64_list("diagnose", "openings", &[1.0, 4.0, 16.0])?,
                    side,
                    theta_schedule: opening_schedule(theta_m0, theta_ratio, theta_kmax),
                    t_schedule: (0..t_count).map(|k| t_first * t_ratio.powi(k as i32)).collect(),
                    sub: resolve_subsquare(r, "diagnose")?,
                }))
            }
            "bmo" => Job::Bmo {
                field: resolve_field(r)?,
                p: r.f64("bmo", "p", 2.0)?,
                q: r.f64("bmo", "q", 4.0)?,
                rho_max: r.opt_f64("bmo", "rho_max")?,
                rho_min: r.opt_f64("bmo", "rho_min")?,
                stride: r.usize("bmo", "stride", 4)?,
                window: (
                    r.f64("bmo", "window_lo", recession_lab::diagnostics::JN_WINDOW.0)?,
                    r.f64("bmo", "window_hi", recession_lab::diagnostics::JN_WINDOW.1)?,
                ),
            },
            other => return Err(ConfigError::new(format!("unknown command `{other}`"))),
        })
    }

    pub fn run(&self, seed: u64, out: &mut Artifacts) -> Run {
        match self {
            Job::Audit { op, dim, samples, scale } => {
                let report = audit_ellipticity_in(op, *dim, *samples, *scale, seed);
                out.write_json("audit.json", &report)?;
                Ok(if report.passed {
                    Outcome::Success
                } else {
                    Outcome::VerificationFailed(format!(
                        "empirical range [{}, {}] outside the declared pair",
                        report.empirical_lower, report.empirical_upper
                    ))
                })
            }
            Job::Recession { op, setup, scales } => {
                let report = estimate_recession(op, setup.directions, seed, &setup.schedule, setup.tol)?;
                out.write("recession.csv", &report.to_csv())?;
                let mut summary = recession_summary(&report);
                if !report.converged {
                    out.write_json("recession.json", &summary)?;
                    return Ok(Outcome::NotConverged(format!("last step change {:e}", report.last_step_change)));
                }
                let h = check_homogeneity(&report, op, scales)?;
                summary["homogeneity"] = serde_json::to_value(&h).map_err(io::Error::other)?;
                out.write_json("recession.json", &summary)?;
                Ok(Outcome::Success)
            }
            Job::Omega { op, setup, epsilons, samples, mu_cap } => {
                let Some(report) = run_recession_setup(op, setup, seed, out)? else {
                    return Ok(Outcome::NotConverged("recession estimate did not converge".into()));
                };
                let mut rows = Vec::new();
                let mut estimates = Vec::new();
                for &eps in epsilons {
                    let m = modulus_omega_capped(op, &report, eps, *samples, seed, *mu_cap)?;
                    rows.push(vec![fmt_num(eps), fmt_num(m.mu0_estimate), m.bracketed.to_string(), m.capped.to_string()]);
                    estimates.push(m);
                }
                out.write("omega.csv", &csv_table(&["epsilon", "mu0", "bracketed", "capped"], &rows))?;
                out.write_json("omega.json", &estimates)?;
                Ok(Outcome::Success)
            }
            Job::Density { op, pair, delta, j_min, j_max, inner, outer } => {
                let mut rows = Vec::new();
                let mut failed = Vec::new();
                for j in *j_min..=*j_max {
                    let params = DensityParams::new(*pair, *delta, j)?;
                    let rep = verify_collar(op, params, *inner, *outer, seed)?;
                    if !rep.passed() {
                        failed.push(j);
                    }
                    rows.push(vec![
                        j.to_string(),
                        fmt_num(rep.cj),
                        fmt_num(rep.inner_radius),
                        fmt_num(rep.outer_radius),
                        format!("{}/{}", rep.inner_pass, rep.inner_samples),
                        format!("{}/{}", rep.outer_pass, rep.outer_samples),
                        fmt_num(rep.inner_worst_margin),
                        fmt_num(rep.outer_worst_margin),
                    ]);
                }
                let headers =
                    ["j", "cj", "inner_radius", "outer_radius", "inner_pass", "outer_pass", "inner_worst_margin", "outer_worst_margin"];
                out.write("density.csv", &csv_table(&headers, &rows))?;
                Ok(if failed.is_empty() {
                    Outcome::Success
                } else {
                    Outcome::VerificationFailed(format!("collar identities violated for j in {failed:?}"))
                })
            }
            Job::Solve(s) => {
                let (_, converged) = run_solve_setup(s, out)?;
                Ok(if converged { Outcome::Success } else { Outcome::NotConverged("residual above tolerance".into()) })
            }
            Job::Mms { op, case, a, b, spacings, stencil_k, opts } => {
                let study = mms_convergence(op, *case, *a, *b, spacings, *stencil_k, *opts)?;
                out.write("mms.csv", &study.to_csv())?;
                out.write_json("mms.json", &study)?;
                Ok(if !study.rows.iter().all(|r| r.converged) {
                    Outcome::NotConverged("a refinement level hit the iteration cap".into())
                } else if !study.strictly_decreasing() {
                    Outcome::VerificationFailed("sup errors do not decrease under refinement".into())
                } else {
                    Outcome::Success
                })
            }
            Job::Approx { op, setup, grid, opts, mus, source, case } => {
                let Some(report) = run_recession_setup(op, setup, seed, out)? else {
                    return Ok(Outcome::NotConverged("recession estimate did not converge".into()));
                };
                let f = ScalarField::from_fn(*grid, |_| *source);
                let g = ScalarField::boundary_from_fn(*grid, |x| case.exact(x));
                let mut rows = Vec::new();
                let mut result = Ok(Outcome::Success);
                for &mu in mus {
                    match approximation_experiment(op, &report, mu, &f, &g, *opts) {
                        Ok(a) => rows.push(vec![
                            fmt_num(mu),
                            fmt_num(a.dist),
                            a.u.iterations.to_string(),
                            a.h.iterations.to_string(),
                            fmt_num(a.u.residual_sup),
                            fmt_num(a.h.residual_sup),
                        ]),
                        Err(LabError::SolveNotConverged { iterations, residual }) => {
                            result = Ok(Outcome::NotConverged(format!(
                                "mu = {mu}: residual {residual:e} after {iterations} iterations"
                            )));
                            break;
                        }
                        Err(e) => {
                            result = Err(Failure::Lab(e));
                            break;
                        }
                    }
                }
                let headers = ["mu", "dist", "u_iterations", "h_iterations", "u_residual", "h_residual"];
                out.write("approx.csv", &csv_table(&headers, &rows))?;
                result
            }
            Job::Diagnose(d) => run_diagnose(d, out),
            Job::Bmo { field, p, q, rho_max, rho_min, stride, window } => {
                let (g, converged) = produce_field(field, out)?;
                if !converged {
                    return Ok(Outcome::NotConverged("field solve did not converge".into()));
                }
                let radii = recession_lab::diagnostics::dyadic_radii(
                    rho_max.unwrap_or((g.grid.b - g.grid.a) / 2.0),
                    rho_min.unwrap_or(4.0 * g.grid.h()),
                );
                let report = jn_equivalence_check(&g, *p, *q, &radii, *stride, *window)?;
                out.write_json("bmo.json", &report)?;
                Ok(if report.passed {
                    Outcome::Success
                } else {
                    Outcome::VerificationFailed(format!("ratio {} outside [{}, {}]", report.ratio, window.0, window.1))
                })
            }
        }
    }
}

fn run_diagnose(d: &DiagnoseSetup, out: &mut Artifacts) -> Run {
    let (u, converged) = produce_field(&d.field, out)?;
    if !converged {
        return Ok(Outcome::NotConverged("field solve did not converge".into()));
    }
    let grid = u.grid;
    let norm = hessian_field(&u).norm_field(&u);
    out.write("hessian_norm.csv", &norm.to_csv())?;

    let g = if d.of_field { u.map(f64::abs) } else { norm };
    let max_g = g.values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let thresholds = lemma_thresholds(d.eta, d.mbase, max_g)?;
    let curve = distribution_function(&g, &thresholds)?;
    out.write("distribution.csv", &curve.to_csv())?;
    let lemma = lp_via_distribution(&curve, d.p, d.eta, d.mbase, lp_norm_pow(&g, d.p)?, max_g, d.window)?;
    out.write_json("lemma.json", &lemma)?;

    let sub = d.sub.map_or_else(|| SubSquare::whole(&grid), |(c, h)| SubSquare::centered(c, h));
    for (k, &m) in d.openings.iter().enumerate() {
        let mask = touching_sets(&u, m, d.side, sub)?;
        out.write(&format!("touching_{k}.csv"), &mask.to_csv())?;
        out.write(&format!("touching_{k}.rle"), &mask.to_rle())?;
    }

    let theta = theta_field(&u, &d.theta_schedule)?;
    out.write("theta.csv", &theta.to_csv())?;

    let decay_theta = theta_field(&u, &d.t_schedule)?;
    let (points, total) = decay_curve(&decay_theta, &sub);
    let rows: Vec<Vec<String>> = points.iter().map(|&(t, m)| vec![fmt_num(t), fmt_num(m)]).collect();
    out.write("decay.csv", &csv_table(&["threshold", "measure"], &rows))?;
    let (ts, ms): (Vec<f64>, Vec<f64>) = points.into_iter().filter(|&(_, m)| m > 0.0 && m < total).unzip();
    let fit = fit_power_law(&ts, &ms);
    let outcome = match &fit {
        Ok(f) => {
            out.write_json("decay.json", &json!({ "fit": f, "subsquare_measure": total }))?;
            None
        }
        Err(e) => Some(format!("decay fit unavailable: {e}")),
    };
    Ok(match (lemma.passed, outcome) {
        (false, _) => Outcome::VerificationFailed(format!(
            "dyadic-sum ratios ({}, {}) outside the window",
            lemma.lower_ratio, lemma.upper_ratio
        )),
        (true, Some(msg)) => Outcome::VerificationFailed(msg),
        (true, None) => Outcome::Success,
    })
}

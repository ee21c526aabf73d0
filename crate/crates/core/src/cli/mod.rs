//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 a
//! verification check failed.

pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::constants::{check_reference, empirical_best_constant, trace_ratio_checks, PLConstants, REFERENCE_TOL};
use crate::dual::{gamma_objective, primal_from_dual};
use crate::error::{Error, Result};
use crate::io::{coupling_csv, potentials_json, to_json, write_text};
use crate::oracle::{instance_hash, kkt_certificate, solve_cached, solve_primal_small, KktReport, OracleMethod};
use crate::problem::{DualPotentials, ProblemInstance};
use crate::solvers::{
    empirical_contraction, fmt_float, iterate_bound_check, rate_bound_check, run, theoretical_rate, Algorithm,
    BoundCheck, ConvergenceTrace, SolverConfig,
};
use crate::spectral::{coercivity_certificate, CoercivityReport};

pub use config::{RunConfig, Settings, VariantArg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Additive slack for the rate bound.
pub const RATE_SLACK: f64 = 1e-12;
/// Slack for the sup-norm iterate bounds.
pub const ITERATE_SLACK: f64 = 1e-10;
/// Tolerance below 1 accepted for the PL and error-bound ratios.
pub const RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "qot", version, about = "Dual solvers and certificates for quadratically regularized optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Regularization strength, overriding the configuration.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Allow step sizes outside the proven range.
    #[arg(long, global = true)]
    pub unsafe_step: bool,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<VariantArg>,
    /// Algorithm (gd, ca, cga); repeat for several.
    #[arg(long = "algorithm", global = true)]
    pub algorithms: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Run one solver and write potentials, coupling and trace.
    Solve,
    /// Check the PL, error-bound, rate, iterate and coercivity claims.
    Verify,
    /// Print the explicit constants.
    Constants,
    /// Run several solvers from the same start and compare contraction.
    Compare,
    /// Solve the primal problem directly on a small instance.
    Oracle,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let settings = match Settings::load(
        cli.config.as_deref(),
        cli.eps,
        cli.out_dir.as_deref(),
        cli.unsafe_step,
        cli.variant,
        cli.algorithms.clone(),
    ) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match cli.command {
        Command::Solve => cmd_solve(&settings),
        Command::Verify => cmd_verify(&settings),
        Command::Constants => cmd_constants(&settings),
        Command::Compare => cmd_compare(&settings),
        Command::Oracle => cmd_oracle(&settings),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteIterate { .. } => EXIT_SOLVER,
        Error::ReferenceNotOptimal { .. } => EXIT_CHECK,
        _ => EXIT_CONFIG,
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(&err),
        }
    };
}

fn out(settings: &Settings, name: &str) -> PathBuf {
    settings.out_dir.join(name)
}

/// Writes the partial trace of a failed run next to the other outputs.
fn solver_failure(settings: &Settings, e: &Error, name: &str) -> i32 {
    if let Error::NonFiniteIterate { trace, .. } = e {
        let _ = write_text(&out(settings, name), &trace.to_csv());
    }
    fail(e)
}

pub fn cmd_solve(settings: &Settings) -> i32 {
    let inst = tri!(settings.instance());
    let alg = tri!(settings.single_algorithm());
    let pot0 = tri!(settings.init(&inst));
    let reference = tri!(settings.reference_file(&inst));
    let mut cfg = settings.solver_config(alg);
    if let Some(r) = &reference {
        cfg = cfg.reference(r.clone());
        if let Ok(c) = settings.constants() {
            cfg = cfg.gamma(c.gamma_eps);
        }
    }
    tri!(cfg.resolved_step(inst.eps()));
    let (pot, trace) = match run(&inst, &pot0, &cfg) {
        Ok(r) => r,
        Err(e) => return solver_failure(settings, &e, "trace.csv"),
    };
    let coupling = tri!(primal_from_dual(&inst, &pot));
    tri!(write_text(&out(settings, "potentials.json"), &potentials_json(&pot)));
    tri!(write_text(&out(settings, "coupling.csv"), &coupling_csv(&coupling)));
    tri!(write_text(&out(settings, "trace.csv"), &trace.to_csv()));
    let last = trace.last().expect("trace has a row");
    println!("algorithm {alg}");
    println!("objective {}", fmt_float(last.objective));
    if let Some(g) = last.gap {
        println!("gap {}", fmt_float(g));
    }
    println!("iterations {}", trace.iterations);
    println!("converged {}", trace.converged);
    EXIT_OK
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceInfo {
    pub source: &'static str,
    pub kkt: KktReport,
}

/// Reference potentials from the configuration, or from a high-precision
/// solve, certified either way.
pub fn reference_potentials(settings: &Settings, inst: &ProblemInstance) -> Result<(DualPotentials, ReferenceInfo)> {
    if let Some(pot) = settings.reference_file(inst)? {
        check_reference(inst, &pot)?;
        let kkt = kkt_certificate(inst, &pot, REFERENCE_TOL)?;
        return Ok((pot, ReferenceInfo { source: "file", kkt }));
    }
    let rs = &settings.config.reference_solve;
    let alg = config::parse_algorithm(&rs.algorithm)?;
    let mut cfg = SolverConfig::new(alg).tol(rs.grad_tol).max_iters(rs.max_iters);
    cfg.record_trace = false;
    let (pot, _) = run(inst, &DualPotentials::zeros_for(inst), &cfg)?;
    let kkt = kkt_certificate(inst, &pot, REFERENCE_TOL)?;
    if !kkt.certified {
        return Err(Error::ReferenceNotOptimal {
            residual: kkt.foc_residual.max(kkt.marginal_residual),
            tol: REFERENCE_TOL,
        });
    }
    Ok((pot, ReferenceInfo { source: alg.name(), kkt }))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TraceChecks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pl: Option<BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bound: Option<BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_bound: Option<BoundCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterate_bounds: Option<BoundCheck>,
}

impl TraceChecks {
    fn named(&self) -> Vec<(&'static str, &BoundCheck)> {
        [
            ("pl", &self.pl),
            ("error_bound", &self.error_bound),
            ("rate_bound", &self.rate_bound),
            ("iterate_bounds", &self.iterate_bounds),
        ]
        .into_iter()
        .filter_map(|(n, c)| c.as_ref().map(|c| (n, c)))
        .collect()
    }

    pub fn pass(&self) -> bool {
        self.named().iter().all(|(_, c)| c.pass)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: Algorithm,
    pub step_size: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rate_q: f64,
    pub empirical_best_constant: Option<f64>,
    pub checks: TraceChecks,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<PLConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceInfo>,
    pub algorithms: Vec<AlgorithmReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coercivity: Option<CoercivityReport>,
}

/// Runs `alg` against the reference and evaluates the enabled trace checks.
pub fn check_algorithm(
    settings: &Settings,
    inst: &ProblemInstance,
    pot0: &DualPotentials,
    pot_star: &DualPotentials,
    consts: &PLConstants,
    alg: Algorithm,
) -> Result<(AlgorithmReport, ConvergenceTrace)> {
    let cfg = settings
        .solver_config(alg)
        .reference(pot_star.clone())
        .gamma(consts.gamma_eps);
    let (_, trace) = run(inst, pot0, &cfg)?;
    let q = theoretical_rate(inst, &cfg, pot0, consts.gamma_eps)?;
    let toggles = &settings.config.checks;
    let mut checks = TraceChecks::default();
    if toggles.pl || toggles.error_bound {
        let (pl, eb) = trace_ratio_checks(&trace, consts.gamma_eps, inst.eps(), RATIO_TOL)?;
        checks.pl = toggles.pl.then_some(pl);
        checks.error_bound = toggles.error_bound.then_some(eb);
    }
    if toggles.rate_bound {
        checks.rate_bound = Some(rate_bound_check(&trace, q, RATE_SLACK)?);
    }
    if toggles.iterate_bounds {
        checks.iterate_bounds = Some(iterate_bound_check(&trace, ITERATE_SLACK)?);
    }
    let pass = checks.pass();
    Ok((
        AlgorithmReport {
            algorithm: alg,
            step_size: trace.step_size,
            iterations: trace.iterations,
            converged: trace.converged,
            rate_q: q,
            empirical_best_constant: empirical_best_constant(&trace, inst.eps()),
            checks,
            pass,
        },
        trace,
    ))
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn cmd_verify(settings: &Settings) -> i32 {
    let consts = tri!(settings.constants());
    let inst = tri!(settings.instance());
    let algs = tri!(settings.algorithm_list());
    let pot0 = tri!(settings.init(&inst));
    for &alg in &algs {
        tri!(settings.solver_config(alg).resolved_step(inst.eps()));
    }
    let report_path = out(settings, "verify_report.json");
    let mut report = VerifyReport {
        pass: false,
        error: None,
        constants: Some(consts.clone()),
        reference: None,
        algorithms: Vec::new(),
        coercivity: None,
    };
    let (pot_star, info) = match reference_potentials(settings, &inst) {
        Ok(r) => r,
        Err(e) => {
            report.error = Some(e.to_string());
            tri!(write_text(&report_path, &to_json(&report)));
            return fail(&e);
        }
    };
    report.reference = Some(info);
    for &alg in &algs {
        let (ar, trace) = match check_algorithm(settings, &inst, &pot0, &pot_star, &consts, alg) {
            Ok(r) => r,
            Err(e) => return solver_failure(settings, &e, &format!("trace_{alg}.csv")),
        };
        tri!(write_text(&out(settings, &format!("trace_{alg}.csv")), &trace.to_csv()));
        for (name, c) in ar.checks.named() {
            println!("{alg} {name} {} ({} rows, {} violations)", pass_word(c.pass), c.checked, c.violations);
        }
        report.algorithms.push(ar);
    }
    if settings.config.checks.coercivity {
        let cert = tri!(coercivity_certificate(
            &inst,
            &pot_star,
            &pot0,
            &consts,
            settings.config.r_samples.as_deref()
        ));
        println!(
            "coercivity {} (min lambda0 {}, beta_eps {})",
            pass_word(cert.pass),
            fmt_float(cert.min_lambda0),
            fmt_float(cert.beta_eps)
        );
        report.coercivity = Some(cert);
    }
    report.pass = report.algorithms.iter().all(|a| a.pass) && report.coercivity.as_ref().is_none_or(|c| c.pass);
    tri!(write_text(&report_path, &to_json(&report)));
    println!("verify {}", pass_word(report.pass));
    if report.pass {
        EXIT_OK
    } else {
        EXIT_CHECK
    }
}

pub fn cmd_constants(settings: &Settings) -> i32 {
    let consts = tri!(settings.constants());
    print!("{}", to_json(&consts));
    EXIT_OK
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareEntry {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub converged: bool,
    /// Geometric mean of `Δ_{n+1}/Δ_n` over the trace tail.
    pub empirical_factor: Option<f64>,
    pub theoretical_q: f64,
    pub theoretical_factor: f64,
    pub within_bound: bool,
}

pub fn cmd_compare(settings: &Settings) -> i32 {
    let algs = tri!(settings.algorithm_list());
    if algs.len() < 2 {
        return fail(&Error::AlgorithmMismatch("compare needs at least two algorithms".into()));
    }
    let consts = tri!(settings.constants());
    let inst = tri!(settings.instance());
    let pot0 = tri!(settings.init(&inst));
    for &alg in &algs {
        tri!(settings.solver_config(alg).resolved_step(inst.eps()));
    }
    let (pot_star, _) = tri!(reference_potentials(settings, &inst));
    let mut traces = Vec::new();
    let mut summary = Vec::new();
    for &alg in &algs {
        let cfg = settings
            .solver_config(alg)
            .reference(pot_star.clone())
            .gamma(consts.gamma_eps);
        let (_, trace) = match run(&inst, &pot0, &cfg) {
            Ok(r) => r,
            Err(e) => return solver_failure(settings, &e, &format!("trace_{alg}.csv")),
        };
        let q = tri!(theoretical_rate(&inst, &cfg, &pot0, consts.gamma_eps));
        let emp = empirical_contraction(&trace);
        let entry = CompareEntry {
            algorithm: alg,
            iterations: trace.iterations,
            converged: trace.converged,
            empirical_factor: emp,
            theoretical_q: q,
            theoretical_factor: 1.0 - q,
            within_bound: emp.is_none_or(|e| e <= 1.0 - q),
        };
        println!(
            "{alg} empirical {} theoretical {} iterations {}",
            emp.map(fmt_float).unwrap_or_else(|| "n/a".into()),
            fmt_float(1.0 - q),
            trace.iterations
        );
        summary.push(entry);
        traces.push(trace);
    }
    tri!(write_text(&out(settings, "compare.csv"), &compare_csv(&traces)));
    tri!(write_text(&out(settings, "compare_summary.json"), &to_json(&summary)));
    EXIT_OK
}

/// `iter,gap_<alg>,...`; shorter traces leave empty fields.
pub fn compare_csv(traces: &[ConvergenceTrace]) -> String {
    let mut s = String::from("iter");
    for t in traces {
        s.push_str(&format!(",gap_{}", t.algorithm));
    }
    s.push('\n');
    let len = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    for n in 0..len {
        s.push_str(&n.to_string());
        for t in traces {
            s.push(',');
            if let Some(g) = t.rows.get(n).and_then(|r| r.gap) {
                s.push_str(&fmt_float(g));
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Serialize)]
struct OracleReport {
    hash: String,
    primal_value: f64,
    method: OracleMethod,
    tolerance_achieved: f64,
    dual_value_at_reference: Option<f64>,
}

pub fn cmd_oracle(settings: &Settings) -> i32 {
    let inst = tri!(settings.instance());
    let sol = match settings.oracle_cache() {
        Some(dir) => tri!(solve_cached(&inst, &dir)),
        None => tri!(solve_primal_small(&inst)),
    };
    let dual_value = match tri!(settings.reference_file(&inst)) {
        Some(r) => Some(tri!(gamma_objective(&inst, &r))),
        None => None,
    };
    let report = OracleReport {
        hash: instance_hash(&inst),
        primal_value: sol.primal_value,
        method: sol.method,
        tolerance_achieved: sol.tolerance_achieved,
        dual_value_at_reference: dual_value,
    };
    tri!(write_text(&out(settings, "oracle.json"), &to_json(&report)));
    tri!(write_text(&out(settings, "oracle_coupling.csv"), &coupling_csv(&sol.coupling)));
    println!("primal_value {}", fmt_float(sol.primal_value));
    println!("method {}", serde_json::to_string(&sol.method).unwrap_or_default().trim_matches('"'));
    EXIT_OK
}

//! Gradient ascent, coordinate ascent and coordinate gradient ascent on the
//! dual objective, with per-iteration traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constants::pl_ratio_from_parts;
use crate::dual::{gamma_gradient, gamma_objective, gradient_l2_norm, oplus_l2_distance, oplus_sup_distance};
use crate::error::{Error, Result};
use crate::problem::{DualPotentials, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GradientAscent,
    CoordinateAscent,
    CoordinateGradientAscent,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::GradientAscent,
        Algorithm::CoordinateAscent,
        Algorithm::CoordinateGradientAscent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GradientAscent => "gradient_ascent",
            Algorithm::CoordinateAscent => "coordinate_ascent",
            Algorithm::CoordinateGradientAscent => "coordinate_gradient_ascent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gradient_ascent" | "gd" => Some(Algorithm::GradientAscent),
            "coordinate_ascent" | "ca" => Some(Algorithm::CoordinateAscent),
            "coordinate_gradient_ascent" | "cga" => Some(Algorithm::CoordinateGradientAscent),
            _ => None,
        }
    }

    /// Exclusive upper bound on the step size, or `None` for coordinate ascent.
    pub fn step_bound(self, eps: f64) -> Option<f64> {
        match self {
            Algorithm::GradientAscent => Some(eps),
            Algorithm::CoordinateGradientAscent => Some(eps / std::f64::consts::SQRT_2),
            Algorithm::CoordinateAscent => None,
        }
    }

    /// The step used when none is configured: `eps / 2`.
    pub fn default_step(self, eps: f64) -> Option<f64> {
        self.step_bound(eps).map(|_| eps / 2.0)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop once the gradient norm is at most this. `None` means
    /// `1e-10 * max(1, |Γ(start)|)`.
    pub grad_tol: Option<f64>,
    pub record_trace: bool,
    pub reference: Option<DualPotentials>,
    /// PL constant used for the `pl_ratio` column.
    pub gamma_eps: Option<f64>,
    /// Accept step sizes outside the proven range.
    pub unsafe_step: bool,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            step_size: None,
            max_iters: DEFAULT_MAX_ITERS,
            grad_tol: None,
            record_trace: true,
            reference: None,
            gamma_eps: None,
            unsafe_step: false,
        }
    }

    pub fn step(mut self, eta: f64) -> Self {
        self.step_size = Some(eta);
        self
    }

    pub fn max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.grad_tol = Some(tol);
        self
    }

    pub fn reference(mut self, pot: DualPotentials) -> Self {
        self.reference = Some(pot);
        self
    }

    pub fn gamma(mut self, gamma_eps: f64) -> Self {
        self.gamma_eps = Some(gamma_eps);
        self
    }

    /// Validated step size for the explicit schemes.
    pub fn resolved_step(&self, eps: f64) -> Result<f64> {
        let Some(bound) = self.algorithm.step_bound(eps) else {
            return Ok(0.0);
        };
        let step = self
            .step_size
            .or_else(|| self.algorithm.default_step(eps))
            .ok_or(Error::MissingStepSize(self.algorithm.name()))?;
        let rule = match self.algorithm {
            Algorithm::GradientAscent => "gradient ascent needs 0 < eta < eps",
            _ => "coordinate gradient ascent needs 0 < eta < eps/sqrt(2)",
        };
        if !(step > 0.0 && step.is_finite()) || (!self.unsafe_step && step >= bound) {
            return Err(Error::StepSizeOutOfRange { step, bound, rule });
        }
        Ok(step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_l2: f64,
    /// `Γ(reference) − Γ(iterate)`.
    pub gap: Option<f64>,
    pub sup_dist: Option<f64>,
    pub l2_dist: Option<f64>,
    pub pl_ratio: Option<f64>,
    /// `‖f_n − f*‖∞` and `‖g_n − g*‖∞` against the shift-aligned reference.
    pub f_sup_err: Option<f64>,
    pub g_sup_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub algorithm: Algorithm,
    pub step_size: Option<f64>,
    pub rows: Vec<TraceRow>,
    /// The gradient tolerance was reached.
    pub converged: bool,
    /// Number of completed updates.
    pub iterations: usize,
    /// The reference after shift alignment, when one was given.
    pub aligned_reference: Option<DualPotentials>,
}

pub const TRACE_HEADER: &str = "iter,objective,grad_l2,gap,sup_dist,l2_dist,pl_ratio";

pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl ConvergenceTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iter,
                fmt_float(r.objective),
                fmt_float(r.grad_l2),
                fmt_opt(r.gap),
                fmt_opt(r.sup_dist),
                fmt_opt(r.l2_dist),
                fmt_opt(r.pl_ratio),
            );
        }
        out
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Shift of the reference minimizing `‖g0 − (g* − a)‖∞`.
pub fn align_reference(reference: &DualPotentials, g0: &[f64]) -> DualPotentials {
    let (lo, hi) = g0
        .iter()
        .zip(&reference.g)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    // g* − a with a = −(lo + hi)/2 centers the difference
    reference.shifted(-0.5 * (lo + hi))
}

fn sup_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Recorder<'a> {
    inst: &'a ProblemInstance,
    config: &'a SolverConfig,
    reference: Option<(DualPotentials, f64)>,
    aligned: Option<DualPotentials>,
    rows: Vec<TraceRow>,
    tol: f64,
}

impl<'a> Recorder<'a> {
    fn new(inst: &'a ProblemInstance, config: &'a SolverConfig, start: &DualPotentials, g_align: &[f64]) -> Result<Self> {
        start.check_dims(inst)?;
        let reference = match &config.reference {
            Some(r) => {
                r.check_dims(inst)?;
                Some((r.clone(), gamma_objective(inst, r)?))
            }
            None => None,
        };
        let aligned = reference.as_ref().map(|(r, _)| align_reference(r, g_align));
        let tol = config
            .grad_tol
            .unwrap_or_else(|| 1e-10 * gamma_objective(inst, start).map(f64::abs).unwrap_or(1.0).max(1.0));
        Ok(Self {
            inst,
            config,
            reference,
            aligned,
            rows: Vec::new(),
            tol,
        })
    }

    /// Records row `iter` and returns its gradient norm.
    fn record(&mut self, iter: usize, pot: &DualPotentials) -> Result<f64> {
        let objective = gamma_objective(self.inst, pot)?;
        let grad = gamma_gradient(self.inst, pot)?;
        let grad_l2 = gradient_l2_norm(self.inst, &grad);
        if !objective.is_finite() || !grad_l2.is_finite() || !pot.is_finite() {
            return Err(self.non_finite(iter));
        }
        if !self.config.record_trace {
            return Ok(grad_l2);
        }
        let mut row = TraceRow {
            iter,
            objective,
            grad_l2,
            gap: None,
            sup_dist: None,
            l2_dist: None,
            pl_ratio: None,
            f_sup_err: None,
            g_sup_err: None,
        };
        if let Some((r, r_obj)) = &self.reference {
            let gap = r_obj - objective;
            let sup = oplus_sup_distance(pot, r);
            row.gap = Some(gap);
            row.sup_dist = Some(sup);
            row.l2_dist = Some(oplus_l2_distance(self.inst, pot, r));
            row.pl_ratio = self
                .config
                .gamma_eps
                .map(|gam| pl_ratio_from_parts(grad_l2, gam, sup, self.inst.eps(), gap));
        }
        if let Some(a) = &self.aligned {
            row.f_sup_err = Some(sup_err(&pot.f, &a.f));
            row.g_sup_err = Some(sup_err(&pot.g, &a.g));
        }
        self.rows.push(row);
        Ok(grad_l2)
    }

    fn non_finite(&mut self, iteration: usize) -> Error {
        Error::NonFiniteIterate {
            iteration,
            trace: Box::new(self.take_trace(false, iteration, None)),
        }
    }

    fn take_trace(&mut self, converged: bool, iterations: usize, step: Option<f64>) -> ConvergenceTrace {
        ConvergenceTrace {
            algorithm: self.config.algorithm,
            step_size: step,
            rows: std::mem::take(&mut self.rows),
            converged,
            iterations,
            aligned_reference: self.aligned.clone(),
        }
    }
}

fn expect_algorithm(config: &SolverConfig, algorithm: Algorithm) -> Result<()> {
    if config.algorithm != algorithm {
        return Err(Error::AlgorithmMismatch(format!(
            "configuration is for {} but {} was requested",
            config.algorithm, algorithm
        )));
    }
    Ok(())
}

/// `(f, g) ← (f, g) + η DΓ(f, g)`.
pub fn gradient_ascent_run(
    inst: &ProblemInstance,
    pot0: &DualPotentials,
    config: &SolverConfig,
) -> Result<(DualPotentials, ConvergenceTrace)> {
    expect_algorithm(config, Algorithm::GradientAscent)?;
    let eta = config.resolved_step(inst.eps())?;
    let mut rec = Recorder::new(inst, config, pot0, &pot0.g)?;
    let mut pot = pot0.clone();
    for n in 0..=config.max_iters {
        let gnorm = rec.record(n, &pot)?;
        if gnorm <= rec.tol {
            return Ok((pot, rec.take_trace(true, n, Some(eta))));
        }
        if n == config.max_iters {
            break;
        }
        let grad = gamma_gradient(inst, &pot)?;
        for (x, d) in pot.f.iter_mut().zip(&grad.u) {
            *x += eta * d;
        }
        for (x, d) in pot.g.iter_mut().zip(&grad.v) {
            *x += eta * d;
        }
        if !pot.is_finite() {
            return Err(rec.non_finite(n + 1));
        }
    }
    Ok((pot, rec.take_trace(false, config.max_iters, Some(eta))))
}

/// Root of `t ↦ Σ_j w_j (t − b_j)₊ = eps`, computed exactly by sorting the
/// breakpoints and sweeping the linear pieces.
pub fn solve_1d_foc(breakpoints: &[f64], weights: &[f64], eps: f64) -> Result<f64> {
    if breakpoints.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} breakpoints but {} weights",
            breakpoints.len(),
            weights.len()
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    let mut order: Vec<usize> = (0..breakpoints.len()).filter(|&k| weights[k] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::ZeroWeights);
    }
    order.sort_by(|&a, &b| breakpoints[a].total_cmp(&breakpoints[b]));
    let (mut w_act, mut s_act) = (0.0, 0.0);
    for (pos, &k) in order.iter().enumerate() {
        w_act += weights[k];
        s_act += weights[k] * breakpoints[k];
        let t = (eps + s_act) / w_act;
        match order.get(pos + 1) {
            Some(&next) if t > breakpoints[next] => continue,
            _ => return Ok(t),
        }
    }
    unreachable!("the last piece always returns")
}

fn best_response_f(inst: &ProblemInstance, g: &[f64], f: &mut [f64]) -> Result<()> {
    let c = inst.cost();
    let mut b = vec![0.0; inst.m()];
    for (i, fi) in f.iter_mut().enumerate() {
        for (j, bj) in b.iter_mut().enumerate() {
            *bj = c[[i, j]] - g[j];
        }
        *fi = solve_1d_foc(&b, inst.qw(), inst.eps())?;
    }
    Ok(())
}

fn best_response_g(inst: &ProblemInstance, f: &[f64], g: &mut [f64]) -> Result<()> {
    let c = inst.cost();
    let mut b = vec![0.0; inst.n()];
    for (j, gj) in g.iter_mut().enumerate() {
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = c[[i, j]] - f[i];
        }
        *gj = solve_1d_foc(&b, inst.pw(), inst.eps())?;
    }
    Ok(())
}

/// Alternating exact maximization. Row `n` of the trace holds `(f_n, g_n)`
/// where `f_n` maximizes `Γ(·, g_n)`; iteration `n + 1` updates `g` against
/// `f_n` and then `f` against the new `g`.
pub fn coordinate_ascent_run(
    inst: &ProblemInstance,
    g0: &[f64],
    config: &SolverConfig,
) -> Result<(DualPotentials, ConvergenceTrace)> {
    expect_algorithm(config, Algorithm::CoordinateAscent)?;
    let mut pot = DualPotentials::new(vec![0.0; inst.n()], g0.to_vec());
    pot.check_dims(inst)?;
    if !pot.is_finite() {
        return Err(Error::NonFiniteIterate {
            iteration: 0,
            trace: Box::new(ConvergenceTrace {
                algorithm: Algorithm::CoordinateAscent,
                step_size: None,
                rows: vec![],
                converged: false,
                iterations: 0,
                aligned_reference: None,
            }),
        });
    }
    best_response_f(inst, &pot.g, &mut pot.f)?;
    let mut rec = Recorder::new(inst, config, &pot, g0)?;
    for n in 0..=config.max_iters {
        let gnorm = rec.record(n, &pot)?;
        if gnorm <= rec.tol {
            return Ok((pot, rec.take_trace(true, n, None)));
        }
        if n == config.max_iters {
            break;
        }
        let f_prev = pot.f.clone();
        best_response_g(inst, &f_prev, &mut pot.g)?;
        best_response_f(inst, &pot.g, &mut pot.f)?;
        if !pot.is_finite() {
            return Err(rec.non_finite(n + 1));
        }
    }
    Ok((pot, rec.take_trace(false, config.max_iters, None)))
}

/// Gauss–Seidel gradient steps: `f ← f + η D₁Γ(f, g)`, then
/// `g ← g + η D₂Γ(f_new, g)`.
pub fn coordinate_gradient_ascent_run(
    inst: &ProblemInstance,
    pot0: &DualPotentials,
    config: &SolverConfig,
) -> Result<(DualPotentials, ConvergenceTrace)> {
    expect_algorithm(config, Algorithm::CoordinateGradientAscent)?;
    let eta = config.resolved_step(inst.eps())?;
    let mut rec = Recorder::new(inst, config, pot0, &pot0.g)?;
    let mut pot = pot0.clone();
    for n in 0..=config.max_iters {
        let gnorm = rec.record(n, &pot)?;
        if gnorm <= rec.tol {
            return Ok((pot, rec.take_trace(true, n, Some(eta))));
        }
        if n == config.max_iters {
            break;
        }
        let du = gamma_gradient(inst, &pot)?.u;
        for (x, d) in pot.f.iter_mut().zip(&du) {
            *x += eta * d;
        }
        let dv = gamma_gradient(inst, &pot)?.v;
        for (x, d) in pot.g.iter_mut().zip(&dv) {
            *x += eta * d;
        }
        if !pot.is_finite() {
            return Err(rec.non_finite(n + 1));
        }
    }
    Ok((pot, rec.take_trace(false, config.max_iters, Some(eta))))
}

/// Dispatches on `config.algorithm`; coordinate ascent starts from `pot0.g`.
pub fn run(
    inst: &ProblemInstance,
    pot0: &DualPotentials,
    config: &SolverConfig,
) -> Result<(DualPotentials, ConvergenceTrace)> {
    match config.algorithm {
        Algorithm::GradientAscent => gradient_ascent_run(inst, pot0, config),
        Algorithm::CoordinateAscent => coordinate_ascent_run(inst, &pot0.g, config),
        Algorithm::CoordinateGradientAscent => coordinate_gradient_ascent_run(inst, pot0, config),
    }
}

/// `inf_a ‖g0 − g* + a‖∞ = (max d − min d) / 2` with `d = g0 − g*`.
pub fn shift_free_sup(g0: &[f64], g_star: &[f64]) -> f64 {
    let (lo, hi) = g0
        .iter()
        .zip(g_star)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    0.5 * (hi - lo)
}

/// Contraction factor `q` with `Δ_n ≤ (1 − q)^n Δ_0`.
///
/// `start` is the initial pair for the explicit schemes; coordinate ascent
/// only reads `start.g`.
pub fn theoretical_rate(inst: &ProblemInstance, config: &SolverConfig, start: &DualPotentials, gamma_eps: f64) -> Result<f64> {
    let reference = config.reference.as_ref().ok_or(Error::MissingReference)?;
    let eps = inst.eps();
    let q = match config.algorithm {
        Algorithm::GradientAscent => {
            let eta = config.resolved_step(eps)?;
            let big_m = (2.0 * oplus_sup_distance(start, reference)).max(eps);
            eta * (1.0 - eta / eps) / (gamma_eps * big_m)
        }
        Algorithm::CoordinateAscent => {
            let big_m = (2.0 * shift_free_sup(&start.g, &reference.g)).max(eps);
            eps / (2.0 * gamma_eps * big_m)
        }
        Algorithm::CoordinateGradientAscent => {
            let eta = config.resolved_step(eps)?;
            let big_m = (2.0 * oplus_sup_distance(start, reference)).max(eps);
            eta * (1.0 - eta / (2.0 * eps)) / (2.0 * gamma_eps * big_m)
        }
    };
    Ok(q)
}

/// Tally of a per-row inequality along a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub checked: usize,
    pub violations: usize,
    /// Largest amount by which a row exceeded its bound; negative when every
    /// row had room to spare.
    pub worst_excess: f64,
    pub first_violation: Option<usize>,
}

impl BoundCheck {
    fn new() -> Self {
        Self {
            pass: true,
            checked: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            first_violation: None,
        }
    }

    /// Records `lhs ≤ rhs + slack` at trace row `iter`.
    pub(crate) fn push(&mut self, iter: usize, lhs: f64, rhs: f64, slack: f64) {
        self.checked += 1;
        let excess = lhs - rhs;
        self.worst_excess = self.worst_excess.max(excess);
        if !(excess <= slack) {
            self.violations += 1;
            self.pass = false;
            self.first_violation.get_or_insert(iter);
        }
    }
}

impl Default for BoundCheck {
    fn default() -> Self {
        Self::new()
    }
}

/// `Δ_n ≤ (1 − q)^n Δ_0 + slack` at every row with a gap.
pub fn rate_bound_check(trace: &ConvergenceTrace, q: f64, slack: f64) -> Result<BoundCheck> {
    let delta0 = trace.rows.first().and_then(|r| r.gap).ok_or(Error::MissingReference)?;
    let mut out = BoundCheck::new();
    for r in &trace.rows {
        let gap = r.gap.ok_or(Error::MissingReference)?;
        out.push(r.iter, gap, (1.0 - q).powi(r.iter as i32) * delta0, slack);
    }
    Ok(out)
}

/// The sup-norm iterate bounds for the trace's algorithm:
/// gradient ascent stays within twice the initial `⊕` distance; coordinate
/// ascent satisfies `‖g_{n+1} − g*‖ ≤ ‖f_n − f*‖ ≤ ‖g_n − g*‖`; coordinate
/// gradient ascent has `max(‖f_n − f*‖, ‖g_n − g*‖)` nonincreasing.
pub fn iterate_bound_check(trace: &ConvergenceTrace, slack: f64) -> Result<BoundCheck> {
    let mut out = BoundCheck::new();
    let errs = |r: &TraceRow| -> Result<(f64, f64)> {
        Ok((r.f_sup_err.ok_or(Error::MissingReference)?, r.g_sup_err.ok_or(Error::MissingReference)?))
    };
    match trace.algorithm {
        Algorithm::GradientAscent => {
            let first = trace.rows.first().and_then(|r| r.sup_dist).ok_or(Error::MissingReference)?;
            for r in trace.rows.iter().skip(1) {
                out.push(r.iter, r.sup_dist.ok_or(Error::MissingReference)?, 2.0 * first, slack);
            }
        }
        Algorithm::CoordinateAscent => {
            for (k, r) in trace.rows.iter().enumerate() {
                let (fe, ge) = errs(r)?;
                out.push(r.iter, fe, ge, slack);
                if let Some(next) = trace.rows.get(k + 1) {
                    out.push(next.iter, errs(next)?.1, fe, slack);
                }
            }
        }
        Algorithm::CoordinateGradientAscent => {
            for w in trace.rows.windows(2) {
                let (f0, g0) = errs(&w[0])?;
                let (f1, g1) = errs(&w[1])?;
                out.push(w[1].iter, f1.max(g1), f0.max(g0), slack);
            }
        }
    }
    Ok(out)
}

/// Gaps at or below this are treated as numerically zero when estimating
/// contraction factors.
pub const CONTRACTION_GAP_FLOOR: f64 = 1e-12;

/// Geometric mean of `Δ_{n+1}/Δ_n` over the last quarter (at least 10 steps)
/// of the rows whose gap is above [`CONTRACTION_GAP_FLOOR`].
pub fn empirical_contraction(trace: &ConvergenceTrace) -> Option<f64> {
    let gaps: Vec<f64> = trace
        .rows
        .iter()
        .map_while(|r| r.gap.filter(|&g| g > CONTRACTION_GAP_FLOOR))
        .collect();
    if gaps.len() < 2 {
        return None;
    }
    let steps = gaps.len() - 1;
    let tail = (steps.div_ceil(4)).max(10).min(steps);
    let start = gaps.len() - 1 - tail;
    Some((gaps[start + tail] / gaps[start]).powf(1.0 / tail as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_atom() -> ProblemInstance {
        ProblemInstance::from_weights(vec![1.0], vec![1.0], array![[0.0]], 1.0).unwrap()
    }

    fn two_by_two() -> ProblemInstance {
        ProblemInstance::from_weights(vec![0.5, 0.5], vec![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], 1.0).unwrap()
    }

    fn zeros(n: usize, m: usize) -> DualPotentials {
        DualPotentials::zeros(n, m)
    }

    #[test]
    fn foc_examples() {
        assert_eq!(solve_1d_foc(&[0.0], &[1.0], 1.0).unwrap(), 1.0);
        assert_eq!(solve_1d_foc(&[0.0, 2.0], &[0.5, 0.5], 1.0).unwrap(), 2.0);
        // 0.5 * 1.5 + 0.5 * 0.5 = 1
        assert_eq!(solve_1d_foc(&[0.0, 1.0], &[0.5, 0.5], 1.0).unwrap(), 1.5);
        assert_eq!(solve_1d_foc(&[1.0, 0.0], &[0.5, 0.5], 1.0).unwrap(), 1.5);
        assert!(matches!(solve_1d_foc(&[0.0], &[0.0], 1.0), Err(Error::ZeroWeights)));
    }

    #[test]
    fn gd_one_step() {
        let cfg = SolverConfig::new(Algorithm::GradientAscent).step(0.5);
        let (pot, trace) = gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg).unwrap();
        assert_eq!(pot, DualPotentials::new(vec![0.5], vec![0.5]));
        assert!(trace.converged);
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.rows[1].grad_l2, 0.0);
    }

    #[test]
    fn gd_fixed_point() {
        let opt = DualPotentials::new(vec![0.75, 0.75], vec![0.75, 0.75]);
        let cfg = SolverConfig::new(Algorithm::GradientAscent).step(0.5);
        let (_, trace) = gradient_ascent_run(&two_by_two(), &opt, &cfg).unwrap();
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.rows.len(), 1);
    }

    #[test]
    fn gd_two_by_two() {
        let cfg = SolverConfig::new(Algorithm::GradientAscent).step(0.5).max_iters(500);
        let (pot, trace) = gradient_ascent_run(&two_by_two(), &zeros(2, 2), &cfg).unwrap();
        assert!(trace.iterations <= 500);
        assert!((pot.f[0] + pot.g[0] - 1.5).abs() < 1e-6);
        assert!((pot.f[0] + pot.g[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn ca_examples() {
        let cfg = SolverConfig::new(Algorithm::CoordinateAscent);
        let (pot, trace) = coordinate_ascent_run(&one_atom(), &[0.0], &cfg).unwrap();
        assert_eq!(pot, DualPotentials::new(vec![1.0], vec![0.0]));
        assert_eq!(trace.iterations, 0);

        let cfg = SolverConfig::new(Algorithm::CoordinateAscent).max_iters(0);
        let (pot, _) = coordinate_ascent_run(&two_by_two(), &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(pot.f, vec![1.5, 1.5]);

        let cfg = SolverConfig::new(Algorithm::CoordinateAscent).max_iters(50).tol(1e-13);
        let (pot, _) = coordinate_ascent_run(&two_by_two(), &[0.0, 0.0], &cfg).unwrap();
        assert!((pot.f[0] + pot.g[0] - 1.5).abs() < 1e-10);
        assert!((pot.f[1] + pot.g[0] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn cga_examples() {
        let cfg = SolverConfig::new(Algorithm::CoordinateGradientAscent).step(0.5).max_iters(1);
        let (pot, _) = coordinate_gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg).unwrap();
        assert_eq!(pot, DualPotentials::new(vec![0.5], vec![0.25]));
        let cfg = SolverConfig::new(Algorithm::CoordinateGradientAscent).step(0.5).max_iters(2);
        let (pot, _) = coordinate_gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg).unwrap();
        assert_eq!(pot.f, vec![0.625]);
        let cfg = SolverConfig::new(Algorithm::CoordinateGradientAscent).step(0.5);
        let (pot, trace) = coordinate_gradient_ascent_run(&two_by_two(), &zeros(2, 2), &cfg).unwrap();
        assert!(trace.converged);
        assert!((pot.f[0] + pot.g[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn step_validation() {
        let cfg = SolverConfig::new(Algorithm::GradientAscent).step(1.0);
        assert!(matches!(
            gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg),
            Err(Error::StepSizeOutOfRange { .. })
        ));
        let cfg = SolverConfig::new(Algorithm::CoordinateGradientAscent).step(0.75);
        assert!(matches!(
            coordinate_gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg),
            Err(Error::StepSizeOutOfRange { .. })
        ));
        let mut cfg = SolverConfig::new(Algorithm::GradientAscent).step(1.0);
        cfg.unsafe_step = true;
        assert!(gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg).is_ok());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = SolverConfig::new(Algorithm::GradientAscent).step(1e300).max_iters(10);
        cfg.unsafe_step = true;
        let err = gradient_ascent_run(&two_by_two(), &zeros(2, 2), &cfg).unwrap_err();
        match err {
            Error::NonFiniteIterate { trace, .. } => assert!(!trace.rows.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rates() {
        let star = DualPotentials::new(vec![1.0], vec![0.0]);
        let cfg = SolverConfig::new(Algorithm::GradientAscent).step(0.5).reference(star.clone());
        let q = theoretical_rate(&one_atom(), &cfg, &zeros(1, 1), 16.0).unwrap();
        assert_eq!(q, 0.25 / (16.0 * 2.0));
        let cfg = SolverConfig::new(Algorithm::CoordinateAscent).reference(star.clone());
        let q = theoretical_rate(&one_atom(), &cfg, &star, 16.0).unwrap();
        assert_eq!(q, 1.0 / 32.0);
        let cfg = SolverConfig::new(Algorithm::CoordinateAscent);
        assert!(matches!(theoretical_rate(&one_atom(), &cfg, &star, 16.0), Err(Error::MissingReference)));
    }

    #[test]
    fn alignment_centers_difference() {
        let r = DualPotentials::new(vec![0.0], vec![0.0, 1.0]);
        let a = align_reference(&r, &[3.0, 2.0]);
        // d = (3, 1) -> shift by 2 puts g* at (2, 3)
        assert_eq!(a.g, vec![2.0, 3.0]);
        assert_eq!(shift_free_sup(&[3.0, 2.0], &r.g), 1.0);
    }

    #[test]
    fn trace_csv() {
        let cfg = SolverConfig::new(Algorithm::GradientAscent)
            .step(0.5)
            .reference(DualPotentials::new(vec![1.0], vec![0.0]))
            .gamma(16.0);
        let (_, trace) = gradient_ascent_run(&one_atom(), &zeros(1, 1), &cfg).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(",inf"));
    }
}

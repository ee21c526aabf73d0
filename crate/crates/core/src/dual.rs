//! The dual objective, its gradient, the primal-dual map and the
//! interpolation path between two pairs of potentials.
//!
//! Every sum is weighted by `p`, `q` or `p ⊗ q`. Row-local sums run in index
//! order and the per-row results are combined by pairwise summation, so all
//! values are reproducible bit for bit.

use crate::error::{Error, Result};
use crate::problem::{Coupling, DualPotentials, ProblemInstance};

/// Candidates whose marginals are off by more than this are flagged as
/// infeasible by [`duality_gap`].
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn weighted_sum(w: &[f64], x: &[f64]) -> f64 {
    let terms: Vec<f64> = w.iter().zip(x).map(|(a, b)| a * b).collect();
    pairwise_sum(&terms)
}

#[inline]
fn pos(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Gradient blocks `(D_f Γ, D_g Γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn gamma_objective(inst: &ProblemInstance, pot: &DualPotentials) -> Result<f64> {
    pot.check_dims(inst)?;
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let rows: Vec<f64> = (0..inst.n())
        .map(|i| {
            let mut s = 0.0;
            for j in 0..inst.m() {
                let t = pos(pot.f[i] + pot.g[j] - c[[i, j]]);
                s += q[j] * t * t;
            }
            p[i] * s
        })
        .collect();
    let penalty = pairwise_sum(&rows) / (2.0 * eps);
    Ok(weighted_sum(p, &pot.f) + weighted_sum(q, &pot.g) - penalty)
}

pub fn gamma_gradient(inst: &ProblemInstance, pot: &DualPotentials) -> Result<Gradient> {
    pot.check_dims(inst)?;
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let (n, m) = (inst.n(), inst.m());
    let u = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..m {
                s += q[j] * pos(pot.f[i] + pot.g[j] - c[[i, j]]);
            }
            1.0 - s / eps
        })
        .collect();
    let v = (0..m)
        .map(|j| {
            let mut s = 0.0;
            for i in 0..n {
                s += p[i] * pos(pot.f[i] + pot.g[j] - c[[i, j]]);
            }
            1.0 - s / eps
        })
        .collect();
    Ok(Gradient { u, v })
}

/// `sqrt(Σ p u² + Σ q v²)`.
pub fn gradient_l2_norm(inst: &ProblemInstance, grad: &Gradient) -> f64 {
    gradient_l2_norm_sq(inst, grad).sqrt()
}

pub fn gradient_l2_norm_sq(inst: &ProblemInstance, grad: &Gradient) -> f64 {
    let u2: Vec<f64> = grad.u.iter().map(|x| x * x).collect();
    let v2: Vec<f64> = grad.v.iter().map(|x| x * x).collect();
    weighted_sum(inst.pw(), &u2) + weighted_sum(inst.qw(), &v2)
}

/// `‖DΓ‖² − I₀²` with `I₀ = 1 − (1/ε) Σ p q (f⊕g − c)₊`, clamped at zero.
pub fn phi_gradient_norm_sq(inst: &ProblemInstance, pot: &DualPotentials) -> Result<f64> {
    let grad = gamma_gradient(inst, pot)?;
    let norm_sq = gradient_l2_norm_sq(inst, &grad);
    // Σ_i p_i u_i = 1 − (1/ε) Σ p q s₊ = I₀
    let i0 = weighted_sum(inst.pw(), &grad.u);
    Ok((norm_sq - i0 * i0).max(0.0))
}

/// `π_ij = p_i q_j (f_i + g_j − C_ij)₊ / ε`.
pub fn primal_from_dual(inst: &ProblemInstance, pot: &DualPotentials) -> Result<Coupling> {
    pot.check_dims(inst)?;
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let mut entries = Vec::new();
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            let s = pot.f[i] + pot.g[j] - c[[i, j]];
            if s > 0.0 {
                let mass = p[i] * q[j] * s / eps;
                if mass > 0.0 {
                    entries.push((i, j, mass));
                }
            }
        }
    }
    Ok(Coupling {
        n: inst.n(),
        m: inst.m(),
        entries,
    })
}

/// `(max_i |row_i − p_i|, max_j |col_j − q_j|)`.
pub fn marginal_residual(inst: &ProblemInstance, coupling: &Coupling) -> (f64, f64) {
    let r = coupling.row_sums();
    let c = coupling.col_sums();
    let dr = r.iter().zip(inst.pw()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dc = c.iter().zip(inst.qw()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (dr, dc)
}

/// `Σ C π + (ε/2) Σ π² / (p q)`.
pub fn primal_objective(inst: &ProblemInstance, coupling: &Coupling) -> Result<f64> {
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    if coupling.n != inst.n() || coupling.m != inst.m() {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {}x{} but the instance is {}x{}",
            coupling.n,
            coupling.m,
            inst.n(),
            inst.m()
        )));
    }
    let mut terms = Vec::with_capacity(coupling.entries.len());
    for &(i, j, v) in &coupling.entries {
        let w = p[i] * q[j];
        if w == 0.0 {
            return Err(Error::ZeroWeightCell { i, j });
        }
        terms.push(c[[i, j]] * v + 0.5 * eps * v * v / w);
    }
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    /// `|primal − Γ|`, or `+∞` when the candidate is infeasible.
    pub value: f64,
    pub feasible: bool,
    pub dual: f64,
    /// `None` for infeasible candidates.
    pub primal: Option<f64>,
    pub marginal_residual: f64,
}

/// Compares `Γ(pot)` with the primal value of its induced coupling.
pub fn duality_gap(inst: &ProblemInstance, pot: &DualPotentials) -> Result<DualityGap> {
    let dual = gamma_objective(inst, pot)?;
    let pi = primal_from_dual(inst, pot)?;
    let (dr, dc) = marginal_residual(inst, &pi);
    let res = dr.max(dc);
    if res > FEASIBILITY_TOL {
        return Ok(DualityGap {
            value: f64::INFINITY,
            feasible: false,
            dual,
            primal: None,
            marginal_residual: res,
        });
    }
    let primal = primal_objective(inst, &pi)?;
    Ok(DualityGap {
        value: (primal - dual).abs(),
        feasible: true,
        dual,
        primal: Some(primal),
        marginal_residual: res,
    })
}

/// `max |Σ_j q_j (f_i + g_j − C_ij)₊ − ε|` over rows and the analogue over
/// columns; equals `ε` times the sup norm of the gradient.
pub fn foc_residual(inst: &ProblemInstance, pot: &DualPotentials) -> Result<f64> {
    let grad = gamma_gradient(inst, pot)?;
    let sup = grad.u.iter().chain(&grad.v).map(|x| x.abs()).fold(0.0, f64::max);
    Ok(inst.eps() * sup)
}

fn diffs(a: &DualPotentials, b: &DualPotentials) -> (Vec<f64>, Vec<f64>) {
    (
        a.f.iter().zip(&b.f).map(|(x, y)| x - y).collect(),
        a.g.iter().zip(&b.g).map(|(x, y)| x - y).collect(),
    )
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `max_ij |(fA_i + gA_j) − (fB_i + gB_j)|` in `O(n + m)`.
pub fn oplus_sup_distance(a: &DualPotentials, b: &DualPotentials) -> f64 {
    let (df, dg) = diffs(a, b);
    let (flo, fhi) = min_max(&df);
    let (glo, ghi) = min_max(&dg);
    (fhi + ghi).max(-(flo + glo)).max(0.0)
}

/// `sqrt(Σ p q (Δf_i + Δg_j)²) = sqrt(Var_P Δf + Var_Q Δg + (E_P Δf + E_Q Δg)²)`.
pub fn oplus_l2_distance(inst: &ProblemInstance, a: &DualPotentials, b: &DualPotentials) -> f64 {
    let (df, dg) = diffs(a, b);
    let (p, q) = (inst.pw(), inst.qw());
    let mf = weighted_sum(p, &df);
    let mg = weighted_sum(q, &dg);
    let vf: Vec<f64> = df.iter().map(|x| (x - mf) * (x - mf)).collect();
    let vg: Vec<f64> = dg.iter().map(|x| (x - mg) * (x - mg)).collect();
    (weighted_sum(p, &vf) + weighted_sum(q, &vg) + (mf + mg) * (mf + mg)).sqrt()
}

/// `f_t = (1 − t) f* + t f` and likewise for `g`.
pub fn phi_path(pot_star: &DualPotentials, pot: &DualPotentials, t: f64) -> Result<DualPotentials> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TOutOfRange(t));
    }
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    Ok(DualPotentials::new(mix(&pot_star.f, &pot.f), mix(&pot_star.g, &pot.g)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiDerivatives {
    pub phi: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
}

/// `φ(t) = −Γ(f_t, g_t)` with
/// `φ′ = Σ p q w (1 − (s_t)₊/ε)` and `φ″ = (1/ε) Σ_{s_t ≥ 0} p q w²`,
/// where `w = (f* − f) ⊕ (g* − g)` and `s_t = f_t ⊕ g_t − c`.
pub fn phi_derivatives(
    inst: &ProblemInstance,
    pot_star: &DualPotentials,
    pot: &DualPotentials,
    t: f64,
) -> Result<PhiDerivatives> {
    pot_star.check_dims(inst)?;
    pot.check_dims(inst)?;
    let pt = phi_path(pot_star, pot, t)?;
    let phi = -gamma_objective(inst, &pt)?;
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let (dfw, dgw) = diffs(pot_star, pot);
    let mut first = Vec::with_capacity(inst.n());
    let mut second = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..inst.m() {
            let w = dfw[i] + dgw[j];
            let s = pt.f[i] + pt.g[j] - c[[i, j]];
            a += q[j] * w * (1.0 - pos(s) / eps);
            if s >= 0.0 {
                b += q[j] * w * w;
            }
        }
        first.push(p[i] * a);
        second.push(p[i] * b);
    }
    Ok(PhiDerivatives {
        phi,
        phi_prime: pairwise_sum(&first),
        phi_second: pairwise_sum(&second) / eps,
    })
}

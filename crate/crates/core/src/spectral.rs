//! The coercivity operator on the sum space and its smallest eigenvalue.
//!
//! Elements of the sum space are represented by coordinate pairs `(u, v)`
//! standing for `u ⊕ v`; the pair `(1, −1)` represents zero. All inner
//! products are taken in `L²(P ⊗ Q)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use serde::Serialize;

use crate::constants::{localization_radius, PLConstants};
use crate::dual::{oplus_l2_distance, phi_derivatives, phi_path};
use crate::error::{Error, Result};
use crate::problem::{DualPotentials, ProblemInstance};

/// Indicator of `{f_r ⊕ g_r ≥ c}` with its row and column masses.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionSets {
    pub indicator: Array2<bool>,
    /// `Q(S_{r,x_i})`.
    pub row_masses: Vec<f64>,
    /// `P(T_{r,y_j})`.
    pub col_masses: Vec<f64>,
}

impl SectionSets {
    pub fn from_indicator(indicator: Array2<bool>, p: &[f64], q: &[f64]) -> Self {
        let (n, m) = indicator.dim();
        let row_masses = (0..n)
            .map(|i| (0..m).filter(|&j| indicator[[i, j]]).map(|j| q[j]).sum())
            .collect();
        let col_masses = (0..m)
            .map(|j| (0..n).filter(|&i| indicator[[i, j]]).map(|i| p[i]).sum())
            .collect();
        Self {
            indicator,
            row_masses,
            col_masses,
        }
    }

    pub fn active_cells(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }
}

/// Sections of `{f_r ⊕ g_r ≥ c}` where `f_r = (1 − r) f* + r f`.
pub fn build_sections(inst: &ProblemInstance, pot_star: &DualPotentials, pot: &DualPotentials, r: f64) -> Result<SectionSets> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::ROutOfRange(r));
    }
    pot_star.check_dims(inst)?;
    pot.check_dims(inst)?;
    let pr = phi_path(pot_star, pot, r)?;
    let c = inst.cost();
    let ind = Array2::from_shape_fn((inst.n(), inst.m()), |(i, j)| pr.f[i] + pr.g[j] >= c[[i, j]]);
    Ok(SectionSets::from_indicator(ind, inst.pw(), inst.qw()))
}

#[derive(Debug, Clone)]
pub struct OperatorM {
    pub sections: SectionSets,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl OperatorM {
    pub fn new(sections: SectionSets, p: &[f64], q: &[f64]) -> Result<Self> {
        if sections.indicator.dim() != (p.len(), q.len()) {
            return Err(Error::DimensionMismatch(format!(
                "indicator is {:?} but weights have lengths {} and {}",
                sections.indicator.dim(),
                p.len(),
                q.len()
            )));
        }
        Ok(Self {
            sections,
            p: p.to_vec(),
            q: q.to_vec(),
        })
    }

    pub fn for_instance(inst: &ProblemInstance, sections: SectionSets) -> Result<Self> {
        Self::new(sections, inst.pw(), inst.qw())
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    fn check(&self, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != self.n() || v.len() != self.m() {
            return Err(Error::DimensionMismatch(format!(
                "vectors have lengths ({}, {}) but the operator is {}x{}",
                u.len(),
                v.len(),
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// `⟨a ⊕ b, c ⊕ d⟩ = Σ p a c + Σ q b d + (Σ p a)(Σ q d) + (Σ p c)(Σ q b)`.
pub fn h_inner(p: &[f64], q: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let dot = |w: &[f64], x: &[f64], y: &[f64]| w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum::<f64>();
    let mean = |w: &[f64], x: &[f64]| w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
    dot(p, a, c) + dot(q, b, d) + mean(p, a) * mean(q, d) + mean(p, c) * mean(q, b)
}

/// `Σ_{ind} p_i q_j (u_i + v_j)²`.
pub fn quadratic_form(op: &OperatorM, u: &[f64], v: &[f64]) -> Result<f64> {
    op.check(u, v)?;
    let ind = &op.sections.indicator;
    let mut s = 0.0;
    for i in 0..op.n() {
        let mut row = 0.0;
        for j in 0..op.m() {
            if ind[[i, j]] {
                let w = u[i] + v[j];
                row += op.q[j] * w * w;
            }
        }
        s += op.p[i] * row;
    }
    Ok(s)
}

/// `M₁ = u Q(S) + ∫_S v dQ − m/2`, `M₂ = v P(T) + ∫_T u dP − m/2` with
/// `m = ∫_{ind} u ⊕ v d(P ⊗ Q)`.
pub fn apply_m(op: &OperatorM, u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    op.check(u, v)?;
    let ind = &op.sections.indicator;
    let (n, m) = (op.n(), op.m());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            if ind[[i, j]] {
                total += op.p[i] * op.q[j] * (u[i] + v[j]);
            }
        }
    }
    let half = 0.5 * total;
    let m1 = (0..n)
        .map(|i| {
            let s: f64 = (0..m).filter(|&j| ind[[i, j]]).map(|j| op.q[j] * v[j]).sum();
            u[i] * op.sections.row_masses[i] + s - half
        })
        .collect();
    let m2 = (0..m)
        .map(|j| {
            let s: f64 = (0..n).filter(|&i| ind[[i, j]]).map(|i| op.p[i] * u[i]).sum();
            v[j] * op.sections.col_masses[j] + s - half
        })
        .collect();
    Ok((m1, m2))
}

fn gram_matrices(op: &OperatorM) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (op.n(), op.m());
    let k = n + m;
    let ind = &op.sections.indicator;
    let mut a = DMatrix::zeros(k, k);
    let mut b = DMatrix::zeros(k, k);
    for i in 0..n {
        a[(i, i)] = op.p[i] * op.sections.row_masses[i];
        b[(i, i)] = op.p[i];
    }
    for j in 0..m {
        a[(n + j, n + j)] = op.q[j] * op.sections.col_masses[j];
        b[(n + j, n + j)] = op.q[j];
    }
    for i in 0..n {
        for j in 0..m {
            let w = op.p[i] * op.q[j];
            b[(i, n + j)] = w;
            b[(n + j, i)] = w;
            if ind[[i, j]] {
                a[(i, n + j)] = w;
                a[(n + j, i)] = w;
            }
        }
    }
    (a, b)
}

/// Orthonormal basis of the Euclidean complement of `(1_n, −1_m)`, from a
/// Householder reflection mapping `e₁` onto the normalized null direction.
fn complement_basis(n: usize, m: usize) -> DMatrix<f64> {
    let k = n + m;
    let s = 1.0 / (k as f64).sqrt();
    let mut h = DVector::from_fn(k, |r, _| if r < n { s } else { -s });
    h[0] -= 1.0;
    let hh = h.dot(&h);
    let reflect = DMatrix::identity(k, k) - (&h * h.transpose()) * (2.0 / hh);
    reflect.columns(1, k - 1).into_owned()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinEigen {
    pub lambda0: f64,
    /// Representative with `‖u ⊕ v‖ = 1`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Smallest eigenvalue of the operator on the quotient space, from the
/// generalized problem `A x = λ B x` restricted to the complement of the
/// common null direction. The result is clamped to `[0, 1]`.
pub fn min_eigenvalue_h(op: &OperatorM) -> Result<MinEigen> {
    let (n, m) = (op.n(), op.m());
    if op.p.iter().chain(&op.q).any(|&w| !(w > 0.0)) {
        return Err(Error::SingularGram);
    }
    let (a, b) = gram_matrices(op);
    let v = complement_basis(n, m);
    let at = v.transpose() * &a * &v;
    let bt = v.transpose() * &b * &v;
    let chol = bt.cholesky().ok_or(Error::SingularGram)?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(Error::SingularGram)?;
    let mut c = &l_inv * at * l_inv.transpose();
    // symmetrize against rounding before the symmetric solver
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (idx, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) });
    let y = eig.eigenvectors.column(idx).into_owned();
    let x = &v * (l_inv.transpose() * y);
    let (mut u, mut w): (Vec<f64>, Vec<f64>) = (x.rows(0, n).iter().copied().collect(), x.rows(n, m).iter().copied().collect());
    let norm = h_inner(&op.p, &op.q, &u, &w, &u, &w).sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|z| *z /= norm);
        w.iter_mut().for_each(|z| *z /= norm);
    }
    Ok(MinEigen {
        lambda0: lam.clamp(0.0, 1.0),
        u,
        v: w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivitySample {
    pub r: f64,
    pub lambda0: f64,
    pub beta_eps: f64,
    pub pass: bool,
    pub phi_second: f64,
    /// `(ε/β) φ″(r)`, the bound on the squared path length.
    pub phi_bound: f64,
    pub path_l2_sq: f64,
    pub phi_bound_pass: bool,
    /// `min(row and column masses) − λ₀`.
    pub mass_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub r0: f64,
    pub samples: Vec<CoercivitySample>,
    pub min_lambda0: f64,
    pub beta_eps: f64,
    pub pass: bool,
    pub empirical: bool,
    pub note: &'static str,
}

/// `{0, r0/4, r0/2, 3r0/4, r0}`.
pub fn default_r_samples(r0: f64) -> Vec<f64> {
    (0..5).map(|k| r0 * k as f64 / 4.0).collect()
}

/// Relative slack used when comparing the `φ″` bound.
const PHI_BOUND_SLACK: f64 = 1e-9;

/// Evaluates the coercivity bound `λ₀(r) ≥ β_ε` and the path-curvature bound
/// `‖(f* − f) ⊕ (g* − g)‖² ≤ (ε/β_ε) φ″(r)` at each sample.
pub fn coercivity_certificate(
    inst: &ProblemInstance,
    pot_star: &DualPotentials,
    pot: &DualPotentials,
    consts: &PLConstants,
    r_samples: Option<&[f64]>,
) -> Result<CoercivityReport> {
    let (_, r0) = localization_radius(inst, pot, pot_star);
    let samples = match r_samples {
        Some(s) => s.to_vec(),
        None => default_r_samples(r0),
    };
    let beta = consts.beta_eps;
    let w_sq = oplus_l2_distance(inst, pot_star, pot).powi(2);
    let mut out = Vec::with_capacity(samples.len());
    for &r in &samples {
        if !(r >= 0.0 && r <= r0 * (1.0 + 1e-12)) {
            return Err(Error::RSampleOutOfRange { r, r0 });
        }
        let r = r.min(r0);
        let sections = build_sections(inst, pot_star, pot, r)?;
        let op = OperatorM::for_instance(inst, sections)?;
        let eig = min_eigenvalue_h(&op)?;
        let d = phi_derivatives(inst, pot_star, pot, r)?;
        let phi_bound = inst.eps() / beta * d.phi_second;
        let min_mass = op
            .sections
            .row_masses
            .iter()
            .chain(&op.sections.col_masses)
            .copied()
            .fold(f64::INFINITY, f64::min);
        out.push(CoercivitySample {
            r,
            lambda0: eig.lambda0,
            beta_eps: beta,
            pass: eig.lambda0 >= beta,
            phi_second: d.phi_second,
            phi_bound,
            path_l2_sq: w_sq,
            phi_bound_pass: w_sq <= phi_bound * (1.0 + PHI_BOUND_SLACK) + 1e-300,
            mass_margin: min_mass - eig.lambda0,
        });
    }
    let min_lambda0 = out.iter().map(|s| s.lambda0).fold(f64::INFINITY, f64::min);
    let pass = out.iter().all(|s| s.pass && s.phi_bound_pass);
    Ok(CoercivityReport {
        r0,
        samples: out,
        min_lambda0,
        beta_eps: beta,
        pass,
        empirical: consts.empirical,
        note: "finite-dimensional eigenproblem, exact up to rounding",
    })
}

//! Explicit PL, error-bound and coercivity constants.

use serde::Serialize;

use crate::costs::{modulus_radius, Modulus};
use crate::dual::{foc_residual, gamma_gradient, gamma_objective, gradient_l2_norm, oplus_l2_distance, oplus_sup_distance};
use crate::error::{Error, Result};
use crate::measures::GeometryConstants;
use crate::problem::{DualPotentials, ProblemInstance};
use crate::solvers::{BoundCheck, ConvergenceTrace};

/// FOC residual accepted for reference potentials.
pub const REFERENCE_TOL: f64 = 1e-8;

/// Gaps below this make the PL ratio undefined.
pub const GAP_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lipschitz,
    Modulus,
    ConnectedLipschitz,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantInputs {
    pub eps: f64,
    pub d: usize,
    pub lambda_p: f64,
    pub big_lambda_p: f64,
    pub delta_p: f64,
    pub lipschitz_l: f64,
    pub diam_omega: f64,
    pub diam_omega_prime: f64,
    /// `inf_y Q(B_radius(y))`.
    pub ball_mass: f64,
    /// The integer `N` raised to `d + 2`.
    pub segments: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PLConstants {
    pub variant: Variant,
    pub kappa: f64,
    pub alpha: f64,
    pub beta_eps: f64,
    pub gamma_eps: f64,
    /// `γ` evaluated from its expanded closed form, as a check on `4/β`.
    pub gamma_literal: f64,
    pub radius: f64,
    pub empirical: bool,
    pub inputs: ConstantInputs,
}

/// `⌈x⌉` after a relative `1e-12` downward nudge, and at least 1.
pub fn guarded_ceil(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    (x - 1e-12 * x.max(1.0)).ceil().max(1.0)
}

fn dim_check(eps: f64, d: usize) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    if d == 0 {
        return Err(Error::InvalidGeometry("dimension must be positive".into()));
    }
    Ok(())
}

struct Pieces {
    radius: f64,
    delta: f64,
    segments: f64,
    ball_mass: f64,
    c_omega: f64,
}

fn assemble(geom: &GeometryConstants, eps: f64, d: usize, variant: Variant, pc: Pieces, big_r: Option<f64>) -> PLConstants {
    let di = d as i32;
    let ratio = geom.lambda_p * geom.lambda_p / (geom.big_lambda_p * geom.big_lambda_p);
    let n_pow = pc.segments.powi(di + 2);
    let kappa = pc.delta * pc.radius.min(1.0).powi(di);
    let alpha = ratio * pc.ball_mass / (pc.c_omega * n_pow);
    let beta_eps = 0.25 * kappa * alpha;
    let gamma_eps = 4.0 / beta_eps;
    let gamma_literal = 16.0 * (pc.radius.min(1.0).powi(-di) / pc.delta) / ratio * pc.c_omega * n_pow / pc.ball_mass;
    PLConstants {
        variant,
        kappa,
        alpha,
        beta_eps,
        gamma_eps,
        gamma_literal,
        radius: pc.radius,
        empirical: geom.empirical,
        inputs: ConstantInputs {
            eps,
            d,
            lambda_p: geom.lambda_p,
            big_lambda_p: geom.big_lambda_p,
            delta_p: pc.delta,
            lipschitz_l: geom.lipschitz_l,
            diam_omega: geom.diam_omega,
            diam_omega_prime: geom.diam_omega_prime,
            ball_mass: pc.ball_mass,
            segments: pc.segments,
            big_r,
            c_omega: (variant == Variant::ConnectedLipschitz).then_some(pc.c_omega),
        },
    }
}

fn lipschitz_pieces(geom: &GeometryConstants, eps: f64, delta: f64, c_omega: f64) -> Result<Pieces> {
    let l = geom.lipschitz_l;
    let radius = eps / (8.0 * l);
    let segments = if geom.diam_omega == 0.0 {
        1.0
    } else {
        guarded_ceil(8.0 * l * geom.diam_omega / eps)
    };
    Ok(Pieces {
        radius,
        delta,
        segments,
        ball_mass: geom.ball_mass.eval(radius)?,
        c_omega,
    })
}

/// Constants for an `L`-Lipschitz cost on a convex support.
pub fn compute_pl_constants(geom: Option<&GeometryConstants>, eps: f64, d: usize) -> Result<PLConstants> {
    let geom = geom.ok_or(Error::MissingGeometry)?;
    geom.validate()?;
    dim_check(eps, d)?;
    let pc = lipschitz_pieces(geom, eps, geom.delta_p, 1.0)?;
    Ok(assemble(geom, eps, d, Variant::Lipschitz, pc, None))
}

/// `R = 1 ∨ diam(Ω) ∨ diam(Ω′)`.
pub fn default_big_r(geom: &GeometryConstants) -> f64 {
    1f64.max(geom.diam_omega).max(geom.diam_omega_prime)
}

/// Constants for a cost with modulus of continuity `ω`.
pub fn compute_pl_constants_modulus(
    geom: Option<&GeometryConstants>,
    modulus: &Modulus,
    eps: f64,
    d: usize,
    big_r: Option<f64>,
) -> Result<PLConstants> {
    let geom = geom.ok_or(Error::MissingGeometry)?;
    geom.validate()?;
    dim_check(eps, d)?;
    let big_r = big_r.unwrap_or_else(|| default_big_r(geom));
    let radius = modulus_radius(modulus, eps, big_r)?;
    let segments = if geom.diam_omega == 0.0 {
        1.0
    } else {
        guarded_ceil(geom.diam_omega / radius)
    };
    let pc = Pieces {
        radius,
        delta: geom.delta_p,
        segments,
        ball_mass: geom.ball_mass.eval(radius)?,
        c_omega: 1.0,
    };
    Ok(assemble(geom, eps, d, Variant::Modulus, pc, Some(big_r)))
}

/// Inputs for supports that are connected Lipschitz domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectedInputs {
    /// Direct value of the modified ball constant; wins over `delta_omega`.
    pub delta_p_tilde: Option<f64>,
    /// `|B_r(x) ∩ Ω| ≥ δ_Ω r^d`, giving `min(1, λ_P δ_Ω)`.
    pub delta_omega: Option<f64>,
    pub c_omega: f64,
}

pub fn delta_p_tilde(lambda_p: f64, delta_omega: f64) -> f64 {
    (lambda_p * delta_omega).min(1.0)
}

pub fn compute_pl_constants_connected(
    tilde: &ConnectedInputs,
    geom: Option<&GeometryConstants>,
    eps: f64,
    d: usize,
) -> Result<PLConstants> {
    let geom = geom.ok_or(Error::MissingGeometry)?;
    geom.validate()?;
    dim_check(eps, d)?;
    if !(tilde.c_omega >= 1.0) || !tilde.c_omega.is_finite() {
        return Err(Error::COmegaLessThanOne(tilde.c_omega));
    }
    let delta = match (tilde.delta_p_tilde, tilde.delta_omega) {
        (Some(dt), _) => dt,
        (None, Some(dom)) => delta_p_tilde(geom.lambda_p, dom),
        (None, None) => geom.delta_p,
    };
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidGeometry(format!("modified ball constant {delta} outside (0, 1]")));
    }
    let pc = lipschitz_pieces(geom, eps, delta, tilde.c_omega)?;
    Ok(assemble(geom, eps, d, Variant::ConnectedLipschitz, pc, None))
}

/// `C = ‖f*⊕g* − f⊕g‖∞` and `r₀ = min(ε/(2C), 1)`, with `r₀ = 1` when `C = 0`.
pub fn localization_radius(inst: &ProblemInstance, pot: &DualPotentials, pot_star: &DualPotentials) -> (f64, f64) {
    let c = oplus_sup_distance(pot, pot_star);
    let r0 = if c == 0.0 { 1.0 } else { (inst.eps() / (2.0 * c)).min(1.0) };
    (c, r0)
}

/// `‖DΓ‖² γ max(C, ε) / gap`, or `+∞` when the gap is below [`GAP_FLOOR`].
pub fn pl_ratio_from_parts(grad_l2: f64, gamma_eps: f64, sup_dist: f64, eps: f64, gap: f64) -> f64 {
    if gap < GAP_FLOOR {
        return f64::INFINITY;
    }
    grad_l2 * grad_l2 * gamma_eps * sup_dist.max(eps) / gap
}

/// `γ max(C, ε) ‖DΓ‖ / ‖f⊕g − f*⊕g*‖_{L²}`, or `+∞` at zero distance.
pub fn error_bound_ratio_from_parts(grad_l2: f64, gamma_eps: f64, sup_dist: f64, eps: f64, l2_dist: f64) -> f64 {
    if l2_dist == 0.0 {
        return f64::INFINITY;
    }
    gamma_eps * sup_dist.max(eps) * grad_l2 / l2_dist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlRatios {
    pub pl_ratio: f64,
    pub error_bound_ratio: f64,
    pub gap: f64,
    pub grad_l2: f64,
    pub sup_dist: f64,
    pub l2_dist: f64,
}

/// Fails with `ReferenceNotOptimal` when `pot_star` violates the
/// first-order conditions by more than [`REFERENCE_TOL`].
pub fn check_reference(inst: &ProblemInstance, pot_star: &DualPotentials) -> Result<()> {
    let residual = foc_residual(inst, pot_star)?;
    if !(residual <= REFERENCE_TOL) {
        return Err(Error::ReferenceNotOptimal {
            residual,
            tol: REFERENCE_TOL,
        });
    }
    Ok(())
}

/// Both ratios of the PL theorem at `pot`. Values at least 1 certify the
/// inequalities there.
pub fn pl_ratio(inst: &ProblemInstance, pot: &DualPotentials, pot_star: &DualPotentials, consts: &PLConstants) -> Result<PlRatios> {
    check_reference(inst, pot_star)?;
    let gap = gamma_objective(inst, pot_star)? - gamma_objective(inst, pot)?;
    let grad_l2 = gradient_l2_norm(inst, &gamma_gradient(inst, pot)?);
    let sup_dist = oplus_sup_distance(pot, pot_star);
    let l2_dist = oplus_l2_distance(inst, pot, pot_star);
    Ok(PlRatios {
        pl_ratio: pl_ratio_from_parts(grad_l2, consts.gamma_eps, sup_dist, inst.eps(), gap),
        error_bound_ratio: error_bound_ratio_from_parts(grad_l2, consts.gamma_eps, sup_dist, inst.eps(), l2_dist),
        gap,
        grad_l2,
        sup_dist,
        l2_dist,
    })
}

/// Largest observed `gap / (max(C, ε) ‖DΓ‖²)` along a trace: the smallest
/// `γ` for which the PL inequality would have held at every recorded iterate.
pub fn empirical_best_constant(trace: &ConvergenceTrace, eps: f64) -> Option<f64> {
    trace
        .rows
        .iter()
        .filter_map(|r| {
            let (gap, sup) = (r.gap?, r.sup_dist?);
            (gap > GAP_FLOOR && r.grad_l2 > 0.0).then(|| gap / (sup.max(eps) * r.grad_l2 * r.grad_l2))
        })
        .reduce(f64::max)
}

/// Gaps at or below this are skipped by [`trace_ratio_checks`].
pub const RATIO_GAP_FLOOR: f64 = 1e-13;

/// PL and error-bound ratios `≥ 1 − tol` at every trace row whose gap exceeds
/// [`RATIO_GAP_FLOOR`]. Each check records `1 − ratio` against `0`.
pub fn trace_ratio_checks(trace: &ConvergenceTrace, gamma_eps: f64, eps: f64, tol: f64) -> Result<(BoundCheck, BoundCheck)> {
    let mut pl = BoundCheck::default();
    let mut eb = BoundCheck::default();
    for r in &trace.rows {
        let (gap, sup, l2) = match (r.gap, r.sup_dist, r.l2_dist) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::MissingReference),
        };
        if gap <= RATIO_GAP_FLOOR {
            continue;
        }
        pl.push(r.iter, 1.0 - pl_ratio_from_parts(r.grad_l2, gamma_eps, sup, eps, gap), 0.0, tol);
        eb.push(r.iter, 1.0 - error_bound_ratio_from_parts(r.grad_l2, gamma_eps, sup, eps, l2), 0.0, tol);
    }
    Ok((pl, eb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::BallMass;
    use ndarray::array;

    fn ones(eps_ball: BallMass) -> GeometryConstants {
        GeometryConstants {
            lambda_p: 1.0,
            big_lambda_p: 1.0,
            delta_p: 1.0,
            diam_omega: 1.0,
            diam_omega_prime: 1.0,
            lipschitz_l: 1.0,
            ball_mass: eps_ball,
            empirical: false,
        }
    }

    #[test]
    fn all_ones_at_eps_8() {
        let c = compute_pl_constants(Some(&ones(BallMass::Constant(1.0))), 8.0, 1).unwrap();
        assert_eq!(c.gamma_eps, 16.0);
        assert_eq!(c.gamma_literal, 16.0);
        assert_eq!(c.gamma_eps * c.beta_eps, 4.0);
    }

    #[test]
    fn all_ones_at_eps_4() {
        let q0 = 0.5;
        let c = compute_pl_constants(Some(&ones(BallMass::Constant(q0))), 4.0, 1).unwrap();
        assert_eq!(c.inputs.segments, 2.0);
        assert!((c.gamma_eps - 256.0 / q0).abs() < 1e-9);
        assert!((c.gamma_literal - 256.0 / q0).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_eps() {
        let g = ones(BallMass::Constant(1.0));
        let ladder = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        let gam: Vec<f64> = ladder.iter().map(|&e| compute_pl_constants(Some(&g), e, 2).unwrap().gamma_eps).collect();
        assert!(gam.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ceiling_guard() {
        assert_eq!(guarded_ceil(2.0), 2.0);
        assert_eq!(guarded_ceil(2.0 + 1e-15), 2.0);
        assert_eq!(guarded_ceil(2.001), 3.0);
        assert_eq!(guarded_ceil(0.0), 1.0);
    }

    #[test]
    fn single_atom_diameter() {
        let mut g = ones(BallMass::Constant(1.0));
        g.diam_omega = 0.0;
        let c = compute_pl_constants(Some(&g), 1.0, 1).unwrap();
        assert_eq!(c.inputs.segments, 1.0);
    }

    #[test]
    fn missing_geometry() {
        assert!(matches!(compute_pl_constants(None, 1.0, 1), Err(Error::MissingGeometry)));
    }

    #[test]
    fn modulus_agrees_with_lipschitz() {
        let g = ones(BallMass::Constant(0.7));
        for &eps in &[0.3, 1.0, 4.0, 8.0] {
            let a = compute_pl_constants(Some(&g), eps, 2).unwrap();
            let b = compute_pl_constants_modulus(Some(&g), &Modulus::linear(1.0).unwrap(), eps, 2, None).unwrap();
            assert!((a.gamma_eps - b.gamma_eps).abs() <= 1e-12 * a.gamma_eps);
            assert!((a.beta_eps - b.beta_eps).abs() <= 1e-12 * a.beta_eps);
        }
    }

    #[test]
    fn steeper_modulus_is_worse() {
        let g = ones(BallMass::Constant(0.7));
        let a = compute_pl_constants_modulus(Some(&g), &Modulus::linear(1.0).unwrap(), 1.0, 1, None).unwrap();
        let b = compute_pl_constants_modulus(Some(&g), &Modulus::linear(2.0).unwrap(), 1.0, 1, None).unwrap();
        assert!(b.gamma_eps >= a.gamma_eps);
    }

    #[test]
    fn sqrt_modulus() {
        let g = ones(BallMass::Constant(1.0));
        let c = compute_pl_constants_modulus(Some(&g), &Modulus::power(1.0, 0.5).unwrap(), 2.0, 1, None).unwrap();
        assert_eq!(c.radius, 0.0625);
        // 16 * 16 * 16^3 with N = ceil(1 / 0.0625) = 16
        assert!((c.gamma_eps - 16.0 * 16.0 * 4096.0).abs() < 1e-6);
    }

    #[test]
    fn connected_variant() {
        let g = ones(BallMass::Constant(0.5));
        let base = compute_pl_constants(Some(&g), 2.0, 1).unwrap();
        let c1 = ConnectedInputs { delta_p_tilde: Some(1.0), delta_omega: None, c_omega: 1.0 };
        let same = compute_pl_constants_connected(&c1, Some(&g), 2.0, 1).unwrap();
        assert!((same.gamma_eps - base.gamma_eps).abs() < 1e-12 * base.gamma_eps);
        let c2 = ConnectedInputs { c_omega: 2.0, ..c1 };
        let doubled = compute_pl_constants_connected(&c2, Some(&g), 2.0, 1).unwrap();
        assert!((doubled.gamma_eps - 2.0 * base.gamma_eps).abs() < 1e-9 * base.gamma_eps);
        let bad = ConnectedInputs { c_omega: 0.5, ..c1 };
        assert!(matches!(compute_pl_constants_connected(&bad, Some(&g), 2.0, 1), Err(Error::COmegaLessThanOne(_))));
        assert_eq!(delta_p_tilde(0.5, 0.4), 0.2);
    }

    #[test]
    fn localization() {
        let inst = ProblemInstance::from_weights(vec![1.0], vec![1.0], array![[0.0]], 1.0).unwrap();
        let star = DualPotentials::new(vec![1.0], vec![0.0]);
        assert_eq!(localization_radius(&inst, &star, &star), (0.0, 1.0));
        let p = DualPotentials::new(vec![0.0], vec![0.0]);
        assert_eq!(localization_radius(&inst, &p, &star), (1.0, 0.5));
        let p = DualPotentials::new(vec![0.75], vec![0.0]);
        assert_eq!(localization_radius(&inst, &p, &star).1, 1.0);
    }

    #[test]
    fn ratio_examples() {
        let inst = ProblemInstance::from_weights(vec![1.0], vec![1.0], array![[0.0]], 1.0).unwrap();
        let star = DualPotentials::new(vec![1.0], vec![0.0]);
        let consts = compute_pl_constants(Some(&ones(BallMass::Constant(1.0))), 8.0, 1).unwrap();
        let r = pl_ratio(&inst, &DualPotentials::new(vec![0.0], vec![0.0]), &star, &consts).unwrap();
        assert!((r.pl_ratio - 4.0 * consts.gamma_eps).abs() < 1e-12);
        // ‖f⊕g‖ = 1, ‖DΓ‖ = √2
        assert!((r.error_bound_ratio - consts.gamma_eps * 2f64.sqrt()).abs() < 1e-12);
        assert!(pl_ratio(&inst, &star, &star, &consts).unwrap().pl_ratio.is_infinite());
        let bad = DualPotentials::new(vec![0.5], vec![0.0]);
        assert!(matches!(pl_ratio(&inst, &star, &bad, &consts), Err(Error::ReferenceNotOptimal { .. })));
    }
}

//! Optimality certificate for dual potentials.

use serde::Serialize;

use crate::dual::{duality_gap, foc_residual, marginal_residual, primal_from_dual};
use crate::error::Result;
use crate::problem::{DualPotentials, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    pub certified: bool,
    pub foc_residual: f64,
    pub marginal_residual: f64,
    /// `+∞` when the induced coupling is infeasible.
    pub duality_gap: f64,
    pub dual_value: f64,
    pub tol: f64,
}

/// Accepts `pot` iff the first-order residual, the marginal residual of the
/// induced coupling and the duality gap (relative to `1 + |Γ|`) are all
/// within `tol`.
pub fn kkt_certificate(inst: &ProblemInstance, pot: &DualPotentials, tol: f64) -> Result<KktReport> {
    let foc = foc_residual(inst, pot)?;
    let pi = primal_from_dual(inst, pot)?;
    let (dr, dc) = marginal_residual(inst, &pi);
    let marg = dr.max(dc);
    let gap = duality_gap(inst, pot)?;
    let certified = foc <= tol && marg <= tol && gap.value <= tol * (1.0 + gap.dual.abs());
    Ok(KktReport {
        certified,
        foc_residual: foc,
        marginal_residual: marg,
        duality_gap: gap.value,
        dual_value: gap.dual,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_by_two() -> ProblemInstance {
        ProblemInstance::from_weights(vec![0.5, 0.5], vec![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], 1.0).unwrap()
    }

    #[test]
    fn certifies_optimum_and_shifts() {
        let opt = DualPotentials::new(vec![0.75, 0.75], vec![0.75, 0.75]);
        assert!(kkt_certificate(&two_by_two(), &opt, 1e-8).unwrap().certified);
        assert!(kkt_certificate(&two_by_two(), &opt.shifted(3.1), 1e-8).unwrap().certified);
    }

    #[test]
    fn rejects_zero() {
        let r = kkt_certificate(&two_by_two(), &DualPotentials::zeros(2, 2), 1e-8).unwrap();
        assert!(!r.certified);
        assert!(r.foc_residual > 0.0 && r.marginal_residual > 0.0);
    }
}

//! Cost matrices, Lipschitz constants and moduli of continuity.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{euclidean_distance, DiscreteMeasure};

pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    Matrix(Array2<f64>),
    SquaredEuclidean,
    Euclidean,
    /// `c(x, y) = ||x - y||_p` with `p >= 1`.
    PNorm(f64),
    Custom(CostFn),
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Matrix(c) => write!(f, "Matrix({}x{})", c.nrows(), c.ncols()),
            CostKind::SquaredEuclidean => write!(f, "SquaredEuclidean"),
            CostKind::Euclidean => write!(f, "Euclidean"),
            CostKind::PNorm(p) => write!(f, "PNorm({p})"),
            CostKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostSpec {
    pub kind: CostKind,
    /// Overrides the computed Lipschitz constant when set.
    pub lipschitz_l: Option<f64>,
    pub modulus: Option<Modulus>,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        Self {
            kind,
            lipschitz_l: None,
            modulus: None,
        }
    }

    pub fn matrix(c: Array2<f64>) -> Self {
        Self::new(CostKind::Matrix(c))
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_l = Some(l);
        self
    }

    pub fn with_modulus(mut self, modulus: Modulus) -> Self {
        self.modulus = Some(modulus);
        self
    }
}

fn check_dims(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "P lives in dimension {} but Q in dimension {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

fn pnorm(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Materializes `C[i][j] = c(x_i, y_j)`.
pub fn build_cost_matrix(spec: &CostSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<Array2<f64>> {
    let (n, m) = (p.len(), q.len());
    let c = match &spec.kind {
        CostKind::Matrix(c) => {
            if c.dim() != (n, m) {
                return Err(Error::DimensionMismatch(format!(
                    "cost matrix is {}x{} but supports have sizes {n} and {m}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            c.clone()
        }
        kind => {
            check_dims(p, q)?;
            let f: Box<dyn Fn(&[f64], &[f64]) -> f64> = match kind {
                CostKind::SquaredEuclidean => Box::new(|a, b| {
                    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
                }),
                CostKind::Euclidean => Box::new(euclidean_distance),
                CostKind::PNorm(pp) => {
                    let pp = *pp;
                    if !(pp >= 1.0) {
                        return Err(Error::UnresolvedCost(format!("p-norm needs p >= 1, got {pp}")));
                    }
                    Box::new(move |a, b| pnorm(a, b, pp))
                }
                CostKind::Custom(f) => {
                    let f = f.clone();
                    Box::new(move |a, b| f(a, b))
                }
                CostKind::Matrix(_) => unreachable!(),
            };
            Array2::from_shape_fn((n, m), |(i, j)| f(p.point(i), q.point(j)))
        }
    };
    for ((i, j), v) in c.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFiniteCost { i, j });
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstant {
    pub value: f64,
    /// All pair distances vanished, so no constant could be inferred and
    /// `value` fell back to 1.
    pub degenerate: bool,
}

fn bounding_box(mu: &DiscreteMeasure) -> (Vec<f64>, Vec<f64>) {
    let d = mu.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in mu.points() {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    (lo, hi)
}

/// Tightest constant `L` with `|C_ij - C_i'j'| <= L (|x_i - x_i'| + |y_j - y_j'|)`
/// over all pairs of cells.
pub fn discrete_lipschitz(c: &Array2<f64>, p: &DiscreteMeasure, q: &DiscreteMeasure) -> LipschitzConstant {
    let (n, m) = c.dim();
    let dx: Vec<f64> = (0..n * n)
        .map(|k| euclidean_distance(p.point(k / n), p.point(k % n)))
        .collect();
    let dy: Vec<f64> = (0..m * m)
        .map(|k| euclidean_distance(q.point(k / m), q.point(k % m)))
        .collect();
    let mut best = 0.0_f64;
    let mut any = false;
    for i in 0..n {
        for j in 0..m {
            for i2 in i..n {
                let j_start = if i2 == i { j + 1 } else { 0 };
                for j2 in j_start..m {
                    let denom = dx[i * n + i2] + dy[j * m + j2];
                    if denom > 0.0 {
                        any = true;
                        best = best.max((c[[i, j]] - c[[i2, j2]]).abs() / denom);
                    }
                }
            }
        }
    }
    if !any || best == 0.0 {
        LipschitzConstant {
            value: 1.0,
            degenerate: true,
        }
    } else {
        LipschitzConstant {
            value: best,
            degenerate: false,
        }
    }
}

/// Lipschitz constant of the cost with respect to `|x - x'| + |y - y'|`.
pub fn lipschitz_constant(spec: &CostSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<LipschitzConstant> {
    if let Some(l) = spec.lipschitz_l {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::UnresolvedCost(format!("Lipschitz constant must be positive, got {l}")));
        }
        return Ok(LipschitzConstant {
            value: l,
            degenerate: false,
        });
    }
    let exact = |value| {
        Ok(LipschitzConstant {
            value,
            degenerate: false,
        })
    };
    match &spec.kind {
        CostKind::Euclidean => exact(1.0),
        CostKind::PNorm(pp) => {
            check_dims(p, q)?;
            // ||z||_p <= d^(1/p - 1/2) ||z||_2 for p < 2, and <= ||z||_2 otherwise
            let d = p.dim() as f64;
            exact(d.powf((1.0 / pp - 0.5).max(0.0)))
        }
        CostKind::SquaredEuclidean => {
            check_dims(p, q)?;
            // |grad_x c| = |grad_y c| = 2|x - y|, maximized over the bounding boxes
            let (plo, phi) = bounding_box(p);
            let (qlo, qhi) = bounding_box(q);
            let far: f64 = (0..p.dim())
                .map(|k| {
                    let a = (phi[k] - qlo[k]).abs().max((qhi[k] - plo[k]).abs());
                    a * a
                })
                .sum::<f64>()
                .sqrt();
            if far == 0.0 {
                Ok(LipschitzConstant {
                    value: 1.0,
                    degenerate: true,
                })
            } else {
                exact(2.0 * far)
            }
        }
        CostKind::Matrix(_) | CostKind::Custom(_) => {
            let c = build_cost_matrix(spec, p, q)?;
            Ok(discrete_lipschitz(&c, p, q))
        }
    }
}

/// A modulus of continuity `omega` with optional inverse.
#[derive(Clone)]
pub struct Modulus {
    eval: ScalarFn,
    inverse: Option<ScalarFn>,
    /// Whether `|c(x,y) - c(x',y')| <= omega(|x-x'|) + omega(|y-y'|)` holds.
    pub coordinatewise: bool,
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Modulus")
            .field("has_inverse", &self.inverse.is_some())
            .field("coordinatewise", &self.coordinatewise)
            .finish()
    }
}

const LADDER: [f64; 9] = [0.0, 1e-6, 1e-3, 0.01, 0.1, 0.5, 1.0, 10.0, 100.0];

impl Modulus {
    pub fn new(eval: ScalarFn, inverse: Option<ScalarFn>, coordinatewise: bool) -> Result<Self> {
        let m = Self {
            eval,
            inverse,
            coordinatewise,
        };
        m.validate()?;
        Ok(m)
    }

    /// `omega(r) = l * r`.
    pub fn linear(l: f64) -> Result<Self> {
        Self::power(l, 1.0)
    }

    /// `omega(r) = c * r^a` with `0 < a <= 1`, coordinatewise.
    pub fn power(c: f64, a: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidModulus(format!("power modulus needs c > 0 and a in (0, 1], got c = {c}, a = {a}")));
        }
        Self::new(
            Arc::new(move |r: f64| c * r.powf(a)),
            Some(Arc::new(move |s: f64| (s / c).powf(1.0 / a))),
            true,
        )
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.eval)(r)
    }

    pub fn inverse(&self, s: f64) -> Option<f64> {
        self.inverse.as_ref().map(|f| f(s))
    }

    fn validate(&self) -> Result<()> {
        let at_zero = self.eval(0.0);
        if at_zero != 0.0 {
            return Err(Error::InvalidModulus(format!("omega(0) = {at_zero}, expected 0")));
        }
        let mut prev = 0.0;
        for &r in &LADDER[1..] {
            let v = self.eval(r);
            if !(v >= prev) || !v.is_finite() {
                return Err(Error::InvalidModulus(format!("omega is not nondecreasing and finite near r = {r}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Relative tolerance of the bisection in [`modulus_radius`].
pub const RADIUS_REL_TOL: f64 = 1e-12;

/// The ball radius `rho_{eps,omega}`.
///
/// With a coordinatewise modulus and a known inverse this is
/// `min(omega^-1(eps/8), R)`. Otherwise it is `sup{r in [0, R] : 2 omega(r) + omega(2r) <= eps/2}`,
/// located by bisection.
pub fn modulus_radius(modulus: &Modulus, eps: f64, big_r: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidEps(eps));
    }
    if !(big_r > 0.0 && big_r.is_finite()) {
        return Err(Error::NonpositiveRadius(big_r));
    }
    if modulus.coordinatewise {
        if let Some(r) = modulus.inverse(eps / 8.0) {
            if !(r > 0.0) {
                return Err(Error::ZeroRadius(eps));
            }
            return Ok(r.min(big_r));
        }
    }
    let h = |r: f64| 2.0 * modulus.eval(r) + modulus.eval(2.0 * r);
    let target = eps / 2.0;
    if h(big_r) <= target {
        return Ok(big_r);
    }
    let (mut lo, mut hi) = (0.0_f64, big_r);
    // hi halves while lo stays at zero, so this ends after at most ~1100 steps
    for _ in 0..4000 {
        if hi - lo <= RADIUS_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if h(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 {
        Ok(lo)
    } else {
        Err(Error::ZeroRadius(eps))
    }
}

/// Serializable description of a modulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusSpec {
    Linear {
        #[serde(rename = "L")]
        l: f64,
        #[serde(default = "default_true")]
        coordinatewise: bool,
    },
    Power {
        c: f64,
        exponent: f64,
        #[serde(default = "default_true")]
        coordinatewise: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ModulusSpec {
    pub fn build(&self) -> Result<Modulus> {
        let (c, a, coordinatewise) = match *self {
            ModulusSpec::Linear { l, coordinatewise } => (l, 1.0, coordinatewise),
            ModulusSpec::Power {
                c,
                exponent,
                coordinatewise,
            } => (c, exponent, coordinatewise),
        };
        let mut m = Modulus::power(c, a)?;
        m.coordinatewise = coordinatewise;
        Ok(m)
    }
}

//! Discrete marginal measures and the geometric quantities the explicit
//! constants are built from.
//!
//! A [`DiscreteMeasure`] is a weighted point cloud. Measures produced by
//! [`grid_discretize`] remember their cell volume, which lets
//! [`empirical_geometry`] infer density bounds from the discrete weights.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the total mass accepted by [`make_measure`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Cell data kept by measures that come from a grid discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInfo {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells_per_axis: usize,
    pub cell_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    grid: Option<GridInfo>,
}

impl DiscreteMeasure {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Always false: a validated measure has at least one atom.
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> Option<&GridInfo> {
        self.grid.as_ref()
    }

    /// Attaches grid cell data, e.g. after reading a measure file that
    /// declares its cell volume.
    pub fn with_grid(mut self, grid: GridInfo) -> Result<Self> {
        if !(grid.cell_volume > 0.0 && grid.cell_volume.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "cell volume must be positive, got {}",
                grid.cell_volume
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    /// Smallest and largest discrete density `w_i / cell_volume`.
    pub fn grid_density_bounds(&self) -> Option<(f64, f64)> {
        let grid = self.grid.as_ref()?;
        let (lo, hi) = self
            .weights
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        Some((lo / grid.cell_volume, hi / grid.cell_volume))
    }
}

/// Validates a weighted point cloud.
///
/// Duplicate points (bitwise equal coordinates, with `-0.0 == 0.0`) are
/// merged by summing their weights, zero-weight atoms are dropped since they
/// are not part of the support, and the weights are rescaled to sum to one.
pub fn make_measure(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<DiscreteMeasure> {
    if points.len() != weights.len() {
        return Err(Error::LengthMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptySupport);
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::PointDimension {
            index: 0,
            expected: 1,
            found: 0,
        });
    }
    for (index, (p, &w)) in points.iter().zip(&weights).enumerate() {
        if p.len() != dim {
            return Err(Error::PointDimension {
                index,
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinitePoint(index));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::NegativeWeight { index, value: w });
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroTotalMass);
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::NotNormalized(total));
    }
    build_normalized(dim, points, weights)
}

fn canonical(x: f64) -> u64 {
    // merge -0.0 with 0.0
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

fn build_normalized(
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
) -> Result<DiscreteMeasure> {
    let mut index: std::collections::HashMap<Vec<u64>, usize> = Default::default();
    let mut merged_points: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let mut merged_weights: Vec<f64> = Vec::with_capacity(points.len());
    for (p, w) in points.into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let key: Vec<u64> = p.iter().map(|&x| canonical(x)).collect();
        match index.get(&key) {
            Some(&k) => merged_weights[k] += w,
            None => {
                index.insert(key, merged_points.len());
                merged_points.push(p.iter().map(|&x| if x == 0.0 { 0.0 } else { x }).collect());
                merged_weights.push(w);
            }
        }
    }
    if merged_weights.is_empty() {
        return Err(Error::ZeroTotalMass);
    }
    let total: f64 = merged_weights.iter().sum();
    // Skip rescaling when the sum already equals one up to rounding, so that
    // rebuilding a measure from its own output is the identity.
    let slack = 4.0 * f64::EPSILON * merged_weights.len() as f64;
    if (total - 1.0).abs() > slack {
        for w in &mut merged_weights {
            *w /= total;
        }
    }
    Ok(DiscreteMeasure {
        dim,
        points: merged_points,
        weights: merged_weights,
        grid: None,
    })
}

/// Axis-aligned box `[lo_k, hi_k]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GridBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidBox(format!(
                "bounds of lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidBox("every lower bound must be below its upper bound".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Discretizes a density on a box by evaluating it at cell centers.
///
/// Cell `k` along axis `a` has center `lo_a + (k + 1/2) h_a`. Weights are
/// proportional to `density(center) * cell_volume` and renormalized.
pub fn grid_discretize<F>(density: F, bbox: &GridBox, cells_per_axis: usize) -> Result<DiscreteMeasure>
where
    F: Fn(&[f64]) -> f64,
{
    if cells_per_axis == 0 {
        return Err(Error::InvalidBox("cells_per_axis must be at least 1".into()));
    }
    let dim = bbox.dim();
    let widths: Vec<f64> = bbox
        .lo
        .iter()
        .zip(&bbox.hi)
        .map(|(a, b)| (b - a) / cells_per_axis as f64)
        .collect();
    let cell_volume: f64 = widths.iter().product();
    let total_cells = cells_per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::InvalidBox("grid too large".into()))?;

    let mut points = Vec::with_capacity(total_cells);
    let mut weights = Vec::with_capacity(total_cells);
    let mut multi = vec![0usize; dim];
    for cell in 0..total_cells {
        // first axis varies fastest
        let mut rem = cell;
        for m in multi.iter_mut() {
            *m = rem % cells_per_axis;
            rem /= cells_per_axis;
        }
        let center: Vec<f64> = (0..dim)
            .map(|a| bbox.lo[a] + (multi[a] as f64 + 0.5) * widths[a])
            .collect();
        let rho = density(&center);
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidDensity(cell));
        }
        points.push(center);
        weights.push(rho * cell_volume);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroDensity);
    }
    for w in &mut weights {
        *w /= total;
    }
    let measure = build_normalized(dim, points, weights)?;
    Ok(DiscreteMeasure {
        grid: Some(GridInfo {
            lo: bbox.lo.clone(),
            hi: bbox.hi.clone(),
            cells_per_axis,
            cell_volume,
        }),
        ..measure
    })
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `min_y mu(B_r(y))` over support points `y`, with open balls.
pub fn ball_measure_inf(mu: &DiscreteMeasure, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonpositiveRadius(r));
    }
    let mut best = f64::INFINITY;
    for y in mu.points() {
        let mass: f64 = mu
            .points()
            .iter()
            .zip(mu.weights())
            .filter(|(x, _)| euclidean_distance(x, y) < r)
            .map(|(_, &w)| w)
            .sum();
        best = best.min(mass);
    }
    Ok(best.min(1.0))
}

/// Largest pairwise Euclidean distance between support points.
pub fn diameter(mu: &DiscreteMeasure) -> f64 {
    let pts = mu.points();
    let mut diam = 0.0_f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            diam = diam.max(euclidean_distance(a, b));
        }
    }
    diam
}

/// Source of `r -> inf_y Q(B_r(y))`.
#[derive(Clone)]
pub enum BallMass {
    /// Evaluated exactly on the atoms of a discrete `Q`.
    Measure(Arc<DiscreteMeasure>),
    /// The same value for every radius.
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl BallMass {
    pub fn eval(&self, r: f64) -> Result<f64> {
        match self {
            BallMass::Measure(q) => ball_measure_inf(q, r),
            BallMass::Constant(c) => {
                if !(r > 0.0) {
                    return Err(Error::NonpositiveRadius(r));
                }
                Ok(*c)
            }
            BallMass::Custom(f) => {
                if !(r > 0.0) {
                    return Err(Error::NonpositiveRadius(r));
                }
                let v = f(r);
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "ball mass {v} at radius {r} outside (0, 1]"
                    )));
                }
                Ok(v)
            }
        }
    }
}

impl fmt::Debug for BallMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BallMass::Measure(q) => write!(f, "BallMass::Measure({} atoms)", q.len()),
            BallMass::Constant(c) => write!(f, "BallMass::Constant({c})"),
            BallMass::Custom(_) => write!(f, "BallMass::Custom(..)"),
        }
    }
}

/// Raw inputs to every explicit constant.
#[derive(Debug, Clone)]
pub struct GeometryConstants {
    pub lambda_p: f64,
    pub big_lambda_p: f64,
    pub delta_p: f64,
    pub diam_omega: f64,
    pub diam_omega_prime: f64,
    pub lipschitz_l: f64,
    pub ball_mass: BallMass,
    /// Set when any field was inferred from the discrete data instead of
    /// being supplied.
    pub empirical: bool,
}

impl GeometryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_p > 0.0 && self.lambda_p <= self.big_lambda_p && self.big_lambda_p.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "density bounds must satisfy 0 < lambda_P <= Lambda_P, got ({}, {})",
                self.lambda_p, self.big_lambda_p
            )));
        }
        if !(self.delta_p > 0.0 && self.delta_p <= 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "delta_P must lie in (0, 1], got {}",
                self.delta_p
            )));
        }
        if !(self.lipschitz_l > 0.0 && self.lipschitz_l.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "Lipschitz constant must be positive, got {}",
                self.lipschitz_l
            )));
        }
        if !(self.diam_omega >= 0.0 && self.diam_omega_prime >= 0.0) {
            return Err(Error::InvalidGeometry("diameters must be nonnegative".into()));
        }
        if let BallMass::Constant(c) = self.ball_mass {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidGeometry(format!("ball mass {c} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Assembles [`GeometryConstants`] for the pair `(P, Q)`.
///
/// Density bounds and `delta_P` are taken from the arguments when given. For
/// a grid-discretized `P` they may be omitted: the bounds are then the
/// extreme discrete densities and `delta_P` defaults to 1.
pub fn empirical_geometry(
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
    density_bounds: Option<(f64, f64)>,
    delta_p: Option<f64>,
    lipschitz_l: f64,
) -> Result<GeometryConstants> {
    let mut empirical = false;
    let (lambda_p, big_lambda_p) = match density_bounds {
        Some(b) => b,
        None => {
            empirical = true;
            p.grid_density_bounds().ok_or(Error::MissingDensityBounds)?
        }
    };
    let delta_p = match delta_p {
        Some(d) => d,
        None if p.grid().is_some() => {
            empirical = true;
            1.0
        }
        None => {
            return Err(Error::InvalidGeometry(
                "delta_P is required when P does not come from a grid".into(),
            ))
        }
    };
    let geom = GeometryConstants {
        lambda_p,
        big_lambda_p,
        delta_p,
        diam_omega: diameter(p),
        diam_omega_prime: diameter(q),
        lipschitz_l,
        ball_mass: BallMass::Measure(Arc::new(q.clone())),
        empirical,
    };
    geom.validate()?;
    Ok(geom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        make_measure(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn single_and_uniform_atoms() {
        let one = line(&[0.0], &[1.0]);
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights(), &[1.0]);
        let two = line(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(two.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn duplicates_are_merged() {
        let mu = line(&[0.0, 0.0, 1.0], &[0.3, 0.2, 0.5]);
        assert_eq!(mu.points(), &[vec![0.0], vec![1.0]]);
        assert!((mu.weights()[0] - 0.5).abs() < 1e-15);
        assert!((mu.weights()[1] - 0.5).abs() < 1e-15);
        let signed = line(&[0.0, -0.0], &[0.5, 0.5]);
        assert_eq!(signed.len(), 1);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            make_measure(vec![vec![0.0]], vec![0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(make_measure(vec![], vec![]), Err(Error::EmptySupport)));
        assert!(matches!(
            make_measure(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            make_measure(vec![vec![0.0]], vec![0.0]),
            Err(Error::ZeroTotalMass)
        ));
        assert!(matches!(
            make_measure(vec![vec![0.0]], vec![0.9]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn rebuild_is_identity() {
        let mu = line(&[0.3, 0.1, 0.3, 0.7], &[0.1, 0.2 + 1e-10, 0.3, 0.4 - 1e-10]);
        let again = make_measure(mu.points().to_vec(), mu.weights().to_vec()).unwrap();
        assert_eq!(mu, again);
    }

    #[test]
    fn grid_constant_density() {
        let bbox = GridBox::interval(0.0, 1.0).unwrap();
        let mu = grid_discretize(|_| 1.0, &bbox, 4).unwrap();
        assert_eq!(mu.points(), &[vec![0.125], vec![0.375], vec![0.625], vec![0.875]]);
        assert_eq!(mu.weights(), &[0.25; 4]);
        assert_eq!(mu.grid_density_bounds(), Some((1.0, 1.0)));
    }

    #[test]
    fn grid_linear_density() {
        let bbox = GridBox::interval(0.0, 1.0).unwrap();
        let mu = grid_discretize(|x| 2.0 * x[0], &bbox, 2).unwrap();
        // centers 0.25, 0.75 -> raw weights 0.5*0.5, 1.5*0.5 -> (0.25, 0.75)
        assert!((mu.weights()[0] - 0.25).abs() < 1e-15);
        assert!((mu.weights()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn grid_single_cell() {
        let bbox = GridBox::new(vec![0.0, 2.0], vec![1.0, 4.0]).unwrap();
        let mu = grid_discretize(|x| x[0] + x[1], &bbox, 1).unwrap();
        assert_eq!(mu.points(), &[vec![0.5, 3.0]]);
        assert_eq!(mu.weights(), &[1.0]);
    }

    #[test]
    fn grid_errors() {
        let bbox = GridBox::interval(0.0, 1.0).unwrap();
        assert!(matches!(grid_discretize(|_| 0.0, &bbox, 3), Err(Error::AllZeroDensity)));
        assert!(matches!(grid_discretize(|_| -1.0, &bbox, 3), Err(Error::InvalidDensity(0))));
        assert!(GridBox::interval(1.0, 0.0).is_err());
    }

    #[test]
    fn ball_masses() {
        let one = line(&[0.0], &[1.0]);
        assert_eq!(ball_measure_inf(&one, 0.1).unwrap(), 1.0);
        let two = line(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(ball_measure_inf(&two, 0.5).unwrap(), 0.5);
        assert_eq!(ball_measure_inf(&two, 1.5).unwrap(), 1.0);
        // open ball: the other atom at distance exactly 1 is excluded
        assert_eq!(ball_measure_inf(&two, 1.0).unwrap(), 0.5);
        assert!(matches!(ball_measure_inf(&two, 0.0), Err(Error::NonpositiveRadius(_))));
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&line(&[0.0], &[1.0])), 0.0);
        assert_eq!(diameter(&line(&[0.0, 1.0], &[0.5, 0.5])), 1.0);
        let plane = make_measure(vec![vec![0.0, 0.0], vec![3.0, 4.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(diameter(&plane), 5.0);
    }

    #[test]
    fn geometry_inference() {
        let bbox = GridBox::interval(0.0, 1.0).unwrap();
        let p = grid_discretize(|_| 1.0, &bbox, 4).unwrap();
        let q = line(&[0.0, 1.0], &[0.5, 0.5]);
        let g = empirical_geometry(&p, &q, None, None, 1.0).unwrap();
        assert_eq!((g.lambda_p, g.big_lambda_p, g.delta_p), (1.0, 1.0, 1.0));
        assert!(g.empirical);
        assert_eq!(g.diam_omega, 0.75);
        assert_eq!(g.diam_omega_prime, 1.0);

        let g = empirical_geometry(&q, &q, Some((1.0, 1.0)), Some(1.0), 1.0).unwrap();
        assert_eq!((g.lambda_p, g.big_lambda_p, g.delta_p), (1.0, 1.0, 1.0));
        assert!(!g.empirical);

        assert!(matches!(
            empirical_geometry(&q, &q, None, Some(1.0), 1.0),
            Err(Error::MissingDensityBounds)
        ));
    }

    #[test]
    fn geometry_linear_density_bounds() {
        // rho(x) = 2x on [0.25, 1] with 2 cells: centers 0.4375, 0.8125, cell
        // volume 0.375; discrete densities are rho(center) / sum(rho * vol).
        let bbox = GridBox::interval(0.25, 1.0).unwrap();
        let p = grid_discretize(|x| 2.0 * x[0], &bbox, 2).unwrap();
        let mass = (0.875 + 1.625) * 0.375;
        let (lo, hi) = p.grid_density_bounds().unwrap();
        assert!((lo - 0.875 / mass).abs() < 1e-14);
        assert!((hi - 1.625 / mass).abs() < 1e-14);
    }
}

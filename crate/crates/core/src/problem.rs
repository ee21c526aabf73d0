//! Problem instances, dual potentials and couplings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{make_measure, DiscreteMeasure, GeometryConstants};

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    p: DiscreteMeasure,
    q: DiscreteMeasure,
    cost: Array2<f64>,
    eps: f64,
    geometry: Option<GeometryConstants>,
}

impl ProblemInstance {
    pub fn new(p: DiscreteMeasure, q: DiscreteMeasure, cost: Array2<f64>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidEps(eps));
        }
        if cost.dim() != (p.len(), q.len()) {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix is {}x{} but supports have sizes {} and {}",
                cost.nrows(),
                cost.ncols(),
                p.len(),
                q.len()
            )));
        }
        if let Some((i, j)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(ix, _)| ix) {
            return Err(Error::NonFiniteCost { i, j });
        }
        Ok(Self {
            p,
            q,
            cost,
            eps,
            geometry: None,
        })
    }

    /// Instance with atoms placed at `0, 1, 2, ...` on the line; for
    /// problems given only through a cost matrix.
    pub fn from_weights(p: Vec<f64>, q: Vec<f64>, cost: Array2<f64>, eps: f64) -> Result<Self> {
        let pts = |k: usize| (0..k).map(|i| vec![i as f64]).collect::<Vec<_>>();
        // zero weights would be dropped and break the index correspondence
        for (index, &w) in p.iter().chain(&q).enumerate() {
            if !(w > 0.0) {
                return Err(Error::NegativeWeight { index, value: w });
            }
        }
        let pm = make_measure(pts(p.len()), p)?;
        let qm = make_measure(pts(q.len()), q)?;
        Self::new(pm, qm, cost, eps)
    }

    pub fn with_geometry(mut self, geometry: GeometryConstants) -> Result<Self> {
        geometry.validate()?;
        self.geometry = Some(geometry);
        Ok(self)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidEps(eps));
        }
        Ok(Self { eps, ..self.clone() })
    }

    pub fn p(&self) -> &DiscreteMeasure {
        &self.p
    }

    pub fn q(&self) -> &DiscreteMeasure {
        &self.q
    }

    pub fn pw(&self) -> &[f64] {
        self.p.weights()
    }

    pub fn qw(&self) -> &[f64] {
        self.q.weights()
    }

    pub fn cost(&self) -> &Array2<f64> {
        &self.cost
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn geometry(&self) -> Option<&GeometryConstants> {
        self.geometry.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl DualPotentials {
    pub fn new(f: Vec<f64>, g: Vec<f64>) -> Self {
        Self { f, g }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self::new(vec![0.0; n], vec![0.0; m])
    }

    pub fn zeros_for(inst: &ProblemInstance) -> Self {
        Self::zeros(inst.n(), inst.m())
    }

    /// `(f + a, g - a)`, the same element of the sum space.
    pub fn shifted(&self, a: f64) -> Self {
        Self::new(
            self.f.iter().map(|x| x + a).collect(),
            self.g.iter().map(|x| x - a).collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().chain(&self.g).all(|x| x.is_finite())
    }

    pub fn check_dims(&self, inst: &ProblemInstance) -> Result<()> {
        if self.f.len() != inst.n() || self.g.len() != inst.m() {
            return Err(Error::DimensionMismatch(format!(
                "potentials have lengths ({}, {}) but the instance is {}x{}",
                self.f.len(),
                self.g.len(),
                inst.n(),
                inst.m()
            )));
        }
        Ok(())
    }
}

/// Sparse coupling; only strictly positive entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub n: usize,
    pub m: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn from_dense(pi: &Array2<f64>) -> Self {
        let (n, m) = pi.dim();
        let entries = pi
            .indexed_iter()
            .filter(|(_, &v)| v > 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        Self { n, m, entries }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut pi = Array2::zeros((self.n, self.m));
        for &(i, j, v) in &self.entries {
            pi[[i, j]] += v;
        }
        pi
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        for &(i, _, v) in &self.entries {
            r[i] += v;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for &(_, j, v) in &self.entries {
            c[j] += v;
        }
        c
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }
}

//! Brute-force solver for the primal problem on small instances.
//!
//! Minimizes `J(π) = Σ C π + (ε/2) Σ π² / (p q)` over the transport polytope
//! by projected gradient with exact line search, where projections use
//! Dykstra's algorithm on the affine marginal constraints and the orthant.
//! The result is then polished by solving the optimality system on the
//! detected support, which yields multipliers certifying the minimizer.
//!
//! Nothing here reads dual potentials or calls into the dual module.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Coupling, ProblemInstance};

pub const MAX_CELLS: usize = 64;
/// Required residual of the optimality system for a certified solution.
pub const KKT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ParameterizedQp,
    KktCertified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub coupling: Coupling,
    pub primal_value: f64,
    pub method: OracleMethod,
    pub tolerance_achieved: f64,
}

struct Qp<'a> {
    p: &'a [f64],
    q: &'a [f64],
    c: &'a Array2<f64>,
    eps: f64,
    n: usize,
    m: usize,
}

impl Qp<'_> {
    fn value(&self, pi: &Array2<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.m {
                let x = pi[[i, j]];
                s += self.c[[i, j]] * x + 0.5 * self.eps * x * x / (self.p[i] * self.q[j]);
            }
        }
        s
    }

    fn grad(&self, pi: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.m), |(i, j)| {
            self.c[[i, j]] + self.eps * pi[[i, j]] / (self.p[i] * self.q[j])
        })
    }

    /// Euclidean projection onto `{row sums = p, col sums = q}`.
    fn project_affine(&self, x: &Array2<f64>) -> Array2<f64> {
        let (n, m) = (self.n as f64, self.m as f64);
        let r: Vec<f64> = x.rows().into_iter().map(|row| row.sum()).collect();
        let c: Vec<f64> = x.columns().into_iter().map(|col| col.sum()).collect();
        let tot: f64 = r.iter().sum();
        Array2::from_shape_fn(x.dim(), |(i, j)| {
            x[[i, j]] - (r[i] - self.p[i]) / m - (c[j] - self.q[j]) / n + (tot - 1.0) / (n * m)
        })
    }

    /// Euclidean projection onto the transport polytope.
    fn project(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut x = y.clone();
        let mut inc_a = Array2::zeros(y.dim());
        let mut inc_o = Array2::zeros(y.dim());
        for _ in 0..200_000 {
            let a = self.project_affine(&(&x + &inc_a));
            inc_a = &x + &inc_a - &a;
            let o = (&a + &inc_o).mapv(|v| v.max(0.0));
            inc_o = &a + &inc_o - &o;
            let change = (&o - &x).iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
            x = o;
            if change <= 1e-15 {
                break;
            }
        }
        x
    }
}

fn validate(inst: &ProblemInstance) -> Result<()> {
    let cells = inst.n() * inst.m();
    if cells > MAX_CELLS {
        return Err(Error::InstanceTooLarge(cells));
    }
    for w in [inst.pw(), inst.qw()] {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| !(x > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InfeasibleMarginals);
        }
    }
    Ok(())
}

/// Solves the primal from the product coupling `p qᵀ`.
pub fn solve_primal_small(inst: &ProblemInstance) -> Result<OracleSolution> {
    let start = Array2::from_shape_fn((inst.n(), inst.m()), |(i, j)| inst.pw()[i] * inst.qw()[j]);
    solve_primal_small_from(inst, &start)
}

/// Solves the primal from a given starting coupling (projected first).
pub fn solve_primal_small_from(inst: &ProblemInstance, start: &Array2<f64>) -> Result<OracleSolution> {
    validate(inst)?;
    if start.dim() != (inst.n(), inst.m()) {
        return Err(Error::DimensionMismatch("starting coupling has the wrong shape".into()));
    }
    let qp = Qp {
        p: inst.pw(),
        q: inst.qw(),
        c: inst.cost(),
        eps: inst.eps(),
        n: inst.n(),
        m: inst.m(),
    };
    let min_w = (0..qp.n)
        .flat_map(|i| (0..qp.m).map(move |j| (i, j)))
        .map(|(i, j)| qp.p[i] * qp.q[j])
        .fold(f64::INFINITY, f64::min);
    // inverse curvature of J along the flattest coordinate
    let step = min_w / qp.eps;

    let mut pi = qp.project(start);
    let mut last_polish: Option<(Array2<f64>, f64)> = None;
    for _ in 0..40 {
        for _ in 0..200 {
            let g = qp.grad(&pi);
            let target = qp.project(&(&pi - &(&g * step)));
            let d = &target - &pi;
            let slope: f64 = (&g * &d).sum();
            let curv: f64 = d
                .indexed_iter()
                .map(|((i, j), &x)| qp.eps * x * x / (qp.p[i] * qp.q[j]))
                .sum();
            if curv <= 0.0 || slope >= 0.0 {
                break;
            }
            let t = (-slope / curv).min(1.0);
            pi = &pi + &(&d * t);
            pi.mapv_inplace(|v| v.max(0.0));
        }
        let scale = pi.iter().fold(0.0_f64, |a, &b| a.max(b));
        let thresholds = [1e-9, 1e-6, 1e-12];
        for &th in &thresholds {
            let support = pi.mapv(|v| v > th * scale);
            if let Some((cand, resid)) = polish(&qp, support) {
                if resid <= KKT_TOL {
                    return Ok(finish(&qp, cand, OracleMethod::KktCertified, resid));
                }
                if last_polish.as_ref().map_or(true, |(_, r)| resid < *r) {
                    last_polish = Some((cand, resid));
                }
            }
        }
    }
    let (pi, resid) = match last_polish {
        Some((cand, r)) if r < pg_residual(&qp, &pi, step) => (cand, r),
        _ => {
            let r = pg_residual(&qp, &pi, step);
            (pi, r)
        }
    };
    Ok(finish(&qp, pi, OracleMethod::ParameterizedQp, resid))
}

fn pg_residual(qp: &Qp<'_>, pi: &Array2<f64>, step: f64) -> f64 {
    let g = qp.grad(pi);
    let t = qp.project(&(pi - &(&g * step)));
    (&t - pi).iter().fold(0.0_f64, |a, d| a.max(d.abs())) / step.max(1e-300)
}

fn finish(qp: &Qp<'_>, pi: Array2<f64>, method: OracleMethod, tol: f64) -> OracleSolution {
    OracleSolution {
        primal_value: qp.value(&pi),
        coupling: Coupling::from_dense(&pi),
        method,
        tolerance_achieved: tol,
    }
}

struct Components {
    of_row: Vec<usize>,
    of_col: Vec<usize>,
    count: usize,
}

fn components(support: &Array2<bool>) -> Components {
    let (n, m) = support.dim();
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for ((i, j), &s) in support.indexed_iter() {
        if s {
            let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut label = vec![usize::MAX; n + m];
    let mut count = 0;
    let mut of = vec![0; n + m];
    for x in 0..n + m {
        let r = find(&mut parent, x);
        if label[r] == usize::MAX {
            label[r] = count;
            count += 1;
        }
        of[x] = label[r];
    }
    Components {
        of_row: of[..n].to_vec(),
        of_col: of[n..].to_vec(),
        count,
    }
}

/// Multipliers `(a, b)` with `π_ij = p_i q_j (a_i + b_j − C_ij)/ε` on the
/// support reproducing both marginals, by least squares.
fn multipliers(qp: &Qp<'_>, support: &Array2<bool>) -> Option<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (qp.n, qp.m);
    let mut a = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::from_element(n + m, qp.eps);
    for i in 0..n {
        for j in 0..m {
            if support[[i, j]] {
                a[(i, i)] += qp.q[j];
                a[(i, n + j)] += qp.q[j];
                rhs[i] += qp.q[j] * qp.c[[i, j]];
                a[(n + j, n + j)] += qp.p[i];
                a[(n + j, i)] += qp.p[i];
                rhs[n + j] += qp.p[i] * qp.c[[i, j]];
            }
        }
    }
    let svd = a.svd(true, true);
    let x = svd.solve(&rhs, 1e-13).ok()?;
    Some((x.rows(0, n).iter().copied().collect(), x.rows(n, m).iter().copied().collect()))
}

/// Active-set refinement from a guessed support. Returns the polished
/// coupling and its optimality residual.
fn polish(qp: &Qp<'_>, mut support: Array2<bool>) -> Option<(Array2<f64>, f64)> {
    let (n, m) = (qp.n, qp.m);
    let scale = qp.c.iter().fold(1.0_f64, |a, &b| a.max(b.abs())) + qp.eps;
    for _ in 0..4 * n * m + 4 {
        let (mut a, mut b) = multipliers(qp, &support)?;
        let slack = |a: &[f64], b: &[f64], i: usize, j: usize| a[i] + b[j] - qp.c[[i, j]];

        // primal feasibility on the support
        let mut worst: Option<((usize, usize), f64)> = None;
        for ((i, j), &s) in support.indexed_iter() {
            if s {
                let v = slack(&a, &b, i, j);
                if v < worst.map_or(0.0, |w| w.1) {
                    worst = Some(((i, j), v));
                }
            }
        }
        if let Some(((i, j), v)) = worst {
            if v < -1e-13 * scale {
                support[[i, j]] = false;
                continue;
            }
        }

        // Each connected block of the support has a free shift; pick shifts
        // making every off-support slack nonpositive, or find the violator.
        let comp = components(&support);
        let mut same_viol: Option<((usize, usize), f64)> = None;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if support[[i, j]] {
                    continue;
                }
                let (ki, kj) = (comp.of_row[i], comp.of_col[j]);
                let s = slack(&a, &b, i, j);
                if ki == kj {
                    if s > same_viol.map_or(1e-13 * scale, |w| w.1) {
                        same_viol = Some(((i, j), s));
                    }
                } else {
                    // t_ki − t_kj ≤ −s
                    edges.push((kj, ki, -s, (i, j)));
                }
            }
        }
        if let Some(((i, j), _)) = same_viol {
            support[[i, j]] = true;
            continue;
        }
        let mut dist = vec![0.0_f64; comp.count];
        let mut cycle_edge = None;
        for round in 0..=comp.count {
            let mut changed = None;
            for &(from, to, w, cell) in &edges {
                if dist[from] + w < dist[to] - 1e-15 * scale {
                    dist[to] = dist[from] + w;
                    changed = Some(cell);
                }
            }
            match changed {
                None => break,
                Some(cell) if round == comp.count => cycle_edge = Some(cell),
                Some(_) => {}
            }
        }
        if let Some((i, j)) = cycle_edge {
            support[[i, j]] = true;
            continue;
        }
        for i in 0..n {
            a[i] += dist[comp.of_row[i]];
        }
        for j in 0..m {
            b[j] -= dist[comp.of_col[j]];
        }

        let mut pi = Array2::zeros((n, m));
        let mut neg = 0.0_f64;
        for ((i, j), &s) in support.indexed_iter() {
            if s {
                let v = qp.p[i] * qp.q[j] * slack(&a, &b, i, j) / qp.eps;
                neg = neg.max(-v);
                pi[[i, j]] = v.max(0.0);
            }
        }
        let mut dual_viol = 0.0_f64;
        for ((i, j), &s) in support.indexed_iter() {
            if !s {
                dual_viol = dual_viol.max(slack(&a, &b, i, j) / scale);
            }
        }
        let rows: Vec<f64> = pi.rows().into_iter().map(|r| r.sum()).collect();
        let cols: Vec<f64> = pi.columns().into_iter().map(|c| c.sum()).collect();
        let marg = rows
            .iter()
            .zip(qp.p)
            .chain(cols.iter().zip(qp.q))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        return Some((pi, marg.max(neg).max(dual_viol)));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_by_two(eps: f64) -> ProblemInstance {
        ProblemInstance::from_weights(vec![0.5, 0.5], vec![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]], eps).unwrap()
    }

    #[test]
    fn single_atom() {
        let inst = ProblemInstance::from_weights(vec![1.0], vec![1.0], array![[0.0]], 0.7).unwrap();
        let sol = solve_primal_small(&inst).unwrap();
        assert_eq!(sol.coupling.entries, vec![(0, 0, 1.0)]);
        assert!((sol.primal_value - 0.35).abs() < 1e-15);
    }

    #[test]
    fn interior_two_by_two() {
        let sol = solve_primal_small(&two_by_two(1.0)).unwrap();
        let pi = sol.coupling.to_dense();
        assert_eq!(sol.method, OracleMethod::KktCertified);
        assert!((pi[[0, 0]] - 0.375).abs() < 1e-12);
        assert!((pi[[0, 1]] - 0.125).abs() < 1e-12);
        assert!((sol.primal_value - 0.875).abs() < 1e-12);
        assert_eq!(sol.coupling.support_size(), 4);
    }

    #[test]
    fn sparse_two_by_two() {
        let sol = solve_primal_small(&two_by_two(0.25)).unwrap();
        let pi = sol.coupling.to_dense();
        assert!((pi[[0, 0]] - 0.5).abs() < 1e-12 && (pi[[1, 1]] - 0.5).abs() < 1e-12);
        assert_eq!(sol.coupling.support_size(), 2);
        assert_eq!(sol.method, OracleMethod::KktCertified);
    }

    #[test]
    fn rejects_large_instances() {
        let w = vec![1.0 / 9.0; 9];
        let inst = ProblemInstance::from_weights(w.clone(), w, Array2::zeros((9, 9)), 1.0).unwrap();
        assert!(matches!(solve_primal_small(&inst), Err(Error::InstanceTooLarge(81))));
    }

    #[test]
    fn projection_lands_in_polytope() {
        let inst = ProblemInstance::from_weights(vec![0.2, 0.8], vec![0.3, 0.3, 0.4], Array2::zeros((2, 3)), 1.0).unwrap();
        let qp = Qp { p: inst.pw(), q: inst.qw(), c: inst.cost(), eps: 1.0, n: 2, m: 3 };
        let y = array![[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]];
        let x = qp.project(&y);
        assert!(x.iter().all(|&v| v >= 0.0));
        let rows: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
        assert!((rows[0] - 0.2).abs() < 1e-12 && (rows[1] - 0.8).abs() < 1e-12);
    }
}

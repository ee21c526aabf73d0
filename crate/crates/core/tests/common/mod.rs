//! Shared corpus and test-side reference computations. Nothing here calls
//! the library's dual routines; the formulas are written out directly.

#![allow(dead_code)]

use ndarray::Array2;
use qot::constants::{compute_pl_constants, PLConstants};
use qot::costs::{build_cost_matrix, lipschitz_constant, CostKind, CostSpec};
use qot::measures::{empirical_geometry, grid_discretize, make_measure, DiscreteMeasure, GridBox};
use qot::{DualPotentials, ProblemInstance};

pub struct Case {
    pub name: &'static str,
    pub inst: ProblemInstance,
    pub consts: PLConstants,
}

fn atoms(points: &[&[f64]], weights: &[f64]) -> DiscreteMeasure {
    make_measure(points.iter().map(|p| p.to_vec()).collect(), weights.to_vec()).unwrap()
}

fn line_grid(density: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> DiscreteMeasure {
    grid_discretize(|x: &[f64]| density(x[0]), &GridBox::interval(lo, hi).unwrap(), cells).unwrap()
}

fn square_grid(density: impl Fn(f64, f64) -> f64, cells: usize) -> DiscreteMeasure {
    let bbox = GridBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    grid_discretize(|x: &[f64]| density(x[0], x[1]), &bbox, cells).unwrap()
}

pub fn build(name: &'static str, p: DiscreteMeasure, q: DiscreteMeasure, kind: CostKind, eps: f64) -> Case {
    let spec = CostSpec::new(kind);
    let c = build_cost_matrix(&spec, &p, &q).unwrap();
    let l = lipschitz_constant(&spec, &p, &q).unwrap().value;
    let geom = empirical_geometry(&p, &q, None, None, l).unwrap();
    let inst = ProblemInstance::new(p, q, c, eps).unwrap().with_geometry(geom).unwrap();
    let consts = compute_pl_constants(inst.geometry(), eps, inst.dim()).unwrap();
    Case { name, inst, consts }
}

/// Uniform density on `[-0.5, 1.5]` with two cells: atoms 0 and 1.
pub fn two_point() -> DiscreteMeasure {
    line_grid(|_| 1.0, -0.5, 1.5, 2)
}

/// Instances with `n, m <= 6`, every `P` a grid discretization of a density
/// bounded below.
pub fn corpus() -> Vec<Case> {
    let gauss = |x: f64| (-x * x / 0.5).exp();
    vec![
        build("2x2 |x-y| eps=1", two_point(), two_point(), CostKind::Euclidean, 1.0),
        build("2x2 |x-y| eps=0.25", two_point(), two_point(), CostKind::Euclidean, 0.25),
        build(
            "3x3 linear density, squared cost",
            line_grid(|x| 1.0 + x, 0.0, 1.0, 3),
            atoms(&[&[0.1], &[0.5], &[0.9]], &[0.3, 0.3, 0.4]),
            CostKind::SquaredEuclidean,
            0.5,
        ),
        build(
            "4x3 gaussian, |x-y|",
            line_grid(gauss, -1.0, 1.0, 4),
            atoms(&[&[-0.6], &[0.0], &[0.7]], &[0.2, 0.5, 0.3]),
            CostKind::Euclidean,
            0.3,
        ),
        build(
            "5x4 tent density, squared cost",
            line_grid(|x| 1.0 + x.min(2.0 - x), 0.0, 2.0, 5),
            atoms(&[&[0.2], &[0.8], &[1.3], &[1.9]], &[0.25, 0.25, 0.25, 0.25]),
            CostKind::SquaredEuclidean,
            1.0,
        ),
        build(
            "6x6 uniform vs shifted uniform",
            line_grid(|_| 1.0, 0.0, 1.0, 6),
            line_grid(|_| 1.0, 0.3, 1.3, 6),
            CostKind::SquaredEuclidean,
            0.2,
        ),
        build(
            "2d 4x3 euclidean",
            square_grid(|x, y| 1.0 + x + y, 2),
            atoms(&[&[0.2, 0.2], &[0.8, 0.3], &[0.5, 0.9]], &[0.3, 0.3, 0.4]),
            CostKind::Euclidean,
            0.5,
        ),
        build(
            "2d 4x2 l1 cost",
            square_grid(|_, _| 1.0, 2),
            atoms(&[&[0.1, 0.9], &[0.9, 0.1]], &[0.5, 0.5]),
            CostKind::PNorm(1.0),
            0.7,
        ),
        build(
            "6x2 gaussian to two atoms",
            line_grid(gauss, -1.0, 1.0, 6),
            atoms(&[&[-0.5], &[0.5]], &[0.4, 0.6]),
            CostKind::SquaredEuclidean,
            0.5,
        ),
        build(
            "3x5 exponential density, eps=2",
            line_grid(f64::exp, 0.0, 1.0, 3),
            atoms(&[&[-0.5], &[0.0], &[0.5], &[1.0], &[1.5]], &[0.1, 0.3, 0.2, 0.25, 0.15]),
            CostKind::SquaredEuclidean,
            2.0,
        ),
        build(
            "1x3 single cell",
            line_grid(|_| 1.0, 0.0, 1.0, 1),
            atoms(&[&[0.0], &[0.5], &[1.0]], &[0.2, 0.3, 0.5]),
            CostKind::Euclidean,
            0.5,
        ),
        build(
            "5x5 uniform |x-y| eps=0.05",
            line_grid(|_| 1.0, 0.0, 1.0, 5),
            line_grid(|_| 1.0, 0.0, 1.0, 5),
            CostKind::Euclidean,
            0.05,
        ),
    ]
}

pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `Γ(f, g)` written out.
pub fn gamma(inst: &ProblemInstance, pot: &DualPotentials) -> f64 {
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let mut s = 0.0;
    for i in 0..p.len() {
        s += p[i] * pot.f[i];
    }
    for j in 0..q.len() {
        s += q[j] * pot.g[j];
    }
    for i in 0..p.len() {
        for j in 0..q.len() {
            let t = pos(pot.f[i] + pot.g[j] - c[[i, j]]);
            s -= p[i] * q[j] * t * t / (2.0 * eps);
        }
    }
    s
}

/// Gradient in `L²(P) × L²(Q)`.
pub fn grad(inst: &ProblemInstance, pot: &DualPotentials) -> (Vec<f64>, Vec<f64>) {
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    let mut u = vec![1.0; p.len()];
    let mut v = vec![1.0; q.len()];
    for i in 0..p.len() {
        for j in 0..q.len() {
            let t = pos(pot.f[i] + pot.g[j] - c[[i, j]]) / eps;
            u[i] -= q[j] * t;
            v[j] -= p[i] * t;
        }
    }
    (u, v)
}

pub fn norm_pq(inst: &ProblemInstance, u: &[f64], v: &[f64]) -> f64 {
    let a: f64 = inst.pw().iter().zip(u).map(|(w, x)| w * x * x).sum();
    let b: f64 = inst.qw().iter().zip(v).map(|(w, x)| w * x * x).sum();
    (a + b).sqrt()
}

pub fn sup_oplus(a: &DualPotentials, b: &DualPotentials) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.f.len() {
        for j in 0..a.g.len() {
            m = m.max((a.f[i] + a.g[j] - b.f[i] - b.g[j]).abs());
        }
    }
    m
}

pub fn l2_oplus(inst: &ProblemInstance, a: &DualPotentials, b: &DualPotentials) -> f64 {
    let (p, q) = (inst.pw(), inst.qw());
    let mut s = 0.0;
    for i in 0..p.len() {
        for j in 0..q.len() {
            let d = a.f[i] + a.g[j] - b.f[i] - b.g[j];
            s += p[i] * q[j] * d * d;
        }
    }
    s.sqrt()
}

/// Coupling induced by potentials, dense.
pub fn coupling(inst: &ProblemInstance, pot: &DualPotentials) -> Array2<f64> {
    let (p, q, c, eps) = (inst.pw(), inst.qw(), inst.cost(), inst.eps());
    Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p[i] * q[j] * pos(pot.f[i] + pot.g[j] - c[[i, j]]) / eps)
}

/// Root of `Σ w (t − b)₊ = eps` by 200 bisection steps.
pub fn bisect_foc(b: &[f64], w: &[f64], eps: f64) -> f64 {
    let h = |t: f64| b.iter().zip(w).map(|(bj, wj)| wj * pos(t - bj)).sum::<f64>() - eps;
    let lo0 = b.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = lo0;
    let mut hi = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + eps / w.iter().sum::<f64>() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest value of `Σ_{active} pq (u_i + v_j)² / Σ pq (u_i + v_j)²` over
/// nonconstant `u ⊕ v`, by exact two-dimensional Rayleigh minimizations
/// along coordinate directions from several starts. Uses the chart `v_m = 0`.
pub fn rayleigh_min(p: &[f64], q: &[f64], active: &Array2<bool>, seed: u64) -> f64 {
    let (n, m) = (p.len(), q.len());
    let dim = n + m - 1;
    let mut a = vec![vec![0.0; dim]; dim];
    let mut bm = vec![vec![0.0; dim]; dim];
    // x = (u_0..u_{n-1}, v_0..v_{m-2}); each cell contributes e_i + e_{n+j}
    for i in 0..n {
        for j in 0..m {
            let w = p[i] * q[j];
            let idx: Vec<usize> = if j + 1 < m { vec![i, n + j] } else { vec![i] };
            for &r in &idx {
                for &s in &idx {
                    bm[r][s] += w;
                    if active[[i, j]] {
                        a[r][s] += w;
                    }
                }
            }
        }
    }
    let form = |mat: &Vec<Vec<f64>>, x: &[f64], y: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in 0..dim {
            for c in 0..dim {
                s += x[r] * mat[r][c] * y[c];
            }
        }
        s
    };
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut rnd = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let mut best = f64::INFINITY;
    for _ in 0..8 {
        let mut x: Vec<f64> = (0..dim).map(|_| rnd()).collect();
        let mut val = form(&a, &x, &x) / form(&bm, &x, &x);
        for _sweep in 0..400 {
            let before = val;
            for k in 0..dim + 2 {
                let e: Vec<f64> = if k < dim {
                    (0..dim).map(|r| if r == k { 1.0 } else { 0.0 }).collect()
                } else {
                    (0..dim).map(|_| rnd()).collect()
                };
                let (a11, a12, a22) = (form(&a, &x, &x), form(&a, &x, &e), form(&a, &e, &e));
                let (b11, b12, b22) = (form(&bm, &x, &x), form(&bm, &x, &e), form(&bm, &e, &e));
                let qa = b11 * b22 - b12 * b12;
                if qa <= 1e-14 * b11 * b22 {
                    continue;
                }
                let qb = -(a11 * b22 + a22 * b11 - 2.0 * a12 * b12);
                let qc = a11 * a22 - a12 * a12;
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
                let lam = (-qb - disc) / (2.0 * qa);
                // null vector of [[a11 - lam b11, a12 - lam b12], [.., a22 - lam b22]]
                let (m11, m12, m22) = (a11 - lam * b11, a12 - lam * b12, a22 - lam * b22);
                let (al, be) = if m11.abs() + m12.abs() >= m12.abs() + m22.abs() {
                    (-m12, m11)
                } else {
                    (m22, -m12)
                };
                let y: Vec<f64> = x.iter().zip(&e).map(|(xi, ei)| al * xi + be * ei).collect();
                let ny = form(&bm, &y, &y);
                if !(ny > 0.0) {
                    continue;
                }
                let cand = form(&a, &y, &y) / ny;
                if cand < val {
                    let s = ny.sqrt();
                    x = y.iter().map(|t| t / s).collect();
                    val = cand;
                }
            }
            if before - val <= 1e-15 {
                break;
            }
        }
        best = best.min(val);
    }
    best.clamp(0.0, 1.0)
}

/// `inf_y Q(B_r(y))` over open balls centred at the atoms of `Q`.
pub fn ball_mass(q: &DiscreteMeasure, r: f64) -> f64 {
    let mut best: f64 = 1.0;
    for y in q.points() {
        let mut s = 0.0;
        for (z, w) in q.points().iter().zip(q.weights()) {
            let d: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < r {
                s += w;
            }
        }
        best = best.min(s);
    }
    best
}

/// `γ_ε` for the Lipschitz variant from its closed form:
/// `16 Λ² C N^{d+2} / (λ² δ min(ε/8L, 1)^d inf_y Q(B_{ε/8L}(y)))`.
pub fn gamma_closed_form(lambda: f64, big_lambda: f64, delta: f64, l: f64, diam: f64, q0: f64, eps: f64, d: usize) -> f64 {
    let r = eps / (8.0 * l);
    let raw = 8.0 * l * diam / eps;
    let mut n = raw.round();
    if (raw - n).abs() > 1e-9 * raw.max(1.0) {
        n = raw.ceil();
    }
    let n = n.max(1.0);
    16.0 * big_lambda * big_lambda * n.powi(d as i32 + 2) / (lambda * lambda * delta * r.min(1.0).powi(d as i32) * q0)
}

/// Whether the bipartite graph of `active` cells is connected.
pub fn connected(active: &Array2<bool>) -> bool {
    let (n, m) = active.dim();
    let mut seen = vec![false; n + m];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(k) = stack.pop() {
        let nb: Vec<usize> = if k < n {
            (0..m).filter(|&j| active[[k, j]]).map(|j| n + j).collect()
        } else {
            (0..n).filter(|&i| active[[i, k - n]]).collect()
        };
        for t in nb {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

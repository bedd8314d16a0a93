//! Brute-force checks kept independent of the formulas they verify: facet
//! membership, Monte-Carlo volume, trajectory simulation, finite differences and
//! a vertex-enumeration LP solver for tiny instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{combinations, det, Lu, Matrix};
use crate::invariance::AffineSystem;
use crate::zonotope::{AxisBox, Zonotope};

const MAX_ORACLE_DIM: usize = 4;
const MAX_EXHAUSTIVE_GENERATORS: usize = 12;

/// Facet description `|nᵀ(x − c)| ≤ offset(n)` of a full-dimensional zonotope.
#[derive(Debug, Clone, PartialEq)]
pub struct HRep {
    pub center: Vec<f64>,
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl HRep {
    pub fn offsets_upper(&self) -> &[f64] {
        &self.offsets
    }

    /// Offsets of the opposite facets, `−nᵀ(x − c) ≤ offset(n)`.
    pub fn offsets_lower(&self) -> &[f64] {
        &self.offsets
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.normals.iter().zip(&self.offsets).all(|(n, &o)| {
            let s: f64 = n.iter().zip(x.iter().zip(&self.center)).map(|(a, (xi, ci))| a * (xi - ci)).sum();
            s.abs() <= o + tol * (1.0 + o)
        })
    }
}

/// Normal to the columns of a `d x (d−1)` matrix via signed minors.
fn generalized_cross(cols: &[Vec<f64>], d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    (0..d)
        .map(|skip| {
            let rows: Vec<Vec<f64>> = (0..d)
                .filter(|&i| i != skip)
                .map(|i| cols.iter().map(|c| c[i]).collect())
                .collect();
            let minor = det(&Matrix::from_rows(&rows).expect("rows")).expect("square");
            if skip % 2 == 0 {
                minor
            } else {
                -minor
            }
        })
        .collect()
}

pub fn facet_normals(z: &Zonotope) -> Result<HRep> {
    let d = z.dim();
    if d > MAX_ORACLE_DIM {
        return Err(Error::Unsupported(format!("facet oracle limited to d ≤ {MAX_ORACLE_DIM}, got {d}")));
    }
    let g = z.generators();
    let p = g.cols();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| g.column(j)).collect();
    let scale = g.max_abs().max(f64::MIN_POSITIVE);
    let mut normals: Vec<Vec<f64>> = Vec::new();
    for subset in combinations(p, d - 1) {
        let cols: Vec<Vec<f64>> = subset.indices().iter().map(|&j| columns[j].clone()).collect();
        let mut n = generalized_cross(&cols, d);
        let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len <= 1e-12 * scale.powi(d as i32 - 1) {
            continue;
        }
        let lead = n.iter().copied().find(|v| v.abs() > 1e-12 * len).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for v in &mut n {
            *v *= sign / len;
        }
        let duplicate = normals
            .iter()
            .any(|m| m.iter().zip(&n).all(|(a, b)| (a - b).abs() < 1e-9));
        if !duplicate {
            normals.push(n);
        }
    }
    if normals.len() < d {
        return Err(Error::RankDeficient { dim: d, generators: p });
    }
    let offsets = normals
        .iter()
        .map(|n| columns.iter().map(|c| n.iter().zip(c).map(|(a, b)| a * b).sum::<f64>().abs()).sum())
        .collect();
    Ok(HRep {
        center: z.center().to_vec(),
        normals,
        offsets,
    })
}

/// Hit-or-miss volume estimate in the interval hull, with its binomial standard error.
pub fn mc_volume(z: &Zonotope, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let h = facet_normals(z)?;
    if n_samples == 0 {
        return Err(Error::Invalid("Monte-Carlo volume needs at least one sample".into()));
    }
    let d = z.dim();
    let g = z.generators();
    let half: Vec<f64> = (0..d).map(|i| g.row(i).iter().map(|v| v.abs()).sum()).collect();
    let hull: f64 = half.iter().map(|r| 2.0 * r).product();
    let c = z.center();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        for i in 0..d {
            x[i] = c[i] + half[i] * rng.random_range(-1.0..=1.0);
        }
        if h.contains(&x, 1e-12) {
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::Domain("no Monte-Carlo sample hit the zonotope".into()));
    }
    let frac = hits as f64 / n_samples as f64;
    let se = hull * (frac * (1.0 - frac) / n_samples as f64).sqrt();
    Ok((hull * frac, se))
}

/// Worst box violation seen along simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub max_violation: f64,
    /// Coordinate (0-based) and time step of the worst violation, if any.
    pub coordinate: Option<usize>,
    pub time: Option<usize>,
    pub points: usize,
    pub exhaustive: bool,
}

impl ViolationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Simulates `x ← A x + w` for `horizon` steps from sampled points `c + Gλ` and
/// records the largest violation of `bounds`.
pub fn simulate_invariance(
    system: &AffineSystem,
    z: &Zonotope,
    bounds: &AxisBox,
    horizon: usize,
    n_points: usize,
    seed: u64,
) -> Result<ViolationReport> {
    let d = z.dim();
    if system.dim() != d || bounds.dim() != d {
        return Err(Error::DimensionMismatch("simulation inputs".into()));
    }
    let p = z.num_generators();
    let a = system.a();
    let w = system.w();
    let g = z.generators();
    let c = z.center();
    let (lo, hi) = (bounds.lower(), bounds.upper());

    let exhaustive = p <= MAX_EXHAUSTIVE_GENERATORS && (1usize << p) <= n_points;
    let count = if exhaustive { 1usize << p } else { n_points };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda = vec![0.0; p];
    let mut x = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut report = ViolationReport {
        max_violation: 0.0,
        coordinate: None,
        time: None,
        points: count,
        exhaustive,
    };
    for k in 0..count {
        if exhaustive {
            for (j, l) in lambda.iter_mut().enumerate() {
                *l = if (k >> j) & 1 == 1 { 1.0 } else { -1.0 };
            }
        } else if p <= MAX_EXHAUSTIVE_GENERATORS || k % 2 == 0 {
            for l in lambda.iter_mut() {
                *l = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
        } else {
            for l in lambda.iter_mut() {
                *l = rng.random_range(-1.0..=1.0);
            }
        }
        for i in 0..d {
            x[i] = c[i] + (0..p).map(|j| g[(i, j)] * lambda[j]).sum::<f64>();
        }
        for t in 0..=horizon {
            if t > 0 {
                for i in 0..d {
                    next[i] = w[i] + (0..d).map(|j| a[(i, j)] * x[j]).sum::<f64>();
                }
                std::mem::swap(&mut x, &mut next);
            }
            for i in 0..d {
                let v = (lo[i] - x[i]).max(x[i] - hi[i]);
                if v > report.max_violation {
                    report.max_violation = v;
                    report.coordinate = Some(i);
                    report.time = Some(t);
                }
            }
        }
    }
    Ok(report)
}

pub fn finite_diff_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; row `i` holds `∂f_i/∂x`.
pub fn finite_diff_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Matrix {
    let m = f(x).len();
    let n = x.len();
    let mut jac = Matrix::zeros(m, n);
    let mut y = x.to_vec();
    for j in 0..n {
        y[j] = x[j] + h;
        let up = f(&y);
        y[j] = x[j] - h;
        let down = f(&y);
        y[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Membership test for square generators by solving `G λ = x − c`.
pub fn parallelotope_contains(z: &Zonotope, x: &[f64], tol: f64) -> Result<bool> {
    let g = z.generators();
    if !g.is_square() {
        return Err(Error::Unsupported("parallelotope test needs square generators".into()));
    }
    let rhs: Vec<f64> = x.iter().zip(z.center()).map(|(a, b)| a - b).collect();
    let lambda = Lu::factor(g)?.solve(&rhs)?;
    Ok(lambda.iter().all(|l| l.abs() <= 1.0 + tol))
}

/// Maximizes `cost · z` over `{ C z ≤ b }` by enumerating every basic solution.
/// Returns `None` when no vertex is feasible.
pub fn lp_max_by_vertices(c: &Matrix, b: &[f64], cost: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    let (m, n) = (c.rows(), c.cols());
    if n > 6 {
        return Err(Error::Unsupported("vertex enumeration limited to 6 variables".into()));
    }
    if b.len() != m || cost.len() != n {
        return Err(Error::DimensionMismatch("LP oracle inputs".into()));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for rows in combinations(m, n) {
        let sub = Matrix::from_rows(&rows.indices().iter().map(|&r| c.row(r).to_vec()).collect::<Vec<_>>())?;
        let Ok(lu) = Lu::factor(&sub) else { continue };
        if lu.det().abs() < 1e-12 {
            continue;
        }
        let rhs: Vec<f64> = rows.indices().iter().map(|&r| b[r]).collect();
        let Ok(v) = lu.solve(&rhs) else { continue };
        let feasible = (0..m).all(|r| {
            let s: f64 = c.row(r).iter().zip(&v).map(|(a, x)| a * x).sum();
            s <= b[r] + 1e-9 * (1.0 + b[r].abs())
        });
        if feasible {
            let val: f64 = cost.iter().zip(&v).map(|(a, x)| a * x).sum();
            if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
                best = Some((val, v));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_zonotope(rng: &mut ChaCha8Rng, d: usize, p: usize) -> Zonotope {
        let g = Matrix::new(d, p, (0..d * p).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Zonotope::new(c, g).unwrap()
    }

    #[test]
    fn unit_box_facets() {
        let z = Zonotope::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        let h = facet_normals(&z).unwrap();
        assert_eq!(h.normals.len(), 2);
        assert!(h.normals.contains(&vec![1.0, 0.0]) || h.normals.contains(&vec![1.0, -0.0]));
        assert_eq!(h.offsets, vec![1.0, 1.0]);
    }

    #[test]
    fn three_generator_facets() {
        let z = Zonotope::new(vec![0.0, 0.0], w(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]])).unwrap();
        let h = facet_normals(&z).unwrap();
        assert_eq!(h.normals.len(), 3);
        for (n, o) in h.normals.iter().zip(&h.offsets) {
            let axis = n.iter().filter(|v| v.abs() > 0.5 && (v.abs() - 1.0).abs() < 1e-12).count() == 1;
            let expected = if axis { 2.0 } else { 2f64.sqrt() };
            assert!((o - expected).abs() < 1e-12, "{n:?} {o}");
        }
        assert!(facet_normals(&Zonotope::new(vec![0.0; 5], Matrix::identity(5)).unwrap()).is_err());
    }

    #[test]
    fn generated_points_satisfy_every_facet() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=4 {
            for p in d..d + 4 {
                let z = random_zonotope(&mut rng, d, p);
                let h = facet_normals(&z).unwrap();
                for _ in 0..500 {
                    let l: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    assert!(h.contains(&z.point(&l).unwrap(), 1e-12));
                }
            }
        }
    }

    #[test]
    fn facet_and_parallelotope_membership_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 2..=4 {
            let z = random_zonotope(&mut rng, d, d);
            let h = facet_normals(&z).unwrap();
            let hull = z.interval_hull();
            for _ in 0..2000 {
                let x: Vec<f64> = (0..d).map(|i| rng.random_range(hull.lower()[i]..=hull.upper()[i])).collect();
                assert_eq!(h.contains(&x, 1e-12), parallelotope_contains(&z, &x, 1e-10).unwrap());
            }
        }
    }

    #[test]
    fn mc_volume_examples() {
        let z = Zonotope::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        let (v, se) = mc_volume(&z, 1_000_000, 1).unwrap();
        assert!((v - 4.0).abs() <= 3.0 * se + 1e-12);
        let z = Zonotope::new(vec![0.5, -1.0], w(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]])).unwrap();
        let (v, se) = mc_volume(&z, 1_000_000, 2).unwrap();
        assert!((v - 12.0).abs() <= 3.0 * se, "{v} ± {se}");
        assert!(v <= z.interval_hull().volume());
    }

    #[test]
    fn mc_volume_rejects_empty_hits() {
        let z = Zonotope::new(vec![0.0, 0.0], w(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-15]])).unwrap();
        assert!(mc_volume(&z, 1000, 0).is_err());
    }

    #[test]
    fn contraction_stays_inside() {
        let sys = AffineSystem::autonomous(Matrix::identity(2).scale(0.5)).unwrap();
        let z = Zonotope::new(vec![0.0, 0.0], Matrix::identity(2)).unwrap();
        let r = simulate_invariance(&sys, &z, &AxisBox::symmetric(2, 1.0), 30, 100, 0).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn shifted_box_violation() {
        let sys = AffineSystem::autonomous(Matrix::identity(2)).unwrap();
        let z = Zonotope::new(vec![0.6, 0.0], Matrix::identity(2).scale(0.5)).unwrap();
        let r = simulate_invariance(&sys, &z, &AxisBox::symmetric(2, 1.0), 0, 16, 0).unwrap();
        assert!((r.max_violation - 0.1).abs() < 1e-12);
        assert_eq!(r.coordinate, Some(0));
        assert_eq!(r.time, Some(0));
    }

    #[test]
    fn sampled_mode_for_many_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_zonotope(&mut rng, 2, 14);
        let sys = AffineSystem::autonomous(Matrix::identity(2).scale(0.9)).unwrap();
        let r = simulate_invariance(&sys, &z, &AxisBox::symmetric(2, 100.0), 5, 64, 3).unwrap();
        assert!(!r.exhaustive);
        assert_eq!(r.points, 64);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn finite_differences() {
        let g = finite_diff_gradient(|x| x.iter().map(|v| v.ln()).sum(), &[1.0, 1.0, 1.0], 1e-4);
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-7));
        let q = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[0];
        let g = finite_diff_gradient(q, &[0.7, -1.3], 0.1);
        assert!((g[0] - (6.0 * 0.7 + 2.6 + 1.0)).abs() < 1e-12);
        assert!((g[1] - (-1.4 - 1.3)).abs() < 1e-12);
        let jac = finite_diff_jacobian(|x| vec![x[0] * x[1], x[0] + 2.0 * x[1]], &[2.0, 3.0], 1e-3);
        assert!((jac[(0, 0)] - 3.0).abs() < 1e-9 && (jac[(0, 1)] - 2.0).abs() < 1e-9);
        assert!((jac[(1, 1)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lp_vertices_on_a_square() {
        let c = w(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0], &[1.0, 1.0]]);
        let (v, x) = lp_max_by_vertices(&c, &[1.0, 1.0, 1.0, 1.0, 1.5], &[1.0, 2.0]).unwrap().unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        let infeasible = w(&[&[1.0], &[-1.0]]);
        assert!(lp_max_by_vertices(&infeasible, &[-1.0, -1.0], &[1.0]).unwrap().is_none());
    }
}

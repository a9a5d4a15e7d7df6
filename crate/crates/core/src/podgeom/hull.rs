//! Incremental convex hull in arbitrary dimension and the likelihood-pruned
//! training-vertex selection built on it.
//!
//! Input points are joggled by a tiny deterministic perturbation before the
//! hull is built, which puts them in general position (no coplanar facets to
//! merge) at the cost of a ~1e-8 relative change in coordinates.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};

/// Relative joggle magnitude.
const JOGGLE: f64 = 1e-8;
/// Relative slack of the half-space membership test.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Facet {
    /// Sorted vertex indices into the hull's point set.
    pub vertices: Vec<usize>,
    /// Outward unit normal.
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Facet {
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

#[derive(Debug, Clone)]
pub struct ConvexHull {
    dim: usize,
    scale: f64,
    points: Vec<Vec<f64>>,
    facets: Vec<Facet>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn coordinate_scale(points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300)
}

/// Deterministic per-index perturbation of a point cloud.
pub fn joggle(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let amp = JOGGLE * coordinate_scale(points);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a6f_6767_6c65);
    points
        .iter()
        .map(|p| p.iter().map(|v| v + amp * rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .expect("nonempty");
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    det
}

/// Generalized cross product of `d − 1` edge vectors in `R^d`.
fn hyperplane_normal(edges: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let minor: Vec<Vec<f64>> = edges
                .iter()
                .map(|e| (0..dim).filter(|&j| j != i).map(|j| e[j]).collect())
                .collect();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * if minor.is_empty() { 1.0 } else { determinant(minor) }
        })
        .collect()
}

impl ConvexHull {
    /// Hull of the joggled points.
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        Self::build(joggle(points))
    }

    /// Hull of points taken as given.
    pub fn build(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Invalid("hull points must share a nonzero dimension".into()));
        }
        if points.len() <= dim {
            return Err(Error::DegenerateHull(format!(
                "{} points cannot span {dim} dimensions",
                points.len()
            )));
        }
        let scale = coordinate_scale(&points);
        let simplex = initial_simplex(&points, scale)?;
        let interior: Vec<f64> = (0..dim)
            .map(|k| simplex.iter().map(|&i| points[i][k]).sum::<f64>() / (dim + 1) as f64)
            .collect();
        let mut hull = Self {
            dim,
            scale,
            points,
            facets: Vec::new(),
        };
        for skip in 0..=dim {
            let verts: Vec<usize> = simplex
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .map(|(_, &i)| i)
                .collect();
            let f = hull.make_facet(verts, &interior)?;
            hull.facets.push(f);
        }
        let eps = 1e-12 * scale;
        for i in 0..hull.points.len() {
            if simplex.contains(&i) {
                continue;
            }
            hull.add_point(i, &interior, eps)?;
        }
        Ok(hull)
    }

    fn make_facet(&self, mut verts: Vec<usize>, interior: &[f64]) -> Result<Facet> {
        verts.sort_unstable();
        let base = &self.points[verts[0]];
        let edges: Vec<Vec<f64>> = verts[1..].iter().map(|&v| sub(&self.points[v], base)).collect();
        let mut normal = hyperplane_normal(&edges, self.dim);
        let norm = dot(&normal, &normal).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateHull("facet with vanishing normal".into()));
        }
        normal.iter_mut().for_each(|v| *v /= norm);
        let mut offset = dot(&normal, base);
        if dot(&normal, interior) > offset {
            normal.iter_mut().for_each(|v| *v = -*v);
            offset = -offset;
        }
        Ok(Facet {
            vertices: verts,
            normal,
            offset,
        })
    }

    fn add_point(&mut self, idx: usize, interior: &[f64], eps: f64) -> Result<()> {
        let p = &self.points[idx];
        let visible: Vec<bool> = self.facets.iter().map(|f| f.signed_distance(p) > eps).collect();
        if !visible.iter().any(|&v| v) {
            return Ok(());
        }
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        for (f, _) in self.facets.iter().zip(&visible).filter(|(_, &v)| v) {
            for skip in 0..f.vertices.len() {
                let ridge: Vec<usize> = f
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                let c = counts.entry(ridge.clone()).or_insert(0);
                if *c == 0 {
                    order.push(ridge);
                }
                *c += 1;
            }
        }
        let mut keep = Vec::with_capacity(self.facets.len());
        for (f, v) in std::mem::take(&mut self.facets).into_iter().zip(visible) {
            if !v {
                keep.push(f);
            }
        }
        self.facets = keep;
        for ridge in order {
            if counts[&ridge] == 1 {
                let mut verts = ridge;
                verts.push(idx);
                let f = self.make_facet(verts, interior)?;
                self.facets.push(f);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Sorted indices of points that are hull vertices.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets.iter().flat_map(|f| f.vertices.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Half-space membership with slack `MEMBERSHIP_SLACK · scale`.
    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = MEMBERSHIP_SLACK * self.scale;
        self.facets.iter().all(|f| f.signed_distance(x) <= slack)
    }
}

fn initial_simplex(points: &[Vec<f64>], scale: f64) -> Result<Vec<usize>> {
    let dim = points[0].len();
    let first = (0..points.len())
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .expect("nonempty");
    let mut chosen = vec![first];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let origin = &points[first];
    while chosen.len() <= dim {
        let residual = |p: &Vec<f64>| {
            let mut r = sub(p, origin);
            for b in &basis {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            r
        };
        let (best, dist) = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let r = residual(&points[i]);
                (i, dot(&r, &r).sqrt())
            })
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || dist <= 1e-10 * scale {
            return Err(Error::DegenerateHull(format!(
                "point cloud spans fewer than {dim} dimensions"
            )));
        }
        let mut r = residual(&points[best]);
        r.iter_mut().for_each(|v| *v /= dist);
        basis.push(r);
        chosen.push(best);
    }
    Ok(chosen)
}

/// Result of the pruned hull selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullSelection {
    /// Population indices of the final hull vertices.
    pub vertices: Vec<usize>,
    /// Fraction of the population inside or on the final hull.
    pub fraction_inside: f64,
    /// Pruned vertices, in removal order.
    pub removed: Vec<usize>,
    pub n_facets: usize,
}

/// Mahalanobis distances under a Gaussian fitted to the whole cloud.
fn mahalanobis(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64)
        .collect();
    let cov = SquareMatrix::from_fn(d, |i, j| {
        points
            .iter()
            .map(|p| (p[i] - mean[i]) * (p[j] - mean[j]))
            .sum::<f64>()
            / (n - 1) as f64
    });
    let chol = Cholesky::with_jitter(&cov).map_err(|_| {
        Error::DegenerateHull("coefficient covariance is singular".into())
    })?;
    Ok(points.iter().map(|p| chol.quad_form(&sub(p, &mean))).collect())
}

/// Hull of the coefficient cloud, pruned one least-likely vertex at a time
/// until the inside-or-on fraction first drops to `target_fraction` or below.
pub fn select_training_hull(coeffs: &[Vec<f64>], target_fraction: f64) -> Result<HullSelection> {
    let n = coeffs.len();
    let d = coeffs.first().map(Vec::len).unwrap_or(0);
    if d == 0 || n <= 2 * d {
        return Err(Error::Invalid(format!(
            "hull selection needs more than {} points in {d} dimensions, got {n}",
            2 * d
        )));
    }
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::Invalid(format!("target fraction {target_fraction} outside (0, 1]")));
    }
    let jog = joggle(coeffs);
    let dist = mahalanobis(coeffs)?;
    let mut active: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    loop {
        let hull = ConvexHull::build(active.iter().map(|&i| jog[i].clone()).collect())?;
        let inside = jog.iter().filter(|p| hull.contains(p)).count();
        let fraction = inside as f64 / n as f64;
        let vertices: Vec<usize> = hull.vertices().into_iter().map(|k| active[k]).collect();
        if fraction <= target_fraction {
            return Ok(HullSelection {
                vertices,
                fraction_inside: fraction,
                removed,
                n_facets: hull.facets().len(),
            });
        }
        let worst = *vertices
            .iter()
            .max_by(|&&a, &&b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("hull has vertices");
        active.retain(|&i| i != worst);
        removed.push(worst);
        if active.len() <= d + 1 {
            return Err(Error::DegenerateHull("pruning exhausted the point cloud".into()));
        }
    }
}

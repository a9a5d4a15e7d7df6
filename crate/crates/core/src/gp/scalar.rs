use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::real::Real;

use super::kernel::{cross_covariance, kernel_matrix, rbf_kernel};

/// Zero-mean GP regression with an anisotropic RBF kernel and known
/// per-observation noise.
///
/// The kernel matrix is factored once at construction; a value of this type
/// is immutable and cheap to query from several threads.
#[derive(Debug, Clone)]
pub struct ScalarGP<T> {
    dim: usize,
    inputs: Vec<Vec<T>>,
    targets: Vec<T>,
    noise: Vec<T>,
    length_scales: Vec<T>,
    bounds: Vec<[T; 2]>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
}

/// Settings of the multi-start length-scale search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iter: 200,
            seed: 0,
        }
    }
}

/// Per-dimension bounds `[lo·l_max, hi·l_max]` with `l_max` the input range.
///
/// A dimension in which all inputs coincide (or an empty input set) uses
/// `l_max = 1`.
pub fn length_scale_bounds<T: Real>(inputs: &[Vec<T>], dim: usize, lo: T, hi: T) -> Vec<[T; 2]> {
    (0..dim)
        .map(|d| {
            let (mn, mx) = inputs
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(a, b), x| (a.min(x[d]), b.max(x[d])));
            let range = mx - mn;
            let l_max = if range > T::zero() && range.is_finite() { range } else { T::one() };
            [lo * l_max, hi * l_max]
        })
        .collect()
}

impl<T: Real> ScalarGP<T> {
    pub fn new(
        inputs: Vec<Vec<T>>,
        targets: Vec<T>,
        noise: Vec<T>,
        length_scales: Vec<T>,
        bounds: Vec<[T; 2]>,
    ) -> Result<Self> {
        let dim = length_scales.len();
        if inputs.len() != targets.len() || inputs.len() != noise.len() {
            return Err(Error::Invalid(format!(
                "{} inputs, {} targets and {} noise levels",
                inputs.len(),
                targets.len(),
                noise.len()
            )));
        }
        if bounds.len() != dim || inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Invalid("inputs, length scales and bounds must share one dimension".into()));
        }
        if inputs.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite training data".into()));
        }
        if noise.iter().any(|&s| !(s >= T::zero()) || !s.is_finite()) {
            return Err(Error::Invalid("noise levels must be finite and nonnegative".into()));
        }
        for (l, [lo, hi]) in length_scales.iter().zip(&bounds) {
            if !(*lo > T::zero() && lo <= hi) {
                return Err(Error::Invalid("length-scale bounds must satisfy 0 < lo <= hi".into()));
            }
            if !(l >= lo && l <= hi) {
                return Err(Error::Invalid(format!("length scale {l} outside [{lo}, {hi}]")));
            }
        }
        let chol = Cholesky::with_jitter(&kernel_matrix(&inputs, &noise, &length_scales))?;
        let alpha = chol.solve(&targets);
        Ok(Self {
            dim,
            inputs,
            targets,
            noise,
            length_scales,
            bounds,
            chol,
            alpha,
        })
    }

    /// GP with data-derived bounds and every length scale at `l_max`.
    pub fn with_data_bounds(
        inputs: Vec<Vec<T>>,
        targets: Vec<T>,
        noise: Vec<T>,
        dim: usize,
        lower_fraction: T,
        upper_fraction: T,
    ) -> Result<Self> {
        let bounds = length_scale_bounds(&inputs, dim, lower_fraction, upper_fraction);
        let l0 = bounds
            .iter()
            .map(|[lo, hi]| (*lo / lower_fraction).max(*lo).min(*hi))
            .collect();
        Self::new(inputs, targets, noise, l0, bounds)
    }

    /// Same data, different length scales (clamped into the bounds).
    pub fn with_length_scales(&self, length_scales: &[T]) -> Result<Self> {
        let l = length_scales
            .iter()
            .zip(&self.bounds)
            .map(|(&l, [lo, hi])| l.max(*lo).min(*hi))
            .collect();
        Self::new(
            self.inputs.clone(),
            self.targets.clone(),
            self.noise.clone(),
            l,
            self.bounds.clone(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn noise(&self) -> &[T] {
        &self.noise
    }

    pub fn length_scales(&self) -> &[T] {
        &self.length_scales
    }

    pub fn bounds(&self) -> &[[T; 2]] {
        &self.bounds
    }

    /// Jitter the factorization needed, zero for a well-conditioned matrix.
    pub fn jitter(&self) -> T {
        self.chol.jitter()
    }

    fn check_query(&self, q: &[T]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::Invalid(format!(
                "query has dimension {}, GP expects {}",
                q.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Posterior mean and variance at one point.
    pub fn predict(&self, q: &[T]) -> Result<(T, T)> {
        self.check_query(q)?;
        let k = cross_covariance(&self.inputs, q, &self.length_scales);
        let mean = k.iter().zip(&self.alpha).map(|(&a, &b)| a * b).sum();
        let var = T::one() - self.chol.quad_form(&k);
        Ok((mean, var))
    }

    /// Joint posterior over `queries`: mean vector and covariance matrix.
    pub fn posterior(&self, queries: &[Vec<T>]) -> Result<(Vec<T>, SquareMatrix<T>)> {
        for q in queries {
            self.check_query(q)?;
        }
        let m = queries.len();
        let ks: Vec<Vec<T>> = queries
            .iter()
            .map(|q| cross_covariance(&self.inputs, q, &self.length_scales))
            .collect();
        let means = ks
            .iter()
            .map(|k| k.iter().zip(&self.alpha).map(|(&a, &b)| a * b).sum())
            .collect();
        let vs: Vec<Vec<T>> = ks.iter().map(|k| self.chol.solve_lower(k)).collect();
        let mut cov = SquareMatrix::zeros(m);
        for a in 0..m {
            for b in 0..=a {
                let prior = rbf_kernel(&queries[a], &queries[b], &self.length_scales);
                let red: T = vs[a].iter().zip(&vs[b]).map(|(&x, &y)| x * y).sum();
                cov[(a, b)] = prior - red;
                cov[(b, a)] = prior - red;
            }
        }
        Ok((means, cov))
    }

    /// `−½ yᵀK⁻¹y − ½ log|K| − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> T {
        let n = T::from_usize(self.len()).expect("count fits");
        let half = T::lit(0.5);
        let fit: T = self.targets.iter().zip(&self.alpha).map(|(&y, &a)| y * a).sum();
        -half * fit - half * self.chol.log_det() - half * n * T::lit(std::f64::consts::TAU).ln()
    }

    /// Gradient of the log marginal likelihood with respect to `ln l_d`.
    pub fn log_marginal_likelihood_gradient(&self) -> Vec<T> {
        let n = self.len();
        let kinv = self.chol.inverse();
        let half = T::lit(0.5);
        (0..self.dim)
            .map(|d| {
                let l2 = self.length_scales[d] * self.length_scales[d];
                let mut g = T::zero();
                for i in 0..n {
                    for j in 0..i {
                        let dx = self.inputs[i][d] - self.inputs[j][d];
                        let dk = rbf_kernel(&self.inputs[i], &self.inputs[j], &self.length_scales) * dx * dx / l2;
                        let w = self.alpha[i] * self.alpha[j] - kinv[(i, j)];
                        g = g + w * dk;
                    }
                }
                // Off-diagonal terms appear twice in the trace.
                half * (g + g)
            })
            .collect()
    }

    /// Multi-start bounded quasi-Newton maximization of the log marginal
    /// likelihood over log length scales.
    ///
    /// The current length scales are always one of the candidates, so the
    /// result is never worse than the input. With fewer than two points the
    /// GP is returned unchanged.
    pub fn optimize_length_scales(&self, opts: &OptimizerOptions) -> ScalarGP<T> {
        if self.len() < 2 || self.dim == 0 {
            return self.clone();
        }
        let lo: Vec<f64> = self.bounds.iter().map(|b| b[0].as_f64().ln()).collect();
        let hi: Vec<f64> = self.bounds.iter().map(|b| b[1].as_f64().ln()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut starts = vec![self.length_scales.iter().map(|l| l.as_f64().ln()).collect::<Vec<_>>()];
        for _ in 0..opts.n_starts {
            starts.push(lo.iter().zip(&hi).map(|(&a, &b)| a + (b - a) * rng.random::<f64>()).collect());
        }
        let mut best = self.clone();
        let mut best_lml = self.log_marginal_likelihood().as_f64();
        for x0 in starts {
            if let Some(gp) = self.ascend(x0, &lo, &hi, opts.max_iter) {
                let v = gp.log_marginal_likelihood().as_f64();
                if v > best_lml {
                    best_lml = v;
                    best = gp;
                }
            }
        }
        best
    }

    fn at_log(&self, x: &[f64]) -> Option<(ScalarGP<T>, f64, Vec<f64>)> {
        let l: Vec<T> = x.iter().map(|&v| T::lit(v.exp())).collect();
        let gp = self.with_length_scales(&l).ok()?;
        let f = gp.log_marginal_likelihood().as_f64();
        if !f.is_finite() {
            return None;
        }
        let g = gp.log_marginal_likelihood_gradient().iter().map(|v| v.as_f64()).collect();
        Some((gp, f, g))
    }

    /// Projected BFGS ascent inside the box `[lo, hi]` (log space).
    fn ascend(&self, x0: Vec<f64>, lo: &[f64], hi: &[f64], max_iter: usize) -> Option<ScalarGP<T>> {
        let d = x0.len();
        let project = |x: &mut [f64]| {
            for i in 0..d {
                x[i] = x[i].clamp(lo[i], hi[i]);
            }
        };
        let mut x = x0;
        project(&mut x);
        let (mut gp, mut f, mut g) = self.at_log(&x)?;
        let mut h = identity(d);
        for _ in 0..max_iter {
            // Coordinates pinned at a bound with the gradient pushing outward.
            let free: Vec<bool> = (0..d)
                .map(|i| !((x[i] <= lo[i] && g[i] < 0.0) || (x[i] >= hi[i] && g[i] > 0.0)))
                .collect();
            let pg: f64 = (0..d).filter(|&i| free[i]).map(|i| g[i] * g[i]).sum::<f64>().sqrt();
            if pg < 1e-8 * (1.0 + f.abs()) {
                break;
            }
            let mut dir: Vec<f64> = (0..d)
                .map(|i| {
                    if free[i] {
                        (0..d).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope > 0.0) {
                h = identity(d);
                dir = (0..d).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
                slope = pg * pg;
            }
            let big = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if big > 2.0 {
                dir.iter_mut().for_each(|v| *v *= 2.0 / big);
                slope *= 2.0 / big;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                project(&mut xn);
                let gain: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
                if let Some((gpn, fnew, gnew)) = self.at_log(&xn) {
                    if fnew >= f + 1e-4 * gain.max(0.0) && fnew >= f {
                        accepted = Some((xn, gpn, fnew, gnew));
                        break;
                    }
                }
                t *= 0.5;
                if t * slope < 1e-14 {
                    break;
                }
            }
            let Some((xn, gpn, fnew, gnew)) = accepted else {
                break;
            };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            // Ascent on f is descent on −f: y = −(g_new − g).
            let y: Vec<f64> = g.iter().zip(&gnew).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            if sy > 1e-12 {
                bfgs_update(&mut h, &s, &y, sy);
            }
            let df = fnew - f;
            x = xn;
            gp = gpn;
            f = fnew;
            g = gnew;
            if df.abs() < 1e-12 * (1.0 + f.abs()) {
                break;
            }
        }
        Some(gp)
    }
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..d {
        for j in 0..d {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

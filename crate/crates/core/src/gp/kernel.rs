use crate::linalg::SquareMatrix;
use crate::real::Real;

/// Anisotropic squared-exponential kernel `exp(−Σ_d (a_d − b_d)² / (2 l_d²))`.
#[inline]
pub fn rbf_kernel<T: Real>(a: &[T], b: &[T], length_scales: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "kernel arguments differ in dimension");
    assert_eq!(a.len(), length_scales.len(), "one length scale per dimension");
    let half = T::lit(0.5);
    let r2: T = a
        .iter()
        .zip(b)
        .zip(length_scales)
        .map(|((&x, &y), &l)| {
            let u = (x - y) / l;
            u * u
        })
        .sum();
    (-half * r2).exp()
}

/// Gram matrix of `points` plus `diag(noise²)`.
pub fn kernel_matrix<T: Real>(points: &[Vec<T>], noise: &[T], length_scales: &[T]) -> SquareMatrix<T> {
    let n = points.len();
    let mut k = SquareMatrix::zeros(n);
    for i in 0..n {
        k[(i, i)] = T::one() + noise[i] * noise[i];
        for j in 0..i {
            let v = rbf_kernel(&points[i], &points[j], length_scales);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance column `k(x_i, q)` for every training point.
pub fn cross_covariance<T: Real>(points: &[Vec<T>], q: &[T], length_scales: &[T]) -> Vec<T> {
    points.iter().map(|x| rbf_kernel(x, q, length_scales)).collect()
}

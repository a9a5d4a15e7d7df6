use cardiorom::gp::{kernel_matrix, rbf_kernel, GpConfig, ScalarGP, TrainingRecord, VectorGP};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut p: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            p[0] = -1.0 + 2.0 * i as f64 / n as f64;
            p
        })
        .collect()
}

fn records(seed: u64, n: usize, rho: f64) -> Vec<TrainingRecord<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    points(seed, n, 3)
        .into_iter()
        .map(|c| {
            let s: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.005..0.03));
            let mut m = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = s[i] * s[j] * if i == j { 1.0 } else { rho };
                }
            }
            let mu = [1.0 + 0.05 * c[0], 1.0 - 0.03 * c[1], 1.0 + 0.02 * c[2], 1.0];
            TrainingRecord { c, mu, sigma_mat: m }
        })
        .collect()
}

fn fixed_scales(dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (vec![vec![0.8; dim]; 4], vec![vec![0.8; dim]; 6])
}

proptest! {
    #[test]
    fn kernel_symmetric_with_unit_diagonal(seed in 0u64..10_000, ls in 0.05..3.0f64) {
        let pts = points(seed, 6, 3);
        let k = kernel_matrix(&pts, &[0.0; 6], &[ls; 3]);
        for i in 0..6 {
            prop_assert_eq!(k[(i, i)], 1.0);
            for j in 0..6 {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
                prop_assert!(k[(i, j)] >= 0.0 && k[(i, j)] <= 1.0);
            }
        }
        prop_assert_eq!(rbf_kernel(&pts[0], &pts[1], &[ls; 3]), rbf_kernel(&pts[1], &pts[0], &[ls; 3]));
    }

    #[test]
    fn posterior_variance_bounded_by_prior(seed in 0u64..10_000, q in prop::collection::vec(-2.0..2.0f64, 3)) {
        let pts = points(seed, 8, 3);
        let targets: Vec<f64> = pts.iter().map(|p| p[0].sin() + p[1]).collect();
        let gp = ScalarGP::new(pts, targets, vec![0.01; 8], vec![0.7; 3], vec![[0.01, 10.0]; 3]).unwrap();
        let (_, v) = gp.predict(&q).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn single_factor_matches_scalar_gp(seed in 0u64..10_000, q in prop::collection::vec(-1.0..1.0f64, 3)) {
        let recs = records(seed, 7, 0.3);
        let (m, c) = fixed_scales(3);
        let vgp = VectorGP::with_length_scales(recs.clone(), GpConfig::default(), &m, &c).unwrap();
        let pred = vgp.predict_factors(&q).unwrap();
        for k in 0..4 {
            let sgp = ScalarGP::new(
                recs.iter().map(|r| r.c.clone()).collect(),
                recs.iter().map(|r| r.mu[k] - 1.0).collect(),
                recs.iter().map(|r| r.sigma_mat[k][k].sqrt()).collect(),
                vgp.mean_gps[k].length_scales().to_vec(),
                vgp.mean_gps[k].bounds().to_vec(),
            )
            .unwrap();
            let (mean, var) = sgp.predict(&q).unwrap();
            prop_assert!((pred.mu[k] - 1.0 - mean).abs() < 1e-10);
            prop_assert!((pred.variances[k] - var.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn predicted_covariance_is_psd(seed in 0u64..10_000, rho in -0.9..0.9f64, q in prop::collection::vec(-1.5..1.5f64, 3)) {
        let (m, c) = fixed_scales(3);
        let vgp = VectorGP::with_length_scales(records(seed, 6, rho), GpConfig::default(), &m, &c).unwrap();
        let p = vgp.predict_factors(&q).unwrap();
        let s = nalgebra::Matrix4::from_fn(|i, j| p.sigma_mat[i][j]);
        prop_assert!(s.symmetric_eigenvalues().min() > -1e-12);
        prop_assert!(p.shift >= 0.0);
    }

    #[test]
    fn training_correlations_reproduced(seed in 0u64..10_000, rho in -0.6..0.9f64) {
        let recs = records(seed, 6, rho);
        let (m, c) = fixed_scales(3);
        let vgp = VectorGP::with_length_scales(recs.clone(), GpConfig::default(), &m, &c).unwrap();
        for r in &recs {
            let p = vgp.predict_factors(&r.c).unwrap();
            for rho_hat in p.correlations {
                prop_assert!((rho_hat - rho).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn insertion_without_refit_never_increases_variance(seed in 0u64..10_000, q in prop::collection::vec(-1.0..1.0f64, 3)) {
        let mut recs = records(seed, 7, 0.2);
        let extra = recs.pop().unwrap();
        let (m, c) = fixed_scales(3);
        let config = GpConfig { reoptimize_on_insert: false, ..GpConfig::default() };
        let before = VectorGP::with_length_scales(recs, config, &m, &c).unwrap();
        let (after, accepted) = before.add_observation(extra).unwrap();
        prop_assume!(accepted);
        let (v0, v1) = (before.predict_factors(&q).unwrap(), after.predict_factors(&q).unwrap());
        for k in 0..4 {
            prop_assert!(v1.variances[k] <= v0.variances[k] + 1e-12);
        }
    }
}

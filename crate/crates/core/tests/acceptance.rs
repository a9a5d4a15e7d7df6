//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion N: PASS|FAIL` line with its measurements.

use std::io::Write;
use std::time::{Duration, Instant};

use cardiorom::calibration::{adaptive_metropolis, gaussian_log_density, ChainConfig};
use cardiorom::geometry::EllipsoidParams;
use cardiorom::gp::{GpConfig, OptimizerOptions, ScalarGP, TrainingRecord, VectorGP, PAIRS};
use cardiorom::linalg::{Cholesky, SquareMatrix};
use cardiorom::onefiber::{
    cyclic_integral, f_cylindrical, f_rsym, run_with_settings, summarize, taylor_coefficients, CorrectionFactors,
    ParameterFile, MMHG_PER_KPA,
};
use cardiorom::pipeline::{run_offline, run_online, run_update, DataSource, Pipeline, PipelineConfig};
use cardiorom::podgeom::{build_population_basis, sample_population, ConvexHull, PopulationConfig};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn report(n: u32, checks: &[(&str, bool)], detail: String, elapsed: Duration, budget: Duration) {
    let in_time = elapsed < budget;
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    let pass = failed.is_empty() && in_time;
    // Written to the handle directly so the line survives output capture.
    let _ = writeln!(
        std::io::stdout().lock(),
        "criterion {n}: {} ({detail}; {:.2?} of {:.0?})",
        if pass { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    assert!(failed.is_empty(), "criterion {n} failed: {failed:?}; {detail}");
    assert!(in_time, "criterion {n} over budget: {elapsed:?}");
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn criterion_01_linearization_bounds() {
    let t = Instant::now();
    let (a, b) = taylor_coefficients(0.345f64).unwrap();
    let (mut cyl, mut tan) = (0.0f64, 0.0f64);
    for i in 0..=11_000 {
        let v = 0.15 + 0.55 * i as f64 / 11_000.0;
        let r = f_rsym(v).unwrap();
        cyl = cyl.max(((f_cylindrical(v) - r) / r).abs());
        tan = tan.max(((a + b * v - r) / r).abs());
    }
    report(
        1,
        &[("cylindrical", cyl <= 0.085 + 0.003), ("tangent", tan <= 0.034 + 0.003)],
        format!("cylindrical {:.3}%, tangent {:.3}%", 100.0 * cyl, 100.0 * tan),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_taylor_coefficients() {
    let t = Instant::now();
    let (a, b) = taylor_coefficients(0.345f64).unwrap();
    let (ai, bi) = taylor_coefficients(1e6f64).unwrap();
    report(
        2,
        &[
            ("alpha*", (a - 1.0).abs() < 1e-2),
            ("beta*", (b - 3.49).abs() < 1e-2),
            ("alpha limit", (ai - 1.5).abs() < 1e-3),
            ("beta limit", (bi - 3.0).abs() < 1e-3),
        ],
        format!("(α*, β*) = ({a:.4}, {b:.4}); at η = 1e6 ({ai:.5}, {bi:.5})"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

/// Volume of the ellipsoid `ξ` below `z = H`, integrated in disks along the
/// long axis.
fn disk_volume(focal: f64, xi: f64, h: f64) -> f64 {
    let (a, c) = (focal * xi.sinh(), focal * xi.cosh());
    simpson(|z| std::f64::consts::PI * a * a * (1.0 - z * z / (c * c)), -c, h.min(c), 2000)
}

#[test]
fn criterion_03_reference_volumes() {
    let t = Instant::now();
    let g = EllipsoidParams::<f64>::reference();
    let (v, vw) = (g.cavity_volume(), g.wall_volume());
    let mut worst = 0.0f64;
    for g in [
        g,
        EllipsoidParams::new(3.1, 3.6, 0.9, 1.2).unwrap(),
        EllipsoidParams::new(5.0, 1.0, 0.3, 0.5).unwrap(),
    ] {
        let cav = disk_volume(g.c, g.xi_endo, g.h);
        let wall = disk_volume(g.c, g.xi_epi, g.h) - cav;
        worst = worst
            .max(((cav - g.cavity_volume()) / cav).abs())
            .max(((wall - g.wall_volume()) / wall).abs());
    }
    report(
        3,
        &[
            ("cavity", ((v - 44.0) / 44.0).abs() < 0.01),
            ("wall", ((vw - 136.0) / 136.0).abs() < 0.01),
            ("quadrature", worst < 1e-6),
        ],
        format!("cavity {v:.2} ml, wall {vw:.2} ml, quadrature mismatch {worst:.1e}"),
        t.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_04_evidence_toy() {
    let t = Instant::now();
    let analytic = (-(6.0f64 - 4.0).powi(2) / (2.0 * 1.64)).exp() / (std::f64::consts::TAU * 1.64).sqrt();
    let chol = Cholesky::new(&SquareMatrix::from_rows(&[vec![0.64]]).unwrap()).unwrap();
    let prior = Normal::new(4.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    let mc = (0..n)
        .map(|_| gaussian_log_density(&[6.0 - prior.sample(&mut rng)], &chol).exp())
        .sum::<f64>()
        / n as f64;
    report(
        4,
        &[("analytic", (analytic - 0.092).abs() <= 1e-3), ("monte carlo", (mc - 0.092).abs() <= 1e-3)],
        format!("analytic {analytic:.5}, Monte-Carlo {mc:.5}"),
        t.elapsed(),
        Duration::from_secs(5),
    );
}

/// Batch-means standard error of the mean of `xs`.
fn batch_se(xs: &[f64], n_batches: usize) -> f64 {
    let m = xs.len() / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| xs[b * m..(b + 1) * m].iter().sum::<f64>() / m as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (var / n_batches as f64).sqrt()
}

#[test]
fn criterion_05_mcmc_conjugate_posterior() {
    let t = Instant::now();
    // y = A θ + ε with θ ~ N(m0, S0), ε ~ N(0, R).
    let a = DMatrix::from_row_slice(4, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, -0.3, 0.7, 0.0, 1.0, 0.2, 0.2, 0.2]);
    let m0 = DVector::from_column_slice(&[0.5, -1.0, 2.0]);
    let s0 = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0, 0.25]));
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.3, 0.5, 0.2, 0.4]));
    let y = DVector::from_column_slice(&[1.2, -0.4, 2.5, 0.6]);
    let s0i = s0.clone().try_inverse().unwrap();
    let ri = r.clone().try_inverse().unwrap();
    let post_cov = (&s0i + a.transpose() * &ri * &a).try_inverse().unwrap();
    let post_mean = &post_cov * (&s0i * &m0 + a.transpose() * &ri * &y);
    let log_post = |th: &[f64]| {
        let th = DVector::from_column_slice(th);
        let res = &y - &a * &th;
        let dp = &th - &m0;
        -0.5 * (res.transpose() * &ri * &res)[(0, 0)] - 0.5 * (dp.transpose() * &s0i * &dp)[(0, 0)]
    };
    let cfg = ChainConfig {
        n_adaptive: 20_000,
        reset_every: 10_000,
        n_regular: 55_000,
        n_burnin: 5_000,
        seed: 5,
        initial_step: 0.1,
        ..Default::default()
    };
    let chain = adaptive_metropolis(log_post, &cfg, &[0.0; 3]).unwrap();
    let mut worst = 0.0f64;
    for i in 0..3 {
        let xs: Vec<f64> = chain.samples.iter().map(|s| s[i]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        worst = worst.max((m - post_mean[i]).abs() / batch_se(&xs, 50));
        for j in 0..=i {
            let prods: Vec<f64> = chain
                .samples
                .iter()
                .map(|s| (s[i] - post_mean[i]) * (s[j] - post_mean[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / prods.len() as f64;
            worst = worst.max((c - post_cov[(i, j)]).abs() / batch_se(&prods, 50));
        }
    }
    let acc = chain.acceptance_rate;
    report(
        5,
        &[
            ("samples", chain.samples.len() == 50_000),
            ("moments", worst <= 3.0),
            ("acceptance", (0.15..=0.35).contains(&acc)),
        ],
        format!("max deviation {worst:.2} standard errors, acceptance {acc:.3}"),
        t.elapsed(),
        Duration::from_secs(60),
    );
}

fn dense_gp_posterior(x: &[Vec<f64>], y: &[f64], noise: &[f64], l: &[f64], q: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let k = |a: &[f64], b: &[f64]| {
        (-0.5 * a.iter().zip(b).zip(l).map(|((u, v), s)| ((u - v) / s).powi(2)).sum::<f64>()).exp()
    };
    let kxx = DMatrix::from_fn(x.len(), x.len(), |i, j| k(&x[i], &x[j]) + if i == j { noise[i].powi(2) } else { 0.0 });
    let kxq = DMatrix::from_fn(x.len(), q.len(), |i, j| k(&x[i], &q[j]));
    let kqq = DMatrix::from_fn(q.len(), q.len(), |i, j| k(&q[i], &q[j]));
    let inv = kxx.try_inverse().unwrap();
    let mean = kxq.transpose() * &inv * DVector::from_column_slice(y);
    (mean.iter().copied().collect(), kqq - kxq.transpose() * inv * kxq)
}

#[test]
fn criterion_06_gp_correctness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut dense_err, mut interp_err) = (0.0f64, 0.0f64);
    let mut bounds_ok = true;
    for trial in 0..40 {
        let d = 1 + trial % 4;
        let n = rng.random_range(4..12);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
        let l: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..1.5)).collect();
        let bounds = vec![[0.01, 10.0]; d];
        let gp = ScalarGP::new(x.clone(), y.clone(), noise.clone(), l.clone(), bounds).unwrap();
        let q: Vec<Vec<f64>> = (0..5).map(|_| (0..d).map(|_| rng.random_range(-1.2..1.2)).collect()).collect();
        let (m, cov) = gp.posterior(&q).unwrap();
        let (m_ref, cov_ref) = dense_gp_posterior(&x, &y, &noise, &l, &q);
        for i in 0..q.len() {
            dense_err = dense_err.max((m[i] - m_ref[i]).abs());
            for j in 0..q.len() {
                dense_err = dense_err.max((cov[(i, j)] - cov_ref[(i, j)]).abs());
            }
        }
        // zero noise, well-separated inputs
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut x = vec![i as f64 / n as f64];
                x.extend((1..d).map(|_| rng.random_range(0.0..1.0)));
                x
            })
            .collect();
        let ls: Vec<f64> = l.iter().map(|v| 0.1 * v).collect();
        let exact = ScalarGP::new(xs.clone(), y.clone(), vec![0.0; n], ls, vec![[0.01, 10.0]; d]).unwrap();
        for (xi, yi) in xs.iter().zip(&y) {
            interp_err = interp_err.max((exact.predict(xi).unwrap().0 - yi).abs());
        }
        let fitted = ScalarGP::with_data_bounds(x, y, noise, d, 0.02, 2.0).unwrap();
        let opt = fitted.optimize_length_scales(&OptimizerOptions {
            seed: trial as u64,
            ..Default::default()
        });
        for (l, b) in opt.length_scales().iter().zip(opt.bounds()) {
            bounds_ok &= *l >= b[0] && *l <= b[1];
        }
        for (b, b0) in opt.bounds().iter().zip(fitted.bounds()) {
            bounds_ok &= b == b0 && (b[1] / b[0] - 100.0).abs() < 1e-9;
        }
    }
    report(
        6,
        &[("dense oracle", dense_err <= 1e-10), ("interpolation", interp_err <= 1e-8), ("bounds", bounds_ok)],
        format!("dense mismatch {dense_err:.1e}, interpolation error {interp_err:.1e}"),
        t.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_07_algorithm_assembly() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut min_eig = f64::INFINITY;
    let mut corr_err = 0.0f64;
    for trial in 0..1000 {
        let d = 1 + trial % 4;
        let n = rng.random_range(3..9);
        let records: Vec<TrainingRecord<f64>> = (0..n)
            .map(|i| {
                let sd: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..0.2));
                let mut rho = [0.0; 6];
                for r in rho.iter_mut() {
                    *r = rng.random_range(-1.0..1.0);
                }
                if trial % 3 == 0 {
                    // pairwise valid, jointly impossible
                    rho = [0.95, 0.95, 0.0, -0.95, 0.0, 0.0];
                }
                let mut s = [[0.0; 4]; 4];
                for k in 0..4 {
                    s[k][k] = sd[k] * sd[k];
                }
                for (k, &(a, b)) in PAIRS.iter().enumerate() {
                    s[a][b] = rho[k] * sd[a] * sd[b];
                    s[b][a] = s[a][b];
                }
                TrainingRecord {
                    c: (0..d).map(|k| i as f64 + 0.37 * k as f64 * rng.random_range(0.5..1.5)).collect(),
                    mu: std::array::from_fn(|_| rng.random_range(0.8..1.2)),
                    sigma_mat: s,
                }
            })
            .collect();
        let cfg = GpConfig {
            optimizer: OptimizerOptions {
                n_starts: 2,
                max_iter: 50,
                seed: trial as u64,
            },
            ..Default::default()
        };
        let gp = VectorGP::train(records.clone(), cfg).unwrap();
        for rec in &records {
            let p = gp.predict_factors(&rec.c).unwrap();
            for (k, &(a, b)) in PAIRS.iter().enumerate() {
                corr_err = corr_err.max((p.correlations[k] - rec.correlation(a, b)).abs());
            }
        }
        for _ in 0..3 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..n as f64 + 1.0)).collect();
            let p = gp.predict_factors(&q).unwrap();
            let m = DMatrix::from_fn(4, 4, |i, j| p.sigma_mat[i][j]);
            min_eig = min_eig.min(SymmetricEigen::new(m).eigenvalues.min());
        }
    }
    report(
        7,
        &[("psd", min_eig >= -1e-12), ("correlations", corr_err <= 1e-8)],
        format!("min eigenvalue {min_eig:.2e}, correlation error {corr_err:.1e}"),
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_08_conservation_and_energy() {
    let t = Instant::now();
    let pf = ParameterFile::shipped_default();
    let mut settings = pf.simulation;
    settings.n_cycles = 12;
    let sim = run_with_settings(&pf.rom, &CorrectionFactors::unity(), &settings).unwrap();
    let total0 = sim.cycles[0].states[0].total_volume();
    let drift = sim
        .cycles
        .iter()
        .flat_map(|c| &c.states)
        .map(|s| ((s.total_volume() - total0) / total0).abs())
        .fold(0.0f64, f64::max);
    let c = sim.cycles.last().unwrap();
    let pdv = cyclic_integral(&c.trace.p, &c.trace.v);
    let stress: Vec<f64> = c.fiber.iter().map(|f| f.stress).collect();
    let strain: Vec<f64> = c.fiber.iter().map(|f| f.strain).collect();
    let fiber = MMHG_PER_KPA * pf.rom.vw * cyclic_integral(&stress, &strain);
    let rel = ((pdv - fiber) / pdv).abs();
    report(
        8,
        &[("conservation", drift <= 1e-8), ("work identity", rel <= 0.01)],
        format!("volume drift {drift:.1e}, ∮p dV = {pdv:.1} vs Vw ∮τ dε = {fiber:.1} ({:.3}%)", 100.0 * rel),
        t.elapsed(),
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_09_end_to_end_identifiability() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig {
        out_dir: dir.path().to_path_buf(),
        seed: 1,
        n_pop: 60,
        data: DataSource::Oracle { noisy: false },
        write_chains: false,
        ..Default::default()
    };
    cfg.calibration.chain = ChainConfig {
        n_adaptive: 6_000,
        reset_every: 2_000,
        n_regular: 4_000,
        n_burnin: 1_000,
        ..Default::default()
    };
    cfg.uq.n_mc = 2_000;
    let art = run_offline(&cfg).unwrap();
    let field = art.field.clone().unwrap();

    let mut worst_z = 0.0f64;
    for (rec, rep) in art.dataset.records.iter().zip(&art.reports) {
        let truth = field.eval(&rec.c).unwrap();
        let sd = rep.std();
        for i in 0..4 {
            worst_z = worst_z.max((rep.mu[i] - truth[i]).abs() / sd[i]);
        }
    }

    // held-out point: interior population member farthest from the training set
    let hull_pts: Vec<Vec<f64>> = art.hull.vertices.iter().map(|&i| art.coefficients[i].clone()).collect();
    let hull = ConvexHull::new(&hull_pts).unwrap();
    let held = (0..art.coefficients.len())
        .filter(|i| !art.hull.vertices.contains(i) && hull.contains(&art.coefficients[*i]))
        .max_by(|&a, &b| {
            art.gp
                .min_normalized_distance(&art.coefficients[a])
                .total_cmp(&art.gp.min_normalized_distance(&art.coefficients[b]))
        })
        .expect("an interior point");
    let c = art.coefficients[held].clone();
    let p = Pipeline::new(cfg.clone()).unwrap();
    let clean = p.oracle_trace(&art.basis, &field, &c, false, 0).unwrap();
    let v_ed = summarize(&clean).v_ed;

    let target = art.basis.reconstruct_grid(&c).unwrap();
    let before = run_online(&cfg, &target).unwrap();
    let q99 = before.summary.iter().find(|s| (s.level - 0.99).abs() < 1e-12).unwrap();
    let contains = q99.lo.v_ed <= v_ed && v_ed <= q99.hi.v_ed;
    let band = before.band(0.99).unwrap();
    let covered = (0..clean.len())
        .filter(|&k| {
            band.p_lo[k] <= clean.p[k] && clean.p[k] <= band.p_hi[k] && band.v_lo[k] <= clean.v[k] && clean.v[k] <= band.v_hi[k]
        })
        .count() as f64
        / clean.len() as f64;

    let cal = p
        .calibrate_geometry(&art.basis, &c, &clean, cfg.stream_seed("chain", held as u64))
        .unwrap();
    let update = run_update(&cfg, cal.report.to_record(c.clone())).unwrap();
    let after = run_online(&cfg, &target).unwrap();
    let reduction = before.trust.ratio / after.trust.ratio;

    report(
        9,
        &[
            ("posterior means within 2 sd", worst_z <= 2.0),
            ("99% V_ED band contains oracle", contains),
            ("record accepted", update.accepted),
            ("flag raised before", before.trust.flag),
            ("ratio reduced 2x", reduction >= 2.0),
            ("flag cleared after", !after.trust.flag),
        ],
        format!(
            "{} hull vertices, max |z| {worst_z:.2}; held-out V_ED {v_ed:.2} in [{:.2}, {:.2}], \
             pointwise 99% coverage {:.1}%; trust ratio {:.3} -> {:.3} ({reduction:.2}x), noise level {:.2} ml",
            art.hull.vertices.len(),
            q99.lo.v_ed,
            q99.hi.v_ed,
            100.0 * covered,
            before.trust.ratio,
            after.trust.ratio,
            before.trust.noise_level
        ),
        t.elapsed(),
        Duration::from_secs(30 * 60),
    );
}

#[test]
fn criterion_10_pod_fidelity() {
    let t = Instant::now();
    let cfg = PopulationConfig::default();
    let pop = sample_population(200, 10, &cfg).unwrap();
    let basis = build_population_basis(&pop, 4, cfg.lattice).unwrap();
    let held = sample_population(50, 11, &cfg).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for s in &held {
        let rec = basis.reconstruct(&basis.fit_coefficients(&s.shape).unwrap()).unwrap();
        err += s.shape.iter().zip(&rec).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        norm += s.shape.iter().zip(&basis.x_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    }
    let rel = err / norm;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut fit_err = 0.0f64;
    for _ in 0..20 {
        let c: Vec<f64> = (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                5.0 * z
            })
            .collect();
        let back = basis.fit_coefficients(&basis.reconstruct(&c).unwrap()).unwrap();
        fit_err = fit_err.max(c.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let sorted = basis.singular_values.windows(2).all(|w| w[0] >= w[1]);
    report(
        10,
        &[("held-out reconstruction", rel < 0.05), ("in-span fit", fit_err <= 1e-10), ("singular values", sorted)],
        format!("held-out error {:.2}% of mean deformation, in-span fit error {fit_err:.1e}", 100.0 * rel),
        t.elapsed(),
        Duration::from_secs(120),
    );
}

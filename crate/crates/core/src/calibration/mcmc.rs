use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};

/// Sampler schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Steps of the adaptive phase.
    pub n_adaptive: usize,
    /// The empirical covariance restarts from scratch this often.
    pub reset_every: usize,
    /// Steps with the frozen proposal.
    pub n_regular: usize,
    /// Leading regular steps discarded.
    pub n_burnin: usize,
    pub target_acceptance: f64,
    pub seed: u64,
    /// Standard deviation of the initial isotropic proposal.
    pub initial_step: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_adaptive: 100_000,
            reset_every: 25_000,
            n_regular: 25_000,
            n_burnin: 5_000,
            target_acceptance: 0.234,
            seed: 0,
            initial_step: 0.01,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_regular {
            return Err(Error::Invalid(format!(
                "burn-in {} must be shorter than the regular chain {}",
                self.n_burnin, self.n_regular
            )));
        }
        if self.n_adaptive > 0 && self.reset_every == 0 {
            return Err(Error::Invalid("reset_every must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Invalid("target acceptance must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) || !self.initial_step.is_finite() {
            return Err(Error::Invalid("initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Post-burn-in samples and sampler diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    /// Absolute step index of `samples[0]`, counting adaptive steps.
    pub first_step: usize,
    /// Acceptance rate of the regular phase.
    pub acceptance_rate: f64,
    /// Acceptance rate of the adaptive phase (NaN when it is empty).
    pub adaptive_acceptance: f64,
    /// Frozen proposal covariance of the regular phase.
    pub proposal_cov: Vec<Vec<f64>>,
    /// Proposals whose log posterior was not finite.
    pub n_failed: usize,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.proposal_cov.len()
    }
}

/// Welford accumulator of mean and covariance.
#[derive(Debug, Clone)]
pub struct StreamingMoments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<Vec<f64>>,
}

impl StreamingMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![vec![0.0; dim]; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let d = self.mean.len();
        let delta: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
        let nf = self.n as f64;
        for i in 0..d {
            self.mean[i] += delta[i] / nf;
        }
        for i in 0..d {
            for j in 0..d {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance; zeros below two samples.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let denom = self.n.saturating_sub(1).max(1) as f64;
        self.m2
            .iter()
            .enumerate()
            .map(|(i, row)| (0..row.len()).map(|j| 0.5 * (row[j] + self.m2[j][i]) / denom).collect())
            .collect()
    }
}

/// Sample mean and unbiased sample covariance.
pub fn sample_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples.len();
    let d = samples.first().map_or(0, |s| s.len());
    let mut mean = vec![0.0; d];
    for s in samples {
        for i in 0..d {
            mean[i] += s[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let denom = n.saturating_sub(1).max(1) as f64;
    let cov = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / denom)
                .collect()
        })
        .collect();
    (mean, cov)
}

/// Split-chain potential scale reduction per dimension.
pub fn split_rhat(samples: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = samples.len() / 2;
    if n < 2 {
        return None;
    }
    let halves = [&samples[..n], &samples[samples.len() - n..]];
    let d = samples[0].len();
    Some(
        (0..d)
            .map(|k| {
                let stats: Vec<(f64, f64)> = halves
                    .iter()
                    .map(|h| {
                        let m = h.iter().map(|s| s[k]).sum::<f64>() / n as f64;
                        let v = h.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                        (m, v)
                    })
                    .collect();
                let grand = 0.5 * (stats[0].0 + stats[1].0);
                let b = n as f64 * stats.iter().map(|(m, _)| (m - grand).powi(2)).sum::<f64>();
                let w = 0.5 * (stats[0].1 + stats[1].1);
                if w <= 0.0 {
                    return 1.0;
                }
                let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
                (var_plus / w).sqrt()
            })
            .collect(),
    )
}

/// Posterior mean, covariance and diagnostics of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mu: Vec<f64>,
    pub sigma_mat: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub rhat: Option<Vec<f64>>,
    pub n_samples: usize,
}

pub fn posterior_moments(chain: &Chain) -> Result<PosteriorSummary> {
    if chain.samples.is_empty() {
        return Err(Error::Invalid("posterior moments need at least one sample".into()));
    }
    let (mu, sigma_mat) = sample_moments(&chain.samples);
    Ok(PosteriorSummary {
        mu,
        sigma_mat,
        acceptance_rate: chain.acceptance_rate,
        rhat: split_rhat(&chain.samples),
        n_samples: chain.samples.len(),
    })
}

const HAARIO_SCALE: f64 = 2.38 * 2.38;
const COV_EPSILON: f64 = 1e-12;
const MIN_HISTORY: usize = 100;
const STUCK_ACCEPTANCE: f64 = 0.005;

struct Proposal {
    chol: Cholesky<f64>,
}

impl Proposal {
    fn new(cov: &[Vec<f64>]) -> Result<Self> {
        let m = SquareMatrix::from_rows(cov)?;
        Ok(Self {
            chol: Cholesky::with_jitter(&m)?,
        })
    }

    fn draw<R: Rng>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.chol.mul_lower(&z).iter().zip(x).map(|(a, b)| a + b).collect()
    }
}

fn scaled(cov: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    cov.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

/// Adaptive random-walk Metropolis.
///
/// During the adaptive phase the proposal is `exp(log_s)·B`, where `B` is
/// `2.38²/d` times the empirical covariance of the chain since the last reset
/// (plus a small ridge) once enough history exists, and `log_s` follows a
/// Robbins-Monro recursion toward the target acceptance. The final proposal
/// is then frozen for the regular phase, whose first `n_burnin` samples are
/// dropped. Non-finite log posteriors are rejections.
pub fn adaptive_metropolis<F>(mut log_post: F, config: &ChainConfig, init: &[f64]) -> Result<Chain>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    let d = init.len();
    if d == 0 {
        return Err(Error::Invalid("chain dimension must be positive".into()));
    }
    let mut x = init.to_vec();
    let mut lp = log_post(&x);
    if !lp.is_finite() {
        return Err(Error::Invalid(format!("log posterior at the initial point is {lp}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let step2 = config.initial_step * config.initial_step;
    let mut base: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { step2 } else { 0.0 }).collect())
        .collect();
    let mut log_s = 0.0f64;
    let mut proposal = Proposal::new(&base)?;
    let mut history = StreamingMoments::new(d);
    let mut n_failed = 0usize;

    let mut accepted = 0usize;
    for k in 0..config.n_adaptive {
        if k > 0 && k % config.reset_every == 0 {
            history = StreamingMoments::new(d);
        }
        let y = proposal.draw(&x, &mut rng);
        let lq = log_post(&y);
        if !lq.is_finite() {
            n_failed += 1;
        }
        let a = if lq.is_finite() { (lq - lp).min(0.0).exp() } else { 0.0 };
        if rng.random::<f64>() < a {
            x = y;
            lp = lq;
            accepted += 1;
        }
        history.push(&x);
        let gain = (1.0 + k as f64 / 100.0).powf(-0.6);
        log_s = (log_s + gain * (a - config.target_acceptance)).clamp(-30.0, 30.0);
        if history.count() >= MIN_HISTORY.max(10 * d) {
            let emp = history.covariance();
            let ridge = COV_EPSILON * (1.0 + (0..d).map(|i| emp[i][i]).sum::<f64>() / d as f64);
            let candidate: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| HAARIO_SCALE / d as f64 * emp[i][j] + if i == j { ridge } else { 0.0 })
                        .collect()
                })
                .collect();
            if (0..d).all(|i| candidate[i][i] > 0.0) {
                base = candidate;
            }
        }
        if let Ok(p) = Proposal::new(&scaled(&base, log_s.exp())) {
            proposal = p;
        }
    }
    let adaptive_acceptance = if config.n_adaptive > 0 {
        accepted as f64 / config.n_adaptive as f64
    } else {
        f64::NAN
    };
    if config.n_adaptive > 0 && adaptive_acceptance < STUCK_ACCEPTANCE {
        return Err(Error::StuckChain(format!(
            "acceptance {adaptive_acceptance:.4} over {} adaptive steps",
            config.n_adaptive
        )));
    }

    let proposal_cov = scaled(&base, log_s.exp());
    let proposal = Proposal::new(&proposal_cov)?;
    let keep = config.n_regular - config.n_burnin;
    let mut samples = Vec::with_capacity(keep);
    let mut log_posts = Vec::with_capacity(keep);
    let mut accepted = 0usize;
    for k in 0..config.n_regular {
        let y = proposal.draw(&x, &mut rng);
        let lq = log_post(&y);
        if !lq.is_finite() {
            n_failed += 1;
        }
        let a = if lq.is_finite() { (lq - lp).min(0.0).exp() } else { 0.0 };
        if rng.random::<f64>() < a {
            x = y;
            lp = lq;
            accepted += 1;
        }
        if k >= config.n_burnin {
            samples.push(x.clone());
            log_posts.push(lp);
        }
    }
    Ok(Chain {
        samples,
        log_post: log_posts,
        first_step: config.n_adaptive + config.n_burnin,
        acceptance_rate: accepted as f64 / config.n_regular as f64,
        adaptive_acceptance,
        proposal_cov,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(x: &[f64]) -> f64 {
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn standard_normal_target() {
        let cfg = ChainConfig {
            n_adaptive: 20_000,
            reset_every: 10_000,
            n_regular: 55_000,
            n_burnin: 5_000,
            seed: 1,
            initial_step: 0.1,
            ..Default::default()
        };
        let chain = adaptive_metropolis(std_normal, &cfg, &[0.5; 4]).unwrap();
        assert_eq!(chain.samples.len(), 50_000);
        let s = posterior_moments(&chain).unwrap();
        for i in 0..4 {
            assert!(s.mu[i].abs() < 0.05, "{:?}", s.mu);
        }
        let frob: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| (s.sigma_mat[i][j] - if i == j { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(frob < 0.1, "{frob}");
        assert!((0.15..=0.35).contains(&chain.acceptance_rate), "{}", chain.acceptance_rate);
        assert!(s.rhat.unwrap().iter().all(|&r| r < 1.05));
    }

    #[test]
    fn identical_seed_identical_chain() {
        let cfg = ChainConfig {
            n_adaptive: 500,
            reset_every: 200,
            n_regular: 300,
            n_burnin: 50,
            seed: 42,
            ..Default::default()
        };
        let a = adaptive_metropolis(std_normal, &cfg, &[0.0; 2]).unwrap();
        let b = adaptive_metropolis(std_normal, &cfg, &[0.0; 2]).unwrap();
        assert_eq!(a, b);
        let c = adaptive_metropolis(std_normal, &ChainConfig { seed: 43, ..cfg }, &[0.0; 2]).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn fixed_proposal_matches_discretized_target() {
        // Bimodal 1D density; bins of width 0.5 on [-5, 5].
        let target = |x: f64| 0.6 * (-0.5 * ((x + 1.5) / 0.7).powi(2)).exp() / 0.7 + 0.4 * (-0.5 * ((x - 1.8) / 0.5).powi(2)).exp() / 0.5;
        let cfg = ChainConfig {
            n_adaptive: 0,
            reset_every: 1,
            n_regular: 400_000,
            n_burnin: 1_000,
            seed: 7,
            initial_step: 1.2,
            ..Default::default()
        };
        let chain = adaptive_metropolis(|x| target(x[0]).ln(), &cfg, &[0.0]).unwrap();
        let edges: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
        let mut emp = [0.0; 20];
        for s in &chain.samples {
            if let Some(b) = edges.windows(2).position(|w| s[0] >= w[0] && s[0] < w[1]) {
                emp[b] += 1.0;
            }
        }
        let total = chain.samples.len() as f64;
        // Reference bin masses by fine midpoint quadrature.
        let mut want = vec![0.0; 20];
        for (b, w) in edges.windows(2).enumerate() {
            let h = (w[1] - w[0]) / 200.0;
            want[b] = (0..200).map(|i| target(w[0] + (i as f64 + 0.5) * h) * h).sum::<f64>();
        }
        let z: f64 = want.iter().sum();
        let tv: f64 = 0.5 * emp.iter().zip(&want).map(|(e, w)| (e / total - w / z).abs()).sum::<f64>();
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn failed_evaluations_are_rejections() {
        let cfg = ChainConfig {
            n_adaptive: 2_000,
            reset_every: 1_000,
            n_regular: 2_000,
            n_burnin: 100,
            seed: 3,
            initial_step: 0.5,
            ..Default::default()
        };
        let chain = adaptive_metropolis(
            |x| if x[0] < 0.0 { f64::NEG_INFINITY } else { -0.5 * (x[0] - 1.0).powi(2) },
            &cfg,
            &[1.0],
        )
        .unwrap();
        assert!(chain.n_failed > 0);
        assert!(chain.samples.iter().all(|s| s[0] >= 0.0));
    }

    #[test]
    fn stuck_chain_reported() {
        let cfg = ChainConfig {
            n_adaptive: 1_000,
            reset_every: 1_000,
            n_regular: 10,
            n_burnin: 1,
            initial_step: 1.0,
            ..Default::default()
        };
        let r = adaptive_metropolis(|x| if x[0] == 0.25 { 0.0 } else { f64::NEG_INFINITY }, &cfg, &[0.25]);
        assert!(matches!(r, Err(Error::StuckChain(_))));
    }

    #[test]
    fn moment_identities() {
        let constant = vec![vec![1.0, 2.0]; 10];
        let (m, c) = sample_moments(&constant);
        assert_eq!(m, vec![1.0, 2.0]);
        assert!(c.iter().flatten().all(|&v| v == 0.0));
        let a = [0.3, -1.0];
        let b = [1.1, 2.0];
        let (m, c) = sample_moments(&[a.to_vec(), b.to_vec()]);
        for i in 0..2 {
            assert!((m[i] - 0.5 * (a[i] + b[i])).abs() < 1e-15);
            for j in 0..2 {
                assert!((c[i][j] - 0.5 * (a[i] - b[i]) * (a[j] - b[j])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn streaming_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..5000)
            .map(|_| (0..3).map(|k| rng.random_range(-1.0..1.0) * (k + 1) as f64 + 10.0).collect())
            .collect();
        let mut s = StreamingMoments::new(3);
        xs.iter().for_each(|x| s.push(x));
        let (m, c) = sample_moments(&xs);
        for i in 0..3 {
            assert!((s.mean()[i] - m[i]).abs() < 1e-12);
            for j in 0..3 {
                assert!((s.covariance()[i][j] - c[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig { n_burnin: 10, n_regular: 10, ..Default::default() }.validate().is_err());
        assert!(ChainConfig::default().validate().is_ok());
    }
}

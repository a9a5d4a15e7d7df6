//! Bayesian calibration of the correction factors against a pressure-volume
//! trace.

pub mod likelihood;
pub mod mcmc;
pub mod noise;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::TrainingRecord;
use crate::onefiber::{PVTrace, ValveState};

pub use likelihood::{factors_from, gaussian_log_density, log_likelihood, residual, Prior, RomContext};
pub use mcmc::{
    adaptive_metropolis, posterior_moments, sample_moments, split_rhat, Chain, ChainConfig, PosteriorSummary,
    StreamingMoments,
};
pub use noise::{
    build_noise_covariance, exponential_block, isovolumetric_intervals, phase_weighted_sigma, NoiseCovariance,
    NoiseLevels, NoiseModel, NoiseSpec,
};

/// Noise, prior and sampler settings of one calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub noise: NoiseSpec,
    pub prior: Prior,
    pub chain: ChainConfig,
    /// With `false` the chain samples the prior alone.
    #[serde(default = "yes")]
    pub use_likelihood: bool,
}

fn yes() -> bool {
    true
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSpec::default(),
            prior: Prior::informed_beta(),
            chain: ChainConfig::default(),
            use_likelihood: true,
        }
    }
}

/// Persisted outcome of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mu: [f64; 4],
    pub sigma_mat: [[f64; 4]; 4],
    pub acceptance: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub noise_config: NoiseSpec,
    pub rhat: Option<Vec<f64>>,
    /// Proposals rejected because the ROM failed.
    pub n_failed: usize,
}

impl CalibrationReport {
    pub fn from_summary(s: &PosteriorSummary, seed: u64, noise: NoiseSpec, n_failed: usize) -> Result<Self> {
        if s.mu.len() != 4 {
            return Err(Error::Invalid("a calibration report holds four factors".into()));
        }
        Ok(Self {
            mu: std::array::from_fn(|i| s.mu[i]),
            sigma_mat: std::array::from_fn(|i| std::array::from_fn(|j| s.sigma_mat[i][j])),
            acceptance: s.acceptance_rate,
            n_samples: s.n_samples,
            seed,
            noise_config: noise,
            rhat: s.rhat.clone(),
            n_failed,
        })
    }

    pub fn std(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.sigma_mat[i][i].max(0.0).sqrt())
    }

    /// Training record at geometry coefficients `c`.
    pub fn to_record(&self, c: Vec<f64>) -> TrainingRecord<f64> {
        TrainingRecord {
            c,
            mu: self.mu,
            sigma_mat: self.sigma_mat,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Result of [`calibrate`]: report, chain and the noise model used.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub report: CalibrationReport,
    pub chain: Chain,
    pub noise: NoiseModel,
}

/// Valve states of the ROM cycle mapped onto a grid of `n` samples.
fn valves_on_grid(valves: &[ValveState], n: usize) -> Vec<ValveState> {
    if valves.len() == n {
        return valves.to_vec();
    }
    (0..n)
        .map(|i| valves[((i as f64 + 0.5) * valves.len() as f64 / n as f64) as usize % valves.len()])
        .collect()
}

/// Samples the posterior of `(α, β, γ, λ)` given one steady-state cycle.
///
/// Isovolumetric phases for the noise weighting come from the ROM at the
/// prior mean. The chain starts at the prior mean.
pub fn calibrate(data: &PVTrace<f64>, ctx: &RomContext, config: &CalibrationConfig) -> Result<Calibration> {
    config.prior.validate()?;
    if config.prior.mu_prior.len() != 4 {
        return Err(Error::Invalid("the prior must cover four correction factors".into()));
    }
    let nominal = ctx.simulate_cycle(&config.prior.mu_prior)?;
    let valves = valves_on_grid(&nominal.valves(), data.len());
    let noise = config.noise.model(data, &valves)?;
    let cov = build_noise_covariance(&noise)?;
    let prior = &config.prior;
    let log_post = |theta: &[f64]| -> f64 {
        let lp = prior.log_density(theta);
        if !config.use_likelihood {
            return lp;
        }
        match log_likelihood(theta, data, ctx, &cov) {
            Ok(ll) => lp + ll,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let chain = adaptive_metropolis(log_post, &config.chain, &prior.mu_prior)?;
    let summary = posterior_moments(&chain)?;
    let report = CalibrationReport::from_summary(&summary, config.chain.seed, config.noise, chain.n_failed)?;
    Ok(Calibration { report, chain, noise })
}

/// Chain dump with header `step,alpha,beta,gamma,lambda,logpost`.
pub fn write_chain_csv<W: Write>(chain: &Chain, out: W) -> Result<()> {
    if chain.dim() != 4 {
        return Err(Error::Invalid("chain dump expects four factors".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "alpha", "beta", "gamma", "lambda", "logpost"])?;
    for (k, (s, lp)) in chain.samples.iter().zip(&chain.log_post).enumerate() {
        let mut row = vec![(chain.first_step + k).to_string()];
        row.extend(s.iter().map(|v| format!("{v:?}")));
        row.push(format!("{lp:?}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_chain_csv(chain: &Chain, path: &Path) -> Result<()> {
    write_chain_csv(chain, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onefiber::ParameterFile;

    fn context() -> RomContext {
        let pf = ParameterFile::shipped_default();
        RomContext::new(pf.rom, pf.simulation)
    }

    #[test]
    fn prior_only_chain_recovers_prior() {
        let ctx = context();
        let data = ctx.simulate(&[1.0; 4]).unwrap();
        let cfg = CalibrationConfig {
            use_likelihood: false,
            prior: Prior::default(),
            chain: ChainConfig {
                n_adaptive: 10_000,
                reset_every: 5_000,
                n_regular: 40_000,
                n_burnin: 2_000,
                seed: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let cal = calibrate(&data, &ctx, &cfg).unwrap();
        for i in 0..4 {
            assert!((cal.report.mu[i] - 1.0).abs() < 0.01, "{:?}", cal.report.mu);
            assert!((cal.report.std()[i] - 0.1).abs() < 0.01, "{:?}", cal.report.std());
        }
    }

    #[test]
    fn report_and_chain_files() {
        let ctx = context();
        let data = ctx.simulate(&[1.0; 4]).unwrap();
        let cfg = CalibrationConfig {
            chain: ChainConfig {
                n_adaptive: 300,
                reset_every: 150,
                n_regular: 200,
                n_burnin: 50,
                seed: 9,
                initial_step: 0.002,
                ..Default::default()
            },
            ..Default::default()
        };
        let cal = calibrate(&data, &ctx, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        cal.report.save(&p).unwrap();
        assert_eq!(CalibrationReport::load(&p).unwrap(), cal.report);
        let text = std::fs::read_to_string(&p).unwrap();
        for key in ["\"mu\"", "\"sigma_mat\"", "\"acceptance\"", "\"n_samples\"", "\"seed\"", "\"noise_config\""] {
            assert!(text.contains(key));
        }
        let mut buf = Vec::new();
        write_chain_csv(&cal.chain, &mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert!(csv.starts_with("step,alpha,beta,gamma,lambda,logpost\n"));
        assert_eq!(csv.lines().count(), 151);
        assert!(csv.lines().nth(1).unwrap().starts_with("350,"));
    }
}

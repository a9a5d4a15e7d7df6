use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::onefiber::{run_with_settings, CorrectionFactors, CycleRecord, PVTrace, RomParameters, SimulationSettings};

use super::noise::NoiseCovariance;

/// `log N(r; 0, L Lᵀ)`.
pub fn gaussian_log_density(r: &[f64], chol: &Cholesky<f64>) -> f64 {
    -0.5 * chol.quad_form(r) - 0.5 * chol.log_det() - 0.5 * r.len() as f64 * std::f64::consts::TAU.ln()
}

/// Uncorrelated Gaussian prior on the correction factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mu_prior: Vec<f64>,
    pub sigma_prior: Vec<f64>,
}

impl Default for Prior {
    /// Unit means, standard deviation 0.1.
    fn default() -> Self {
        Self {
            mu_prior: vec![1.0; 4],
            sigma_prior: vec![0.1; 4],
        }
    }
}

impl Prior {
    /// Default prior with a tighter `σ_β = 0.05`.
    pub fn informed_beta() -> Self {
        Self {
            sigma_prior: vec![0.1, 0.05, 0.1, 0.1],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_prior.len() != self.sigma_prior.len() || self.mu_prior.is_empty() {
            return Err(Error::Invalid("prior means and deviations must have equal nonzero length".into()));
        }
        if self.sigma_prior.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("prior standard deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.mu_prior)
            .zip(&self.sigma_prior)
            .map(|((t, m), s)| {
                let z = (t - m) / s;
                -0.5 * z * z - s.ln() - 0.5 * std::f64::consts::TAU.ln()
            })
            .sum()
    }
}

/// Everything needed to turn correction factors into a steady ROM cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomContext {
    pub params: RomParameters<f64>,
    pub settings: SimulationSettings<f64>,
}

impl RomContext {
    pub fn new(params: RomParameters<f64>, settings: SimulationSettings<f64>) -> Self {
        Self { params, settings }
    }

    /// Last simulated cycle at `theta = (α, β, γ, λ)`; any failure is
    /// reported as [`Error::SimulationFailed`].
    pub fn simulate_cycle(&self, theta: &[f64]) -> Result<CycleRecord<f64>> {
        let factors = factors_from(theta)?;
        run_with_settings(&self.params, &factors, &self.settings)
            .and_then(|mut sim| sim.cycles.pop().ok_or_else(|| Error::Invalid("no cycles simulated".into())))
            .map_err(|e| match e {
                e @ Error::SimulationFailed(_) => e,
                e => Error::SimulationFailed(format!("at theta {theta:?}: {e}")),
            })
    }

    pub fn simulate(&self, theta: &[f64]) -> Result<PVTrace<f64>> {
        Ok(self.simulate_cycle(theta)?.trace)
    }
}

pub fn factors_from(theta: &[f64]) -> Result<CorrectionFactors<f64>> {
    let a: [f64; 4] = theta
        .try_into()
        .map_err(|_| Error::Invalid(format!("expected 4 correction factors, got {}", theta.len())))?;
    Ok(CorrectionFactors::from_array(a))
}

/// `[d_p − q_p, d_V − q_V]` after bringing the model onto the data grid.
pub fn residual(data: &PVTrace<f64>, model: &PVTrace<f64>) -> Result<Vec<f64>> {
    let aligned;
    let model = if model.len() == data.len() && (model.dt - data.dt).abs() <= 1e-12 * data.dt {
        model
    } else {
        aligned = model.resample(data.dt, data.len())?;
        &aligned
    };
    Ok(data
        .p
        .iter()
        .zip(&model.p)
        .map(|(d, q)| d - q)
        .chain(data.v.iter().zip(&model.v).map(|(d, q)| d - q))
        .collect())
}

/// Gaussian log likelihood of `data` under the ROM at `theta`.
pub fn log_likelihood(theta: &[f64], data: &PVTrace<f64>, ctx: &RomContext, noise: &NoiseCovariance) -> Result<f64> {
    if data.len() != noise.n() {
        return Err(Error::Grid(format!(
            "data has {} samples, noise model {}",
            data.len(),
            noise.n()
        )));
    }
    let model = ctx.simulate(theta)?;
    Ok(noise.log_density(&residual(data, &model)?))
}

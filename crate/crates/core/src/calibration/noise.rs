use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};
use crate::onefiber::{summarize, PVTrace, ValveState};

/// Per-step standard deviations and correlation times of the pressure and
/// volume noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// mmHg, one per sample.
    pub sigma_p: Vec<f64>,
    /// ml, one per sample.
    #[serde(rename = "sigma_V")]
    pub sigma_v: Vec<f64>,
    pub tau_p: f64,
    #[serde(rename = "tau_V")]
    pub tau_v: f64,
    pub dt: f64,
}

impl NoiseModel {
    pub fn len(&self) -> usize {
        self.sigma_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_p.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_p.len() != self.sigma_v.len() || self.sigma_p.is_empty() {
            return Err(Error::Invalid("pressure and volume noise need equal nonempty lengths".into()));
        }
        if self.sigma_p.iter().chain(&self.sigma_v).any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("noise standard deviations must be positive".into()));
        }
        for (name, v) in [("tau_p", self.tau_p), ("tau_V", self.tau_v), ("dt", self.dt)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Block-diagonal noise covariance held as the Cholesky factors of its
/// pressure and volume blocks.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    pp: Cholesky<f64>,
    vv: Cholesky<f64>,
}

/// `Σ_ij = σ_i σ_j exp(−|i−j| dt / τ)`.
pub fn exponential_block(sigma: &[f64], tau: f64, dt: f64) -> SquareMatrix<f64> {
    let r = (-dt / tau).exp();
    SquareMatrix::from_fn(sigma.len(), |i, j| sigma[i] * sigma[j] * r.powi(i.abs_diff(j) as i32))
}

/// Factors the pressure and volume blocks of the noise covariance.
pub fn build_noise_covariance(model: &NoiseModel) -> Result<NoiseCovariance> {
    model.validate()?;
    let pp = Cholesky::with_jitter(&exponential_block(&model.sigma_p, model.tau_p, model.dt))?;
    let vv = Cholesky::with_jitter(&exponential_block(&model.sigma_v, model.tau_v, model.dt))?;
    Ok(NoiseCovariance { pp, vv })
}

impl NoiseCovariance {
    /// Samples per block.
    pub fn n(&self) -> usize {
        self.pp.dim()
    }

    pub fn log_det(&self) -> f64 {
        self.pp.log_det() + self.vv.log_det()
    }

    /// `rᵀ Σ⁻¹ r` for `r = [r_p…, r_V…]`.
    pub fn quad_form(&self, r: &[f64]) -> f64 {
        let n = self.n();
        assert_eq!(r.len(), 2 * n, "residual must hold pressure then volume");
        self.pp.quad_form(&r[..n]) + self.vv.quad_form(&r[n..])
    }

    /// Log density of a zero-mean normal with this covariance at `r`.
    pub fn log_density(&self, r: &[f64]) -> f64 {
        let n = self.n() as f64;
        -0.5 * self.quad_form(r) - 0.5 * self.log_det() - n * std::f64::consts::TAU.ln()
    }

    /// One correlated draw `L z`, pressure block first.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n();
        let z: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = self.pp.mul_lower(&z[..n]);
        out.extend(self.vv.mul_lower(&z[n..]));
        out
    }

    /// Full `2n × 2n` matrix; for diagnostics and tests.
    pub fn dense(&self) -> SquareMatrix<f64> {
        let n = self.n();
        let block = |c: &Cholesky<f64>, i: usize, j: usize| {
            let l = c.lower();
            (0..=i.min(j)).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>()
        };
        SquareMatrix::from_fn(2 * n, |i, j| match (i < n, j < n) {
            (true, true) => block(&self.pp, i, j),
            (false, false) => block(&self.vv, i - n, j - n),
            _ => 0.0,
        })
    }
}

/// Volume noise that dips from `sigma_max` to `sigma_min` inside the
/// isovolumetric intervals (both valves closed), with tanh ramps of
/// half-width `width` (ms) at each interval edge. The cycle is periodic.
pub fn phase_weighted_sigma(
    valves: &[ValveState],
    dt: f64,
    sigma_min: f64,
    sigma_max: f64,
    width: f64,
) -> Result<Vec<f64>> {
    if !(sigma_min > 0.0 && sigma_min < sigma_max) {
        return Err(Error::Invalid(format!(
            "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
        )));
    }
    if !(width > 0.0) || !(dt > 0.0) {
        return Err(Error::Invalid("transition width and dt must be positive".into()));
    }
    let n = valves.len();
    let period = n as f64 * dt;
    let intervals = isovolumetric_intervals(valves, dt);
    Ok((0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let w: f64 = intervals
                .iter()
                .flat_map(|&(a, b)| [-period, 0.0, period].map(move |s| (a + s, b + s)))
                .map(|(a, b)| 0.5 * (((t - a) / width).tanh() - ((t - b) / width).tanh()))
                .sum::<f64>()
                .clamp(0.0, 1.0);
            (sigma_max + (sigma_min - sigma_max) * w).clamp(sigma_min, sigma_max)
        })
        .collect())
}

/// Time intervals `[a, b]` covered by runs of isovolumetric samples; a run
/// crossing the end of the cycle is reported once, extending past it.
pub fn isovolumetric_intervals(valves: &[ValveState], dt: f64) -> Vec<(f64, f64)> {
    let n = valves.len();
    let iso: Vec<bool> = valves.iter().map(|v| v.isovolumetric()).collect();
    if iso.iter().all(|&b| b) {
        return vec![(-0.5 * dt, (n as f64 - 0.5) * dt)];
    }
    // Scan one full period starting and ending on a sample with an open
    // valve, so every run closes inside the loop.
    let start = (0..n).find(|&i| !iso[i]).expect("some sample has an open valve");
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for k in 1..=n {
        let i = (start + k) % n;
        let idx = start + k;
        match (iso[i], run) {
            (true, None) => run = Some(idx),
            (false, Some(s)) => {
                out.push(((s as f64 - 0.5) * dt, (idx as f64 - 0.5) * dt));
                run = None;
            }
            _ => {}
        }
    }
    let period = n as f64 * dt;
    out.into_iter()
        .map(|(a, b)| {
            let shift = (a / period).floor() * period;
            (a - shift, b - shift)
        })
        .collect()
}

/// How noise levels are chosen for a calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoiseLevels {
    /// Absolute levels: mmHg for pressure, ml for volume.
    Fixed {
        sigma_p: f64,
        #[serde(rename = "sigma_V_min")]
        sigma_v_min: f64,
        #[serde(rename = "sigma_V_max")]
        sigma_v_max: f64,
    },
    /// Fractions of the data's peak pressure and stroke volume.
    Landmark {
        p_fraction: f64,
        v_min_fraction: f64,
        v_max_fraction: f64,
    },
}

impl NoiseLevels {
    pub fn fixed_default() -> Self {
        NoiseLevels::Fixed {
            sigma_p: 2.5,
            sigma_v_min: 0.25,
            sigma_v_max: 1.15,
        }
    }

    pub fn landmark_default() -> Self {
        NoiseLevels::Landmark {
            p_fraction: 0.05,
            v_min_fraction: 0.017,
            v_max_fraction: 0.033,
        }
    }

    /// `(σ_p, σ_V_min, σ_V_max)` for a given data trace.
    pub fn resolve(&self, data: &PVTrace<f64>) -> (f64, f64, f64) {
        match *self {
            NoiseLevels::Fixed {
                sigma_p,
                sigma_v_min,
                sigma_v_max,
            } => (sigma_p, sigma_v_min, sigma_v_max),
            NoiseLevels::Landmark {
                p_fraction,
                v_min_fraction,
                v_max_fraction,
            } => {
                let s = summarize(data);
                (p_fraction * s.p_max, v_min_fraction * s.v_stroke, v_max_fraction * s.v_stroke)
            }
        }
    }
}

/// Complete noise specification; correlation times default to `t_cycle − dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub levels: NoiseLevels,
    pub tau_p: Option<f64>,
    #[serde(rename = "tau_V")]
    pub tau_v: Option<f64>,
    /// Half-width of the tanh ramps around isovolumetric phases (ms).
    pub transition_width: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            levels: NoiseLevels::landmark_default(),
            tau_p: None,
            tau_v: None,
            transition_width: 4.0,
        }
    }
}

impl NoiseSpec {
    /// Noise model on the grid of `data`, with phases taken from `valves`.
    pub fn model(&self, data: &PVTrace<f64>, valves: &[ValveState]) -> Result<NoiseModel> {
        if valves.len() != data.len() {
            return Err(Error::Grid(format!(
                "{} valve states for a trace of {} samples",
                valves.len(),
                data.len()
            )));
        }
        let (sp, vmin, vmax) = self.levels.resolve(data);
        let default_tau = data.period() - data.dt;
        let model = NoiseModel {
            sigma_p: vec![sp; data.len()],
            sigma_v: phase_weighted_sigma(valves, data.dt, vmin, vmax, self.transition_width)?,
            tau_p: self.tau_p.unwrap_or(default_tau),
            tau_v: self.tau_v.unwrap_or(default_tau),
            dt: data.dt,
        };
        model.validate()?;
        Ok(model)
    }

    /// Smallest volume noise level for `data` (the trust-check reference).
    pub fn sigma_v_min(&self, data: &PVTrace<f64>) -> f64 {
        self.levels.resolve(data).1
    }
}

use nalgebra::{Matrix4, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SurfaceGrid;
use crate::gp::{FactorPrediction, TrainingRecord, VectorGP, FACTOR_NAMES};
use crate::onefiber::{summarize, HemodynamicSummary, PVTrace};
use crate::podgeom::ShapeBasis;

use super::plot::{histogram, quantile, Histogram};
use super::{hash_file, refresh_manifest, Pipeline, PipelineConfig};

/// `z` of the two-sided 99% normal interval.
const Z99: f64 = 2.576;

/// Pointwise credible band at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub p_lo: Vec<f64>,
    pub p_med: Vec<f64>,
    pub p_hi: Vec<f64>,
    #[serde(rename = "V_lo")]
    pub v_lo: Vec<f64>,
    #[serde(rename = "V_med")]
    pub v_med: Vec<f64>,
    #[serde(rename = "V_hi")]
    pub v_hi: Vec<f64>,
}

/// Quantiles of the clinical summary at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryQuantiles {
    pub level: f64,
    pub lo: HemodynamicSummary,
    pub med: HemodynamicSummary,
    pub hi: HemodynamicSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trust {
    #[serde(rename = "band_halfwidth_VED")]
    pub band_halfwidth_ved: f64,
    /// 99% half-width of the volume noise, `2.576·σ_V,min`.
    pub noise_level: f64,
    pub ratio: f64,
    pub threshold: f64,
    /// Raised when the prediction is too uncertain to be trusted.
    pub flag: bool,
}

impl Trust {
    pub fn new(band_halfwidth_ved: f64, sigma_v_min: f64, threshold: f64) -> Self {
        let noise_level = Z99 * sigma_v_min;
        let ratio = band_halfwidth_ved / noise_level;
        Self {
            band_halfwidth_ved,
            noise_level,
            ratio,
            threshold,
            flag: ratio > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub c: Vec<f64>,
    pub mu_hat: [f64; 4],
    #[serde(rename = "Sigma_hat")]
    pub sigma_hat: [[f64; 4]; 4],
    /// Eigenvalue shift applied to make `Sigma_hat` positive semidefinite.
    pub shift: f64,
    pub min_training_distance: f64,
    pub dt: f64,
    pub bands: Vec<Band>,
    pub summary: Vec<SummaryQuantiles>,
    pub trust: Trust,
    pub histograms: Vec<Histogram>,
    pub n_mc: usize,
    pub n_failed: usize,
    pub gp_hash: String,
    pub config_hash: String,
    pub seed: u64,
}

impl PredictionReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn band(&self, level: f64) -> Option<&Band> {
        self.bands.iter().find(|b| (b.level - level).abs() < 1e-12)
    }
}

/// `L` with `L Lᵀ = Σ` for a positive semidefinite `Σ`, from its
/// eigendecomposition so that `Σ = 0` gives `L = 0`.
fn psd_factor(sigma: &[[f64; 4]; 4]) -> Matrix4<f64> {
    let m = Matrix4::from_fn(|i, j| 0.5 * (sigma[i][j] + sigma[j][i]));
    let eig = SymmetricEigen::new(m);
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&root)
}

fn summary_from(values: &[Vec<f64>; 5], q: f64) -> HemodynamicSummary {
    HemodynamicSummary {
        v_ed: quantile(&values[0], q),
        v_es: quantile(&values[1], q),
        p_max: quantile(&values[2], q),
        ef: quantile(&values[3], q),
        v_stroke: quantile(&values[4], q),
    }
}

impl Pipeline {
    /// Loads the trained GP with the hash of its state file.
    pub fn load_gp(&self) -> Result<(VectorGP<f64>, String)> {
        let path = self.layout().gp_state();
        let text = std::fs::read_to_string(&path)?;
        Ok((VectorGP::from_json(&text)?, super::sha256_hex(text.as_bytes())))
    }

    /// Forward propagation of the predicted factor distribution at `c`.
    pub fn predict_at(&self, basis: &ShapeBasis, gp: &VectorGP<f64>, gp_hash: &str, c: &[f64]) -> Result<PredictionReport> {
        let cfg = &self.config;
        let pred: FactorPrediction<f64> = gp.predict_factors(c)?;
        let ctx = self.rom_context(basis, c)?;
        let l = psd_factor(&pred.sigma_mat);
        let seed = cfg.stream_seed("uq", 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<[f64; 4]> = (0..cfg.uq.n_mc)
            .map(|_| {
                let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                std::array::from_fn(|i| pred.mu[i] + (0..4).map(|j| l[(i, j)] * z[j]).sum::<f64>())
            })
            .collect();
        let runs: Vec<Option<PVTrace<f64>>> = draws.par_iter().map(|th| ctx.simulate(th).ok()).collect();
        let ok: Vec<(&[f64; 4], PVTrace<f64>)> =
            draws.iter().zip(runs).filter_map(|(d, r)| r.map(|t| (d, t))).collect();
        let n_failed = cfg.uq.n_mc - ok.len();
        if n_failed as f64 >= cfg.uq.max_failure_rate * cfg.uq.n_mc as f64 && n_failed > 0 {
            return Err(Error::SimulationFailed(format!(
                "{n_failed} of {} forward draws failed",
                cfg.uq.n_mc
            )));
        }
        let n = ok[0].1.len();
        let dt = ok[0].1.dt;
        let column = |k: usize, vol: bool| -> Vec<f64> {
            ok.iter().map(|(_, t)| if vol { t.v[k] } else { t.p[k] }).collect()
        };
        let cols_p: Vec<Vec<f64>> = (0..n).map(|k| column(k, false)).collect();
        let cols_v: Vec<Vec<f64>> = (0..n).map(|k| column(k, true)).collect();
        let q_all = |cols: &[Vec<f64>], q: f64| -> Vec<f64> { cols.iter().map(|c| quantile(c, q)).collect() };
        let summaries: Vec<HemodynamicSummary> = ok.iter().map(|(_, t)| summarize(t)).collect();
        let metrics: [Vec<f64>; 5] = [
            summaries.iter().map(|s| s.v_ed).collect(),
            summaries.iter().map(|s| s.v_es).collect(),
            summaries.iter().map(|s| s.p_max).collect(),
            summaries.iter().map(|s| s.ef).collect(),
            summaries.iter().map(|s| s.v_stroke).collect(),
        ];
        let mut bands = Vec::new();
        let mut summary = Vec::new();
        for &level in &cfg.uq.levels {
            let (lo, hi) = (0.5 * (1.0 - level), 0.5 * (1.0 + level));
            bands.push(Band {
                level,
                p_lo: q_all(&cols_p, lo),
                p_med: q_all(&cols_p, 0.5),
                p_hi: q_all(&cols_p, hi),
                v_lo: q_all(&cols_v, lo),
                v_med: q_all(&cols_v, 0.5),
                v_hi: q_all(&cols_v, hi),
            });
            summary.push(SummaryQuantiles {
                level,
                lo: summary_from(&metrics, lo),
                med: summary_from(&metrics, 0.5),
                hi: summary_from(&metrics, hi),
            });
        }
        let halfwidth = 0.5 * (quantile(&metrics[0], 0.995) - quantile(&metrics[0], 0.005));
        let median = PVTrace::new(dt, q_all(&cols_p, 0.5), q_all(&cols_v, 0.5), 0)?;
        let trust = Trust::new(halfwidth, cfg.calibration.noise.sigma_v_min(&median), cfg.trust_threshold);
        let histograms = (0..4)
            .map(|i| {
                let xs: Vec<f64> = ok.iter().map(|(d, _)| d[i]).collect();
                histogram(FACTOR_NAMES[i], &xs, cfg.uq.histogram_bins)
            })
            .collect();
        Ok(PredictionReport {
            c: c.to_vec(),
            mu_hat: pred.mu,
            sigma_hat: pred.sigma_mat,
            shift: pred.shift,
            min_training_distance: gp.min_normalized_distance(c),
            dt,
            bands,
            summary,
            trust,
            histograms,
            n_mc: cfg.uq.n_mc,
            n_failed,
            gp_hash: gp_hash.to_string(),
            config_hash: cfg.hash()?,
            seed,
        })
    }

    pub fn load_basis(&self) -> Result<ShapeBasis> {
        ShapeBasis::load(&self.layout().basis())
    }
}

/// Fits the target geometry, predicts its factors and propagates them
/// through the ROM.
pub fn run_online(config: &PipelineConfig, target: &SurfaceGrid<f64>) -> Result<PredictionReport> {
    let p = Pipeline::new(config.clone())?;
    let basis = p.load_basis()?;
    let (gp, hash) = p.load_gp()?;
    let c = basis.fit_grid(target)?;
    p.predict_at(&basis, &gp, &hash, &c)
}

/// Factor mean and covariance at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub mu: [f64; 4],
    pub sigma_mat: [[f64; 4]; 4],
}

impl From<FactorPrediction<f64>> for FactorSummary {
    fn from(p: FactorPrediction<f64>) -> Self {
        Self {
            mu: p.mu,
            sigma_mat: p.sigma_mat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub c: Vec<f64>,
    pub accepted: bool,
    pub min_distance: f64,
    pub before: FactorSummary,
    pub after: FactorSummary,
    pub training_set_size: usize,
    pub gp_hash: String,
}

/// Inserts a calibrated record into the stored GP and rewrites its state
/// when accepted.
pub fn run_update(config: &PipelineConfig, record: TrainingRecord<f64>) -> Result<UpdateReport> {
    let p = Pipeline::new(config.clone())?;
    let (gp, _) = p.load_gp()?;
    let before = gp.predict_factors(&record.c)?;
    let min_distance = gp.min_normalized_distance(&record.c);
    let c = record.c.clone();
    let (gp, accepted) = gp.add_observation(record)?;
    let path = p.layout().gp_state();
    if accepted {
        gp.save(&path)?;
        refresh_manifest(config)?;
    }
    Ok(UpdateReport {
        after: gp.predict_factors(&c)?.into(),
        c,
        accepted,
        min_distance,
        before: before.into(),
        training_set_size: gp.len(),
        gp_hash: hash_file(&path)?,
    })
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::real::Real;

use super::scalar::{length_scale_bounds, OptimizerOptions, ScalarGP};

/// Number of correction factors.
pub const N_CORR: usize = 4;
pub const FACTOR_NAMES: [&str; N_CORR] = ["alpha", "beta", "gamma", "lambda"];
/// Upper-triangle index pairs, in the order of [`VectorGP::corr_gps`].
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub fn pair_name(k: usize) -> String {
    let (i, j) = PAIRS[k];
    format!("{}_{}", FACTOR_NAMES[i], FACTOR_NAMES[j])
}

/// One calibrated geometry: coefficients, posterior mean and covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord<T> {
    pub c: Vec<T>,
    pub mu: [T; N_CORR],
    pub sigma_mat: [[T; N_CORR]; N_CORR],
}

impl<T: Real> TrainingRecord<T> {
    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() || self.c.iter().chain(&self.mu).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("record coefficients and means must be finite".into()));
        }
        let tol = T::lit(1e-12);
        for i in 0..N_CORR {
            let sii = self.sigma_mat[i][i];
            if !(sii >= T::zero()) || !sii.is_finite() {
                return Err(Error::Invalid(format!("record variance {i} is {sii}")));
            }
            for j in 0..i {
                let (a, b) = (self.sigma_mat[i][j], self.sigma_mat[j][i]);
                if (a - b).abs() > tol * (T::one() + a.abs().max(b.abs())) {
                    return Err(Error::Invalid("record covariance is not symmetric".into()));
                }
                let lim = (sii * self.sigma_mat[j][j]).sqrt();
                if a.abs() > lim * (T::one() + T::lit(1e-9)) + tol {
                    return Err(Error::Invalid("record covariance implies |correlation| > 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn std(&self) -> [T; N_CORR] {
        std::array::from_fn(|i| self.sigma_mat[i][i].max(T::zero()).sqrt())
    }

    /// Correlation of factors `i` and `j`; zero when either variance vanishes.
    pub fn correlation(&self, i: usize, j: usize) -> T {
        let d = (self.sigma_mat[i][i] * self.sigma_mat[j][j]).sqrt();
        if d > T::zero() {
            (self.sigma_mat[i][j] / d).max(-T::one()).min(T::one())
        } else {
            T::zero()
        }
    }

    pub fn cast<U: Real>(&self) -> TrainingRecord<U> {
        let f = |v: T| U::lit(v.as_f64());
        TrainingRecord {
            c: self.c.iter().map(|&v| f(v)).collect(),
            mu: self.mu.map(f),
            sigma_mat: self.sigma_mat.map(|r| r.map(f)),
        }
    }
}

/// Training and insertion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Length-scale bounds as fractions of each input range.
    pub lower_fraction: f64,
    pub upper_fraction: f64,
    pub optimizer: OptimizerOptions,
    /// Re-optimize length scales whenever a record is inserted.
    pub reoptimize_on_insert: bool,
    /// Minimum range-normalized distance for a new record to be accepted.
    pub min_distance: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lower_fraction: 0.02,
            upper_fraction: 2.0,
            optimizer: OptimizerOptions::default(),
            reoptimize_on_insert: true,
            min_distance: 0.02,
        }
    }
}

/// Predicted distribution of the correction factors at one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPrediction<T> {
    pub mu: [T; N_CORR],
    pub sigma_mat: [[T; N_CORR]; N_CORR],
    /// Per-factor posterior variances before the eigenvalue shift.
    pub variances: [T; N_CORR],
    /// Clamped correlation predictions, in [`PAIRS`] order.
    pub correlations: [T; 6],
    /// `−min(λ_min, 0)`, added to the diagonal.
    pub shift: T,
}

/// Four mean GPs on `μ − 1` and six zero-noise correlation GPs, all over
/// the same geometry coefficients.
#[derive(Debug, Clone)]
pub struct VectorGP<T> {
    pub mean_gps: Vec<ScalarGP<T>>,
    pub corr_gps: Vec<ScalarGP<T>>,
    pub training: Vec<TrainingRecord<T>>,
    pub config: GpConfig,
}

/// Mean and correlation length-scale sets.
type FixedScales<'a, T> = (&'a [Vec<T>], &'a [Vec<T>]);

fn component_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl<T: Real> VectorGP<T> {
    /// Builds all component GPs and optimizes their length scales.
    pub fn train(records: Vec<TrainingRecord<T>>, config: GpConfig) -> Result<Self> {
        Self::assemble(records, config, None)
    }

    /// Builds the component GPs at given length scales, without optimization.
    pub fn with_length_scales(
        records: Vec<TrainingRecord<T>>,
        config: GpConfig,
        mean_ls: &[Vec<T>],
        corr_ls: &[Vec<T>],
    ) -> Result<Self> {
        if mean_ls.len() != N_CORR || corr_ls.len() != PAIRS.len() {
            return Err(Error::Invalid("expected 4 mean and 6 correlation length-scale sets".into()));
        }
        Self::assemble(records, config, Some((mean_ls, corr_ls)))
    }

    fn assemble(
        records: Vec<TrainingRecord<T>>,
        config: GpConfig,
        fixed: Option<FixedScales<'_, T>>,
    ) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.c.len())
            .ok_or_else(|| Error::Invalid("a vector GP needs at least one record".into()))?;
        for r in &records {
            r.validate()?;
            if r.c.len() != dim {
                return Err(Error::Invalid("records differ in coefficient dimension".into()));
            }
        }
        let inputs: Vec<Vec<T>> = records.iter().map(|r| r.c.clone()).collect();
        let lo = T::lit(config.lower_fraction);
        let hi = T::lit(config.upper_fraction);
        let bounds = length_scale_bounds(&inputs, dim, lo, hi);
        let build = |k: usize, targets: Vec<T>, noise: Vec<T>, ls: Option<&Vec<T>>| -> Result<ScalarGP<T>> {
            let gp = ScalarGP::with_data_bounds(inputs.clone(), targets, noise, dim, lo, hi)?;
            match ls {
                Some(l) => {
                    if l.len() != dim {
                        return Err(Error::Invalid("length-scale set has the wrong dimension".into()));
                    }
                    let clamped: Vec<T> = l
                        .iter()
                        .zip(&bounds)
                        .map(|(&v, [a, b])| v.max(*a).min(*b))
                        .collect();
                    gp.with_length_scales(&clamped)
                }
                None => Ok(gp.optimize_length_scales(&OptimizerOptions {
                    seed: component_seed(config.optimizer.seed, k),
                    ..config.optimizer
                })),
            }
        };
        let mean_gps = (0..N_CORR)
            .map(|i| {
                let targets = records.iter().map(|r| r.mu[i] - T::one()).collect();
                let noise = records.iter().map(|r| r.std()[i]).collect();
                build(i, targets, noise, fixed.map(|f| &f.0[i]))
            })
            .collect::<Result<Vec<_>>>()?;
        let corr_gps = PAIRS
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let targets = records.iter().map(|r| r.correlation(i, j)).collect();
                build(N_CORR + k, targets, vec![T::zero(); records.len()], fixed.map(|f| &f.1[k]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mean_gps,
            corr_gps,
            training: records,
            config,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_gps[0].dim()
    }

    pub fn len(&self) -> usize {
        self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training.is_empty()
    }

    /// Mean, covariance and assembly diagnostics at `c`.
    pub fn predict_factors(&self, c: &[T]) -> Result<FactorPrediction<T>> {
        let mut mu = [T::zero(); N_CORR];
        let mut variances = [T::zero(); N_CORR];
        let mut sd = [T::zero(); N_CORR];
        for (i, gp) in self.mean_gps.iter().enumerate() {
            let (m, v) = gp.predict(c)?;
            mu[i] = m + T::one();
            variances[i] = v.max(T::zero());
            sd[i] = variances[i].sqrt();
        }
        let mut sigma = SquareMatrix::zeros(N_CORR);
        for i in 0..N_CORR {
            sigma[(i, i)] = variances[i];
        }
        let mut correlations = [T::zero(); 6];
        for (k, (&(i, j), gp)) in PAIRS.iter().zip(&self.corr_gps).enumerate() {
            let rho = gp.predict(c)?.0.max(-T::one()).min(T::one());
            correlations[k] = rho;
            sigma[(i, j)] = rho * sd[i] * sd[j];
            sigma[(j, i)] = sigma[(i, j)];
        }
        let lambda_min = sigma.symmetric_eigenvalues()[0].min(T::zero());
        sigma.add_diagonal(-lambda_min);
        Ok(FactorPrediction {
            mu,
            sigma_mat: std::array::from_fn(|i| std::array::from_fn(|j| sigma[(i, j)])),
            variances,
            correlations,
            shift: -lambda_min,
        })
    }

    /// Smallest range-normalized Euclidean distance from `c` to the
    /// training inputs.
    pub fn min_normalized_distance(&self, c: &[T]) -> T {
        let inputs: Vec<Vec<T>> = self.training.iter().map(|r| r.c.clone()).collect();
        let scale = length_scale_bounds(&inputs, self.dim(), T::one(), T::one());
        inputs
            .iter()
            .map(|x| {
                x.iter()
                    .zip(c)
                    .zip(&scale)
                    .map(|((&a, &b), s)| {
                        let u = (a - b) / s[0];
                        u * u
                    })
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// Inserts `record` when it is far enough from every training input.
    ///
    /// Returns the updated GP (or a clone of `self` on rejection) and the
    /// acceptance decision.
    pub fn add_observation(&self, record: TrainingRecord<T>) -> Result<(Self, bool)> {
        record.validate()?;
        if record.c.len() != self.dim() {
            return Err(Error::Invalid("record dimension differs from the GP inputs".into()));
        }
        if !(self.min_normalized_distance(&record.c) > T::lit(self.config.min_distance)) {
            return Ok((self.clone(), false));
        }
        let mut records = self.training.clone();
        records.push(record);
        let next = if self.config.reoptimize_on_insert {
            Self::train(records, self.config)?
        } else {
            let (m, c) = self.length_scales();
            Self::with_length_scales(records, self.config, &m, &c)?
        };
        Ok((next, true))
    }

    /// Length scales of the mean and correlation GPs.
    pub fn length_scales(&self) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        (
            self.mean_gps.iter().map(|g| g.length_scales().to_vec()).collect(),
            self.corr_gps.iter().map(|g| g.length_scales().to_vec()).collect(),
        )
    }
}

pub const GP_SCHEMA_VERSION: u32 = 1;

/// Serialized form of a trained [`VectorGP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpState {
    pub schema_version: u32,
    pub records: Vec<TrainingRecord<f64>>,
    /// Keyed by factor name (`alpha`) or pair name (`alpha_beta`).
    pub length_scales: BTreeMap<String, Vec<f64>>,
    pub config: GpConfig,
}

impl VectorGP<f64> {
    pub fn to_state(&self) -> GpState {
        let (m, c) = self.length_scales();
        let mut length_scales = BTreeMap::new();
        for (i, l) in m.into_iter().enumerate() {
            length_scales.insert(FACTOR_NAMES[i].to_string(), l);
        }
        for (k, l) in c.into_iter().enumerate() {
            length_scales.insert(pair_name(k), l);
        }
        GpState {
            schema_version: GP_SCHEMA_VERSION,
            records: self.training.clone(),
            length_scales,
            config: self.config,
        }
    }

    pub fn from_state(state: GpState) -> Result<Self> {
        if state.schema_version != GP_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "GP state schema {} is not supported (expected {GP_SCHEMA_VERSION})",
                state.schema_version
            )));
        }
        let get = |name: &str| {
            state
                .length_scales
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("GP state lacks length scales for {name}")))
        };
        let m = FACTOR_NAMES.iter().map(|n| get(n)).collect::<Result<Vec<_>>>()?;
        let c = (0..PAIRS.len()).map(|k| get(&pair_name(k))).collect::<Result<Vec<_>>>()?;
        Self::with_length_scales(state.records, state.config, &m, &c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_state())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_state(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

//! Synthetic stand-in for full-order pressure-volume data, and ingestion of
//! externally produced traces.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{build_noise_covariance, NoiseModel, RomContext};
use crate::error::{Error, Result};
use crate::onefiber::PVTrace;

/// One factor as a function of normalized coefficients `u`:
/// `base + linear·u + amplitude·tanh(direction·u + offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComponent {
    pub base: f64,
    pub linear: Vec<f64>,
    pub tanh_amplitude: f64,
    pub tanh_direction: Vec<f64>,
    pub tanh_offset: f64,
}

impl FieldComponent {
    fn eval(&self, u: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(u).map(|(a, b)| a * b).sum();
        let arg: f64 = self.tanh_direction.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.tanh_offset;
        self.base + lin + self.tanh_amplitude * arg.tanh()
    }

    fn gradient(&self, u: &[f64], k: usize) -> f64 {
        let arg: f64 = self.tanh_direction.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.tanh_offset;
        let sech2 = 1.0 - arg.tanh().powi(2);
        self.linear.get(k).copied().unwrap_or(0.0)
            + self.tanh_amplitude * sech2 * self.tanh_direction.get(k).copied().unwrap_or(0.0)
    }
}

/// Prescribed correction factors over geometry coefficients; inputs are
/// normalized as `u = (c − center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthField {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub alpha: FieldComponent,
    pub beta: FieldComponent,
    pub gamma: FieldComponent,
    pub lambda: FieldComponent,
}

fn component(base: f64, linear: [f64; 4], amp: f64, dir: [f64; 4], offset: f64) -> FieldComponent {
    FieldComponent {
        base,
        linear: linear.to_vec(),
        tanh_amplitude: amp,
        tanh_direction: dir.to_vec(),
        tanh_offset: offset,
    }
}

impl GroundTruthField {
    /// Default field for four coefficients with the given normalization.
    ///
    /// α, γ and λ increase and β decreases along the first coefficient.
    pub fn default_for(center: Vec<f64>, scale: Vec<f64>) -> Self {
        Self {
            center,
            scale,
            alpha: component(1.0, [0.025, 0.010, 0.0, 0.005], 0.015, [0.0, 1.0, 0.5, 0.0], 0.0),
            beta: component(1.0, [-0.015, 0.0, 0.005, 0.0], 0.010, [0.5, 0.0, -1.0, 0.0], 0.2),
            gamma: component(1.0, [0.020, -0.010, 0.0, 0.0], 0.015, [0.0, 0.5, 0.0, 1.0], -0.1),
            lambda: component(1.0, [0.020, 0.0, -0.010, 0.005], 0.010, [1.0, 0.0, 0.0, -0.5], 0.0),
        }
    }

    /// Normalization from the mean and standard deviation of a coefficient cloud.
    pub fn normalization(points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = points.len();
        if n < 2 {
            return Err(Error::DegenerateData("normalization needs at least two points".into()));
        }
        let d = points[0].len();
        let center: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| (points.iter().map(|p| (p[k] - center[k]).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
            .collect();
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateData("coefficient cloud is flat in some direction".into()));
        }
        Ok((center, scale))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn normalize(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.dim() || self.scale.len() != self.dim() {
            return Err(Error::Invalid(format!(
                "field expects {} coefficients, got {}",
                self.dim(),
                c.len()
            )));
        }
        Ok(c.iter().zip(&self.center).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect())
    }

    fn components(&self) -> [&FieldComponent; 4] {
        [&self.alpha, &self.beta, &self.gamma, &self.lambda]
    }

    /// `θ*(c) = (α, β, γ, λ)`.
    pub fn eval(&self, c: &[f64]) -> Result<[f64; 4]> {
        let u = self.normalize(c)?;
        let comps = self.components();
        Ok(std::array::from_fn(|i| comps[i].eval(&u)))
    }

    /// `∂θ*/∂c_k`.
    pub fn gradient(&self, c: &[f64], k: usize) -> Result<[f64; 4]> {
        let u = self.normalize(c)?;
        let comps = self.components();
        Ok(std::array::from_fn(|i| comps[i].gradient(&u, k) / self.scale[k]))
    }

    /// Every factor in `[0.5, 1.5]` and `β ≥ 0.2` at all `points`.
    pub fn check_bounds(&self, points: &[Vec<f64>]) -> Result<()> {
        for p in points {
            let t = self.eval(p)?;
            if t.iter().any(|v| !(0.5..=1.5).contains(v)) || t[1] < 0.2 {
                return Err(Error::Invalid(format!("ground-truth factors {t:?} out of range at {p:?}")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Adds one correlated draw from `noise` to `trace`.
pub fn add_noise(trace: &PVTrace<f64>, noise: &NoiseModel, seed: u64) -> Result<PVTrace<f64>> {
    if noise.len() != trace.len() {
        return Err(Error::Grid(format!(
            "noise model has {} samples, trace {}",
            noise.len(),
            trace.len()
        )));
    }
    let cov = build_noise_covariance(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = cov.sample(&mut rng);
    let n = trace.len();
    PVTrace::new(
        trace.dt,
        trace.p.iter().zip(&nu[..n]).map(|(a, b)| a + b).collect(),
        trace.v.iter().zip(&nu[n..]).map(|(a, b)| a + b).collect(),
        trace.cycle_index,
    )
}

/// Steady ROM cycle at `θ*(c)`, plus one noise draw when `noise` is given.
pub fn synth_fom_trace(
    c: &[f64],
    field: &GroundTruthField,
    ctx: &RomContext,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<PVTrace<f64>> {
    let theta = field.eval(c)?;
    let clean = ctx.simulate(&theta)?;
    match noise {
        Some(m) => add_noise(&clean, m, seed),
        None => Ok(clean),
    }
}

/// Target grid of an ingested trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn period(&self) -> f64 {
        self.dt * self.n as f64
    }
}

/// Relative cycle-length mismatch tolerated by [`ingest_fom_csv`].
pub const CYCLE_TOLERANCE: f64 = 0.01;

/// Reads `t_ms,p_mmHg,V_ml` rows covering one cycle and resamples them
/// periodically onto `grid`, with times taken relative to the first row.
/// Further columns are ignored.
pub fn read_fom_csv<R: std::io::Read>(input: R, grid: GridSpec) -> Result<PVTrace<f64>> {
    if grid.n == 0 || !(grid.dt > 0.0) {
        return Err(Error::Invalid("grid needs positive dt and samples".into()));
    }
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (it, ip, iv) = (col("t_ms")?, col("p_mmHg")?, col("V_ml")?);
    let mut t = Vec::new();
    let mut p = Vec::new();
    let mut v = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::Parse(format!("row {} is short", row + 1)))?;
            let x: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{s}` is not a number", row + 1)))?;
            if !x.is_finite() {
                return Err(Error::Parse(format!("row {}: non-finite value", row + 1)));
            }
            Ok(x)
        };
        t.push(field(it)?);
        p.push(field(ip)?);
        v.push(field(iv)?);
    }
    if t.len() < 2 {
        return Err(Error::Parse("a trace needs at least two rows".into()));
    }
    if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Parse(format!("time stamps not increasing at row {}", k + 2)));
    }
    let t0 = t[0];
    let rel: Vec<f64> = t.iter().map(|x| x - t0).collect();
    let mut steps: Vec<f64> = rel.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let period = rel[rel.len() - 1] + steps[steps.len() / 2];
    if ((period - grid.period()) / grid.period()).abs() > CYCLE_TOLERANCE {
        return Err(Error::Grid(format!(
            "trace covers {period} ms, grid expects {} ms",
            grid.period()
        )));
    }
    let sample = |ys: &[f64], tq: f64| -> f64 {
        let tq = tq % period;
        let k = rel.partition_point(|&x| x <= tq).saturating_sub(1);
        let (ta, ya) = (rel[k], ys[k]);
        let (tb, yb) = if k + 1 < rel.len() { (rel[k + 1], ys[k + 1]) } else { (period, ys[0]) };
        if tq == ta {
            ya
        } else {
            ya + (yb - ya) * (tq - ta) / (tb - ta)
        }
    };
    let times: Vec<f64> = (0..grid.n).map(|i| i as f64 * grid.dt).collect();
    PVTrace::new(
        grid.dt,
        times.iter().map(|&x| sample(&p, x)).collect(),
        times.iter().map(|&x| sample(&v, x)).collect(),
        0,
    )
}

pub fn ingest_fom_csv(path: &Path, grid: GridSpec) -> Result<PVTrace<f64>> {
    read_fom_csv(std::fs::File::open(path)?, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, noisy: bool },
    File { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub c: Vec<f64>,
    /// Trace CSV, relative to the manifest.
    pub trace: String,
    pub provenance: Provenance,
}

/// Manifest of FOM traces; all traces share one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomDataset {
    pub grid: GridSpec,
    pub records: Vec<DatasetRecord>,
}

impl FomDataset {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads the trace of record `k`, resolving paths against `root`.
    pub fn trace(&self, root: &Path, k: usize) -> Result<PVTrace<f64>> {
        let rec = self
            .records
            .get(k)
            .ok_or_else(|| Error::Invalid(format!("dataset has no record {k}")))?;
        ingest_fom_csv(&root.join(&rec.trace), self.grid)
    }
}

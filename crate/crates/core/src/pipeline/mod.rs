//! Offline training and online prediction over an artifact directory.
//!
//! The artifact store is a plain directory with a JSON manifest of content
//! hashes. Every stage is deterministic given the configured seed.

mod offline;
mod online;
mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{CalibrationConfig, RomContext};
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::onefiber::{simulate::steps_per_cycle, ParameterFile};
use crate::oracle::{GridSpec, GroundTruthField};
use crate::podgeom::{PopulationConfig, ShapeBasis};

pub use offline::{run_offline, vertex_id, OfflineArtifacts};
pub use online::{
    run_online, run_update, Band, FactorSummary, PredictionReport, SummaryQuantiles, Trust, UpdateReport,
};
pub use plot::{emit_chain_histograms, emit_plot_data, histogram, quantile, Histogram};

/// Where the training traces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Synthetic traces from the ground-truth field at each hull vertex.
    Oracle { noisy: bool },
    /// Externally produced traces listed in a dataset manifest.
    Files { manifest: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Oracle { noisy: true }
    }
}

/// Forward uncertainty propagation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqConfig {
    pub n_mc: usize,
    pub levels: Vec<f64>,
    /// Tolerated fraction of failed ROM draws.
    pub max_failure_rate: f64,
    pub histogram_bins: usize,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            levels: vec![0.95, 0.99],
            max_failure_rate: 0.01,
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// ROM parameter file; the shipped defaults when absent.
    pub rom_parameters: Option<PathBuf>,
    pub population: PopulationConfig,
    pub n_pop: usize,
    pub n_geom: usize,
    /// Inside-or-on fraction at which hull pruning stops.
    pub hull_fraction: f64,
    /// Unloaded cavity volume as a fraction of the lattice cavity volume.
    pub v0_fraction: f64,
    pub data: DataSource,
    /// Ground-truth field; built from the population when absent.
    pub field: Option<GroundTruthField>,
    pub calibration: CalibrationConfig,
    pub gp: GpConfig,
    pub uq: UqConfig,
    pub trust_threshold: f64,
    pub write_chains: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("run"),
            seed: 0,
            rom_parameters: None,
            population: PopulationConfig::default(),
            n_pop: 200,
            n_geom: 4,
            hull_fraction: 0.9,
            v0_fraction: 0.35,
            data: DataSource::default(),
            field: None,
            calibration: CalibrationConfig::default(),
            gp: GpConfig::default(),
            uq: UqConfig::default(),
            trust_threshold: 0.1,
            write_chains: true,
        }
    }
}

impl PipelineConfig {
    /// Reads a config file; input paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let root = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &mut cfg.rom_parameters {
            *p = root.join(&*p);
        }
        if let DataSource::Files { manifest } = &mut cfg.data {
            *manifest = root.join(&*manifest);
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.uq.n_mc < 100 {
            return Err(Error::Invalid(format!("n_mc must be at least 100, got {}", self.uq.n_mc)));
        }
        if self.uq.levels.is_empty() || self.uq.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Invalid("credible levels must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.uq.max_failure_rate) || self.uq.histogram_bins == 0 {
            return Err(Error::Invalid("invalid failure rate or histogram bins".into()));
        }
        if self.n_geom == 0 || self.n_pop <= 2 * self.n_geom {
            return Err(Error::Invalid(format!(
                "n_pop = {} too small for n_geom = {}",
                self.n_pop, self.n_geom
            )));
        }
        if !(self.hull_fraction > 0.0 && self.hull_fraction <= 1.0) {
            return Err(Error::Invalid("hull_fraction must lie in (0, 1]".into()));
        }
        if !(self.v0_fraction > 0.0 && self.v0_fraction < 1.0) {
            return Err(Error::Invalid("v0_fraction must lie in (0, 1)".into()));
        }
        if !(self.trust_threshold >= 0.0) {
            return Err(Error::Invalid("trust threshold must be nonnegative".into()));
        }
        self.calibration.chain.validate()?;
        self.calibration.prior.validate()?;
        for p in self.rom_parameters.iter().chain(match &self.data {
            DataSource::Files { manifest } => Some(manifest),
            DataSource::Oracle { .. } => None,
        }) {
            if !p.is_file() {
                return Err(Error::Invalid(format!("referenced file {} not found", p.display())));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    /// Seed of one named stream; `index` separates per-task streams.
    pub fn stream_seed(&self, stream: &str, index: u64) -> u64 {
        derive_seed(self.seed, stream, index)
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.out_dir.clone(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let tag = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    splitmix64(splitmix64(base ^ tag) ^ index)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// File names inside the artifact directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn population(&self) -> PathBuf {
        self.root.join("population.csv")
    }
    pub fn basis(&self) -> PathBuf {
        self.root.join("basis.json")
    }
    pub fn coefficients(&self) -> PathBuf {
        self.root.join("coefficients.json")
    }
    pub fn hull(&self) -> PathBuf {
        self.root.join("hull.json")
    }
    pub fn field(&self) -> PathBuf {
        self.root.join("field.json")
    }
    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn dataset(&self) -> PathBuf {
        self.dataset_dir().join("dataset.json")
    }
    pub fn calibration_dir(&self) -> PathBuf {
        self.root.join("calibration")
    }
    pub fn calibration_report(&self, id: &str) -> PathBuf {
        self.calibration_dir().join(format!("{id}.json"))
    }
    pub fn chain(&self, id: &str) -> PathBuf {
        self.calibration_dir().join(format!("{id}_chain.csv"))
    }
    pub fn gp_state(&self) -> PathBuf {
        self.root.join("gp_state.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Coefficients of the whole population in the fitted basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub coefficients: Vec<Vec<f64>>,
}

impl CoefficientTable {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub hull_vertex_count: Option<usize>,
    pub training_set_size: Option<usize>,
    /// Relative path to SHA-256 of every artifact.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under the artifact directory into `manifest.json`.
pub fn write_manifest(
    config: &PipelineConfig,
    hull_vertex_count: Option<usize>,
    training_set_size: Option<usize>,
) -> Result<Manifest> {
    let layout = config.layout();
    let mut files = Vec::new();
    collect_files(&layout.root, &mut files)?;
    let mut artifacts = BTreeMap::new();
    for f in files {
        if f == layout.manifest() {
            continue;
        }
        let rel = f
            .strip_prefix(&layout.root)
            .expect("listed below the root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        artifacts.insert(rel, hash_file(&f)?);
    }
    let manifest = Manifest {
        config_hash: config.hash()?,
        seed: config.seed,
        hull_vertex_count,
        training_set_size,
        artifacts,
    };
    std::fs::write(layout.manifest(), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Rewrites the manifest, reading the hull and GP sizes from whatever
/// artifacts exist.
pub fn refresh_manifest(config: &PipelineConfig) -> Result<Manifest> {
    let l = config.layout();
    let hull = match std::fs::read_to_string(l.hull()) {
        Ok(text) => Some(serde_json::from_str::<crate::podgeom::HullSelection>(&text)?.vertices.len()),
        Err(_) => None,
    };
    let training = match std::fs::read_to_string(l.gp_state()) {
        Ok(text) => Some(crate::gp::VectorGP::from_json(&text)?.len()),
        Err(_) => None,
    };
    write_manifest(config, hull, training)
}

/// Configured pipeline with its ROM parameters loaded.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub parameters: ParameterFile,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let parameters = match &config.rom_parameters {
            Some(p) => ParameterFile::load(p)?,
            None => ParameterFile::shipped_default(),
        };
        Ok(Self { config, parameters })
    }

    pub fn layout(&self) -> Layout {
        self.config.layout()
    }

    pub fn load_coefficients(&self) -> Result<Vec<Vec<f64>>> {
        Ok(CoefficientTable::load(&self.layout().coefficients())?.coefficients)
    }

    pub fn load_hull(&self) -> Result<crate::podgeom::HullSelection> {
        Ok(serde_json::from_str(&std::fs::read_to_string(self.layout().hull())?)?)
    }

    pub fn load_dataset(&self) -> Result<crate::oracle::FomDataset> {
        crate::oracle::FomDataset::load(&self.layout().dataset())
    }

    /// Uniform grid of one ROM cycle.
    pub fn grid(&self) -> Result<GridSpec> {
        let dt = self.parameters.simulation.dt;
        Ok(GridSpec {
            dt,
            n: steps_per_cycle(self.parameters.rom.tcycle, dt)?,
        })
    }

    /// ROM with the unloaded cavity and wall volumes of the geometry at `c`.
    pub fn rom_context(&self, basis: &ShapeBasis, c: &[f64]) -> Result<RomContext> {
        let (cavity, wall) = basis.lattice_volumes(c)?;
        Ok(RomContext::new(
            self.parameters.rom.with_volumes(self.config.v0_fraction * cavity, wall),
            self.parameters.simulation,
        ))
    }
}

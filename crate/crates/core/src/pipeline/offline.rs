use rayon::prelude::*;

use crate::calibration::{calibrate, save_chain_csv, Calibration, CalibrationConfig, CalibrationReport};
use crate::error::{Error, Result};
use crate::gp::{GpConfig, VectorGP};
use crate::onefiber::{save_traces_csv, PVTrace};
use crate::oracle::{add_noise, ingest_fom_csv, DatasetRecord, FomDataset, GroundTruthField, Provenance};
use crate::podgeom::{
    build_population_basis, sample_population, select_training_hull, write_population_csv, HullSelection,
    PopulationSample, ShapeBasis,
};

use super::{write_manifest, CoefficientTable, DataSource, Manifest, Pipeline, PipelineConfig};

/// Everything [`run_offline`] produced, as also written to disk.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub basis: ShapeBasis,
    pub coefficients: Vec<Vec<f64>>,
    pub hull: HullSelection,
    pub field: Option<GroundTruthField>,
    pub dataset: FomDataset,
    pub reports: Vec<CalibrationReport>,
    pub gp: VectorGP<f64>,
    pub manifest: Manifest,
}

fn save_population(pop: &[PopulationSample], path: &std::path::Path) -> Result<()> {
    write_population_csv(pop, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn vertex_id(index: usize) -> String {
    format!("pop{index:04}")
}

impl Pipeline {
    fn ensure_dirs(&self) -> Result<()> {
        let l = self.layout();
        for d in [l.root.clone(), l.dataset_dir().join("traces"), l.calibration_dir()] {
            std::fs::create_dir_all(d)?;
        }
        Ok(())
    }

    pub fn population(&self) -> Result<Vec<PopulationSample>> {
        self.ensure_dirs()?;
        let c = &self.config;
        let pop = sample_population(c.n_pop, c.stream_seed("population", 0), &c.population)?;
        save_population(&pop, &self.layout().population())?;
        Ok(pop)
    }

    /// Fits the basis and the coefficients of every population sample.
    pub fn basis(&self, pop: &mut [PopulationSample]) -> Result<(ShapeBasis, Vec<Vec<f64>>)> {
        self.ensure_dirs()?;
        let basis = build_population_basis(pop, self.config.n_geom, self.config.population.lattice)?;
        let mut coefficients = Vec::with_capacity(pop.len());
        for s in pop.iter_mut() {
            let c = basis.fit_coefficients(&s.shape)?;
            s.coeffs = Some(c.clone());
            coefficients.push(c);
        }
        let l = self.layout();
        basis.save(&l.basis())?;
        CoefficientTable {
            coefficients: coefficients.clone(),
        }
        .save(&l.coefficients())?;
        save_population(pop, &l.population())?;
        Ok((basis, coefficients))
    }

    pub fn hull(&self, coefficients: &[Vec<f64>]) -> Result<HullSelection> {
        let sel = select_training_hull(coefficients, self.config.hull_fraction)?;
        std::fs::write(self.layout().hull(), serde_json::to_string_pretty(&sel)?)?;
        Ok(sel)
    }

    /// Configured field, or the default one normalized to the population.
    pub fn field(&self, coefficients: &[Vec<f64>]) -> Result<GroundTruthField> {
        let field = match &self.config.field {
            Some(f) => f.clone(),
            None => {
                let (center, scale) = GroundTruthField::normalization(coefficients)?;
                GroundTruthField::default_for(center, scale)
            }
        };
        field.check_bounds(coefficients)?;
        field.save(&self.layout().field())?;
        Ok(field)
    }

    /// Oracle trace at `c`; noise follows the calibration noise spec.
    pub fn oracle_trace(
        &self,
        basis: &ShapeBasis,
        field: &GroundTruthField,
        c: &[f64],
        noisy: bool,
        seed: u64,
    ) -> Result<PVTrace<f64>> {
        let ctx = self.rom_context(basis, c)?;
        let cycle = ctx.simulate_cycle(&field.eval(c)?)?;
        if !noisy {
            return Ok(cycle.trace);
        }
        let model = self.config.calibration.noise.model(&cycle.trace, &cycle.valves())?;
        add_noise(&cycle.trace, &model, seed)
    }

    /// Training traces at the hull vertices, or the ingested file dataset.
    pub fn dataset(
        &self,
        basis: &ShapeBasis,
        coefficients: &[Vec<f64>],
        hull: &HullSelection,
        field: Option<&GroundTruthField>,
    ) -> Result<FomDataset> {
        self.ensure_dirs()?;
        let l = self.layout();
        let grid = self.grid()?;
        let mut records = Vec::new();
        let mut traces = Vec::new();
        match &self.config.data {
            DataSource::Oracle { noisy } => {
                let field = field.ok_or_else(|| Error::Invalid("oracle data needs a ground-truth field".into()))?;
                let out: Vec<Result<PVTrace<f64>>> = hull
                    .vertices
                    .par_iter()
                    .map(|&i| {
                        let seed = self.config.stream_seed("oracle", i as u64);
                        self.oracle_trace(basis, field, &coefficients[i], *noisy, seed)
                    })
                    .collect();
                for (&i, tr) in hull.vertices.iter().zip(out) {
                    let id = vertex_id(i);
                    records.push(DatasetRecord {
                        c: coefficients[i].clone(),
                        trace: format!("traces/{id}.csv"),
                        provenance: Provenance::Synthetic {
                            seed: self.config.stream_seed("oracle", i as u64),
                            noisy: *noisy,
                        },
                        id,
                    });
                    traces.push(tr?);
                }
            }
            DataSource::Files { manifest } => {
                let source = FomDataset::load(manifest)?;
                let root = manifest.parent().unwrap_or(std::path::Path::new("."));
                for rec in source.records {
                    if rec.c.len() != basis.n_geom() {
                        return Err(Error::Invalid(format!(
                            "record {} has {} coefficients, basis has {}",
                            rec.id,
                            rec.c.len(),
                            basis.n_geom()
                        )));
                    }
                    let path = root.join(&rec.trace);
                    traces.push(ingest_fom_csv(&path, grid)?);
                    let provenance = match rec.provenance {
                        Provenance::File { .. } => Provenance::File {
                            source: path.display().to_string(),
                        },
                        p => p,
                    };
                    records.push(DatasetRecord {
                        trace: format!("traces/{}.csv", rec.id),
                        provenance,
                        ..rec
                    });
                }
            }
        }
        for (rec, tr) in records.iter().zip(&traces) {
            save_traces_csv(std::slice::from_ref(tr), &l.dataset_dir().join(&rec.trace))?;
        }
        let ds = FomDataset { grid, records };
        ds.save(&l.dataset())?;
        Ok(ds)
    }

    /// Calibrates one trace at geometry `c` with the configured settings and
    /// the given chain seed.
    pub fn calibrate_geometry(
        &self,
        basis: &ShapeBasis,
        c: &[f64],
        trace: &PVTrace<f64>,
        seed: u64,
    ) -> Result<Calibration> {
        let ctx = self.rom_context(basis, c)?;
        let mut cfg: CalibrationConfig = self.config.calibration.clone();
        cfg.chain.seed = seed;
        calibrate(trace, &ctx, &cfg)
    }

    /// Calibrates every dataset record and writes one report per record.
    pub fn calibrate_dataset(&self, basis: &ShapeBasis, dataset: &FomDataset) -> Result<Vec<CalibrationReport>> {
        self.ensure_dirs()?;
        let l = self.layout();
        let root = l.dataset_dir();
        let out: Vec<Result<CalibrationReport>> = (0..dataset.records.len())
            .into_par_iter()
            .map(|k| {
                let rec = &dataset.records[k];
                let trace = dataset.trace(&root, k)?;
                let cal = self.calibrate_geometry(basis, &rec.c, &trace, self.config.stream_seed("chain", k as u64))?;
                cal.report.save(&l.calibration_report(&rec.id))?;
                if self.config.write_chains {
                    save_chain_csv(&cal.chain, &l.chain(&rec.id))?;
                }
                Ok(cal.report)
            })
            .collect();
        out.into_iter().collect()
    }

    /// Trains the factor GP on the calibrated records.
    pub fn train_gp(&self, dataset: &FomDataset, reports: &[CalibrationReport]) -> Result<VectorGP<f64>> {
        if reports.len() != dataset.records.len() {
            return Err(Error::Invalid("one calibration report per dataset record expected".into()));
        }
        let records = dataset
            .records
            .iter()
            .zip(reports)
            .map(|(d, r)| r.to_record(d.c.clone()))
            .collect();
        let mut cfg: GpConfig = self.config.gp;
        cfg.optimizer.seed = self.config.stream_seed("gp", 0);
        let gp = VectorGP::train(records, cfg)?;
        gp.save(&self.layout().gp_state())?;
        Ok(gp)
    }

    /// Loads the calibration reports of every dataset record.
    pub fn load_reports(&self, dataset: &FomDataset) -> Result<Vec<CalibrationReport>> {
        let l = self.layout();
        dataset
            .records
            .iter()
            .map(|r| CalibrationReport::load(&l.calibration_report(&r.id)))
            .collect()
    }
}

/// Population → basis → hull → traces → calibration → GP, writing every
/// artifact and a hash manifest under `config.out_dir`.
pub fn run_offline(config: &PipelineConfig) -> Result<OfflineArtifacts> {
    let p = Pipeline::new(config.clone()).map_err(|e| e.at_stage("config"))?;
    let mut pop = p.population().map_err(|e| e.at_stage("population"))?;
    let (basis, coefficients) = p.basis(&mut pop).map_err(|e| e.at_stage("basis"))?;
    let hull = p.hull(&coefficients).map_err(|e| e.at_stage("hull"))?;
    let field = match config.data {
        DataSource::Oracle { .. } => Some(p.field(&coefficients).map_err(|e| e.at_stage("oracle"))?),
        DataSource::Files { .. } => None,
    };
    let dataset = p
        .dataset(&basis, &coefficients, &hull, field.as_ref())
        .map_err(|e| e.at_stage("oracle"))?;
    let reports = p.calibrate_dataset(&basis, &dataset).map_err(|e| e.at_stage("calibrate"))?;
    let gp = p.train_gp(&dataset, &reports).map_err(|e| e.at_stage("gp-train"))?;
    let manifest =
        write_manifest(config, Some(hull.vertices.len()), Some(gp.len())).map_err(|e| e.at_stage("manifest"))?;
    Ok(OfflineArtifacts {
        basis,
        coefficients,
        hull,
        field,
        dataset,
        reports,
        gp,
        manifest,
    })
}

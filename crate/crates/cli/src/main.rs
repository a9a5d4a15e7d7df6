use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cardiorom::calibration::{save_chain_csv, CalibrationReport};
use cardiorom::geometry::{surface_grid, EllipsoidParams, SurfaceGrid};
use cardiorom::oracle::{ingest_fom_csv, GroundTruthField};
use cardiorom::pipeline::{
    emit_chain_histograms, emit_plot_data, refresh_manifest, run_online, run_update, DataSource, Pipeline,
    PipelineConfig, PredictionReport,
};
use cardiorom::podgeom::GeometryCoefficients;
use cardiorom::{Error, Result};

/// Probabilistic reduced-order modeling of left-ventricle pressure-volume
/// dynamics.
#[derive(Parser)]
#[command(name = "cardiorom", version)]
struct Cli {
    /// Pipeline configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the geometry population.
    Population,
    /// Build the modal shape basis and population coefficients.
    Basis,
    /// Select the pruned training hull.
    Hull,
    /// Produce training traces at the hull vertices (or ingest files).
    Oracle,
    /// Calibrate the dataset, or a single trace with --trace.
    Calibrate(CalibrateArgs),
    /// Train the factor GP on the calibration reports.
    GpTrain,
    /// Predict p-V bands for a target geometry.
    Predict(PredictArgs),
    /// Insert a calibrated record into the GP.
    Update(UpdateArgs),
    /// Write plot-ready CSV files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Trace CSV (`t_ms,p_mmHg,V_ml`).
    #[arg(long, requires = "coeffs")]
    trace: Option<PathBuf>,
    /// Coefficients file of the trace's geometry.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    /// Name of the outputs under the calibration directory.
    #[arg(long, default_value = "single")]
    id: String,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Geometry file (`C_cm`, `H_cm`, `xi_endo`, `xi_epi`).
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Surface grid CSV on the basis lattice.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Coefficients file.
    #[arg(long)]
    coeffs: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    target: Target,
    /// Report path; `<out>/prediction.json` by default.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct UpdateArgs {
    /// Calibration report of the new geometry.
    #[arg(long)]
    record: PathBuf,
    /// Coefficients file of the new geometry.
    #[arg(long)]
    coeffs: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct PlotSource {
    /// Prediction report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Chain dump of a calibration.
    #[arg(long)]
    chain: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    source: PlotSource,
    /// Output directory; `<out>/plots` by default.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn target_grid(p: &Pipeline, t: &Target) -> Result<SurfaceGrid<f64>> {
    let basis = p.load_basis()?;
    let lat = basis.lattice;
    if let Some(g) = &t.geometry {
        surface_grid(&EllipsoidParams::load(g)?, lat.n_theta, lat.n_phi)
    } else if let Some(g) = &t.grid {
        SurfaceGrid::load_csv(g, lat.n_theta, lat.n_phi)
    } else {
        let c = GeometryCoefficients::load(t.coeffs.as_ref().expect("one target is required"))?;
        basis.reconstruct_grid(&c.c)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let p = Pipeline::new(cfg.clone())?;
    let l = p.layout();
    match cli.command {
        Command::Population => {
            let pop = p.population()?;
            println!("sampled {} geometries into {}", pop.len(), l.population().display());
        }
        Command::Basis => {
            let mut pop = p.population()?;
            let (basis, _) = p.basis(&mut pop)?;
            let energy = basis.energy_fractions();
            println!("basis with {} modes, energy fractions {energy:?}", basis.n_geom());
        }
        Command::Hull => {
            let sel = p.hull(&p.load_coefficients()?)?;
            println!(
                "{} hull vertices, {:.1}% of the population inside",
                sel.vertices.len(),
                100.0 * sel.fraction_inside
            );
        }
        Command::Oracle => {
            let coefficients = p.load_coefficients()?;
            let field: Option<GroundTruthField> = match cfg.data {
                DataSource::Oracle { .. } => Some(p.field(&coefficients)?),
                DataSource::Files { .. } => None,
            };
            let ds = p.dataset(&p.load_basis()?, &coefficients, &p.load_hull()?, field.as_ref())?;
            println!("{} traces in {}", ds.records.len(), l.dataset().display());
        }
        Command::Calibrate(args) => {
            let basis = p.load_basis()?;
            match args.trace {
                Some(trace) => {
                    let c = GeometryCoefficients::load(args.coeffs.as_ref().expect("required with --trace"))?;
                    let data = ingest_fom_csv(&trace, p.grid()?)?;
                    let cal = p.calibrate_geometry(&basis, &c.c, &data, cfg.stream_seed("chain-single", 0))?;
                    std::fs::create_dir_all(l.calibration_dir())?;
                    cal.report.save(&l.calibration_report(&args.id))?;
                    if cfg.write_chains {
                        save_chain_csv(&cal.chain, &l.chain(&args.id))?;
                    }
                    println!("mu {:?}, acceptance {:.3}", cal.report.mu, cal.report.acceptance);
                }
                None => {
                    let reports = p.calibrate_dataset(&basis, &p.load_dataset()?)?;
                    println!("calibrated {} records", reports.len());
                }
            }
        }
        Command::GpTrain => {
            let ds = p.load_dataset()?;
            let gp = p.train_gp(&ds, &p.load_reports(&ds)?)?;
            println!("trained on {} records", gp.len());
        }
        Command::Predict(args) => {
            let target = target_grid(&p, &args.target)?;
            let report = run_online(&cfg, &target)?;
            let path = args.report.unwrap_or_else(|| l.root.join("prediction.json"));
            report.save(&path)?;
            let t = report.trust;
            println!(
                "V_ED 99% half-width {:.2} ml vs noise {:.2} ml: ratio {:.3}{}",
                t.band_halfwidth_ved,
                t.noise_level,
                t.ratio,
                if t.flag { " (flagged)" } else { "" }
            );
        }
        Command::Update(args) => {
            let c = GeometryCoefficients::load(&args.coeffs)?;
            let rec = CalibrationReport::load(&args.record)?.to_record(c.c);
            let rep = run_update(&cfg, rec)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
            return Ok(());
        }
        Command::Plot(args) => {
            let dir = args.dir.unwrap_or_else(|| l.root.join("plots"));
            let files = match (args.source.report, args.source.chain) {
                (Some(r), _) => emit_plot_data(&PredictionReport::load(&r)?, &dir)?,
                (None, Some(c)) => vec![emit_chain_histograms(&c, args.bins, &dir)?],
                (None, None) => return Err(Error::Invalid("plot needs --report or --chain".into())),
            };
            for f in files {
                println!("{}", f.display());
            }
            return Ok(());
        }
    }
    refresh_manifest(&cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

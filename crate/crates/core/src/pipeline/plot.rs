use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::online::PredictionReport;

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let k = h.floor() as usize;
    if k + 1 >= n {
        return v[n - 1];
    }
    v[k] + (h - k as f64) * (v[k + 1] - v[k])
}

/// Density histogram over `[min, max]` of the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

pub fn histogram(name: &str, xs: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Histogram {
            name: name.into(),
            edges: vec![],
            density: vec![],
        };
    }
    if hi <= lo {
        hi = lo + 1e-9 * lo.abs().max(1.0);
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    Histogram {
        name: name.into(),
        edges: (0..=bins).map(|k| lo + k as f64 * w).collect(),
        density: counts.iter().map(|&c| c as f64 / (xs.len() as f64 * w)).collect(),
    }
}

fn write_histograms(hists: &[Histogram], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["factor", "bin_lo", "bin_hi", "density"])?;
    for h in hists {
        for (k, d) in h.density.iter().enumerate() {
            w.write_record([h.name.clone(), format!("{:?}", h.edges[k]), format!("{:?}", h.edges[k + 1]), format!("{d:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn level_tag(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}").replace('.', "_")
    }
}

/// Band traces, the median p-V loop and factor histograms of a prediction.
pub fn emit_plot_data(report: &PredictionReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let f = |x: f64| format!("{x:?}");
    for b in &report.bands {
        let path = dir.join(format!("band_{}.csv", level_tag(b.level)));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["t", "p_lo", "p_med", "p_hi", "V_lo", "V_med", "V_hi"])?;
        for k in 0..b.p_med.len() {
            w.write_record([
                f(k as f64 * report.dt),
                f(b.p_lo[k]),
                f(b.p_med[k]),
                f(b.p_hi[k]),
                f(b.v_lo[k]),
                f(b.v_med[k]),
                f(b.v_hi[k]),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(b) = report.bands.first() {
        let path = dir.join("pv_loop.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["t", "V", "p"])?;
        for k in 0..b.p_med.len() {
            w.write_record([f(k as f64 * report.dt), f(b.v_med[k]), f(b.p_med[k])])?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join("posterior_histograms.csv");
    write_histograms(&report.histograms, &path)?;
    written.push(path);
    Ok(written)
}

/// Marginal histograms of a chain dump written by the calibration stage.
pub fn emit_chain_histograms(chain_csv: &Path, bins: usize, dir: &Path) -> Result<PathBuf> {
    let mut rdr = csv::Reader::from_path(chain_csv)?;
    let headers = rdr.headers()?.clone();
    let names: Vec<String> = headers.iter().skip(1).filter(|h| *h != "logpost").map(String::from).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (k, col) in cols.iter_mut().enumerate() {
            let s = rec.get(k + 1).unwrap_or("");
            col.push(s.parse::<f64>().map_err(|_| Error::Parse(format!("bad chain value `{s}`")))?);
        }
    }
    let hists: Vec<Histogram> = names.iter().zip(&cols).map(|(n, c)| histogram(n, c, bins)).collect();
    std::fs::create_dir_all(dir)?;
    let path = dir.join("posterior_histograms.csv");
    write_histograms(&hists, &path)?;
    Ok(path)
}

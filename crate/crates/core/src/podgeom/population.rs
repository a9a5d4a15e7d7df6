use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_against, clinical_dimensions, segment_volume, surface_grid, ClinicalDimensions, EllipsoidParams,
    PhysiologicalRanges,
};

/// Two-sided 95% normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// 95% interval of one end-diastolic dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Log-normal whose 2.5% and 97.5% quantiles are `lo` and `hi`.
    pub fn log_normal(&self) -> Result<LogNormal<f64>> {
        if !(self.lo > 0.0 && self.hi > self.lo) {
            return Err(Error::Invalid(format!("bad interval [{}, {}]", self.lo, self.hi)));
        }
        let mu = 0.5 * (self.lo.ln() + self.hi.ln());
        let sigma = (self.hi.ln() - self.lo.ln()) / (2.0 * Z_975);
        LogNormal::new(mu, sigma).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// End-diastolic population ranges (cm, cm, ml, ml).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionRanges {
    #[serde(rename = "D_lv")]
    pub d_lv: Interval,
    #[serde(rename = "B_lv")]
    pub b_lv: Interval,
    #[serde(rename = "V")]
    pub v: Interval,
    #[serde(rename = "Vw")]
    pub vw: Interval,
}

impl Default for DimensionRanges {
    fn default() -> Self {
        Self {
            d_lv: Interval { lo: 4.2, hi: 5.8 },
            b_lv: Interval { lo: 2.4, hi: 4.4 },
            v: Interval { lo: 62.0, hi: 150.0 },
            vw: Interval { lo: 84.0, hi: 213.0 },
        }
    }
}

impl DimensionRanges {
    fn as_physiological(&self) -> PhysiologicalRanges {
        use crate::geometry::Range;
        let r = |i: Interval| Some(Range::between(i.lo, i.hi));
        PhysiologicalRanges {
            d_lv: r(self.d_lv),
            l_lv: None,
            b_lv: r(self.b_lv),
            v: r(self.v),
            vw: r(self.vw),
        }
    }
}

/// Shape filters applied on top of the range check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFilters {
    /// Minimum wall thickness at the equator (cm).
    pub min_wall_thickness: f64,
    /// Maximum `L_lv / D_lv`.
    pub max_aspect_ratio: f64,
    pub min_xi_gap: f64,
}

impl Default for ShapeFilters {
    fn default() -> Self {
        Self {
            min_wall_thickness: 0.5,
            max_aspect_ratio: 2.5,
            min_xi_gap: 0.05,
        }
    }
}

impl ShapeFilters {
    pub fn accepts(&self, g: &EllipsoidParams<f64>, dims: &ClinicalDimensions<f64>) -> bool {
        let thickness = g.c * (g.xi_epi.sinh() - g.xi_endo.sinh());
        thickness >= self.min_wall_thickness
            && dims.l_lv / dims.d_lv <= self.max_aspect_ratio
            && g.xi_epi - g.xi_endo >= self.min_xi_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            n_theta: 16,
            n_phi: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PopulationConfig {
    pub ranges: DimensionRanges,
    pub filters: ShapeFilters,
    pub lattice: Lattice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    pub dims: ClinicalDimensions<f64>,
    pub geom: EllipsoidParams<f64>,
    /// Flattened endo+epi lattice.
    pub shape: Vec<f64>,
    /// Modal coefficients, once a basis has been fitted.
    pub coeffs: Option<Vec<f64>>,
}

/// Geometry matching diameter, basal diameter and both volumes.
///
/// With `a = D/2` and `s = √(1 − (B/D)²)` the base plane sits at `H = c s`, so
/// the cavity volume `π a² c (2/3 + s − s³/3)` fixes `c` in closed form; the
/// epicardial coordinate then follows by bisection on the wall volume.
pub fn invert_dimensions(d: f64, b: f64, v: f64, vw: f64) -> Result<EllipsoidParams<f64>> {
    if !(d > 0.0 && b > 0.0 && v > 0.0 && vw > 0.0) {
        return Err(Error::NoSolution("dimensions must be positive".into()));
    }
    if b >= d {
        return Err(Error::NoSolution(format!("basal diameter {b} not below diameter {d}")));
    }
    let a = 0.5 * d;
    let s = (1.0 - (b / d).powi(2)).sqrt();
    let c_endo = v / (std::f64::consts::PI * a * a * (2.0 / 3.0 + s - s.powi(3) / 3.0));
    if c_endo <= a {
        return Err(Error::NoSolution(format!(
            "volume {v} too small for a prolate cavity of diameter {d}"
        )));
    }
    let c = (c_endo * c_endo - a * a).sqrt();
    let xi_endo = (a / c_endo).atanh();
    let h = c_endo * s;
    let target = v + vw;
    let f = |xi: f64| segment_volume(c, xi, h);
    let (mut lo, mut hi) = (xi_endo, xi_endo + 1.0);
    let mut grow = 0;
    while f(hi) < target {
        hi += 1.0;
        grow += 1;
        if grow > 20 {
            return Err(Error::NoSolution("wall volume unreachable".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    EllipsoidParams::new(c, h, xi_endo, 0.5 * (lo + hi)).map_err(|e| Error::NoSolution(e.to_string()))
}

/// Draws independent log-normal dimensions, inverts them and keeps
/// physiological shapes until `n_pop` are accepted.
pub fn sample_population(n_pop: usize, seed: u64, config: &PopulationConfig) -> Result<Vec<PopulationSample>> {
    if n_pop == 0 {
        return Err(Error::Invalid("n_pop must be at least 1".into()));
    }
    let dists = [
        config.ranges.d_lv.log_normal()?,
        config.ranges.b_lv.log_normal()?,
        config.ranges.v.log_normal()?,
        config.ranges.vw.log_normal()?,
    ];
    let ranges = config.ranges.as_physiological();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 1000 + 100 * n_pop;
    let mut out = Vec::with_capacity(n_pop);
    let mut draws = 0usize;
    while out.len() < n_pop {
        if draws >= budget {
            return Err(Error::ExhaustedSampling(format!(
                "accepted {} of {draws} draws",
                out.len()
            )));
        }
        draws += 1;
        let x: Vec<f64> = dists.iter().map(|dist| dist.sample(&mut rng)).collect();
        let Ok(geom) = invert_dimensions(x[0], x[1], x[2], x[3]) else {
            continue;
        };
        let Ok(dims) = clinical_dimensions(&geom) else {
            continue;
        };
        if !check_against(&dims, &ranges).passes() || !config.filters.accepts(&geom, &dims) {
            continue;
        }
        let grid = surface_grid(&geom, config.lattice.n_theta, config.lattice.n_phi)?;
        out.push(PopulationSample {
            dims,
            geom,
            shape: grid.to_vector(),
            coeffs: None,
        });
    }
    Ok(out)
}

/// Population manifest: one row per sample with dimensions, geometry and
/// coefficients when available.
pub fn write_population_csv<W: Write>(pop: &[PopulationSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n_c = pop.iter().filter_map(|s| s.coeffs.as_ref()).map(Vec::len).max().unwrap_or(0);
    let mut header: Vec<String> = ["index", "D_lv", "B_lv", "L_lv", "V", "Vw", "C_cm", "H_cm", "xi_endo", "xi_epi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_c).map(|k| format!("c{k}")));
    w.write_record(&header)?;
    for (i, s) in pop.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(
            [
                s.dims.d_lv,
                s.dims.b_lv,
                s.dims.l_lv,
                s.dims.v,
                s.dims.vw,
                s.geom.c,
                s.geom.h,
                s.geom.xi_endo,
                s.geom.xi_epi,
            ]
            .iter()
            .map(|v| format!("{v:?}")),
        );
        if let Some(c) = &s.coeffs {
            row.extend(c.iter().map(|v| format!("{v:?}")));
        }
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

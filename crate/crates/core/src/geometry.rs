//! Truncated prolate-ellipsoid ventricles.
//!
//! The domain is the shell between two confocal prolate ellipsoids
//! (`ξ_endo < ξ_epi`) cut by the base plane `z = H`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Reference focal length (cm).
pub const C_REF: f64 = 4.3;
/// Reference truncation height (cm).
pub const H_REF: f64 = 2.4;
pub const XI_ENDO_REF: f64 = 0.371;
pub const XI_EPI_REF: f64 = 0.678;

/// Upper end of the transmural bisection range.
const XI_MAX: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidParams<T> {
    #[serde(rename = "C_cm")]
    pub c: T,
    #[serde(rename = "H_cm")]
    pub h: T,
    pub xi_endo: T,
    pub xi_epi: T,
}

impl<T: Real> EllipsoidParams<T> {
    pub fn new(c: T, h: T, xi_endo: T, xi_epi: T) -> Result<Self> {
        let g = Self {
            c,
            h,
            xi_endo,
            xi_epi,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn reference() -> Self {
        Self {
            c: T::lit(C_REF),
            h: T::lit(H_REF),
            xi_endo: T::lit(XI_ENDO_REF),
            xi_epi: T::lit(XI_EPI_REF),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.c > z) {
            return Err(Error::Invalid(format!("focal length must be positive, got {}", self.c)));
        }
        if !(self.xi_endo > z && self.xi_epi > self.xi_endo) {
            return Err(Error::Invalid(format!(
                "require 0 < xi_endo < xi_epi, got {} and {}",
                self.xi_endo, self.xi_epi
            )));
        }
        if !(self.h > z && self.h < self.c * self.xi_endo.cosh()) {
            return Err(Error::Invalid(format!(
                "truncation height {} outside (0, C cosh xi_endo)",
                self.h
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> EllipsoidParams<U> {
        EllipsoidParams {
            c: U::lit(self.c.as_f64()),
            h: U::lit(self.h.as_f64()),
            xi_endo: U::lit(self.xi_endo.as_f64()),
            xi_epi: U::lit(self.xi_epi.as_f64()),
        }
    }

    pub fn cavity_volume(&self) -> T {
        segment_volume(self.c, self.xi_endo, self.h)
    }

    pub fn wall_volume(&self) -> T {
        segment_volume(self.c, self.xi_epi, self.h) - self.cavity_volume()
    }

    /// Polar angle of the base plane on the surface `ξ`.
    pub fn theta_base(&self, xi: T) -> T {
        (self.h / (self.c * xi.cosh())).min(T::one()).acos()
    }

}

impl EllipsoidParams<f64> {
    pub fn load(path: &Path) -> Result<Self> {
        let g: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `(C sinh ξ sin θ cos φ, C sinh ξ sin θ sin φ, C cosh ξ cos θ)`.
#[inline]
pub fn prolate_point<T: Real>(c: T, xi: T, theta: T, phi: T) -> [T; 3] {
    let r = c * xi.sinh() * theta.sin();
    [r * phi.cos(), r * phi.sin(), c * xi.cosh() * theta.cos()]
}

/// Volume (ml = cm³) of the ellipsoid `ξ` below the plane `z = H`:
/// `π a² (2c/3 + H − H³/(3c²))`.
pub fn segment_volume<T: Real>(c_focal: T, xi: T, h: T) -> T {
    let a = c_focal * xi.sinh();
    let c = c_focal * xi.cosh();
    let pi = T::lit(std::f64::consts::PI);
    let three = T::lit(3.0);
    pi * a * a * (T::lit(2.0) * c / three + h - h * h * h / (three * c * c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalDimensions<T> {
    #[serde(rename = "D_lv")]
    pub d_lv: T,
    #[serde(rename = "L_lv")]
    pub l_lv: T,
    #[serde(rename = "B_lv")]
    pub b_lv: T,
    #[serde(rename = "V")]
    pub v: T,
    #[serde(rename = "Vw")]
    pub vw: T,
}

/// Diameter `2 C sinh ξ_endo`, length `H + C cosh ξ_endo`, basal diameter
/// `D sin(arccos(H / (C cosh ξ_endo)))` and the two volumes.
pub fn clinical_dimensions<T: Real>(g: &EllipsoidParams<T>) -> Result<ClinicalDimensions<T>> {
    let c_endo = g.c * g.xi_endo.cosh();
    let ratio = g.h / c_endo;
    if !(ratio.abs() <= T::one()) {
        return Err(Error::Domain(format!("base ratio H/(C cosh xi) = {ratio} outside [-1, 1]")));
    }
    let d = T::lit(2.0) * g.c * g.xi_endo.sinh();
    Ok(ClinicalDimensions {
        d_lv: d,
        l_lv: g.h + c_endo,
        b_lv: d * ratio.acos().sin(),
        v: g.cavity_volume(),
        vw: g.wall_volume(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stage {
    /// End-systole.
    Es,
    /// End-diastole.
    Ed,
}

/// Closed interval; either end may be open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Range {
    pub const fn between(lo: f64, hi: f64) -> Self {
        Self {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub const fn at_least(lo: f64) -> Self {
        Self { lo: Some(lo), hi: None }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }
}

/// Physiological dimension ranges for one cycle stage; `None` means unchecked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysiologicalRanges {
    pub d_lv: Option<Range>,
    pub l_lv: Option<Range>,
    pub b_lv: Option<Range>,
    pub v: Option<Range>,
    pub vw: Option<Range>,
}

impl PhysiologicalRanges {
    pub const END_SYSTOLE: Self = Self {
        d_lv: Some(Range::between(2.8, 4.0)),
        l_lv: Some(Range::between(4.2, 8.6)),
        b_lv: Some(Range::at_least(2.0)),
        v: None,
        vw: None,
    };

    pub const END_DIASTOLE: Self = Self {
        d_lv: Some(Range::between(4.2, 5.8)),
        l_lv: None,
        b_lv: Some(Range::between(2.4, 4.4)),
        v: Some(Range::between(62.0, 150.0)),
        vw: Some(Range::between(84.0, 213.0)),
    };

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::Es => Self::END_SYSTOLE,
            Stage::Ed => Self::END_DIASTOLE,
        }
    }
}

/// Outcome per constraint; `None` where the stage does not constrain a quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysiologicalCheck {
    pub diameter: Option<bool>,
    pub length: Option<bool>,
    pub basal_diameter: Option<bool>,
    /// Basal diameter must not exceed the ventricle diameter.
    pub basal_below_diameter: bool,
    pub cavity_volume: Option<bool>,
    pub wall_volume: Option<bool>,
}

impl PhysiologicalCheck {
    pub fn passes(&self) -> bool {
        [
            self.diameter,
            self.length,
            self.basal_diameter,
            self.cavity_volume,
            self.wall_volume,
        ]
        .iter()
        .all(|c| c.unwrap_or(true))
            && self.basal_below_diameter
    }
}

pub fn check_physiological<T: Real>(dims: &ClinicalDimensions<T>, stage: Stage) -> PhysiologicalCheck {
    check_against(dims, &PhysiologicalRanges::for_stage(stage))
}

pub fn check_against<T: Real>(dims: &ClinicalDimensions<T>, r: &PhysiologicalRanges) -> PhysiologicalCheck {
    let test = |range: Option<Range>, x: T| range.map(|r| r.contains(x.as_f64()));
    PhysiologicalCheck {
        diameter: test(r.d_lv, dims.d_lv),
        length: test(r.l_lv, dims.l_lv),
        basal_diameter: test(r.b_lv, dims.b_lv),
        basal_below_diameter: dims.b_lv <= dims.d_lv,
        cavity_volume: test(r.v, dims.v),
        wall_volume: test(r.vw, dims.vw),
    }
}

/// Bisection for an increasing function; returns `x` with `f(x) = target`.
fn bisect_increasing<T: Real>(
    f: impl Fn(T) -> T,
    target: T,
    mut lo: T,
    mut hi: T,
    what: &str,
) -> Result<T> {
    if !(f(lo) <= target && f(hi) >= target) {
        return Err(Error::NoBracket(format!(
            "{what}: target {target} outside [{}, {}]",
            f(lo),
            f(hi)
        )));
    }
    for _ in 0..300 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

/// Transmural coordinates matching target cavity and wall volumes for fixed `C`, `H`.
pub fn solve_transmural<T: Real>(c: T, h: T, v_target: T, vw_target: T) -> Result<(T, T)> {
    if !(c > T::zero() && h > T::zero() && v_target > T::zero() && vw_target > T::zero()) {
        return Err(Error::Invalid("transmural solve needs positive C, H and targets".into()));
    }
    // The base plane must cut the endocardium: C cosh ξ > H.
    let xi_lo = if h >= c { (h / c).acosh() } else { T::zero() };
    let xi_max = T::lit(XI_MAX);
    let xi_endo = bisect_increasing(|xi| segment_volume(c, xi, h), v_target, xi_lo, xi_max, "cavity volume")?;
    let v_cav = segment_volume(c, xi_endo, h);
    let xi_epi = bisect_increasing(
        |xi| segment_volume(c, xi, h) - v_cav,
        vw_target,
        xi_endo,
        xi_max,
        "wall volume",
    )?;
    if !(xi_endo > xi_lo && xi_epi > xi_endo) {
        return Err(Error::NoBracket("degenerate transmural solution".into()));
    }
    Ok((xi_endo, xi_epi))
}

/// Multipliers on the reference `H` and `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeVariation<T> {
    pub h_tilde: T,
    pub c_tilde: T,
}

/// Geometry for a shape variation at fixed volumes, with its end-systolic check.
///
/// A failed check is reported, not raised.
pub fn variation_geometry<T: Real>(
    var: &ShapeVariation<T>,
    v_fixed: T,
    vw_fixed: T,
) -> Result<(EllipsoidParams<T>, PhysiologicalCheck)> {
    if !(var.h_tilde > T::zero() && var.c_tilde > T::zero()) {
        return Err(Error::Invalid("shape multipliers must be positive".into()));
    }
    let c = var.c_tilde * T::lit(C_REF);
    let h = var.h_tilde * T::lit(H_REF);
    let (xi_endo, xi_epi) = solve_transmural(c, h, v_fixed, vw_fixed)?;
    let g = EllipsoidParams::new(c, h, xi_endo, xi_epi)?;
    let check = check_physiological(&clinical_dimensions(&g)?, Stage::Es);
    Ok((g, check))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Endo,
    Epi,
}

impl Surface {
    pub fn as_str(self) -> &'static str {
        match self {
            Surface::Endo => "endo",
            Surface::Epi => "epi",
        }
    }
}

/// Endo- and epicardial point lattices on a uniform `(θ, φ)` grid.
///
/// Rows run from the base ring (`θ` at the base plane) to the apex (`θ = π`);
/// within a row `φ = 2π j / n_phi`. Points are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid<T> {
    pub n_theta: usize,
    pub n_phi: usize,
    pub endo: Vec<[T; 3]>,
    pub epi: Vec<[T; 3]>,
}

pub fn surface_grid<T: Real>(g: &EllipsoidParams<T>, n_theta: usize, n_phi: usize) -> Result<SurfaceGrid<T>> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::Invalid(format!(
            "lattice needs at least 2x2 points, got {n_theta}x{n_phi}"
        )));
    }
    g.validate()?;
    let lattice = |xi: T| {
        let mut pts = Vec::with_capacity(n_theta * n_phi);
        for i in 0..n_theta {
            for j in 0..n_phi {
                let (th, ph) = lattice_angles(g, xi, n_theta, n_phi, i, j);
                pts.push(prolate_point(g.c, xi, th, ph));
            }
        }
        pts
    };
    Ok(SurfaceGrid {
        n_theta,
        n_phi,
        endo: lattice(g.xi_endo),
        epi: lattice(g.xi_epi),
    })
}

fn lattice_angles<T: Real>(
    g: &EllipsoidParams<T>,
    xi: T,
    n_theta: usize,
    n_phi: usize,
    i: usize,
    j: usize,
) -> (T, T) {
    let pi = T::lit(std::f64::consts::PI);
    let th0 = g.theta_base(xi);
    let th = th0 + (pi - th0) * T::lit(i as f64) / T::lit((n_theta - 1) as f64);
    let ph = T::lit(2.0) * pi * T::lit(j as f64) / T::lit(n_phi as f64);
    (th, ph)
}

impl<T: Real> SurfaceGrid<T> {
    pub fn n_points(&self) -> usize {
        self.endo.len() + self.epi.len()
    }

    /// Flat `[x, y, z, …]` of endo then epi points.
    pub fn to_vector(&self) -> Vec<T> {
        self.endo
            .iter()
            .chain(self.epi.iter())
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    pub fn from_vector(x: &[T], n_theta: usize, n_phi: usize) -> Result<Self> {
        let per = n_theta * n_phi;
        if x.len() != 6 * per {
            return Err(Error::Invalid(format!(
                "shape vector has {} entries, lattice {n_theta}x{n_phi} needs {}",
                x.len(),
                6 * per
            )));
        }
        let pts: Vec<[T; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Self {
            n_theta,
            n_phi,
            endo: pts[..per].to_vec(),
            epi: pts[per..].to_vec(),
        })
    }

    /// Volume enclosed by the endocardial lattice closed with a flat base fan.
    pub fn cavity_volume(&self) -> T {
        closed_lattice_volume(&self.endo, self.n_theta, self.n_phi)
    }

    /// Epicardial enclosed volume minus the cavity.
    pub fn wall_volume(&self) -> T {
        closed_lattice_volume(&self.epi, self.n_theta, self.n_phi) - self.cavity_volume()
    }

    pub fn write_csv<W: Write>(&self, g_angles: Option<&EllipsoidParams<T>>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["surface", "theta", "phi", "x", "y", "z"])?;
        for (surf, pts) in [(Surface::Endo, &self.endo), (Surface::Epi, &self.epi)] {
            for (k, p) in pts.iter().enumerate() {
                let (i, j) = (k / self.n_phi, k % self.n_phi);
                let (th, ph) = match g_angles {
                    Some(g) => {
                        let xi = if surf == Surface::Endo { g.xi_endo } else { g.xi_epi };
                        let (th, ph) = lattice_angles(g, xi, self.n_theta, self.n_phi, i, j);
                        (th.as_f64(), ph.as_f64())
                    }
                    None => (f64::NAN, f64::NAN),
                };
                w.write_record(&[
                    surf.as_str().to_string(),
                    format!("{th:?}"),
                    format!("{ph:?}"),
                    format!("{:?}", p[0].as_f64()),
                    format!("{:?}", p[1].as_f64()),
                    format!("{:?}", p[2].as_f64()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, g_angles: Option<&EllipsoidParams<T>>, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(g_angles, std::io::BufWriter::new(f))
    }
}

impl SurfaceGrid<f64> {
    /// Reads a lattice CSV; rows must be endo then epi in lattice order.
    pub fn read_csv<R: std::io::Read>(input: R, n_theta: usize, n_phi: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let want = ["surface", "theta", "phi", "x", "y", "z"];
        if headers.iter().collect::<Vec<_>>() != want {
            return Err(Error::Parse(format!("unexpected surface grid header {headers:?}")));
        }
        let mut endo = Vec::new();
        let mut epi = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
            };
            let p = [num(3)?, num(4)?, num(5)?];
            match &rec[0] {
                "endo" if epi.is_empty() => endo.push(p),
                "epi" => epi.push(p),
                other => {
                    return Err(Error::Parse(format!(
                        "row {}: unexpected surface `{other}` at this position",
                        line + 2
                    )))
                }
            }
        }
        let per = n_theta * n_phi;
        if endo.len() != per || epi.len() != per {
            return Err(Error::Parse(format!(
                "expected {per} points per surface, got {} and {}",
                endo.len(),
                epi.len()
            )));
        }
        Ok(Self {
            n_theta,
            n_phi,
            endo,
            epi,
        })
    }

    pub fn load_csv(path: &Path, n_theta: usize, n_phi: usize) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, n_theta, n_phi)
    }
}

/// Signed-tetrahedron volume of a lattice surface closed by a fan over the
/// base ring around its centroid.
fn closed_lattice_volume<T: Real>(pts: &[[T; 3]], n_theta: usize, n_phi: usize) -> T {
    let tet = |a: &[T; 3], b: &[T; 3], c: &[T; 3]| {
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0])
    };
    let at = |i: usize, j: usize| &pts[i * n_phi + (j % n_phi)];
    let mut six_v = T::zero();
    for i in 0..n_theta - 1 {
        for j in 0..n_phi {
            let (a, b, c, d) = (at(i, j), at(i, j + 1), at(i + 1, j), at(i + 1, j + 1));
            six_v = six_v + tet(a, c, b) + tet(b, c, d);
        }
    }
    let inv = T::lit(1.0 / n_phi as f64);
    let mut center = [T::zero(); 3];
    for j in 0..n_phi {
        for k in 0..3 {
            center[k] = center[k] + at(0, j)[k] * inv;
        }
    }
    for j in 0..n_phi {
        six_v = six_v + tet(&center, at(0, j), at(0, j + 1));
    }
    (six_v / T::lit(6.0)).abs()
}

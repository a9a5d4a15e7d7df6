use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{surface_grid, EllipsoidParams, SurfaceGrid};

use super::population::{Lattice, PopulationSample};

/// Truncated modal basis of lattice deformations around a reference shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeBasis {
    pub x_ref: Vec<f64>,
    /// `n_geom` orthonormal columns, each of length `3·n_points`.
    pub modes: Vec<Vec<f64>>,
    /// All singular values of the deformation matrix, descending.
    pub singular_values: Vec<f64>,
    pub lattice: Lattice,
}

/// Modal coefficients of one geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCoefficients {
    pub c: Vec<f64>,
}

impl GeometryCoefficients {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Lattice of the reference geometry.
pub fn reference_shape(lattice: Lattice) -> Result<Vec<f64>> {
    Ok(surface_grid(&EllipsoidParams::<f64>::reference(), lattice.n_theta, lattice.n_phi)?.to_vector())
}

/// SVD of the deformations `X_i − X_ref`, truncated to `n_geom` modes.
///
/// Each mode's sign is fixed so that its largest-magnitude entry is positive.
pub fn build_basis(shapes: &[Vec<f64>], x_ref: &[f64], n_geom: usize, lattice: Lattice) -> Result<ShapeBasis> {
    let m = x_ref.len();
    if m != 6 * lattice.n_theta * lattice.n_phi {
        return Err(Error::Invalid("reference shape does not match the lattice".into()));
    }
    if n_geom == 0 || shapes.len() < n_geom {
        return Err(Error::DegenerateData(format!(
            "{} shapes cannot support {n_geom} modes",
            shapes.len()
        )));
    }
    if shapes.iter().any(|s| s.len() != m || s.iter().any(|v| !v.is_finite())) {
        return Err(Error::Invalid("shape vectors must be finite and share the lattice".into()));
    }
    let dx = DMatrix::from_fn(m, shapes.len(), |i, j| shapes[j][i] - x_ref[i]);
    let svd = dx.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let top = singular_values[0];
    if !(top > 0.0) || singular_values[n_geom - 1] <= 1e-10 * top {
        return Err(Error::DegenerateData(format!(
            "deformation matrix has rank below {n_geom}"
        )));
    }
    let modes = order[..n_geom]
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = u.column(k).iter().copied().collect();
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            if lead < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            col
        })
        .collect();
    Ok(ShapeBasis {
        x_ref: x_ref.to_vec(),
        modes,
        singular_values,
        lattice,
    })
}

/// Basis of a sampled population around the reference geometry.
pub fn build_population_basis(pop: &[PopulationSample], n_geom: usize, lattice: Lattice) -> Result<ShapeBasis> {
    let shapes: Vec<Vec<f64>> = pop.iter().map(|s| s.shape.clone()).collect();
    build_basis(&shapes, &reference_shape(lattice)?, n_geom, lattice)
}

impl ShapeBasis {
    pub fn n_geom(&self) -> usize {
        self.modes.len()
    }

    /// `σ_k² / Σ σ²` for every singular value.
    pub fn energy_fractions(&self) -> Vec<f64> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        self.singular_values.iter().map(|s| s * s / total).collect()
    }

    /// `X_ref + Σ c_k u_k`.
    pub fn reconstruct(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n_geom() {
            return Err(Error::Invalid(format!(
                "expected {} coefficients, got {}",
                self.n_geom(),
                c.len()
            )));
        }
        let mut x = self.x_ref.clone();
        for (ck, mode) in c.iter().zip(&self.modes) {
            x.iter_mut().zip(mode).for_each(|(xi, ui)| *xi += ck * ui);
        }
        Ok(x)
    }

    pub fn reconstruct_grid(&self, c: &[f64]) -> Result<SurfaceGrid<f64>> {
        SurfaceGrid::from_vector(&self.reconstruct(c)?, self.lattice.n_theta, self.lattice.n_phi)
    }

    /// Least-squares coefficients `Uᵀ (X − X_ref)`.
    pub fn fit_coefficients(&self, target: &[f64]) -> Result<Vec<f64>> {
        if target.len() != self.x_ref.len() {
            return Err(Error::Invalid(format!(
                "target has {} entries, basis expects {}",
                target.len(),
                self.x_ref.len()
            )));
        }
        Ok(self
            .modes
            .iter()
            .map(|u| u.iter().zip(target).zip(&self.x_ref).map(|((ui, t), r)| ui * (t - r)).sum())
            .collect())
    }

    pub fn fit_grid(&self, grid: &SurfaceGrid<f64>) -> Result<Vec<f64>> {
        if grid.n_theta != self.lattice.n_theta || grid.n_phi != self.lattice.n_phi {
            return Err(Error::Invalid("target lattice differs from the basis lattice".into()));
        }
        self.fit_coefficients(&grid.to_vector())
    }

    /// Lattice cavity and wall volumes of the geometry at `c`.
    pub fn lattice_volumes(&self, c: &[f64]) -> Result<(f64, f64)> {
        let g = self.reconstruct_grid(c)?;
        Ok((g.cavity_volume(), g.wall_volume()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if b.modes.iter().any(|m| m.len() != b.x_ref.len()) {
            return Err(Error::Parse("basis modes do not match the reference shape".into()));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

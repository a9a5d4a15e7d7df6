//! Probabilistic reduced-order modeling of left-ventricle pressure-volume
//! dynamics.
//!
//! The analytic kernels ([`onefiber`], [`geometry`], [`gp`], [`linalg`]) are
//! generic over [`Real`]; the data-driven layers work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod calibration;
pub mod geometry;
pub mod gp;
pub mod linalg;
pub mod onefiber;
pub mod oracle;
pub mod pipeline;
pub mod podgeom;
pub mod real;

pub use error::{Error, Result};
pub use real::Real;

pub type CorrectionFactors = onefiber::CorrectionFactors<f64>;
pub type RomParameters = onefiber::RomParameters<f64>;
pub type CirculationParameters = onefiber::CirculationParameters<f64>;
pub type CardiacState = onefiber::CardiacState<f64>;
pub type PVTrace = onefiber::PVTrace<f64>;
pub type EllipsoidParams = geometry::EllipsoidParams<f64>;
pub type SurfaceGrid = geometry::SurfaceGrid<f64>;

pub type CorrectionFactorsF32 = onefiber::CorrectionFactors<f32>;
pub type RomParametersF32 = onefiber::RomParameters<f32>;
pub type PVTraceF32 = onefiber::PVTrace<f32>;

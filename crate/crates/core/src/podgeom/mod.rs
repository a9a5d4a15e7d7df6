//! Synthetic ventricle populations, their modal shape basis and convex-hull
//! training selection.

pub mod basis;
pub mod hull;
pub mod population;

pub use basis::{build_basis, build_population_basis, reference_shape, GeometryCoefficients, ShapeBasis};
pub use hull::{select_training_hull, ConvexHull, HullSelection};
pub use population::{
    invert_dimensions, sample_population, write_population_csv, DimensionRanges, Interval, Lattice,
    PopulationConfig, PopulationSample, ShapeFilters,
};

//! Generalized one-fiber ventricle model coupled to active contraction and a
//! closed-loop circulation.

pub mod circulation;
pub mod params;
pub mod relations;
pub mod simulate;

pub use circulation::{circulation_step, instantaneous_flows, CardiacState, CirculationUpdate, ValveState};
pub use params::{
    CirculationParameters, CorrectionFactors, ParameterAdapter, ParameterFile, RomParameters,
    SimulationSettings, MMHG_PER_KPA,
};
pub use relations::*;
pub use simulate::{
    cyclic_integral, init_end_diastole, init_unloaded, run_with_settings, save_traces_csv,
    simulate, simulate_detailed, steady_trace, summarize, write_traces_csv, CycleRecord,
    HemodynamicSummary, PVTrace, Simulation,
};

//! Experiment plumbing: run configuration, presets, time series, run
//! diagnostics and plots.

mod analysis;
mod config;
mod plot;
mod presets;
mod run;

pub use analysis::{
    bump_census, central_density, detect_plateaus, relative_rates, sorting_report, Plateau, PlateauReport,
    SortingReport, DEFAULT_BUMP_THRESHOLD,
};
pub use config::{
    ConfigError, InitialDatum, JkoSettings, OutputSettings, ParticleSettings, RunConfig, SpeciesConfig, TimeSettings,
    KERNEL_NAMES,
};
pub use plot::{csv_svg, field_svg, heatmap_svg, line_svg, plot_file, LinePlot};
pub use presets::{fair_competition, preset, PRESET_NAMES};
pub use run::{
    barenblatt_profile, evolve, initial_state, run, series_csv, series_header, RunOutcome, SeriesRow, StopReason,
};

use thiserror::Error;

use crate::energetics::EnergyError;
use crate::mesh::MeshError;
use crate::solver::SolverError;
use crate::stationary::StationaryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkbenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error("step {step} (t = {t}) lost positivity or failed its monotonicity check")]
    NonMonotone { step: usize, t: f64 },
    #[error("unknown preset '{0}' (valid: {names})", names = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error("nothing to plot")]
    EmptySeries,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("{0}")]
    Invalid(String),
}

impl WorkbenchError {
    /// Configuration problems as opposed to numerical failures.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            WorkbenchError::Config(_) | WorkbenchError::UnknownPreset(_) | WorkbenchError::Invalid(_)
        )
    }
}

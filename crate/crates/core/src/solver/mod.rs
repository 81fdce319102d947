//! Upwind finite-volume schemes: semi-discrete right-hand side, implicit
//! and explicit steps, dimensional splitting, systems, adaptive steps.

mod linear;
mod scheme;
#[cfg(test)]
mod tests;

pub use scheme::Solver;

use thiserror::Error;

use crate::energetics::{EnergyBreakdown, EnergyError, ModelSpec, SystemSpec};
use crate::mesh::{Field, MeshError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("nonlinear solve did not converge after {halvings} step halvings (last dt = {dt:e}, residual {residual:e})")]
    NotConverged { halvings: usize, dt: f64, residual: f64 },
    #[error("explicit step dt = {dt:e} exceeds the stability bound {limit:e}")]
    StabilityViolated { dt: f64, limit: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state does not match the system: {0}")]
    StateMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIntegrator {
    Implicit,
    ExplicitEuler,
    ExplicitRk2,
}

impl TimeIntegrator {
    pub fn is_explicit(self) -> bool {
        !matches!(self, TimeIntegrator::Implicit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub cfl: f64,
    /// Sup-norm tolerance of the nonlinear iteration, relative to
    /// `max(1, max ρⁿ)`.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub time_integrator: TimeIntegrator,
    /// Newton acceleration of the Picard iteration.
    pub newton: bool,
    pub max_halvings: usize,
    /// Relaxation of the adaptive bound for the implicit integrator.
    pub implicit_dt_factor: f64,
    pub dt_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            cfl: 0.5,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            time_integrator: TimeIntegrator::Implicit,
            newton: true,
            max_halvings: 10,
            implicit_dt_factor: 20.0,
            dt_max: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl must lie in (0, 1]");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol must be positive");
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter must be positive");
        }
        if !(self.implicit_dt_factor > 0.0) {
            return bad("implicit_dt_factor must be positive");
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max must be positive");
        }
        Ok(())
    }
}

/// Interface quantities of one species. `u[a][i]` and `flux[a][i]` belong
/// to the interface between cell `i` and its successor along axis `a`; on
/// a no-flux grid the last interface of each line carries zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxAssembly {
    pub xi: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub flux: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Time at the end of the step; step functions report `dt_used`, the
    /// run drivers shift it to absolute time.
    pub t: f64,
    pub dt_used: f64,
    pub mass_per_species: Vec<f64>,
    pub min_density: f64,
    /// Free energy after the step.
    pub energy: EnergyBreakdown,
    /// `-Σ min(ρ_i, ρ_{i+1}) |u_{i+1/2}|² Δx` (mobility-weighted), per unit time.
    pub dissipation_bound: f64,
    /// Free energy after minus before.
    pub energy_drop: f64,
    pub picard_iters: usize,
    pub monotone: bool,
}

fn single(rho: &Field) -> Vec<Field> {
    vec![rho.clone()]
}

fn scalar_solver(model: &ModelSpec, rho: &Field, config: &SolverConfig) -> Result<Solver, SolverError> {
    Solver::for_model(model, rho.grid(), rho.mass(), config.clone())
}

/// `ξ`, `u` and `F` for `rho`, with the convolution taken of `rho_for_convolution`.
pub fn assemble_flux(model: &ModelSpec, rho: &Field, rho_for_convolution: &Field) -> Result<FluxAssembly, SolverError> {
    if rho.grid() != rho_for_convolution.grid() {
        return Err(MeshError::GridMismatch.into());
    }
    let solver = scalar_solver(model, rho, &SolverConfig::default())?;
    Ok(solver.assemble(&[rho.values()], &[rho_for_convolution.values()])?.remove(0))
}

/// `dρ_i/dt = -(F_{i+1/2} - F_{i-1/2}) / Δx`, summed over axes in 2D.
pub fn rhs_semidiscrete(model: &ModelSpec, rho: &Field) -> Result<Vec<f64>, SolverError> {
    let solver = scalar_solver(model, rho, &SolverConfig::default())?;
    Ok(solver.rhs(&[rho.values()])?.remove(0))
}

/// One implicit step; on a 2D grid this is the split step.
pub fn step_implicit(model: &ModelSpec, rho: &Field, dt: f64, config: &SolverConfig) -> Result<(Field, StepReport), SolverError> {
    let solver = scalar_solver(model, rho, config)?;
    let (mut out, report) = solver.step_implicit(&single(rho), dt)?;
    Ok((out.remove(0), report))
}

/// One forward-Euler (or SSP-RK2, per `config`) step.
pub fn step_explicit(model: &ModelSpec, rho: &Field, dt: f64, config: &SolverConfig) -> Result<(Field, StepReport), SolverError> {
    let solver = scalar_solver(model, rho, config)?;
    let rk2 = matches!(config.time_integrator, TimeIntegrator::ExplicitRk2);
    let (mut out, report) = solver.step_explicit(&single(rho), dt, rk2)?;
    Ok((out.remove(0), report))
}

/// Lie splitting on a 2D grid: an implicit sub-step along axis 0, then axis 1.
pub fn step_2d_split(model: &ModelSpec, rho: &Field, dt: f64, config: &SolverConfig) -> Result<(Field, StepReport), SolverError> {
    if rho.grid().dims() != 2 {
        return Err(SolverError::StateMismatch("dimensional splitting needs a 2D grid".into()));
    }
    step_implicit(model, rho, dt, config)
}

/// One step of a multi-species system with the configured integrator.
/// Every species report carries all masses, its own minimum and the
/// shared energy diagnostics.
pub fn system_step(
    system: &SystemSpec,
    state: &[Field],
    dt: f64,
    config: &SolverConfig,
) -> Result<(Vec<Field>, Vec<StepReport>), SolverError> {
    let grid = state.first().ok_or_else(|| SolverError::StateMismatch("empty state".into()))?.grid();
    let solver = Solver::new(system, grid, config.clone())?;
    let (out, report) = solver.step(state, dt)?;
    let reports = out
        .iter()
        .map(|f| StepReport {
            min_density: f.min(),
            ..report.clone()
        })
        .collect();
    Ok((out, reports))
}

/// Stable step for the explicit integrator; see [`Solver::adaptive_dt`].
pub fn adaptive_dt(model: &ModelSpec, rho: &Field, cfl: f64) -> Result<f64, SolverError> {
    let config = SolverConfig {
        cfl,
        time_integrator: TimeIntegrator::ExplicitEuler,
        ..SolverConfig::default()
    };
    let solver = scalar_solver(model, rho, &config)?;
    solver.adaptive_dt(&[rho.values()])
}

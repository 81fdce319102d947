//! Internal energies, external potentials, interaction kernels, the discrete
//! convolution and the discrete free energy.

mod convolution;
mod energy;
mod kernel;

pub use convolution::{convolve, convolve_direct, Convolution};
pub use energy::{
    free_energy, free_energy_system, interaction_energy_system, EnergyBreakdown, SystemOperator,
};
pub use kernel::KernelSpec;

use thiserror::Error;

use crate::mesh::{Grid, MeshError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("argument {0} is negative")]
    NegativeArgument(f64),
    #[error("U' is singular at s = {0} for linear diffusion")]
    SingularDerivative(f64),
    #[error("U' is not invertible for this internal energy")]
    NotInvertible,
    #[error("{0} lies outside the range of U'")]
    OutsideRange(f64),
    #[error("invalid internal energy: {0}")]
    InvalidInternal(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("kernel not admissible on this grid: {0}")]
    InadmissibleKernel(String),
    #[error("invalid mobility: {0}")]
    InvalidMobility(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("negative density {value} in cell {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Floor used inside `log` when evaluating `U'` of linear diffusion at an
/// empty cell. Upwind fluxes multiply by the donor density, so the limit
/// flux out of an empty cell is still zero.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InternalEnergySpec {
    None,
    /// `U(s) = s log s`.
    Linear,
    /// `U(s) = s^m / (m - 1)`.
    Power { m: f64 },
}

impl InternalEnergySpec {
    pub fn validate(&self) -> Result<(), EnergyError> {
        match *self {
            InternalEnergySpec::Power { m } if !(m > 0.0 && m.is_finite() && m != 1.0) => Err(
                EnergyError::InvalidInternal(format!("power exponent must be positive and != 1, got {m}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, InternalEnergySpec::None)
    }

    pub fn u_value(&self, s: f64) -> Result<f64, EnergyError> {
        if s < 0.0 {
            return Err(EnergyError::NegativeArgument(s));
        }
        Ok(self.value_unchecked(s))
    }

    pub fn u_prime(&self, s: f64) -> Result<f64, EnergyError> {
        if s < 0.0 {
            return Err(EnergyError::NegativeArgument(s));
        }
        match *self {
            InternalEnergySpec::Linear if s == 0.0 => Err(EnergyError::SingularDerivative(s)),
            InternalEnergySpec::Power { m } if s == 0.0 && m < 1.0 => Err(EnergyError::SingularDerivative(s)),
            _ => Ok(self.derivative(s)),
        }
    }

    /// Inverse of `U'`. For `m > 1` arguments at or below zero map to zero,
    /// which is the positive-part extension used by the fixed-point form of
    /// the Euler–Lagrange conditions.
    pub fn u_prime_inverse(&self, y: f64) -> Result<f64, EnergyError> {
        match *self {
            InternalEnergySpec::None => Err(EnergyError::NotInvertible),
            InternalEnergySpec::Linear => Ok((y - 1.0).exp()),
            InternalEnergySpec::Power { m } => {
                let t = y * (m - 1.0) / m;
                if m > 1.0 {
                    Ok(if t <= 0.0 { 0.0 } else { t.powf(1.0 / (m - 1.0)) })
                } else if t > 0.0 {
                    Ok(t.powf(1.0 / (m - 1.0)))
                } else {
                    Err(EnergyError::OutsideRange(y))
                }
            }
        }
    }

    /// `U(s)` with the continuous extension `U(0) = 0`; `s` must be ≥ 0.
    pub(crate) fn value_unchecked(&self, s: f64) -> f64 {
        match *self {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Linear => {
                if s > 0.0 {
                    s * s.ln()
                } else {
                    0.0
                }
            }
            InternalEnergySpec::Power { m } => s.powf(m) / (m - 1.0),
        }
    }

    /// `U'(s)` with `log` floored at [`LOG_FLOOR`] for linear diffusion.
    pub(crate) fn derivative(&self, s: f64) -> f64 {
        match *self {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Linear => 1.0 + s.max(LOG_FLOOR).ln(),
            InternalEnergySpec::Power { m } => {
                let base = if m < 1.0 { s.max(LOG_FLOOR) } else { s };
                m / (m - 1.0) * base.powf(m - 1.0)
            }
        }
    }

    /// `U''(s)`, evaluated at `max(s, floor)`.
    pub(crate) fn second_derivative(&self, s: f64, floor: f64) -> f64 {
        let s = s.max(floor);
        match *self {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Linear => 1.0 / s,
            InternalEnergySpec::Power { m } => m * s.powf(m - 2.0),
        }
    }

    /// Diffusion coefficient `s U''(s)`: 1 for linear, `m s^{m-1}` for power.
    pub fn diffusion_coefficient(&self, s: f64) -> f64 {
        match *self {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Linear => 1.0,
            InternalEnergySpec::Power { m } => m * s.max(0.0).powf(m - 1.0),
        }
    }

    /// Pressure `P(s) = s U'(s) - U(s)`.
    pub(crate) fn pressure(&self, s: f64) -> f64 {
        match *self {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Linear => s,
            InternalEnergySpec::Power { m } => s.powf(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `V(x) = coefficient · |x|^p`.
    Power { p: f64, coefficient: f64 },
    /// `V(x) = a|x|^4 - b|x|^2`.
    DoubleWell { a: f64, b: f64 },
    /// Cell values supplied directly (any sign).
    Table(Vec<f64>),
}

impl PotentialSpec {
    pub fn power(p: f64) -> Self {
        PotentialSpec::Power { p, coefficient: 1.0 }
    }

    pub fn harmonic() -> Self {
        PotentialSpec::Power {
            p: 2.0,
            coefficient: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        match self {
            PotentialSpec::Power { p, coefficient } if !(*p > 0.0 && coefficient.is_finite()) => Err(
                EnergyError::InvalidPotential(format!("power exponent must be positive, got {p}")),
            ),
            PotentialSpec::DoubleWell { a, b } if !(*a > 0.0 && b.is_finite()) => Err(
                EnergyError::InvalidPotential(format!("double well needs a > 0, got a = {a}")),
            ),
            PotentialSpec::Table(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(EnergyError::InvalidPotential("table holds non-finite values".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialSpec::Zero)
    }

    /// Analytic value at a point; `None` for tables.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match *self {
            PotentialSpec::Zero => Some(0.0),
            PotentialSpec::Power { p, coefficient } => Some(coefficient * r2.powf(0.5 * p)),
            PotentialSpec::DoubleWell { a, b } => Some(a * r2 * r2 - b * r2),
            PotentialSpec::Table(_) => None,
        }
    }

    /// Analytic gradient at a point; `None` for tables.
    pub fn gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let radial = match *self {
            PotentialSpec::Zero => 0.0,
            // d/dx c|x|^p = c p |x|^{p-2} x
            PotentialSpec::Power { p, coefficient } => {
                if r2 == 0.0 {
                    0.0
                } else {
                    coefficient * p * r2.powf(0.5 * p - 1.0)
                }
            }
            PotentialSpec::DoubleWell { a, b } => 4.0 * a * r2 - 2.0 * b,
            PotentialSpec::Table(_) => return None,
        };
        Some(x.iter().map(|v| radial * v).collect())
    }
}

/// `V` at the cell centres of `grid`.
pub fn potential_field(spec: &PotentialSpec, grid: &Grid) -> Result<Vec<f64>, EnergyError> {
    spec.validate()?;
    if let PotentialSpec::Table(values) = spec {
        if values.len() != grid.len() {
            return Err(EnergyError::InvalidPotential(format!(
                "table has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        return Ok(values.clone());
    }
    Ok((0..grid.len())
        .map(|i| {
            let x = grid.center(i);
            spec.value_at(&x[..grid.dims()]).unwrap_or(0.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilitySpec {
    Linear,
    /// `m(s) = max(0, s (1 - s / rho_max))`.
    Saturating { rho_max: f64 },
}

impl MobilitySpec {
    pub fn validate(&self) -> Result<(), EnergyError> {
        match *self {
            MobilitySpec::Saturating { rho_max } if !(rho_max > 0.0 && rho_max.is_finite()) => Err(
                EnergyError::InvalidMobility(format!("rho_max must be positive, got {rho_max}")),
            ),
            _ => Ok(()),
        }
    }

    /// Factor `f` with `m(s) = s f(s)`, clamped at zero.
    pub(crate) fn factor(&self, s: f64) -> f64 {
        match *self {
            MobilitySpec::Linear => 1.0,
            MobilitySpec::Saturating { rho_max } => (1.0 - s / rho_max).max(0.0),
        }
    }
}

pub fn mobility_value(spec: &MobilitySpec, s: f64) -> Result<f64, EnergyError> {
    if s < 0.0 {
        return Err(EnergyError::NegativeArgument(s));
    }
    spec.validate()?;
    Ok(s * spec.factor(s))
}

/// A single aggregation-diffusion equation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub internal: InternalEnergySpec,
    pub potential: PotentialSpec,
    pub kernel: KernelSpec,
    pub mobility: MobilitySpec,
}

impl ModelSpec {
    pub fn new(internal: InternalEnergySpec, potential: PotentialSpec, kernel: KernelSpec) -> Self {
        ModelSpec {
            internal,
            potential,
            kernel,
            mobility: MobilitySpec::Linear,
        }
    }

    pub fn heat() -> Self {
        ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::Zero, KernelSpec::Zero)
    }

    pub fn with_mobility(mut self, mobility: MobilitySpec) -> Self {
        self.mobility = mobility;
        self
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        self.internal.validate()?;
        self.potential.validate()?;
        self.kernel.validate()?;
        self.mobility.validate()
    }

    /// The same model with the interaction kernel scaled by `factor`.
    pub fn with_kernel_scaled(&self, factor: f64) -> Self {
        ModelSpec {
            kernel: self.kernel.scaled(factor),
            ..self.clone()
        }
    }

    /// Views the model as a one-species system.
    pub fn as_system(&self, mass: f64) -> SystemSpec {
        SystemSpec {
            species: vec![SpeciesSpec {
                internal: self.internal,
                potential: self.potential.clone(),
                mobility: self.mobility,
                mass,
            }],
            coupling: vec![vec![self.kernel.clone()]],
            epsilon: 0.0,
        }
    }
}

/// Per-species data of a system: a model without its interaction kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSpec {
    pub internal: InternalEnergySpec,
    pub potential: PotentialSpec,
    pub mobility: MobilitySpec,
    pub mass: f64,
}

impl SpeciesSpec {
    pub fn inert(mass: f64) -> Self {
        SpeciesSpec {
            internal: InternalEnergySpec::None,
            potential: PotentialSpec::Zero,
            mobility: MobilitySpec::Linear,
            mass,
        }
    }
}

/// Multi-species system: `coupling[a][b]` is the kernel through which
/// species `b` acts on species `a`; the two cross entries are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub species: Vec<SpeciesSpec>,
    pub coupling: Vec<Vec<KernelSpec>>,
    pub epsilon: f64,
}

impl SystemSpec {
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let n = self.species.len();
        if n == 0 {
            return Err(EnergyError::InvalidSystem("at least one species is required".into()));
        }
        if self.coupling.len() != n || self.coupling.iter().any(|row| row.len() != n) {
            return Err(EnergyError::InvalidSystem(format!("coupling matrix must be {n}x{n}")));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(EnergyError::InvalidSystem(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        for s in &self.species {
            s.internal.validate()?;
            s.potential.validate()?;
            s.mobility.validate()?;
            if !(s.mass > 0.0 && s.mass.is_finite()) {
                return Err(EnergyError::InvalidSystem(format!("species mass must be positive, got {}", s.mass)));
            }
        }
        for row in &self.coupling {
            for k in row {
                k.validate()?;
            }
        }
        Ok(())
    }

    /// True when `W_ab = W_ba` for every pair, so the system is a gradient
    /// flow of its free energy.
    pub fn is_symmetric(&self) -> bool {
        let n = self.species.len();
        (0..n).all(|a| (0..n).all(|b| self.coupling[a][b] == self.coupling[b][a]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Boundary;

    #[test]
    fn u_examples() {
        let lin = InternalEnergySpec::Linear;
        assert_eq!(lin.u_value(1.0).unwrap(), 0.0);
        assert_eq!(lin.u_prime(1.0).unwrap(), 1.0);
        assert_eq!(lin.u_prime_inverse(1.0).unwrap(), 1.0);
        assert_eq!(lin.u_value(0.0).unwrap(), 0.0);
        let pm = InternalEnergySpec::Power { m: 2.0 };
        assert_eq!(pm.u_value(3.0).unwrap(), 9.0);
        assert_eq!(pm.u_prime(3.0).unwrap(), 6.0);
        assert_eq!(pm.u_value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn u_errors() {
        let lin = InternalEnergySpec::Linear;
        assert_eq!(lin.u_value(-1.0), Err(EnergyError::NegativeArgument(-1.0)));
        assert!(matches!(lin.u_prime(0.0), Err(EnergyError::SingularDerivative(_))));
        assert_eq!(InternalEnergySpec::None.u_prime_inverse(0.3), Err(EnergyError::NotInvertible));
        assert!(InternalEnergySpec::Power { m: 1.0 }.validate().is_err());
        let fast = InternalEnergySpec::Power { m: 0.5 };
        assert!(matches!(fast.u_prime_inverse(1.0), Err(EnergyError::OutsideRange(_))));
    }

    #[test]
    fn u_prime_inverse_round_trip_on_log_grid() {
        for spec in [
            InternalEnergySpec::Linear,
            InternalEnergySpec::Power { m: 2.0 },
            InternalEnergySpec::Power { m: 1.5 },
            InternalEnergySpec::Power { m: 0.6 },
            InternalEnergySpec::Power { m: 3.7 },
        ] {
            for j in 0..=240 {
                let s = 10f64.powf(-6.0 + 12.0 * j as f64 / 240.0);
                let back = spec.u_prime_inverse(spec.u_prime(s).unwrap()).unwrap();
                assert!(((back - s) / s).abs() <= 1e-10, "{spec:?} s={s} back={back}");
            }
        }
    }

    #[test]
    fn potential_examples() {
        let g = Grid::line(2, 0.0, 1.0, Boundary::NoFlux);
        assert!(g.is_err());
        let g = Grid::line(4, 0.0, 4.0, Boundary::NoFlux).unwrap();
        assert_eq!(potential_field(&PotentialSpec::Zero, &g).unwrap(), vec![0.0; 4]);
        let v = potential_field(&PotentialSpec::power(2.0), &g).unwrap();
        assert_eq!(v[0], 0.25);
        let dw = potential_field(&PotentialSpec::DoubleWell { a: 1.0, b: 2.0 }, &g).unwrap();
        // centre 0.5 and 1.5; check the formula at x = 1 directly
        assert_eq!(PotentialSpec::DoubleWell { a: 1.0, b: 2.0 }.value_at(&[1.0]), Some(-1.0));
        assert_eq!(dw[0], 0.0625 - 0.5);
        assert!(potential_field(&PotentialSpec::Table(vec![1.0; 3]), &g).is_err());
    }

    #[test]
    fn potential_gradient_matches_difference_quotient() {
        for spec in [
            PotentialSpec::power(2.0),
            PotentialSpec::Power { p: 3.0, coefficient: 0.7 },
            PotentialSpec::DoubleWell { a: 0.5, b: 1.5 },
        ] {
            let x = [0.7, -0.4];
            let g = spec.gradient_at(&x).unwrap();
            for a in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (spec.value_at(&xp).unwrap() - spec.value_at(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[a]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn mobility_examples() {
        assert_eq!(mobility_value(&MobilitySpec::Linear, 2.0).unwrap(), 2.0);
        let sat1 = MobilitySpec::Saturating { rho_max: 1.0 };
        assert_eq!(mobility_value(&sat1, 1.0).unwrap(), 0.0);
        assert_eq!(mobility_value(&sat1, 1.5).unwrap(), 0.0);
        let sat2 = MobilitySpec::Saturating { rho_max: 2.0 };
        assert_eq!(mobility_value(&sat2, 1.0).unwrap(), 0.5);
        assert!(mobility_value(&sat2, -1.0).is_err());
        assert!(MobilitySpec::Saturating { rho_max: 0.0 }.validate().is_err());
    }

    #[test]
    fn system_validation() {
        let mut sys = ModelSpec::heat().as_system(1.0);
        assert!(sys.validate().is_ok());
        assert!(sys.is_symmetric());
        sys.epsilon = -1.0;
        assert!(sys.validate().is_err());
        sys.epsilon = 0.0;
        sys.coupling.push(vec![KernelSpec::Zero]);
        assert!(sys.validate().is_err());
    }
}

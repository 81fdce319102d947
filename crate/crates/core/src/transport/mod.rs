//! One-dimensional optimal transport in quantile coordinates: distances,
//! displacement interpolation and minimising-movement (JKO) steps; and the
//! interacting particle system behind the mean-field models.

mod jko;
mod particles;

pub use jko::{jko_flow, jko_step_1d, jko_step_quantiles, quantile_energy, JkoStep};
pub use particles::{
    empirical_density, meanfield_gap, pde_solution, sample_ensemble, simulate_particles, trajectory_csv, write_trajectory_csv,
    Deposit, GapReport, ParticleEnsemble,
};

use thiserror::Error;

use crate::energetics::EnergyError;
use crate::mesh::{Field, Grid, MeshError};
use crate::solver::SolverError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("density has zero mass")]
    ZeroMass,
    #[error("quantile counts differ: {0} vs {1}")]
    MismatchedCount(usize, usize),
    #[error("interpolation parameter {0} outside [0, 1]")]
    OutsideUnitInterval(f64),
    #[error("operation needs a 1D grid")]
    NotOneDimensional,
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Inverse distribution function sampled at the levels `(j + 1/2)/M`,
/// of the density normalised to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRep {
    pub quantile_values: Vec<f64>,
    pub total_mass: f64,
}

impl QuantileRep {
    pub fn len(&self) -> usize {
        self.quantile_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantile_values.is_empty()
    }

    /// Empirical quantiles of equally weighted samples.
    pub fn from_samples(samples: &[f64], total_mass: f64) -> Result<Self, TransportError> {
        if samples.is_empty() {
            return Err(TransportError::Invalid("no samples".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::Invalid("non-finite sample".into()));
        }
        let mut q = samples.to_vec();
        q.sort_by(f64::total_cmp);
        Ok(QuantileRep {
            quantile_values: q,
            total_mass,
        })
    }

    /// Density on a 1D grid: the `j`-th quantile carries `1/M` of the mass,
    /// spread uniformly between the midpoints to its neighbours (point
    /// masses go to the cell containing them). Edges are clamped to the
    /// grid.
    pub fn to_field(&self, grid: &Grid) -> Result<Field, TransportError> {
        if grid.dims() != 1 {
            return Err(TransportError::NotOneDimensional);
        }
        let axis = grid.axis(0);
        let (lo, hi, dx, n) = (axis.lo, axis.hi, axis.dx, axis.cells);
        let q = &self.quantile_values;
        let m = q.len();
        let piece = self.total_mass / m as f64;
        let edge = |j: usize| -> f64 {
            let e = if m == 1 {
                q[0]
            } else if j == 0 {
                q[0] - 0.5 * (q[1] - q[0])
            } else if j == m {
                q[m - 1] + 0.5 * (q[m - 1] - q[m - 2])
            } else {
                0.5 * (q[j - 1] + q[j])
            };
            e.clamp(lo, hi)
        };
        let cell_of = |x: f64| (((x - lo) / dx).floor().max(0.0) as usize).min(n - 1);
        let mut mass = vec![0.0; n];
        for j in 0..m {
            let (a, b) = (edge(j), edge(j + 1));
            if b - a <= 0.0 {
                mass[cell_of(a)] += piece;
                continue;
            }
            let density = piece / (b - a);
            let (ca, cb) = (cell_of(a), cell_of(b));
            for (c, slot) in mass.iter_mut().enumerate().take(cb + 1).skip(ca) {
                let left = (lo + c as f64 * dx).max(a);
                let right = (lo + (c + 1) as f64 * dx).min(b);
                if right > left {
                    *slot += density * (right - left);
                }
            }
        }
        Ok(Field::new(grid.clone(), mass.into_iter().map(|v| v / dx).collect())?)
    }
}

/// Quantiles of a 1D density by inversion of its piecewise-linear
/// distribution function.
pub fn to_quantiles(rho: &Field, m: usize) -> Result<QuantileRep, TransportError> {
    let grid = rho.grid();
    if grid.dims() != 1 {
        return Err(TransportError::NotOneDimensional);
    }
    if m == 0 {
        return Err(TransportError::Invalid("quantile count must be positive".into()));
    }
    let total = rho.mass();
    if !(total > 0.0) {
        return Err(TransportError::ZeroMass);
    }
    let axis = grid.axis(0);
    let dx = axis.dx;
    let vals = rho.values();
    let mut cdf = Vec::with_capacity(vals.len() + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    for v in vals {
        acc += v * dx;
        cdf.push(acc);
    }
    let scale = acc;
    let mut out = Vec::with_capacity(m);
    let mut cell = 0;
    for j in 0..m {
        let level = (j as f64 + 0.5) / m as f64 * scale;
        while cell + 1 < vals.len() && (cdf[cell + 1] < level || vals[cell] == 0.0) {
            cell += 1;
        }
        let width = cdf[cell + 1] - cdf[cell];
        let frac = if width > 0.0 {
            ((level - cdf[cell]) / width).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(axis.lo + (cell as f64 + frac) * dx);
    }
    Ok(QuantileRep {
        quantile_values: out,
        total_mass: total,
    })
}

/// `d₂` between unit-normalised densities, `sqrt((1/M) Σ (a_j - b_j)²)`.
pub fn w2_1d(a: &QuantileRep, b: &QuantileRep) -> Result<f64, TransportError> {
    if a.len() != b.len() {
        return Err(TransportError::MismatchedCount(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a
        .quantile_values
        .iter()
        .zip(&b.quantile_values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Displacement interpolation `(1-t) a + t b`.
pub fn geodesic_1d(a: &QuantileRep, b: &QuantileRep, t: f64) -> Result<QuantileRep, TransportError> {
    if a.len() != b.len() {
        return Err(TransportError::MismatchedCount(a.len(), b.len()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(TransportError::OutsideUnitInterval(t));
    }
    Ok(QuantileRep {
        quantile_values: a
            .quantile_values
            .iter()
            .zip(&b.quantile_values)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect(),
        total_mass: (1.0 - t) * a.total_mass + t * b.total_mass,
    })
}

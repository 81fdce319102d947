//! Steady states and minimisers, linear stability of constant states,
//! regime classification of homogeneous models and functional-inequality
//! checks.

mod inequalities;
mod regime;
mod stability;

pub use inequalities::{
    candidate_family, check_hls_variant, check_rhls, concentration_indicator, estimate_chi_c, estimate_hls_constant,
    estimate_rhls_constant, rhls_exponent, radial_monotonicity_check, Concentration, InequalityCheck,
};
pub use regime::{classify_regime, BoundedBelow, Regime, RegimeReport, Zone};
pub use stability::{stability_sweep, sweep_csv, write_sweep_csv, StabilityReport};

use thiserror::Error;

use crate::energetics::{EnergyError, InternalEnergySpec, ModelSpec, SystemOperator};
use crate::mesh::{pairwise_sum, Field, Grid, MeshError};
use crate::solver::SolverError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("density has empty support")]
    EmptySupport,
    #[error("no normalizable minimiser: no Lagrange constant yields mass {0}")]
    NoNormalizableMinimiser(f64),
    #[error("U' is not invertible for this model")]
    NotInvertible,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub density: Field,
    /// `(component id, C)`, components numbered in order of their first cell.
    pub lagrange_constants: Vec<(usize, f64)>,
    /// `sup |ξ - C_component|` over support cells.
    pub residual_sup: f64,
    /// `max(0, min C - ξ)` over cells outside the support.
    pub off_support_violation: f64,
    pub mass: f64,
    pub converged: bool,
}

/// Default support threshold, `1e-12 · max ρ`.
pub fn default_support_threshold(rho: &Field) -> f64 {
    1e-12 * rho.max()
}

/// Neighbours of `flat` across cell faces.
fn neighbours(grid: &Grid, flat: usize) -> Vec<usize> {
    let idx = grid.unravel(flat);
    let mut out = Vec::with_capacity(4);
    for a in 0..grid.dims() {
        let n = grid.axis(a).cells;
        for step in [n - 1, 1] {
            let next = idx[a] + step;
            if !grid.is_periodic() && (next < n) != (step == 1) {
                continue;
            }
            let mut j = idx;
            j[a] = next % n;
            out.push(grid.ravel(j));
        }
    }
    out
}

/// Labels of the connected components of `{ρ > threshold}`; `None` off
/// the support.
pub(crate) fn components(rho: &Field, threshold: f64) -> (Vec<Option<usize>>, usize) {
    let grid = rho.grid();
    let mut label = vec![None; rho.len()];
    let mut count = 0;
    for start in 0..rho.len() {
        if label[start].is_some() || rho.values()[start] <= threshold {
            continue;
        }
        label[start] = Some(count);
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in neighbours(grid, i) {
                if label[j].is_none() && rho.values()[j] > threshold {
                    label[j] = Some(count);
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// `V + W∗ρ` at every cell.
fn external(op: &SystemOperator, rho: &Field) -> Vec<f64> {
    let conv = op.interaction_potentials(&[rho.values()]).remove(0);
    op.potential(0).iter().zip(conv).map(|(v, c)| v + c).collect()
}

/// Lagrange constants and residual of the Euler–Lagrange conditions
/// `U'(ρ) + V + W∗ρ = C_i` on each component of the support.
pub fn euler_lagrange_residual(
    model: &ModelSpec,
    rho: &Field,
    support_threshold: f64,
) -> Result<StationaryResult, StationaryError> {
    let op = SystemOperator::from_model(model, rho.grid())?;
    let (label, count) = components(rho, support_threshold);
    if count == 0 {
        return Err(StationaryError::EmptySupport);
    }
    let psi = external(&op, rho);
    let xi: Vec<f64> = rho
        .values()
        .iter()
        .zip(&psi)
        .map(|(&r, p)| model.internal.derivative(r) + p)
        .collect();

    // weighted means taken relative to the first cell of each component,
    // so a constant ξ gives its value back exactly
    let mut reference = vec![None; count];
    let mut weighted = vec![Vec::new(); count];
    let mut weights = vec![Vec::new(); count];
    for (i, l) in label.iter().enumerate() {
        if let Some(c) = *l {
            let r = *reference[c].get_or_insert(xi[i]);
            weighted[c].push(rho.values()[i] * (xi[i] - r));
            weights[c].push(rho.values()[i]);
        }
    }
    let constants: Vec<f64> = (0..count)
        .map(|c| reference[c].unwrap_or(0.0) + pairwise_sum(&weighted[c]) / pairwise_sum(&weights[c]))
        .collect();
    let c_min = constants.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut residual = 0.0f64;
    let mut violation = 0.0f64;
    let mut scale = 1.0f64;
    for (i, l) in label.iter().enumerate() {
        match *l {
            Some(c) => {
                residual = residual.max((xi[i] - constants[c]).abs());
                scale = scale.max(xi[i].abs());
            }
            None => violation = violation.max(c_min - xi[i]),
        }
    }
    Ok(StationaryResult {
        density: rho.clone(),
        lagrange_constants: constants.into_iter().enumerate().collect(),
        residual_sup: residual,
        off_support_violation: violation,
        mass: rho.mass(),
        converged: residual <= 1e-6 * scale,
    })
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 100_000;

/// `max{0, (U')^{-1}(C - ψ)}` cellwise; `None` where the inverse is
/// unbounded (fast diffusion with `C - ψ >= 0`).
fn candidate(internal: &InternalEnergySpec, psi: &[f64], c: f64) -> Option<Vec<f64>> {
    psi.iter()
        .map(|p| internal.u_prime_inverse(c - p).ok().filter(|v| v.is_finite()))
        .collect()
}

fn candidate_mass(internal: &InternalEnergySpec, psi: &[f64], c: f64, vol: f64) -> f64 {
    match candidate(internal, psi, c) {
        Some(v) => pairwise_sum(&v) * vol,
        None => f64::INFINITY,
    }
}

/// The constant `C` for which the candidate density has `target` mass,
/// by bisection on a geometrically expanded bracket.
fn solve_constant(internal: &InternalEnergySpec, psi: &[f64], target: f64, vol: f64) -> Result<f64, StationaryError> {
    let fail = || StationaryError::NoNormalizableMinimiser(target);
    let lo0 = psi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass = |c: f64| candidate_mass(internal, psi, c, vol);
    let (mut lo, mut hi) = (lo0 - 10.0, hi0 + 10.0);
    let mut width = 10.0;
    while mass(lo) > target {
        width *= 2.0;
        lo = lo0 - width;
        if !lo.is_finite() || width > 1e12 {
            return Err(fail());
        }
    }
    let mut width = 10.0;
    while mass(hi) < target {
        width *= 2.0;
        hi = hi0 + width;
        if !hi.is_finite() || width > 1e12 {
            return Err(fail());
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // the upper end has finite mass unless the bracket collapsed onto a pole
    if mass(hi).is_finite() {
        Ok(hi)
    } else if mass(lo) > 0.0 {
        Ok(lo)
    } else {
        Err(fail())
    }
}

/// Damped fixed-point iteration `ρ ← (1-θ)ρ + θ max{0, (U')^{-1}(C - V - W∗ρ)}`,
/// with `C` fixed each iterate by the mass constraint.
pub fn fixed_point_minimiser(
    model: &ModelSpec,
    target_mass: f64,
    initial: &Field,
) -> Result<StationaryResult, StationaryError> {
    if matches!(model.internal, InternalEnergySpec::None) {
        return Err(StationaryError::NotInvertible);
    }
    if !(target_mass > 0.0 && target_mass.is_finite()) {
        return Err(StationaryError::NoNormalizableMinimiser(target_mass));
    }
    let grid = initial.grid();
    let vol = grid.cell_volume();
    let op = SystemOperator::from_model(model, grid)?;
    let mut rho = initial.values().to_vec();
    let mut theta = 0.5;
    let mut prev_diff = f64::INFINITY;
    let mut converged = false;
    let mut last = rho.clone();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let field = Field::new(grid.clone(), rho.clone())?;
        let psi = external(&op, &field);
        let c = solve_constant(&model.internal, &psi, target_mass, vol)?;
        let mut cand = candidate(&model.internal, &psi, c).ok_or(StationaryError::NoNormalizableMinimiser(target_mass))?;
        let m = pairwise_sum(&cand) * vol;
        if !(m > 0.0) {
            return Err(StationaryError::NoNormalizableMinimiser(target_mass));
        }
        let fix = target_mass / m;
        cand.iter_mut().for_each(|v| *v *= fix);

        let mut diff = 0.0f64;
        for (r, c) in rho.iter_mut().zip(&cand) {
            let next = (1.0 - theta) * *r + theta * c;
            diff = diff.max((next - *r).abs());
            *r = next;
        }
        last = cand;
        if diff <= FIXED_POINT_TOL {
            converged = true;
            break;
        }
        if diff > prev_diff && theta > 1e-3 {
            theta *= 0.5;
        }
        prev_diff = diff;
    }
    // the undamped image of the last iterate satisfies the Euler–Lagrange
    // form up to W∗(difference), far tighter than the damped iterate
    let density = Field::new(grid.clone(), last)?;
    let threshold = default_support_threshold(&density);
    let mut result = euler_lagrange_residual(model, &density, threshold)?;
    result.converged = converged;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energetics::{KernelSpec, PotentialSpec};
    use crate::mesh::Boundary;

    fn fokker_planck() -> ModelSpec {
        ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::harmonic(), KernelSpec::Zero)
    }

    #[test]
    fn discrete_gibbs_state_has_small_residual() {
        let g = Grid::line(240, -6.0, 6.0, Boundary::NoFlux).unwrap();
        let rho = Field::from_fn(&g, |x| (0.3 - 1.0 - 0.5 * x[0] * x[0]).exp()).unwrap();
        let r = euler_lagrange_residual(&fokker_planck(), &rho, default_support_threshold(&rho)).unwrap();
        assert_eq!(r.lagrange_constants.len(), 1);
        assert!(r.residual_sup <= 1e-8, "{}", r.residual_sup);
        assert!((r.lagrange_constants[0].1 - 0.3).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn uniform_periodic_state() {
        let g = Grid::line(32, 0.0, 1.0, Boundary::Periodic).unwrap();
        let rho = Field::constant(&g, 2.0).unwrap();
        let r = euler_lagrange_residual(&ModelSpec::heat(), &rho, 0.0).unwrap();
        assert_eq!(r.lagrange_constants.len(), 1);
        assert_eq!(r.residual_sup, 0.0);
        assert_eq!(r.off_support_violation, 0.0);
    }

    #[test]
    fn glued_bumps_are_steady_but_not_minimising() {
        // m = 2, double well with minima at ±1; each bump is (C_i - V)_+ / 2
        let model = ModelSpec::new(
            InternalEnergySpec::Power { m: 2.0 },
            PotentialSpec::DoubleWell { a: 1.0, b: 2.0 },
            KernelSpec::Zero,
        );
        let g = Grid::line(400, -2.0, 2.0, Boundary::NoFlux).unwrap();
        let rho = Field::from_fn(&g, |x| {
            let v = x[0].powi(4) - 2.0 * x[0] * x[0];
            let c = if x[0] < 0.0 { -0.6 } else { -0.9 };
            (c - v).max(0.0) / 2.0
        })
        .unwrap();
        let r = euler_lagrange_residual(&model, &rho, 0.0).unwrap();
        assert_eq!(r.lagrange_constants.len(), 2);
        assert!(r.residual_sup < 1e-12);
        let c0 = r.lagrange_constants[0].1;
        let c1 = r.lagrange_constants[1].1;
        assert!((c0 + 0.6).abs() < 1e-12 && (c1 + 0.9).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn empty_support_is_an_error() {
        let g = Grid::line(8, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let err = euler_lagrange_residual(&ModelSpec::heat(), &Field::zeros(&g), 0.0);
        assert_eq!(err, Err(StationaryError::EmptySupport));
    }

    #[test]
    fn components_wrap_on_periodic_grids() {
        let g = Grid::line(8, 0.0, 1.0, Boundary::Periodic).unwrap();
        let f = Field::new(g.clone(), vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(components(&f, 0.0).1, 2);
        let g = Grid::line(8, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let f = Field::new(g, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(components(&f, 0.0).1, 3);
        let g = Grid::square(4, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        v[5] = 1.0;
        assert_eq!(components(&Field::new(g, v).unwrap(), 0.0).1, 2);
    }

    #[test]
    fn gaussian_minimiser() {
        let g = Grid::line(240, -6.0, 6.0, Boundary::NoFlux).unwrap();
        let init = Field::constant(&g, 1.0 / 12.0).unwrap();
        let r = fixed_point_minimiser(&fokker_planck(), 1.0, &init).unwrap();
        assert!(r.converged);
        // grid projection of the Gaussian, normalised on the grid
        let exact = Field::from_fn(&g, |x| (-0.5 * x[0] * x[0]).exp()).unwrap().with_mass(1.0);
        assert!(r.density.l1_distance(&exact).unwrap() < 1e-6);
        let cont = Field::from_fn(&g, |x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
        assert!(r.density.l1_distance(&cont).unwrap() < 1e-6);
        assert!(r.residual_sup < 1e-8);
    }

    #[test]
    fn porous_medium_minimiser() {
        let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::harmonic(), KernelSpec::Zero);
        let g = Grid::line(400, -4.0, 4.0, Boundary::NoFlux).unwrap();
        let init = Field::constant(&g, 0.125).unwrap();
        let r = fixed_point_minimiser(&model, 1.0, &init).unwrap();
        assert!(r.converged);
        let c = r.lagrange_constants[0].1;
        let expect = Field::from_fn(&g, |x| (c - 0.5 * x[0] * x[0]).max(0.0) / 2.0).unwrap();
        assert!(r.density.l1_distance(&expect).unwrap() < 1e-9);
        // continuum constant: (2C)^{3/2}/3 = 1
        assert!((c - 0.5 * 3f64.powf(2.0 / 3.0)).abs() < 1e-3);
    }

    #[test]
    fn free_box_gives_uniform_density() {
        let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, KernelSpec::Zero);
        let g = Grid::line(50, 0.0, 2.0, Boundary::NoFlux).unwrap();
        let init = Field::from_fn(&g, |x| 1.0 + x[0]).unwrap();
        let r = fixed_point_minimiser(&model, 3.0, &init).unwrap();
        assert!(r.converged);
        for v in r.density.values() {
            assert!((v - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_with_attraction_is_stationary() {
        let model = ModelSpec::new(
            InternalEnergySpec::Power { m: 2.0 },
            PotentialSpec::Zero,
            KernelSpec::Gaussian { amplitude: 1.0, width: 0.5 },
        );
        let g = Grid::line(200, -4.0, 4.0, Boundary::NoFlux).unwrap();
        let init = Field::from_fn(&g, |x| (-x[0] * x[0]).exp()).unwrap().with_mass(1.0);
        let r = fixed_point_minimiser(&model, 1.0, &init).unwrap();
        assert!(r.converged);
        assert_eq!(r.lagrange_constants.len(), 1);
        assert!(r.residual_sup < 1e-6);
        assert!((r.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_free_model_is_rejected() {
        let model = ModelSpec::new(InternalEnergySpec::None, PotentialSpec::harmonic(), KernelSpec::Zero);
        let g = Grid::line(8, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let init = Field::constant(&g, 0.5).unwrap();
        assert_eq!(fixed_point_minimiser(&model, 1.0, &init), Err(StationaryError::NotInvertible));
        assert!(matches!(
            fixed_point_minimiser(&ModelSpec::heat(), 0.0, &init),
            Err(StationaryError::NoNormalizableMinimiser(_))
        ));
    }
}

//! Linear stability of constant states under a scaled interaction.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::StationaryError;
use crate::energetics::ModelSpec;
use crate::mesh::{Grid, MeshError};
use crate::solver::{Solver, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub chi: f64,
    pub leading_eigenvalue: f64,
    /// Wavenumber of the most unstable Fourier mode, when the leading
    /// eigenvalue is positive.
    pub unstable_mode_index: Option<usize>,
}

/// Forward-difference Jacobian of the semi-discrete right-hand side at the
/// uniform state. The exact Jacobian annihilates constants on both sides
/// (mass conservation, translation invariance of the constant state), so
/// the row and column means are removed to strip round-off from the
/// mass mode.
fn jacobian(model: &ModelSpec, grid: &Grid, level: f64) -> Result<DMatrix<f64>, StationaryError> {
    let n = grid.len();
    let solver = Solver::for_model(model, grid, level * grid.volume(), SolverConfig::default())?;
    let base_state = vec![level; n];
    let base = solver.rhs(&[&base_state])?.remove(0);
    let h = 1e-7 * level.max(1.0);
    let mut j = DMatrix::zeros(n, n);
    let mut state = base_state.clone();
    for col in 0..n {
        state[col] = level + h;
        let out = solver.rhs(&[&state])?.remove(0);
        state[col] = level;
        for row in 0..n {
            j[(row, col)] = (out[row] - base[row]) / h;
        }
    }
    for col in 0..n {
        let mean = j.column(col).sum() / n as f64;
        j.column_mut(col).add_scalar_mut(-mean);
    }
    for row in 0..n {
        let mean = j.row(row).sum() / n as f64;
        j.row_mut(row).add_scalar_mut(-mean);
    }
    Ok(j)
}

/// Wavenumber `k ≥ 1` whose Fourier mode has the largest Rayleigh quotient.
fn dominant_mode(j: &DMatrix<f64>) -> usize {
    let n = j.nrows();
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=n / 2 {
        for phase in [0.0, 0.5 * PI] {
            let v: Vec<f64> = (0..n)
                .map(|i| (2.0 * PI * (k * i) as f64 / n as f64 + phase).cos())
                .collect();
            let norm: f64 = v.iter().map(|x| x * x).sum();
            if norm < 1e-9 {
                continue;
            }
            let jv = j * nalgebra::DVector::from_column_slice(&v);
            let q: f64 = v.iter().zip(jv.iter()).map(|(a, b)| a * b).sum::<f64>() / norm;
            if q > best.1 {
                best = (k, q);
            }
        }
    }
    best.0
}

fn analyse(model: &ModelSpec, grid: &Grid, level: f64, chi: f64) -> Result<StabilityReport, StationaryError> {
    let scaled = if chi == 0.0 {
        ModelSpec {
            kernel: crate::energetics::KernelSpec::Zero,
            ..model.clone()
        }
    } else {
        model.with_kernel_scaled(chi)
    };
    let j = jacobian(&scaled, grid, level)?;
    let scale = j.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let leading = j
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let unstable = leading > 1e-9 * scale.max(1.0);
    Ok(StabilityReport {
        chi,
        leading_eigenvalue: leading,
        unstable_mode_index: unstable.then(|| dominant_mode(&j)),
    })
}

/// Leading eigenvalue of the linearisation at the constant state of mass
/// `constant_mass`, for the model with its kernel scaled by each `χ`.
/// Reports come back in the order of `chis`.
pub fn stability_sweep(
    model: &ModelSpec,
    constant_mass: f64,
    grid: &Grid,
    chis: &[f64],
) -> Result<Vec<StabilityReport>, StationaryError> {
    if !grid.is_periodic() {
        return Err(StationaryError::InvalidParameters("stability sweeps need a periodic grid".into()));
    }
    if grid.dims() != 1 {
        return Err(StationaryError::InvalidParameters("stability sweeps run on 1D grids".into()));
    }
    if !(constant_mass > 0.0 && constant_mass.is_finite()) {
        return Err(StationaryError::InvalidParameters(format!(
            "constant mass must be positive, got {constant_mass}"
        )));
    }
    model.validate()?;
    let level = constant_mass / grid.volume();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(chis.len().max(1));
    let chunk = chis.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = chis
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&c| analyse(model, grid, level, c)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("stability worker panicked"))
            .collect()
    })
}

/// CSV text with columns `chi,leading_eigenvalue,unstable_mode_index`.
pub fn sweep_csv(reports: &[StabilityReport]) -> String {
    let mut out = String::from("chi,leading_eigenvalue,unstable_mode_index\n");
    for r in reports {
        let mode = r.unstable_mode_index.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.chi, r.leading_eigenvalue, mode);
    }
    out
}

pub fn write_sweep_csv(reports: &[StabilityReport], path: &Path) -> Result<(), MeshError> {
    crate::mesh::atomic_write(path, sweep_csv(reports).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energetics::{InternalEnergySpec, KernelSpec, PotentialSpec};
    use crate::mesh::Boundary;

    fn grid() -> Grid {
        Grid::line(64, 0.0, 1.0, Boundary::Periodic).unwrap()
    }

    #[test]
    fn pure_diffusion_is_stable() {
        let model = ModelSpec::new(
            InternalEnergySpec::Linear,
            PotentialSpec::Zero,
            KernelSpec::Gaussian { amplitude: 1.0, width: 0.05 },
        );
        let r = stability_sweep(&model, 1.0, &grid(), &[0.0]).unwrap();
        assert!(r[0].leading_eigenvalue.abs() <= 1e-8, "{}", r[0].leading_eigenvalue);
        assert_eq!(r[0].unstable_mode_index, None);
    }

    #[test]
    fn zero_kernel_is_stable_for_every_chi() {
        let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, KernelSpec::Zero);
        for r in stability_sweep(&model, 1.0, &grid(), &[0.0, 1.0, 10.0, 100.0]).unwrap() {
            assert!(r.leading_eigenvalue <= 1e-8);
            assert_eq!(r.unstable_mode_index, None);
        }
    }

    #[test]
    fn strong_attraction_destabilises() {
        let model = ModelSpec::new(
            InternalEnergySpec::Linear,
            PotentialSpec::Zero,
            KernelSpec::Gaussian { amplitude: 1.0, width: 0.05 },
        );
        let chis = [0.0, 5.0, 50.0, 500.0];
        let r = stability_sweep(&model, 1.0, &grid(), &chis).unwrap();
        assert_eq!(r.iter().map(|x| x.chi).collect::<Vec<_>>(), chis);
        let last = &r[3];
        assert!(last.leading_eigenvalue > 0.0);
        let k = last.unstable_mode_index.unwrap();
        assert!(k >= 1);
        // dense oracle: the leading eigenvalue equals the largest Fourier
        // Rayleigh quotient, since the linearisation is circulant
        let j = jacobian(&model.with_kernel_scaled(500.0), &grid(), 1.0).unwrap();
        let n = 64;
        let v: Vec<f64> = (0..n).map(|i| (2.0 * PI * (k * i) as f64 / n as f64).cos()).collect();
        let jv = &j * nalgebra::DVector::from_column_slice(&v);
        let q: f64 = v.iter().zip(jv.iter()).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
        assert!((q - last.leading_eigenvalue).abs() < 1e-6 * last.leading_eigenvalue.abs().max(1.0));
        // monotone crossing: stable at 0, unstable at the top
        assert!(r[0].leading_eigenvalue <= 1e-8);
    }

    #[test]
    fn continuum_growth_rate_of_the_first_mode() {
        // linear diffusion + W: growth of mode k is -(2πk)²(1 + ρ̄ Ŵ(k)),
        // compared loosely because of the upwind discretisation
        let model = ModelSpec::new(
            InternalEnergySpec::Linear,
            PotentialSpec::Zero,
            KernelSpec::Gaussian { amplitude: 1.0, width: 0.1 },
        );
        let g = Grid::line(128, 0.0, 1.0, Boundary::Periodic).unwrap();
        let chi = 20.0;
        let r = stability_sweep(&model, 1.0, &g, &[chi]).unwrap();
        let w_hat = |k: f64| -chi * 0.1 * (2.0 * PI).sqrt() * (-(2.0 * PI * k * 0.1).powi(2) / 2.0).exp();
        let best = (1..20)
            .map(|k| -(2.0 * PI * k as f64).powi(2) * (1.0 + w_hat(k as f64)))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((r[0].leading_eigenvalue - best).abs() < 0.05 * best.abs());
    }

    #[test]
    fn rejects_non_periodic_grids() {
        let g = Grid::line(16, 0.0, 1.0, Boundary::NoFlux).unwrap();
        assert!(matches!(
            stability_sweep(&ModelSpec::heat(), 1.0, &g, &[1.0]),
            Err(StationaryError::InvalidParameters(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let reports = vec![
            StabilityReport { chi: 0.5, leading_eigenvalue: -1.25, unstable_mode_index: None },
            StabilityReport { chi: 2.0, leading_eigenvalue: 3.0, unstable_mode_index: Some(2) },
        ];
        assert_eq!(sweep_csv(&reports), "chi,leading_eigenvalue,unstable_mode_index\n0.5,-1.25,\n2,3,2\n");
    }
}

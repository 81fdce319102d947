//! Deterministic interacting particles
//! `ẋ^a_i = -∇V_a(x^a_i) - Σ_b (m_b/N) Σ_{j} ∇W_ab(x^a_i - x^b_j)` (self term
//! excluded), integrated by explicit Euler.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{to_quantiles, w2_1d, QuantileRep, TransportError};
use crate::energetics::{KernelSpec, SystemSpec};
use crate::mesh::{Field, Grid, MeshError};
use crate::solver::{Solver, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dims: usize,
    /// `positions[a][i]`; the second component is unused in 1D.
    pub positions: Vec<Vec<[f64; 2]>>,
    pub masses: Vec<f64>,
    /// Interaction cut-off radius `R`; `None` for no cut-off.
    pub cutoff: Option<f64>,
    pub t: f64,
}

impl ParticleEnsemble {
    pub fn new(
        dims: usize,
        positions: Vec<Vec<[f64; 2]>>,
        masses: Vec<f64>,
        cutoff: Option<f64>,
    ) -> Result<Self, TransportError> {
        if !(dims == 1 || dims == 2) {
            return Err(TransportError::Invalid(format!("dimension must be 1 or 2, got {dims}")));
        }
        if positions.is_empty() || positions.len() != masses.len() {
            return Err(TransportError::Invalid("one mass per species is required".into()));
        }
        let n = positions[0].len();
        if n == 0 || positions.iter().any(|p| p.len() != n) {
            return Err(TransportError::Invalid("every species needs the same positive particle count".into()));
        }
        if positions.iter().flatten().any(|x| !(x[0].is_finite() && x[1].is_finite())) {
            return Err(TransportError::Invalid("non-finite particle position".into()));
        }
        if let Some(r) = cutoff {
            if !(r > 0.0) {
                return Err(TransportError::Invalid(format!("cut-off radius must be positive, got {r}")));
            }
        }
        Ok(ParticleEnsemble {
            dims,
            positions,
            masses,
            cutoff,
            t: 0.0,
        })
    }

    pub fn count(&self) -> usize {
        self.positions[0].len()
    }

    pub fn species_count(&self) -> usize {
        self.positions.len()
    }

    /// `Σ_a (m_a/N) Σ_i x^a_i`.
    pub fn weighted_center(&self) -> [f64; 2] {
        let n = self.count() as f64;
        let mut c = [0.0; 2];
        for (pos, m) in self.positions.iter().zip(&self.masses) {
            for x in pos {
                c[0] += m / n * x[0];
                c[1] += m / n * x[1];
            }
        }
        c
    }
}

/// `(φ W)'` at `r > 0` for the C¹ taper `φ` over `[0.9R, R]`.
fn tapered_derivative(kernel: &KernelSpec, r: f64, cutoff: Option<f64>) -> f64 {
    let w1 = kernel.radial_derivative(r).unwrap_or(0.0);
    let Some(big_r) = cutoff else { return w1 };
    let start = 0.9 * big_r;
    if r <= start {
        return w1;
    }
    if r >= big_r {
        return 0.0;
    }
    let s = (r - start) / (big_r - start);
    let phi = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
    let dphi = (-6.0 * s + 6.0 * s * s) / (big_r - start);
    phi * w1 + dphi * kernel.value(r)
}

fn check_system(ens: &ParticleEnsemble, system: &SystemSpec) -> Result<(), TransportError> {
    system.validate()?;
    if system.species_count() != ens.species_count() {
        return Err(TransportError::Invalid(format!(
            "system has {} species, ensemble {}",
            system.species_count(),
            ens.species_count()
        )));
    }
    if system.epsilon != 0.0 {
        return Err(TransportError::Unsupported("particles run with epsilon = 0 only".into()));
    }
    if system.species.iter().any(|s| !s.internal.is_none()) {
        return Err(TransportError::Unsupported("particle dynamics carry no diffusion".into()));
    }
    for k in system.coupling.iter().flatten() {
        if k.is_singular() || k.radial_derivative(1.0).is_none() {
            return Err(TransportError::Unsupported(format!("kernel {k:?} is not smooth")));
        }
    }
    Ok(())
}

/// Quadratic kernel strength, when the pair sum reduces to moments.
fn quadratic(kernel: &KernelSpec) -> Option<f64> {
    match *kernel {
        KernelSpec::Power { k, chi } if k == 2.0 => Some(chi),
        _ => None,
    }
}

fn velocities(ens: &ParticleEnsemble, system: &SystemSpec) -> Vec<Vec<[f64; 2]>> {
    let n = ens.count();
    let dims = ens.dims;
    let sums: Vec<[f64; 2]> = ens
        .positions
        .iter()
        .map(|p| p.iter().fold([0.0, 0.0], |s, x| [s[0] + x[0], s[1] + x[1]]))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get());
    let mut out = Vec::with_capacity(ens.species_count());
    for a in 0..ens.species_count() {
        let pos = &ens.positions[a];
        let potential = &system.species[a].potential;
        let velocity = |x: [f64; 2]| -> [f64; 2] {
            let mut v = [0.0; 2];
            if !potential.is_zero() {
                if let Some(g) = potential.gradient_at(&x[..dims]) {
                    for (vc, gc) in v.iter_mut().zip(g) {
                        *vc -= gc;
                    }
                }
            }
            for b in 0..ens.species_count() {
                let kernel = &system.coupling[a][b];
                if kernel.is_zero() {
                    continue;
                }
                let weight = ens.masses[b] / n as f64;
                if let (Some(chi), None) = (quadratic(kernel), ens.cutoff) {
                    // Σ_j χ (x - y_j) = χ (N x - Σ y)
                    for c in 0..dims {
                        v[c] -= weight * chi * (n as f64 * x[c] - sums[b][c]);
                    }
                    continue;
                }
                let mut s = [0.0; 2];
                for y in &ens.positions[b] {
                    let d = [x[0] - y[0], x[1] - y[1]];
                    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    if r == 0.0 {
                        continue;
                    }
                    let f = tapered_derivative(kernel, r, ens.cutoff) / r;
                    s[0] += f * d[0];
                    s[1] += f * d[1];
                }
                v[0] -= weight * s[0];
                v[1] -= weight * s[1];
            }
            v
        };
        let chunk = n.div_ceil(workers).max(1);
        let vel: Vec<[f64; 2]> = std::thread::scope(|scope| {
            let handles: Vec<_> = pos
                .chunks(chunk)
                .map(|part| {
                    let velocity = &velocity;
                    scope.spawn(move || part.iter().map(|x| velocity(*x)).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("particle worker panicked")).collect()
        });
        out.push(vel);
    }
    out
}

fn advance(ens: &mut ParticleEnsemble, vel: &[Vec<[f64; 2]>], dt: f64) {
    for (pos, v) in ens.positions.iter_mut().zip(vel) {
        for (x, u) in pos.iter_mut().zip(v) {
            x[0] += dt * u[0];
            x[1] += dt * u[1];
        }
    }
    ens.t += dt;
}

/// Explicit Euler trajectory, starting with `ensemble` itself.
pub fn simulate_particles(
    ensemble: &ParticleEnsemble,
    system: &SystemSpec,
    dt: f64,
    steps: usize,
) -> Result<Vec<ParticleEnsemble>, TransportError> {
    check_system(ensemble, system)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TransportError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = ensemble.clone();
    out.push(cur.clone());
    for _ in 0..steps {
        let vel = velocities(&cur, system);
        advance(&mut cur, &vel, dt);
        out.push(cur.clone());
    }
    Ok(out)
}

/// `n` particles per species drawn from the given densities (cell chosen
/// by mass, uniform within the cell), with the field masses as `m_a`.
pub fn sample_ensemble(
    fields: &[Field],
    n: usize,
    seed: u64,
    cutoff: Option<f64>,
) -> Result<ParticleEnsemble, TransportError> {
    let first = fields.first().ok_or_else(|| TransportError::Invalid("no species".into()))?;
    let grid = first.grid();
    let dims = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(fields.len());
    let mut masses = Vec::with_capacity(fields.len());
    for f in fields {
        if f.grid() != grid {
            return Err(MeshError::GridMismatch.into());
        }
        let mut cdf = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        for v in f.values() {
            acc += v;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(TransportError::ZeroMass);
        }
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let u = rng.gen::<f64>() * acc;
                let cell = cdf.partition_point(|c| *c <= u).min(f.len() - 1);
                let idx = grid.unravel(cell);
                let mut x = [0.0; 2];
                for a in 0..dims {
                    let ax = grid.axis(a);
                    x[a] = ax.lo + (idx[a] as f64 + rng.gen::<f64>()) * ax.dx;
                }
                x
            })
            .collect();
        positions.push(pos);
        masses.push(f.mass());
    }
    ParticleEnsemble::new(dims, positions, masses, cutoff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deposit {
    pub fields: Vec<Field>,
    /// Particles found outside the grid and clamped to a boundary cell.
    pub clamped: usize,
}

/// Histogram of each species: every particle deposits `m_a/N` into its cell.
pub fn empirical_density(ensemble: &ParticleEnsemble, grid: &Grid) -> Result<Deposit, TransportError> {
    if grid.dims() != ensemble.dims {
        return Err(TransportError::Invalid(format!(
            "{}D particles on a {}D grid",
            ensemble.dims,
            grid.dims()
        )));
    }
    let n = ensemble.count() as f64;
    let vol = grid.cell_volume();
    let mut clamped = 0;
    let mut fields = Vec::with_capacity(ensemble.species_count());
    for (pos, m) in ensemble.positions.iter().zip(&ensemble.masses) {
        let mut v = vec![0.0; grid.len()];
        for x in pos {
            let mut idx = [0usize; 2];
            let mut outside = false;
            for a in 0..grid.dims() {
                let ax = grid.axis(a);
                let c = ((x[a] - ax.lo) / ax.dx).floor();
                if c < 0.0 || c >= ax.cells as f64 {
                    outside = true;
                }
                idx[a] = (c.max(0.0) as usize).min(ax.cells - 1);
            }
            clamped += outside as usize;
            v[grid.ravel(idx)] += m / n / vol;
        }
        fields.push(Field::new(grid.clone(), v)?);
    }
    Ok(Deposit { fields, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub n: usize,
    /// `d₂` between the empirical measure and the PDE density, per species.
    pub w2: Vec<f64>,
}

/// Integrates the PDE system from `initial` to `t_end` with steps of at
/// most `config.dt`.
pub fn pde_solution(
    system: &SystemSpec,
    initial: &[Field],
    t_end: f64,
    config: &SolverConfig,
) -> Result<Vec<Field>, TransportError> {
    let grid = initial.first().ok_or_else(|| TransportError::Invalid("no species".into()))?.grid();
    let solver = Solver::new(system, grid, config.clone())?;
    let mut state = initial.to_vec();
    let mut t = 0.0;
    while t < t_end * (1.0 - 1e-12) {
        let dt = config.dt.min(t_end - t);
        let (next, report) = solver.step(&state, dt)?;
        t += report.dt_used;
        state = next;
    }
    Ok(state)
}

/// For each ensemble size: sample `initial`, run the particles to `t_end`
/// and compare with `pde_final` in `d₂`. Particle steps keep the largest
/// displacement below half a cell of the comparison grid.
pub fn meanfield_gap(
    system: &SystemSpec,
    initial: &[Field],
    sizes: &[usize],
    pde_final: &[Field],
    t_end: f64,
    seed: u64,
) -> Result<Vec<GapReport>, TransportError> {
    let grid = initial.first().ok_or_else(|| TransportError::Invalid("no species".into()))?.grid();
    if grid.dims() != 1 {
        return Err(TransportError::NotOneDimensional);
    }
    if pde_final.len() != initial.len() {
        return Err(TransportError::Invalid("PDE state and initial data differ in species".into()));
    }
    let half_cell = 0.5 * grid.min_dx();
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut ens = sample_ensemble(initial, n, seed, None)?;
        check_system(&ens, system)?;
        while ens.t < t_end * (1.0 - 1e-12) {
            let vel = velocities(&ens, system);
            let vmax = vel.iter().flatten().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
            let mut dt = (t_end - ens.t).min(0.01);
            if vmax > 0.0 {
                dt = dt.min(half_cell / vmax);
            }
            advance(&mut ens, &vel, dt);
        }
        let mut w2 = Vec::with_capacity(initial.len());
        for (a, pde) in pde_final.iter().enumerate() {
            let xs: Vec<f64> = ens.positions[a].iter().map(|x| x[0]).collect();
            let emp = QuantileRep::from_samples(&xs, ens.masses[a])?;
            w2.push(w2_1d(&emp, &to_quantiles(pde, n)?)?);
        }
        out.push(GapReport { n, w2 });
    }
    Ok(out)
}

/// CSV rows `step,t,species,index,x[,y]`, one per particle and entry.
pub fn trajectory_csv(trajectory: &[ParticleEnsemble]) -> String {
    let dims = trajectory.first().map_or(1, |e| e.dims);
    let mut out = String::from(if dims == 2 { "step,t,species,index,x,y\n" } else { "step,t,species,index,x\n" });
    for (step, e) in trajectory.iter().enumerate() {
        for (a, pos) in e.positions.iter().enumerate() {
            for (i, x) in pos.iter().enumerate() {
                let _ = if dims == 2 {
                    writeln!(out, "{step},{},{a},{i},{},{}", e.t, x[0], x[1])
                } else {
                    writeln!(out, "{step},{},{a},{i},{}", e.t, x[0])
                };
            }
        }
    }
    out
}

pub fn write_trajectory_csv(trajectory: &[ParticleEnsemble], path: &Path) -> Result<(), MeshError> {
    crate::mesh::atomic_write(path, trajectory_csv(trajectory).as_bytes())
}

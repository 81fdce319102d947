use super::linear::{solve_cyclic, solve_cyclic_canonical};
use super::{FluxAssembly, SolverConfig, SolverError, StepReport, TimeIntegrator};
use crate::energetics::{EnergyBreakdown, ModelSpec, SystemOperator, SystemSpec};
use crate::mesh::{pairwise_sum, Field, Grid};

/// A system bound to a grid and a solver configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    op: SystemOperator,
    config: SolverConfig,
    symmetric: bool,
}

/// Result of one implicit sweep along a single axis.
struct Substep {
    state: Vec<Vec<f64>>,
    iters: usize,
    bound: f64,
    drop: f64,
    energy: EnergyBreakdown,
    monotone: bool,
}

type State = Vec<Vec<f64>>;

fn refs(state: &[Vec<f64>]) -> Vec<&[f64]> {
    state.iter().map(Vec::as_slice).collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(*x))
}

/// Flat index of the successor of `flat` along `axis`, wrapping on
/// periodic grids; `None` across a no-flux boundary.
fn successor(grid: &Grid, flat: usize, axis: usize) -> Option<usize> {
    let mut idx = grid.unravel(flat);
    let n = grid.axis(axis).cells;
    if idx[axis] + 1 == n {
        if !grid.is_periodic() {
            return None;
        }
        idx[axis] = 0;
    } else {
        idx[axis] += 1;
    }
    Some(grid.ravel(idx))
}

impl Solver {
    pub fn new(system: &SystemSpec, grid: &Grid, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let op = SystemOperator::new(system, grid)?;
        Ok(Solver {
            symmetric: system.is_symmetric(),
            op,
            config,
        })
    }

    pub fn for_model(model: &ModelSpec, grid: &Grid, mass: f64, config: SolverConfig) -> Result<Self, SolverError> {
        model.validate()?;
        Solver::new(&model.as_system(mass.max(f64::MIN_POSITIVE)), grid, config)
    }

    pub fn operator(&self) -> &SystemOperator {
        &self.op
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn species_count(&self) -> usize {
        self.op.species_count()
    }

    /// Whether the system is a gradient flow, so energy monotonicity is owed.
    pub fn is_gradient_flow(&self) -> bool {
        self.symmetric
    }

    fn unpack(&self, state: &[Field]) -> Result<State, SolverError> {
        if state.len() != self.species_count() {
            return Err(SolverError::StateMismatch(format!(
                "{} fields for {} species",
                state.len(),
                self.species_count()
            )));
        }
        if state.iter().any(|f| f.grid() != self.grid()) {
            return Err(crate::mesh::MeshError::GridMismatch.into());
        }
        Ok(state.iter().map(|f| f.values().to_vec()).collect())
    }

    fn pack(&self, state: State) -> Result<Vec<Field>, SolverError> {
        state
            .into_iter()
            .map(|v| Field::new(self.grid().clone(), v).map_err(SolverError::from))
            .collect()
    }

    pub fn energy(&self, state: &[Field]) -> Result<EnergyBreakdown, SolverError> {
        let s = self.unpack(state)?;
        Ok(self.op.energy(&refs(&s))?)
    }

    /// `ξ^a = U_a'(ρ^a) + V^a + Σ_b W_ab*ρ^b + ε Σ_b ρ^b`, with the
    /// interaction part supplied in `conv`.
    fn xi(&self, rhos: &[&[f64]], conv: &[Vec<f64>]) -> Result<State, SolverError> {
        let sys = self.op.system();
        let n = self.grid().len();
        let total: Option<Vec<f64>> =
            (sys.epsilon > 0.0).then(|| (0..n).map(|i| rhos.iter().map(|r| r[i]).sum()).collect());
        let mut out = Vec::with_capacity(rhos.len());
        for (a, r) in rhos.iter().enumerate() {
            let spec = &sys.species[a];
            let v = self.op.potential(a);
            let xi: Vec<f64> = (0..n)
                .map(|i| {
                    let mut x = spec.internal.derivative(r[i]) + v[i] + conv[a][i];
                    if let Some(t) = &total {
                        x += sys.epsilon * t[i];
                    }
                    x
                })
                .collect();
            if xi.iter().any(|x| !x.is_finite()) {
                return Err(SolverError::NonFinite("xi"));
            }
            out.push(xi);
        }
        Ok(out)
    }

    fn velocities(&self, xi: &[f64], axis: usize) -> Vec<f64> {
        let grid = self.grid();
        let dx = grid.axis(axis).dx;
        (0..grid.len())
            .map(|i| match successor(grid, i, axis) {
                Some(j) => -(xi[j] - xi[i]) / dx,
                None => 0.0,
            })
            .collect()
    }

    fn mobility_factors(&self, a: usize, rho: &[f64]) -> Vec<f64> {
        let m = self.op.system().species[a].mobility;
        rho.iter().map(|&s| m.factor(s)).collect()
    }

    /// Flux assembly of every species, with the convolution of `conv_rhos`.
    pub fn assemble(&self, rhos: &[&[f64]], conv_rhos: &[&[f64]]) -> Result<Vec<FluxAssembly>, SolverError> {
        let conv = self.op.interaction_potentials(conv_rhos);
        let xi = self.xi(rhos, &conv)?;
        let grid = self.grid();
        let mut out = Vec::with_capacity(rhos.len());
        for (a, xi_a) in xi.into_iter().enumerate() {
            let f = self.mobility_factors(a, rhos[a]);
            let mut us = Vec::with_capacity(grid.dims());
            let mut fluxes = Vec::with_capacity(grid.dims());
            for axis in 0..grid.dims() {
                let u = self.velocities(&xi_a, axis);
                let flux = (0..grid.len())
                    .map(|i| match successor(grid, i, axis) {
                        Some(j) => rhos[a][i] * f[i] * u[i].max(0.0) + rhos[a][j] * f[j] * u[i].min(0.0),
                        None => 0.0,
                    })
                    .collect();
                us.push(u);
                fluxes.push(flux);
            }
            out.push(FluxAssembly {
                xi: xi_a,
                u: us,
                flux: fluxes,
            });
        }
        Ok(out)
    }

    /// Splits the explicit update into the fraction leaving each cell per
    /// unit time (`keep`) and the inflow from upwind neighbours.
    fn exchange(&self, rhos: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>, SolverError> {
        let r = refs(rhos);
        let conv = self.op.interaction_potentials(&r);
        let xi = self.xi(&r, &conv)?;
        let grid = self.grid();
        let n = grid.len();
        let mut out = Vec::with_capacity(rhos.len());
        for (a, rho) in rhos.iter().enumerate() {
            let f = self.mobility_factors(a, rho);
            let mut keep = vec![0.0; n];
            let mut inflow = vec![0.0; n];
            for axis in 0..grid.dims() {
                let dx = grid.axis(axis).dx;
                let u = self.velocities(&xi[a], axis);
                for i in 0..n {
                    let Some(j) = successor(grid, i, axis) else { continue };
                    let uk = u[i];
                    if uk > 0.0 {
                        keep[i] += f[i] * uk / dx;
                        inflow[j] += rho[i] * f[i] * uk / dx;
                    } else if uk < 0.0 {
                        keep[j] -= f[j] * uk / dx;
                        inflow[i] -= rho[j] * f[j] * uk / dx;
                    }
                }
            }
            out.push((keep, inflow));
        }
        Ok(out)
    }

    /// Semi-discrete right-hand side of every species.
    pub fn rhs(&self, rhos: &[&[f64]]) -> Result<State, SolverError> {
        let owned: State = rhos.iter().map(|r| r.to_vec()).collect();
        Ok(self
            .exchange(&owned)?
            .into_iter()
            .zip(&owned)
            .map(|((keep, inflow), rho)| rho.iter().zip(keep).zip(inflow).map(|((r, k), i)| i - r * k).collect())
            .collect())
    }

    /// Largest forward-Euler step keeping every cell non-negative.
    pub fn explicit_limit(&self, rhos: &[&[f64]]) -> Result<f64, SolverError> {
        let owned: State = rhos.iter().map(|r| r.to_vec()).collect();
        let worst = self
            .exchange(&owned)?
            .iter()
            .map(|(keep, _)| sup(keep))
            .fold(0.0f64, f64::max);
        Ok(if worst > 0.0 { 1.0 / worst } else { f64::INFINITY })
    }

    /// `cfl · min(Δx / max|u|, Δx² / (2d · max D))`, relaxed by the
    /// configured factor for the implicit integrator and capped at `dt_max`.
    pub fn adaptive_dt(&self, rhos: &[&[f64]]) -> Result<f64, SolverError> {
        let grid = self.grid();
        let sys = self.op.system();
        let assembly = self.assemble(rhos, rhos)?;
        let mut dt_adv = f64::INFINITY;
        for fa in &assembly {
            for (axis, u) in fa.u.iter().enumerate() {
                let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if umax > 0.0 {
                    dt_adv = dt_adv.min(grid.axis(axis).dx / umax);
                }
            }
        }
        let mut dmax = 0.0f64;
        for i in 0..grid.len() {
            let total: f64 = rhos.iter().map(|r| r[i]).sum();
            for (a, r) in rhos.iter().enumerate() {
                let spec = &sys.species[a];
                let d = spec.internal.diffusion_coefficient(r[i]) * spec.mobility.factor(r[i]) + sys.epsilon * total;
                dmax = dmax.max(d);
            }
        }
        let dx = grid.min_dx();
        let dt_diff = if dmax > 0.0 {
            dx * dx / (2.0 * grid.dims() as f64 * dmax)
        } else {
            f64::INFINITY
        };
        let bound = dt_adv.min(dt_diff);
        if !bound.is_finite() {
            return Ok(self.config.dt_max);
        }
        let mut dt = self.config.cfl * bound;
        if !self.config.time_integrator.is_explicit() {
            dt *= self.config.implicit_dt_factor;
        }
        Ok(dt.min(self.config.dt_max))
    }

    /// Step with the configured integrator.
    pub fn step(&self, state: &[Field], dt: f64) -> Result<(Vec<Field>, StepReport), SolverError> {
        match self.config.time_integrator {
            TimeIntegrator::Implicit => self.step_implicit(state, dt),
            TimeIntegrator::ExplicitEuler => self.step_explicit(state, dt, false),
            TimeIntegrator::ExplicitRk2 => self.step_explicit(state, dt, true),
        }
    }

    fn report(&self, state: &[Vec<f64>], dt: f64, sub: &Substep) -> StepReport {
        let vol = self.grid().cell_volume();
        StepReport {
            t: dt,
            dt_used: dt,
            mass_per_species: state.iter().map(|r| pairwise_sum(r) * vol).collect(),
            min_density: state.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v)),
            energy: sub.energy,
            dissipation_bound: sub.bound,
            energy_drop: sub.drop,
            picard_iters: sub.iters,
            monotone: sub.monotone,
        }
    }

    /// Implicit step. On a 2D grid: a sweep along axis 0 followed by one
    /// along axis 1, each with the full convolution. If the nonlinear
    /// iteration fails, the whole step is retried with half the time step.
    pub fn step_implicit(&self, state: &[Field], dt: f64) -> Result<(Vec<Field>, StepReport), SolverError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        let rho_n = self.unpack(state)?;
        let mut h = dt;
        let mut residual = f64::NAN;
        for _ in 0..=self.config.max_halvings {
            match self.try_split(&rho_n, h)? {
                Ok((out, sub)) => {
                    let report = self.report(&out, h, &sub);
                    return Ok((self.pack(out)?, report));
                }
                Err(r) => {
                    residual = r;
                    h *= 0.5;
                }
            }
        }
        Err(SolverError::NotConverged {
            halvings: self.config.max_halvings,
            dt: 2.0 * h,
            residual,
        })
    }

    fn try_split(&self, rho_n: &[Vec<f64>], dt: f64) -> Result<Result<(State, Substep), f64>, SolverError> {
        let mut current = rho_n.to_vec();
        let mut total: Option<Substep> = None;
        for axis in 0..self.grid().dims() {
            let sub = match self.implicit_sweep(&current, dt, axis)? {
                Ok(s) => s,
                Err(r) => return Ok(Err(r)),
            };
            current = sub.state.clone();
            total = Some(match total {
                None => sub,
                Some(t) => Substep {
                    state: Vec::new(),
                    iters: t.iters + sub.iters,
                    bound: t.bound + sub.bound,
                    drop: t.drop + sub.drop,
                    energy: sub.energy,
                    monotone: t.monotone && sub.monotone,
                },
            });
        }
        Ok(Ok((current, total.expect("at least one axis"))))
    }

    /// Nonlinear solve of one implicit sweep along `axis`.
    ///
    /// Every iteration freezes `ξ` at the current iterate (with the
    /// convolution of `(ρⁿ + ρ^k)/2`) and solves the linear upwind system,
    /// an M-matrix with unit column sums; its solution `P` is the Picard
    /// candidate and the only value ever returned. When enabled, the next
    /// iterate comes from a damped Newton step on the local part of the
    /// residual instead, falling back to `P` when that stalls.
    fn implicit_sweep(&self, rho_n: &[Vec<f64>], dt: f64, axis: usize) -> Result<Result<Substep, f64>, SolverError> {
        let ns = self.species_count();
        let scale = rho_n.iter().map(|r| sup(r)).fold(1.0f64, f64::max);
        let tol = self.config.picard_tol * scale;
        let mut iterate = rho_n.to_vec();
        let mut prev_r = f64::INFINITY;
        let mut last_newton = false;
        let mut newton_failures = 0usize;
        let mut extra = 0usize;
        let mut r = f64::INFINITY;
        for iter in 1..=self.config.picard_max_iter {
            let star: State = rho_n
                .iter()
                .zip(&iterate)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect();
            let conv = self.op.interaction_potentials(&refs(&star));
            let xi = match self.xi(&refs(&iterate), &conv) {
                Ok(x) => x,
                Err(SolverError::NonFinite(_)) => return Ok(Err(f64::INFINITY)),
                Err(e) => return Err(e),
            };
            let want_newton = self.config.newton && newton_failures < 5;
            let mut picard = Vec::with_capacity(ns);
            let mut deltas = Vec::with_capacity(ns);
            let mut frozen = Vec::with_capacity(ns);
            r = 0.0;
            for a in 0..ns {
                let u = self.velocities(&xi[a], axis);
                let f = self.mobility_factors(a, &iterate[a]);
                let Some((p, delta)) = self.solve_species(a, &rho_n[a], &iterate[a], &u, &f, dt, axis, want_newton)
                else {
                    return Ok(Err(f64::INFINITY));
                };
                r = p.iter().zip(&iterate[a]).fold(r, |m, (x, y)| m.max((x - y).abs()));
                picard.push(p);
                deltas.push(delta);
                frozen.push((u, f));
            }
            if !r.is_finite() {
                return Ok(Err(r));
            }
            if r <= tol {
                let sub = self.diagnostics(rho_n, picard, &frozen, dt, axis, iter)?;
                if sub.monotone || !self.symmetric || extra >= 3 {
                    return Ok(Ok(sub));
                }
                extra += 1;
                iterate = sub.state;
                continue;
            }
            let use_newton = if last_newton && r > 0.9 * prev_r {
                newton_failures += 1;
                false
            } else {
                want_newton
            };
            iterate = if use_newton {
                iterate
                    .iter()
                    .zip(deltas)
                    .map(|(rho, d)| damped(rho, &d.expect("newton step requested")))
                    .collect()
            } else {
                picard
            };
            last_newton = use_newton;
            prev_r = r;
        }
        Ok(Err(r))
    }

    /// Picard candidate (and optionally a Newton correction) for species
    /// `a`, line by line along `axis`.
    #[allow(clippy::too_many_arguments)]
    fn solve_species(
        &self,
        a: usize,
        rho_n: &[f64],
        iter: &[f64],
        u: &[f64],
        f: &[f64],
        dt: f64,
        axis: usize,
        newton: bool,
    ) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
        let grid = self.grid();
        let (starts, stride) = grid.lines(axis);
        let n = grid.axis(axis).cells;
        let dx = grid.axis(axis).dx;
        let c = dt / dx;
        let periodic = grid.is_periodic();
        let spec = &self.op.system().species[a];
        let eps = self.op.system().epsilon;
        let floor = 1e-10 * sup(iter);
        let solve = if periodic { solve_cyclic_canonical } else { solve_cyclic };
        let mut p = vec![0.0; grid.len()];
        let mut delta = newton.then(|| vec![0.0; grid.len()]);
        let (mut lo, mut di, mut up, mut b) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut jl, mut jd, mut ju, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut s, mut mob) = (vec![0.0; n], vec![0.0; n]);
        for &start in &starts {
            let idx = |k: usize| start + k * stride;
            for k in 0..n {
                let (i, im, ip) = (idx(k), idx((k + n - 1) % n), idx((k + 1) % n));
                let (uk, um) = (u[i], u[im]);
                di[k] = 1.0 + c * f[i] * (uk.max(0.0) - um.min(0.0));
                up[k] = c * f[ip] * uk.min(0.0);
                lo[k] = -c * f[im] * um.max(0.0);
                b[k] = rho_n[i];
            }
            let x = solve(&lo, &di, &up, &b)?;
            for (k, v) in x.into_iter().enumerate() {
                p[idx(k)] = v;
            }
            let Some(delta) = delta.as_mut() else { continue };
            for k in 0..n {
                let (i, ip) = (idx(k), idx((k + 1) % n));
                s[k] = spec.internal.second_derivative(iter[i], floor) + eps;
                mob[k] = if !periodic && k == n - 1 {
                    0.0
                } else if u[i] >= 0.0 {
                    iter[i] * f[i]
                } else {
                    iter[ip] * f[ip]
                };
            }
            for k in 0..n {
                let (km, kp) = ((k + n - 1) % n, (k + 1) % n);
                let (i, im, ip) = (idx(k), idx(km), idx(kp));
                jd[k] = di[k] + c * (mob[k] + mob[km]) * s[k] / dx;
                ju[k] = up[k] - c * mob[k] * s[kp] / dx;
                jl[k] = lo[k] - c * mob[km] * s[km] / dx;
                g[k] = rho_n[i] - (lo[k] * iter[im] + di[k] * iter[i] + up[k] * iter[ip]);
            }
            let d = solve(&jl, &jd, &ju, &g)?;
            for (k, v) in d.into_iter().enumerate() {
                delta[idx(k)] = v;
            }
        }
        Some((p, delta))
    }

    /// Energy bookkeeping of a converged sweep.
    fn diagnostics(
        &self,
        rho_n: &[Vec<f64>],
        next: State,
        frozen: &[(Vec<f64>, Vec<f64>)],
        dt: f64,
        axis: usize,
        iters: usize,
    ) -> Result<Substep, SolverError> {
        let grid = self.grid();
        let vol = grid.cell_volume();
        let mut terms = Vec::new();
        for (a, (u, f)) in frozen.iter().enumerate() {
            let p = &next[a];
            for i in 0..grid.len() {
                if let Some(j) = successor(grid, i, axis) {
                    terms.push((p[i] * f[i]).min(p[j] * f[j]) * u[i] * u[i]);
                }
            }
        }
        let bound = -pairwise_sum(&terms) * vol;
        let conv_next = self.op.interaction_potentials(&refs(&next));
        let energy = self.op.energy_with(&refs(&next), Some(&conv_next))?;
        let drop = if self.symmetric {
            self.energy_change(rho_n, &next)?
        } else {
            energy.total - self.op.energy(&refs(rho_n))?.total
        };
        let monotone = drop / dt <= bound + self.config.picard_tol;
        Ok(Substep {
            state: next,
            iters,
            bound,
            drop,
            energy,
            monotone,
        })
    }

    /// `𝓕(ρ') - 𝓕(ρ)` summed cell by cell; the interaction part uses the
    /// identity `½⟨ρ',Wρ'⟩ - ½⟨ρ,Wρ⟩ = ⟨ρ'-ρ, W(ρ+ρ')/2⟩` valid for
    /// symmetric couplings, so no large totals are subtracted.
    fn energy_change(&self, old: &[Vec<f64>], new: &[Vec<f64>]) -> Result<f64, SolverError> {
        let sys = self.op.system();
        let vol = self.grid().cell_volume();
        let n = self.grid().len();
        let mut terms = Vec::with_capacity(n * (old.len() + 1));
        let conv = if self.op.has_interaction() {
            let star: State = old
                .iter()
                .zip(new)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect();
            Some(self.op.interaction_potentials(&refs(&star)))
        } else {
            None
        };
        for a in 0..old.len() {
            let spec = &sys.species[a];
            let v = self.op.potential(a);
            for i in 0..n {
                let (r0, r1) = (old[a][i], new[a][i]);
                let mut t = spec.internal.value_unchecked(r1) - spec.internal.value_unchecked(r0) + v[i] * (r1 - r0);
                if let Some(c) = &conv {
                    t += (r1 - r0) * c[a][i];
                }
                terms.push(t);
            }
        }
        if sys.epsilon > 0.0 {
            for i in 0..n {
                let s0: f64 = old.iter().map(|r| r[i]).sum();
                let s1: f64 = new.iter().map(|r| r[i]).sum();
                terms.push(0.5 * sys.epsilon * (s1 - s0) * (s1 + s0));
            }
        }
        Ok(pairwise_sum(&terms) * vol)
    }

    /// Forward Euler, or SSP-RK2 (Heun) when `rk2`. Each stage is checked
    /// against [`Solver::explicit_limit`]; the update is written as
    /// `ρ_i (1 - dt·out_i) + dt·in_i`, so positivity follows from the bound.
    pub fn step_explicit(&self, state: &[Field], dt: f64, rk2: bool) -> Result<(Vec<Field>, StepReport), SolverError> {
        let rho_n = self.unpack(state)?;
        let stage = |rhos: &State| -> Result<State, SolverError> {
            let ex = self.exchange(rhos)?;
            let worst = ex.iter().map(|(k, _)| sup(k)).fold(0.0f64, f64::max);
            if dt * worst > 1.0 + 1e-12 {
                return Err(SolverError::StabilityViolated { dt, limit: 1.0 / worst });
            }
            Ok(rhos
                .iter()
                .zip(ex)
                .map(|(rho, (keep, inflow))| {
                    rho.iter()
                        .zip(keep)
                        .zip(inflow)
                        .map(|((r, k), i)| r * (1.0 - dt * k).max(0.0) + dt * i)
                        .collect()
                })
                .collect())
        };
        let first = stage(&rho_n)?;
        let next = if rk2 {
            let second = stage(&first)?;
            rho_n
                .iter()
                .zip(second)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * x + 0.5 * y).collect())
                .collect()
        } else {
            first
        };
        // bound evaluated at the old state, as in the semi-discrete identity
        let grid = self.grid();
        let r = refs(&rho_n);
        let assembly = self.assemble(&r, &r)?;
        let mut terms = Vec::new();
        for (a, fa) in assembly.iter().enumerate() {
            let f = self.mobility_factors(a, &rho_n[a]);
            for (axis, u) in fa.u.iter().enumerate() {
                for i in 0..grid.len() {
                    if let Some(j) = successor(grid, i, axis) {
                        terms.push((rho_n[a][i] * f[i]).min(rho_n[a][j] * f[j]) * u[i] * u[i]);
                    }
                }
            }
        }
        let bound = -pairwise_sum(&terms) * grid.cell_volume();
        let energy = self.op.energy(&refs(&next))?;
        let drop = if self.symmetric {
            self.energy_change(&rho_n, &next)?
        } else {
            energy.total - self.op.energy(&r)?.total
        };
        let sub = Substep {
            state: Vec::new(),
            iters: 0,
            bound,
            drop,
            energy,
            monotone: drop / dt <= self.config.picard_tol,
        };
        let report = self.report(&next, dt, &sub);
        Ok((self.pack(next)?, report))
    }
}

/// `ρ + λδ` with `λ ≤ 1` chosen so no cell loses more than 90% of its
/// density; cells at round-off level are halved at most.
fn damped(rho: &[f64], delta: &[f64]) -> Vec<f64> {
    let tiny = 1e-12 * sup(rho);
    let mut lambda = 1.0f64;
    for (r, d) in rho.iter().zip(delta) {
        if *d < 0.0 && *r > tiny {
            lambda = lambda.min(0.9 * r / -d);
        }
    }
    rho.iter()
        .zip(delta)
        .map(|(r, d)| {
            let v = r + lambda * d;
            if v < 0.5 * r {
                if *r > tiny {
                    v.max(0.0)
                } else {
                    0.5 * r
                }
            } else {
                v
            }
        })
        .collect()
}

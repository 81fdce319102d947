//! Time integration of a configured experiment with series logging and
//! field snapshots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{InitialDatum, RunConfig};
use super::WorkbenchError;
use crate::energetics::{EnergyBreakdown, InternalEnergySpec};
use crate::mesh::{atomic_write, read_field, write_field, Field, Grid, MeshError};
use crate::solver::Solver;

/// `∫_{-1}^{1} (1 - s²)^p ds`, by Simpson's rule after `s = sin θ`.
fn unit_cap_integral(p: f64) -> f64 {
    let n = 4000;
    let h = std::f64::consts::PI / n as f64;
    let f = |i: usize| {
        let th = -std::f64::consts::FRAC_PI_2 + i as f64 * h;
        th.cos().max(0.0).powf(2.0 * p + 1.0)
    };
    let mut s = f(0) + f(n);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    s * h / 3.0
}

/// Self-similar solution of `∂_t ρ = Δ ρ^m` with the given mass at time
/// `t`, centred at the origin, sampled at cell centres:
/// `ρ = t^{-α} (C - κ |x|² t^{-2α/d})_+^{1/(m-1)}`, `α = d/(d(m-1)+2)`,
/// `κ = α(m-1)/(2md)`.
pub fn barenblatt_profile(grid: &Grid, m: f64, mass: f64, t: f64) -> Result<Field, WorkbenchError> {
    if !(m > 1.0 && mass > 0.0 && t > 0.0) {
        return Err(WorkbenchError::Invalid(format!(
            "Barenblatt profile needs m > 1, mass > 0, t > 0 (got m = {m}, mass = {mass}, t = {t})"
        )));
    }
    let d = grid.dims() as f64;
    let alpha = d / (d * (m - 1.0) + 2.0);
    let kappa = alpha * (m - 1.0) / (2.0 * m * d);
    let p = 1.0 / (m - 1.0);
    // mass = ∫ (C - κ|y|²)_+^p dy
    let c = if grid.dims() == 1 {
        (mass * kappa.sqrt() / unit_cap_integral(p)).powf(1.0 / (p + 0.5))
    } else {
        (mass * kappa * (p + 1.0) / std::f64::consts::PI).powf(1.0 / (p + 1.0))
    };
    let scale = t.powf(-2.0 * alpha / d);
    Ok(Field::from_fn(grid, |x| {
        let r2: f64 = x[..grid.dims()].iter().map(|v| v * v).sum();
        t.powf(-alpha) * (c - kappa * r2 * scale).max(0.0).powf(p)
    })?)
}

fn datum(grid: &Grid, d: &InitialDatum, internal: InternalEnergySpec, mass: f64) -> Result<Field, WorkbenchError> {
    let dims = grid.dims();
    let dist2 = |x: [f64; 2], c: [f64; 2]| -> f64 { (0..dims).map(|a| (x[a] - c[a]).powi(2)).sum() };
    let f = match d {
        InitialDatum::Uniform => Field::constant(grid, 1.0)?,
        InitialDatum::Gaussian { center, width } => {
            Field::from_fn(grid, |x| (-dist2(x, *center) / (2.0 * width * width)).exp())?
        }
        InitialDatum::Bumps { centers, width } => {
            let mut total = vec![0.0; grid.len()];
            for c in centers {
                let cap = Field::from_fn(grid, |x| (1.0 - dist2(x, [*c, 0.0]) / (width * width)).max(0.0))?;
                if cap.mass() > 0.0 {
                    for (t, v) in total.iter_mut().zip(cap.with_mass(1.0).values()) {
                        *t += v;
                    }
                }
            }
            Field::new(grid.clone(), total)?
        }
        InitialDatum::Barenblatt { t0 } => {
            let m = match internal {
                InternalEnergySpec::Power { m } if m > 1.0 => m,
                _ => {
                    return Err(WorkbenchError::Invalid(
                        "a Barenblatt datum needs power internal energy with m > 1".into(),
                    ))
                }
            };
            barenblatt_profile(grid, m, mass, *t0)?
        }
        InitialDatum::Disk { center, radius } => {
            Field::from_fn(grid, |x| if dist2(x, *center) <= radius * radius { 1.0 } else { 0.0 })?
        }
        InitialDatum::File(path) => {
            let f = read_field(path)?;
            if f.grid() != grid {
                return Err(MeshError::GridMismatch.into());
            }
            f
        }
    };
    if !(f.mass() > 0.0) {
        return Err(WorkbenchError::Invalid("initial datum has no mass on the grid".into()));
    }
    Ok(f)
}

/// Initial fields of every species, each rescaled to its configured mass.
pub fn initial_state(cfg: &RunConfig) -> Result<Vec<Field>, WorkbenchError> {
    cfg.species
        .iter()
        .map(|s| {
            let mut f = datum(&cfg.grid, &s.initial, s.spec.internal, s.spec.mass)?;
            if s.noise > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
                let noisy: Vec<f64> = f
                    .values()
                    .iter()
                    .map(|v| v * (1.0 + s.noise * (2.0 * rng.gen::<f64>() - 1.0)))
                    .collect();
                f = Field::new(cfg.grid.clone(), noisy)?;
            }
            Ok(f.with_mass(s.spec.mass))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub t: f64,
    pub mass: Vec<f64>,
    pub min_density: f64,
    pub energy: EnergyBreakdown,
    pub dissipation_bound: f64,
    pub energy_drop: f64,
    pub picard_iters: usize,
}

pub fn series_header(species: usize) -> String {
    let mut h = String::from("step,t");
    for a in 0..species {
        let _ = write!(h, ",mass_{}", a + 1);
    }
    h.push_str(",min_density,E_internal,E_potential,E_interaction,E_total,dissipation_bound,energy_drop,picard_iters");
    h
}

/// Series CSV; `f64` values use the shortest round-trip representation.
pub fn series_csv(rows: &[SeriesRow]) -> String {
    let species = rows.first().map_or(1, |r| r.mass.len());
    let mut out = series_header(species);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.step, r.t);
        for m in &r.mass {
            let _ = write!(out, ",{m}");
        }
        let e = &r.energy;
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},{},{}",
            r.min_density, e.internal, e.potential, e.interaction, e.total, r.dissipation_bound, r.energy_drop, r.picard_iters
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EndTime,
    MaxDensity,
    EnergyBelow,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<SeriesRow>,
    pub initial: Vec<Field>,
    pub final_state: Vec<Field>,
    pub stop: StopReason,
    pub files: Vec<PathBuf>,
}

/// Integrates the configured system to `t_end` (or an early stop), calling
/// `observe` after the initial state and after every step. Nothing is
/// written to disk.
pub fn evolve(
    cfg: &RunConfig,
    mut observe: impl FnMut(&SeriesRow, &[Field]),
) -> Result<RunOutcome, WorkbenchError> {
    let mut rows = Vec::new();
    let result = drive(cfg, |row, state| {
        observe(row, state);
        rows.push(row.clone());
        Ok(())
    });
    let (initial, final_state, stop) = result?;
    Ok(RunOutcome {
        rows,
        initial,
        final_state,
        stop,
        files: Vec::new(),
    })
}

type Driven = (Vec<Field>, Vec<Field>, StopReason);

fn drive(
    cfg: &RunConfig,
    mut each: impl FnMut(&SeriesRow, &[Field]) -> Result<(), WorkbenchError>,
) -> Result<Driven, WorkbenchError> {
    let system = cfg.system();
    let solver = Solver::new(&system, &cfg.grid, cfg.time.solver.clone())?;
    let initial = initial_state(cfg)?;
    let mut state = initial.clone();
    let e0 = solver.energy(&state)?;
    let mut row = SeriesRow {
        step: 0,
        t: 0.0,
        mass: state.iter().map(|f| f.mass()).collect(),
        min_density: state.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min),
        energy: e0,
        dissipation_bound: 0.0,
        energy_drop: 0.0,
        picard_iters: 0,
    };
    each(&row, &state)?;
    let t_end = cfg.time.t_end;
    let mut t = 0.0;
    let mut step = 0;
    let stop = loop {
        if t >= t_end * (1.0 - 1e-12) {
            break StopReason::EndTime;
        }
        if cfg.time.max_steps.is_some_and(|m| step >= m) {
            break StopReason::MaxSteps;
        }
        let wanted = match cfg.time.dt {
            Some(dt) => dt,
            None => {
                let refs: Vec<&[f64]> = state.iter().map(|f| f.values()).collect();
                solver.adaptive_dt(&refs)?
            }
        };
        let remaining = t_end - t;
        // avoid a sliver of a step at the end
        let dt = if wanted >= remaining * (1.0 - 1e-9) { remaining } else { wanted.min(remaining) };
        let (next, report) = solver.step(&state, dt)?;
        step += 1;
        t += report.dt_used;
        if remaining - report.dt_used <= 1e-12 * t_end.max(1.0) {
            t = t_end;
        }
        state = next;
        row = SeriesRow {
            step,
            t,
            mass: report.mass_per_species.clone(),
            min_density: report.min_density,
            energy: report.energy,
            dissipation_bound: report.dissipation_bound,
            energy_drop: report.energy_drop,
            picard_iters: report.picard_iters,
        };
        each(&row, &state)?;
        // non-symmetric couplings owe no energy inequality
        if !report.monotone && solver.is_gradient_flow() {
            return Err(WorkbenchError::NonMonotone { step, t });
        }
        if cfg.time.stop_max_density.is_some_and(|m| state.iter().any(|f| f.max() > m)) {
            break StopReason::MaxDensity;
        }
        if cfg.time.stop_energy_below.is_some_and(|e| report.energy.total < e) {
            break StopReason::EnergyBelow;
        }
    };
    Ok((initial, state, stop))
}

fn snapshot_path(dir: &Path, step: usize, species: usize) -> PathBuf {
    dir.join(format!("snap_{step:06}_{species}.adfv"))
}

/// [`evolve`] plus files in the output directory: `series.csv` (every
/// `series_stride`-th row and the last) and `snap_<step>_<species>.adfv`
/// at every `snapshot_stride`-th step, the first and the last. A step that
/// loses positivity aborts the run after the series is written.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, WorkbenchError> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(MeshError::from)?;
    let mut rows: Vec<SeriesRow> = Vec::new();
    let mut logged: Vec<SeriesRow> = Vec::new();
    let mut files = Vec::new();
    let mut last_state: Vec<Field> = Vec::new();
    let stride = cfg.output.snapshot_stride;
    let result = drive(cfg, |row, state| {
        rows.push(row.clone());
        if row.step % cfg.output.series_stride == 0 {
            logged.push(row.clone());
        }
        if row.step == 0 || (stride > 0 && row.step % stride == 0) {
            for (a, f) in state.iter().enumerate() {
                let p = snapshot_path(&dir, row.step, a + 1);
                write_field(f, &p)?;
                files.push(p);
            }
        }
        last_state = state.to_vec();
        Ok(())
    });
    if let Some(last) = rows.last() {
        if logged.last().map(|r| r.step) != Some(last.step) {
            logged.push(last.clone());
        }
        let last_step = last.step;
        if !(last_step == 0 || (stride > 0 && last_step % stride == 0)) {
            for (a, f) in last_state.iter().enumerate() {
                let p = snapshot_path(&dir, last_step, a + 1);
                write_field(f, &p)?;
                files.push(p);
            }
        }
    }
    let series = dir.join("series.csv");
    atomic_write(&series, series_csv(&logged).as_bytes())?;
    files.push(series);
    let (initial, final_state, stop) = result?;
    Ok(RunOutcome {
        rows,
        initial,
        final_state,
        stop,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{read_field, Boundary};

    fn config(text: &str, dir: &Path) -> RunConfig {
        let mut c = RunConfig::parse(text).unwrap();
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn barenblatt_carries_its_mass() {
        for (dims, m) in [(1, 2.0), (1, 3.0), (1, 1.5), (2, 2.0)] {
            let g = if dims == 1 {
                Grid::line(2000, -4.0, 4.0, Boundary::NoFlux).unwrap()
            } else {
                Grid::square(400, -3.0, 3.0, Boundary::NoFlux).unwrap()
            };
            let f = barenblatt_profile(&g, m, 1.3, 0.5).unwrap();
            assert!((f.mass() - 1.3).abs() < 2e-3, "d={dims} m={m}: {}", f.mass());
        }
        assert!((unit_cap_integral(1.0) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn barenblatt_solves_the_porous_medium_equation() {
        // ∂_t ρ = ∂_xx ρ² checked by finite differences inside the support
        let g = Grid::line(400, -2.0, 2.0, Boundary::NoFlux).unwrap();
        let (t, h) = (0.3, 1e-5);
        let a = barenblatt_profile(&g, 2.0, 1.0, t - h).unwrap();
        let b = barenblatt_profile(&g, 2.0, 1.0, t + h).unwrap();
        let c = barenblatt_profile(&g, 2.0, 1.0, t).unwrap();
        let dx = g.axis(0).dx;
        let v = c.values();
        for i in 190..210 {
            let dt = (b.values()[i] - a.values()[i]) / (2.0 * h);
            let lap = (v[i + 1].powi(2) - 2.0 * v[i].powi(2) + v[i - 1].powi(2)) / (dx * dx);
            assert!((dt - lap).abs() < 1e-3, "{i}: {dt} vs {lap}");
        }
    }

    #[test]
    fn zero_dynamics_keeps_the_datum() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            "[grid]\ncells = 16\n[model]\ninitial = gaussian center=0.5 width=0.2\n[time]\nt_end = 0.5\ndt = 0.1\n[output]\nsnapshot_stride = 2\n",
            dir.path(),
        );
        let out = run(&c).unwrap();
        assert_eq!(out.stop, StopReason::EndTime);
        assert_eq!(out.rows.len(), 6);
        let first = read_field(&dir.path().join("snap_000000_1.adfv")).unwrap();
        let last = read_field(&dir.path().join("snap_000005_1.adfv")).unwrap();
        assert_eq!(first, last);
        assert!(dir.path().join("snap_000004_1.adfv").exists());
        assert!(!dir.path().join("snap_000003_1.adfv").exists());
    }

    #[test]
    fn heat_series_strictly_decreases() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            "[grid]\ncells = 64\nboundary = periodic\n[model]\ninternal = linear\ninitial = gaussian center=0.5 width=0.1\n[time]\nt_end = 0.01\ndt = 1e-3\n",
            dir.path(),
        );
        run(&c).unwrap();
        let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,t,mass_1,min_density,E_internal,E_potential,E_interaction,E_total,dissipation_bound,energy_drop,picard_iters"
        );
        let totals: Vec<f64> = lines.map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
        assert_eq!(totals.len(), 11);
        assert!(totals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn runs_are_bit_identical() {
        let text = "[grid]\ncells = 32\nlo = -2\nhi = 2\n[model]\ninternal = power m=2\nkernel = exponential amplitude=1 range=0.3\ninitial = bumps centers=-1,0.8 width=0.4\nnoise = 0.2\nseed = 3\n[time]\nt_end = 0.2\n";
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(&config(text, d1.path())).unwrap();
        run(&config(text, d2.path())).unwrap();
        let a = std::fs::read(d1.path().join("series.csv")).unwrap();
        let b = std::fs::read(d2.path().join("series.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stop_on_density() {
        let c = RunConfig::parse(
            "[grid]\ncells = 32\nlo = -1\nhi = 1\n[model]\nkernel = power k=2 chi=5\ninitial = uniform\n[time]\nt_end = 10\ndt = 0.05\nstop_max_density = 2\n",
        )
        .unwrap();
        let out = evolve(&c, |_, _| {}).unwrap();
        assert_eq!(out.stop, StopReason::MaxDensity);
        assert!(out.final_state[0].max() > 2.0);
    }

    #[test]
    fn series_csv_round_trips_floats() {
        let row = SeriesRow {
            step: 1,
            t: 0.1 + 0.2,
            mass: vec![1.0 / 3.0, 2.0],
            min_density: 0.0,
            energy: EnergyBreakdown::new(1.0, 2.0, 3.0),
            dissipation_bound: -1e-17,
            energy_drop: -0.5,
            picard_iters: 4,
        };
        let csv = series_csv(&[row]);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert!(csv.starts_with("step,t,mass_1,mass_2,min_density"));
    }
}

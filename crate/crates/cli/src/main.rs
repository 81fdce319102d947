use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};

use aggdiff::energetics::{EnergyError, ModelSpec};
use aggdiff::mesh::{atomic_write, write_field, Field, MeshError};
use aggdiff::solver::SolverError;
use aggdiff::stationary::{classify_regime, fixed_point_minimiser, stability_sweep, write_sweep_csv, StationaryError};
use aggdiff::transport::{
    geodesic_1d, jko_flow, meanfield_gap, pde_solution, sample_ensemble, simulate_particles, to_quantiles, w2_1d,
    write_trajectory_csv, TransportError,
};
use aggdiff::workbench::{
    detect_plateaus, evolve, initial_state, plot_file, preset, run, RunConfig, WorkbenchError,
};

#[derive(Parser)]
#[command(name = "aggdiff", version, about = "Finite-volume aggregation-diffusion workbench")]
struct Cli {
    /// Output directory (defaults to the one named in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-step a configuration, writing the series CSV and field snapshots.
    Run { config: PathBuf },
    /// Run a built-in experiment, or print its configuration with --emit.
    Preset {
        name: String,
        #[arg(long)]
        emit: bool,
    },
    /// Stationary state of a single-species configuration by fixed-point iteration.
    Steady { config: PathBuf },
    /// Linear stability of the constant state over a range of kernel strengths.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "chi")]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Regime of the homogeneous model U = ρ^m/(m-1), W = χ|x|^k/k.
    Classify {
        #[arg(long)]
        m: f64,
        #[arg(long, allow_hyphen_values = true)]
        k: f64,
        #[arg(long)]
        d: usize,
    },
    /// Interacting particle simulation of a configuration.
    Particles { config: PathBuf },
    /// Compare the JKO scheme with the finite-volume solution.
    CompareJko { config: PathBuf },
    /// Displacement interpolation between the initial data of two 1D configs.
    Geodesic {
        config_a: PathBuf,
        config_b: PathBuf,
        #[arg(long, default_value_t = 11)]
        frames: usize,
    },
    /// Render a series CSV, sweep CSV or field dump as SVG.
    Plot {
        file: PathBuf,
        #[arg(long)]
        log: bool,
    },
}

/// Exit status 2 for bad input, 3 for numerical failure.
enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn energy_is_config(e: &EnergyError) -> bool {
    !matches!(e, EnergyError::NegativeDensity { .. } | EnergyError::OutsideRange(_) | EnergyError::Mesh(_))
}

fn solver_is_config(e: &SolverError) -> bool {
    match e {
        SolverError::InvalidConfig(_) | SolverError::StateMismatch(_) => true,
        SolverError::Energy(e) => energy_is_config(e),
        _ => false,
    }
}

impl From<WorkbenchError> for Failure {
    fn from(e: WorkbenchError) -> Self {
        let config = match &e {
            WorkbenchError::Solver(s) => solver_is_config(s),
            WorkbenchError::Energy(s) => energy_is_config(s),
            WorkbenchError::Stationary(s) => stationary_is_config(s),
            other => other.is_config_error(),
        };
        if config {
            Failure::Config(e.into())
        } else {
            Failure::Solver(e.into())
        }
    }
}

fn stationary_is_config(e: &StationaryError) -> bool {
    match e {
        StationaryError::InvalidParameters(_) | StationaryError::NotInvertible => true,
        StationaryError::Energy(e) => energy_is_config(e),
        StationaryError::Solver(e) => solver_is_config(e),
        _ => false,
    }
}

impl From<StationaryError> for Failure {
    fn from(e: StationaryError) -> Self {
        if stationary_is_config(&e) {
            Failure::Config(e.into())
        } else {
            Failure::Solver(e.into())
        }
    }
}

impl From<TransportError> for Failure {
    fn from(e: TransportError) -> Self {
        let config = match &e {
            TransportError::Energy(s) => energy_is_config(s),
            TransportError::Solver(s) => solver_is_config(s),
            TransportError::Mesh(_) | TransportError::ZeroMass => false,
            _ => true,
        };
        if config {
            Failure::Config(e.into())
        } else {
            Failure::Solver(e.into())
        }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Failure::Solver(e.into())
    }
}

fn load(path: &Path, out: &Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_file(path).map_err(config_err)?;
    if let Some(dir) = out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Solver(anyhow!("cannot create {}: {e}", dir.display())))
}

/// Single-species model of a config, as used by the 1D tools.
fn scalar_model(cfg: &RunConfig) -> Result<ModelSpec, Failure> {
    if cfg.species.len() != 1 {
        return Err(config_err(anyhow!("this command needs a single species, config has {}", cfg.species.len())));
    }
    let s = &cfg.species[0].spec;
    Ok(ModelSpec {
        internal: s.internal.clone(),
        potential: s.potential.clone(),
        kernel: cfg.coupling[0][0].clone(),
        mobility: s.mobility.clone(),
    })
}

fn run_config(cfg: &RunConfig) -> Outcome {
    let out = run(cfg)?;
    let last = out.rows.last().ok_or_else(|| Failure::Solver(anyhow!("run produced no rows")))?;
    println!(
        "{}: {} steps to t = {} ({:?}), E_total {:.6e} -> {:.6e}",
        cfg.experiment,
        last.step,
        last.t,
        out.stop,
        out.rows[0].energy.total,
        last.energy.total
    );
    let t: Vec<f64> = out.rows.iter().map(|r| r.t).collect();
    let e: Vec<f64> = out.rows.iter().map(|r| r.energy.total).collect();
    let plateaus = detect_plateaus(&t, &e, cfg.output.plateau_threshold, cfg.output.plateau_window);
    if !plateaus.plateaus.is_empty() {
        println!("energy plateaus: {}", plateaus.plateaus.len());
    }
    println!("wrote {} files to {}", out.files.len(), cfg.output.dir.display());
    Ok(())
}

fn steady(cfg: &RunConfig) -> Outcome {
    let model = scalar_model(cfg)?;
    let init = initial_state(cfg)?;
    let res = fixed_point_minimiser(&model, cfg.species[0].spec.mass, &init[0])?;
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("steady.adfv");
    write_field(&res.density, &path)?;
    println!(
        "converged {}, components {}, residual {:.3e}, off-support violation {:.3e}",
        res.converged,
        res.lagrange_constants.len(),
        res.residual_sup,
        res.off_support_violation
    );
    println!("wrote {}", path.display());
    if res.converged {
        Ok(())
    } else {
        Err(Failure::Solver(anyhow!("fixed-point iteration did not converge")))
    }
}

fn sweep(cfg: &RunConfig, param: &str, from: f64, to: f64, steps: usize) -> Outcome {
    if param != "chi" {
        return Err(config_err(anyhow!("unknown sweep parameter '{param}' (supported: chi)")));
    }
    if steps < 1 || !from.is_finite() || !to.is_finite() {
        return Err(config_err(anyhow!("need finite bounds and at least one step")));
    }
    let model = scalar_model(cfg)?;
    let chis: Vec<f64> = if steps == 1 {
        vec![from]
    } else {
        (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect()
    };
    let reports = stability_sweep(&model, cfg.species[0].spec.mass, &cfg.grid, &chis)?;
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("sweep.csv");
    write_sweep_csv(&reports, &path)?;
    match reports.iter().position(|r| r.leading_eigenvalue > 0.0) {
        Some(0) => println!("unstable already at chi = {}", chis[0]),
        Some(i) => println!("constant state loses stability in ({}, {}]", chis[i - 1], chis[i]),
        None => println!("stable over the whole range"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn classify(m: f64, k: f64, d: usize) -> Outcome {
    let r = classify_regime(m, k, d)?;
    println!("m = {m}, k = {k}, d = {d}, m_c = {}", r.m_c);
    println!("regime: {:?}", r.regime);
    println!("bounded below: {:?}", r.bounded_below);
    match r.zone {
        Some(z) => println!("zone: {z:?}"),
        None => println!("zone: none"),
    }
    println!("concentration possible: {}", r.concentration_possible);
    Ok(())
}

fn particles(cfg: &RunConfig) -> Outcome {
    let p = &cfg.particles;
    let system = cfg.system();
    let init = initial_state(cfg)?;
    let ens = sample_ensemble(&init, p.count, p.seed, p.cutoff)?;
    let traj = simulate_particles(&ens, &system, p.dt, p.steps)?;
    ensure_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("trajectory.csv");
    write_trajectory_csv(&traj, &path)?;
    println!("{} particles, {} steps, wrote {}", p.count, p.steps, path.display());
    if !p.sizes.is_empty() {
        let t_end = p.dt * p.steps as f64;
        let pde = pde_solution(&system, &init, t_end, &cfg.time.solver)?;
        let gaps = meanfield_gap(&system, &init, &p.sizes, &pde, t_end, p.seed)?;
        let mut csv = String::from("n");
        for s in 0..system.species_count() {
            csv.push_str(&format!(",w2_{}", s + 1));
        }
        csv.push('\n');
        for g in &gaps {
            csv.push_str(&g.n.to_string());
            for w in &g.w2 {
                csv.push_str(&format!(",{w}"));
            }
            csv.push('\n');
            println!("N = {}: w2 {:?}", g.n, g.w2);
        }
        let path = cfg.output.dir.join("meanfield_gap.csv");
        atomic_write(&path, csv.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn compare_jko(cfg: &RunConfig) -> Outcome {
    let model = scalar_model(cfg)?;
    let steps = (cfg.time.t_end / cfg.jko.dt).round() as usize;
    if steps == 0 {
        return Err(config_err(anyhow!("t_end shorter than the JKO step")));
    }
    let t_end = steps as f64 * cfg.jko.dt;
    let mut fv_cfg = cfg.clone();
    fv_cfg.time.t_end = t_end;
    let fv = evolve(&fv_cfg, |_, _| {})?;
    let (q, jko, converged) = jko_flow(&fv.initial[0], cfg.jko.dt, steps, &model, cfg.jko.quantiles)?;
    let w2 = w2_1d(&q, &to_quantiles(&fv.final_state[0], cfg.jko.quantiles)?)?;
    ensure_dir(&cfg.output.dir)?;
    write_field(&jko, &cfg.output.dir.join("jko.adfv"))?;
    write_field(&fv.final_state[0], &cfg.output.dir.join("fv.adfv"))?;
    println!("t = {t_end}: w2(JKO, finite volume) = {w2:.6e}, L1 = {:.6e}", l1(&jko, &fv.final_state[0]));
    if !converged {
        eprintln!("warning: some JKO steps stopped at the iteration cap");
    }
    println!("wrote jko.adfv and fv.adfv to {}", cfg.output.dir.display());
    Ok(())
}

fn l1(a: &Field, b: &Field) -> f64 {
    a.l1_distance(b).unwrap_or(f64::NAN)
}

fn geodesic(a: &RunConfig, b: &RunConfig, frames: usize, out: &Path) -> Outcome {
    if frames < 2 {
        return Err(config_err(anyhow!("need at least 2 frames")));
    }
    let fa = initial_state(a)?;
    let fb = initial_state(b)?;
    if fa.len() != 1 || fb.len() != 1 {
        return Err(config_err(anyhow!("geodesics need single-species configs")));
    }
    let m = a.jko.quantiles;
    let qa = to_quantiles(&fa[0], m)?;
    let qb = to_quantiles(&fb[0], m)?;
    ensure_dir(out)?;
    for i in 0..frames {
        let t = i as f64 / (frames - 1) as f64;
        let f = geodesic_1d(&qa, &qb, t)?.to_field(&a.grid)?;
        write_field(&f, &out.join(format!("geodesic_{i:04}.adfv")))?;
    }
    println!("w2 = {:.6e}; wrote {frames} frames to {}", w2_1d(&qa, &qb)?, out.display());
    Ok(())
}

fn plot(file: &Path, log: bool, out: &Option<PathBuf>) -> Outcome {
    let dir = match out {
        Some(d) => d.clone(),
        None => file.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    ensure_dir(&dir)?;
    let path = plot_file(file, &dir, log).map_err(|e| match e {
        WorkbenchError::Mesh(MeshError::Io(_)) | WorkbenchError::Mesh(MeshError::Format(_)) => config_err(e),
        WorkbenchError::EmptySeries | WorkbenchError::Malformed(_) => config_err(e),
        other => Failure::from(other),
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    let out = cli.out;
    match cli.command {
        Command::Run { config } => run_config(&load(&config, &out)?),
        Command::Preset { name, emit } => {
            let mut cfg = preset(&name)?;
            if let Some(dir) = &out {
                cfg.output.dir = dir.clone();
            }
            if !emit {
                return run_config(&cfg);
            }
            match &out {
                Some(dir) => {
                    ensure_dir(dir)?;
                    let path = dir.join(format!("{name}.ini"));
                    atomic_write(&path, cfg.to_ini().as_bytes())?;
                    println!("wrote {}", path.display());
                }
                None => print!("{}", cfg.to_ini()),
            }
            Ok(())
        }
        Command::Steady { config } => steady(&load(&config, &out)?),
        Command::Sweep {
            config,
            param,
            from,
            to,
            steps,
        } => sweep(&load(&config, &out)?, &param, from, to, steps),
        Command::Classify { m, k, d } => classify(m, k, d),
        Command::Particles { config } => particles(&load(&config, &out)?),
        Command::CompareJko { config } => compare_jko(&load(&config, &out)?),
        Command::Geodesic {
            config_a,
            config_b,
            frames,
        } => {
            let a = load(&config_a, &None)?;
            let b = load(&config_b, &None)?;
            let dir = out.unwrap_or_else(|| a.output.dir.clone());
            geodesic(&a, &b, frames, &dir)
        }
        Command::Plot { file, log } => plot(&file, log, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

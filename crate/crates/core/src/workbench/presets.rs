//! Ready-made experiments. Parameters are tuned to show the qualitative
//! behaviour on desk-scale grids; they are not taken from any published run.

use std::path::PathBuf;

use super::config::{InitialDatum, JkoSettings, OutputSettings, ParticleSettings, RunConfig, SpeciesConfig, TimeSettings};
use super::WorkbenchError;
use crate::energetics::{InternalEnergySpec, KernelSpec, MobilitySpec, PotentialSpec, SpeciesSpec};
use crate::mesh::{Boundary, Grid};
use crate::solver::SolverConfig;
use crate::stationary::{candidate_family, estimate_chi_c};

pub const PRESET_NAMES: &[&str] = &[
    "metastability",
    "cellsort_halo",
    "cellsort_boundary",
    "ks_fair_competition",
    "ks_fair_competition_super",
    "heat",
    "barenblatt",
    "fokker_planck",
];

fn species(internal: InternalEnergySpec, potential: PotentialSpec, initial: InitialDatum) -> SpeciesConfig {
    SpeciesConfig {
        spec: SpeciesSpec {
            internal,
            potential,
            mobility: MobilitySpec::Linear,
            mass: 1.0,
        },
        initial,
        noise: 0.0,
        seed: 0,
    }
}

fn base(name: &str, grid: Grid, sp: Vec<SpeciesConfig>, coupling: Vec<Vec<KernelSpec>>, t_end: f64) -> RunConfig {
    RunConfig {
        experiment: name.to_string(),
        grid,
        species: sp,
        coupling,
        epsilon: 0.0,
        time: TimeSettings {
            t_end,
            dt: None,
            solver: SolverConfig::default(),
            stop_max_density: None,
            stop_energy_below: None,
            max_steps: None,
        },
        output: OutputSettings {
            dir: PathBuf::from(format!("out/{name}")),
            ..OutputSettings::default()
        },
        particles: ParticleSettings::default(),
        jko: JkoSettings::default(),
    }
}

fn line(cells: usize, lo: f64, hi: f64, b: Boundary) -> Grid {
    Grid::line(cells, lo, hi, b).expect("preset grid is valid")
}

/// Fair-competition model `m = 1.5`, `k = -0.5` in 1D with
/// `χ = factor · χ̂_c`, where `χ̂_c` is estimated on the preset grid.
pub fn fair_competition(factor: f64) -> Result<RunConfig, WorkbenchError> {
    let (m, k) = (1.5, -0.5);
    let grid = line(800, -10.0, 10.0, Boundary::NoFlux);
    let family = candidate_family(&grid, m, 8, 11)?;
    let chi_c = estimate_chi_c(m, k, 1, &family)?;
    let name = if factor > 1.0 { "ks_fair_competition_super" } else { "ks_fair_competition" };
    let mut c = base(
        name,
        grid,
        vec![species(
            InternalEnergySpec::Power { m },
            PotentialSpec::Zero,
            InitialDatum::Gaussian {
                center: [0.0; 2],
                width: 2.0,
            },
        )],
        vec![vec![KernelSpec::Power { k, chi: factor * chi_c }]],
        5.0,
    );
    c.set_dt(0.01);
    if factor > 1.0 {
        // collapse saturates at one cell; leave time for the energy to follow
        c.time.t_end = 10.0;
        c.time.stop_max_density = Some(1e3);
    }
    Ok(c)
}

pub fn preset(name: &str) -> Result<RunConfig, WorkbenchError> {
    let lin = InternalEnergySpec::Linear;
    let pm = InternalEnergySpec::Power { m: 2.0 };
    Ok(match name {
        "heat" => {
            let mut c = base(
                name,
                line(256, 0.0, 1.0, Boundary::Periodic),
                vec![species(
                    lin,
                    PotentialSpec::Zero,
                    InitialDatum::Gaussian {
                        center: [0.5, 0.0],
                        width: 0.1,
                    },
                )],
                vec![vec![KernelSpec::Zero]],
                0.05,
            );
            c.set_dt(1e-4);
            c
        }
        "barenblatt" => {
            let mut c = base(
                name,
                line(1536, -3.0, 3.0, Boundary::NoFlux),
                vec![species(pm, PotentialSpec::Zero, InitialDatum::Barenblatt { t0: 0.1 })],
                vec![vec![KernelSpec::Zero]],
                0.9,
            );
            c.set_dt(1e-3);
            c
        }
        "fokker_planck" => {
            let mut c = base(
                name,
                line(768, -6.0, 6.0, Boundary::NoFlux),
                vec![species(
                    lin,
                    PotentialSpec::harmonic(),
                    InitialDatum::Gaussian {
                        center: [1.5, 0.0],
                        width: 0.5,
                    },
                )],
                vec![vec![KernelSpec::Zero]],
                25.0,
            );
            c.time.solver.dt_max = 0.1;
            c.jko = JkoSettings {
                quantiles: 512,
                dt: 1e-2,
            };
            c
        }
        "metastability" => {
            // bump width is set by amplitude·range; tails interact like e^{-gap/range}
            let mut c = base(
                name,
                line(512, -4.0, 4.0, Boundary::NoFlux),
                vec![species(
                    pm,
                    PotentialSpec::Zero,
                    InitialDatum::Bumps {
                        centers: vec![-2.33, 0.0, 2.6],
                        width: 0.3,
                    },
                )],
                vec![vec![KernelSpec::Exponential {
                    amplitude: 10.0,
                    range: 0.2,
                }]],
                3000.0,
            );
            c.time.solver.dt_max = 1.0;
            c.time.solver.implicit_dt_factor = 1e6;
            c.output.plateau_window = 100.0;
            c
        }
        "cellsort_halo" | "cellsort_boundary" => {
            let grid = Grid::square(128, -2.0, 2.0, Boundary::NoFlux).expect("preset grid is valid");
            let disk = |x: f64| InitialDatum::Disk {
                center: [x, 0.0],
                radius: 0.7,
            };
            let (init, w11, w12, w22) = if name == "cellsort_halo" {
                ((disk(0.0), disk(0.0)), 1.0, 0.6, 0.3)
            } else {
                ((disk(-0.6), disk(0.6)), 1.0, 0.2, 1.0)
            };
            let ch = |depth: f64| KernelSpec::Characteristic { radius: 0.4, depth };
            let mut a = species(InternalEnergySpec::None, PotentialSpec::Zero, init.0);
            let mut b = species(InternalEnergySpec::None, PotentialSpec::Zero, init.1);
            a.noise = 0.05;
            a.seed = 1;
            b.noise = 0.05;
            b.seed = 2;
            let mut c = base(
                name,
                grid,
                vec![a, b],
                vec![vec![ch(w11), ch(w12)], vec![ch(w12), ch(w22)]],
                1.5,
            );
            c.epsilon = 0.1;
            c.output.snapshot_stride = 50;
            c
        }
        "ks_fair_competition" => fair_competition(0.5)?,
        "ks_fair_competition_super" => fair_competition(4.0)?,
        other => return Err(WorkbenchError::UnknownPreset(other.to_string())),
    })
}

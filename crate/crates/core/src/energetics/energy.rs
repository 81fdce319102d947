//! Discrete free energy of single models and systems.

use std::sync::Arc;

use rustfft::num_complex::Complex;

use super::convolution::FftPlan;
use super::{potential_field, Convolution, EnergyError, ModelSpec, SystemSpec};
use crate::mesh::{pairwise_sum, Field, Grid, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub internal: f64,
    pub potential: f64,
    pub interaction: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(internal: f64, potential: f64, interaction: f64) -> Self {
        EnergyBreakdown {
            internal,
            potential,
            interaction,
            total: internal + potential + interaction,
        }
    }
}

/// A system bound to a grid, with potentials and kernel spectra precomputed.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    grid: Grid,
    system: SystemSpec,
    potentials: Vec<Vec<f64>>,
    convolutions: Vec<Vec<Option<Convolution>>>,
    plan: Arc<FftPlan>,
}

impl SystemOperator {
    pub fn new(system: &SystemSpec, grid: &Grid) -> Result<Self, EnergyError> {
        system.validate()?;
        let plan = FftPlan::for_grid(grid);
        let potentials = system
            .species
            .iter()
            .map(|s| potential_field(&s.potential, grid))
            .collect::<Result<Vec<_>, _>>()?;
        let mut convolutions = Vec::with_capacity(system.species.len());
        for row in &system.coupling {
            let mut out = Vec::with_capacity(row.len());
            for k in row {
                out.push(if k.is_zero() {
                    None
                } else {
                    Some(Convolution::with_plan(k, grid, plan.clone())?)
                });
            }
            convolutions.push(out);
        }
        Ok(SystemOperator {
            grid: grid.clone(),
            system: system.clone(),
            potentials,
            convolutions,
            plan,
        })
    }

    pub fn from_model(model: &ModelSpec, grid: &Grid) -> Result<Self, EnergyError> {
        model.validate()?;
        SystemOperator::new(&model.as_system(1.0), grid)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn species_count(&self) -> usize {
        self.system.species.len()
    }

    pub fn potential(&self, a: usize) -> &[f64] {
        &self.potentials[a]
    }

    pub fn has_interaction(&self) -> bool {
        self.convolutions.iter().flatten().any(Option::is_some)
    }

    pub fn convolution(&self, a: usize, b: usize) -> Option<&Convolution> {
        self.convolutions[a][b].as_ref()
    }

    /// `Σ_b (W_ab * ρ^b)` for every species `a`, one forward transform per
    /// species and one inverse per non-trivial row.
    pub fn interaction_potentials(&self, rhos: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = self.species_count();
        let cells = self.grid.len();
        let mut hats: Vec<Option<Vec<Complex<f64>>>> = vec![None; n];
        let mut out = Vec::with_capacity(n);
        for a in 0..n {
            let mut acc: Option<Vec<Complex<f64>>> = None;
            for b in 0..n {
                let Some(conv) = &self.convolutions[a][b] else { continue };
                let hat = hats[b].get_or_insert_with(|| self.plan.forward(&self.grid, rhos[b]));
                let acc = acc.get_or_insert_with(|| vec![Complex::new(0.0, 0.0); hat.len()]);
                conv.accumulate(hat, acc);
            }
            out.push(match acc {
                Some(acc) => self.plan.inverse(&self.grid, acc),
                None => vec![0.0; cells],
            });
        }
        out
    }

    /// Energy of the given state; `convolved` may pass precomputed
    /// interaction potentials of the same state.
    pub fn energy_with(&self, rhos: &[&[f64]], convolved: Option<&[Vec<f64>]>) -> Result<EnergyBreakdown, EnergyError> {
        let n = self.species_count();
        if rhos.len() != n || rhos.iter().any(|r| r.len() != self.grid.len()) {
            return Err(MeshError::GridMismatch.into());
        }
        for r in rhos {
            if let Some((index, &value)) = r.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(EnergyError::NegativeDensity { index, value });
            }
        }
        let vol = self.grid.cell_volume();
        let mut internal = Vec::with_capacity(n);
        let mut potential = Vec::with_capacity(n);
        let mut interaction = Vec::with_capacity(n + 1);
        let owned;
        let conv = match convolved {
            Some(c) => c,
            None => {
                owned = self.interaction_potentials(rhos);
                &owned
            }
        };
        for a in 0..n {
            let spec = &self.system.species[a];
            let r = rhos[a];
            let u: Vec<f64> = r.iter().map(|&s| spec.internal.value_unchecked(s)).collect();
            internal.push(pairwise_sum(&u) * vol);
            let v: Vec<f64> = r.iter().zip(&self.potentials[a]).map(|(s, v)| s * v).collect();
            potential.push(pairwise_sum(&v) * vol);
            let w: Vec<f64> = r.iter().zip(&conv[a]).map(|(s, c)| s * c).collect();
            interaction.push(0.5 * pairwise_sum(&w) * vol);
        }
        if self.system.epsilon > 0.0 {
            let local: Vec<f64> = (0..self.grid.len())
                .map(|i| {
                    let t: f64 = rhos.iter().map(|r| r[i]).sum();
                    t * t
                })
                .collect();
            interaction.push(0.5 * self.system.epsilon * pairwise_sum(&local) * vol);
        }
        Ok(EnergyBreakdown::new(
            pairwise_sum(&internal),
            pairwise_sum(&potential),
            pairwise_sum(&interaction),
        ))
    }

    pub fn energy(&self, rhos: &[&[f64]]) -> Result<EnergyBreakdown, EnergyError> {
        self.energy_with(rhos, None)
    }
}

/// Free energy of a single model.
pub fn free_energy(model: &ModelSpec, rho: &Field) -> Result<EnergyBreakdown, EnergyError> {
    SystemOperator::from_model(model, rho.grid())?.energy(&[rho.values()])
}

/// Free energy of a system; all fields must share one grid.
pub fn free_energy_system(system: &SystemSpec, state: &[Field]) -> Result<EnergyBreakdown, EnergyError> {
    let grid = common_grid(state)?;
    let rhos: Vec<&[f64]> = state.iter().map(Field::values).collect();
    SystemOperator::new(system, grid)?.energy(&rhos)
}

/// Interaction part only, including the local `ε` term.
pub fn interaction_energy_system(system: &SystemSpec, state: &[Field]) -> Result<f64, EnergyError> {
    Ok(free_energy_system(system, state)?.interaction)
}

fn common_grid(state: &[Field]) -> Result<&Grid, EnergyError> {
    let first = state.first().ok_or(MeshError::GridMismatch)?;
    if state.iter().any(|f| f.grid() != first.grid()) {
        return Err(MeshError::GridMismatch.into());
    }
    Ok(first.grid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energetics::{InternalEnergySpec, KernelSpec, PotentialSpec, SpeciesSpec};
    use crate::mesh::Boundary;
    use proptest::prelude::*;

    fn unit_line(n: usize) -> Grid {
        Grid::line(n, 0.0, 1.0, Boundary::NoFlux).unwrap()
    }

    #[test]
    fn all_zero_specs() {
        let g = unit_line(10);
        let m = ModelSpec::new(InternalEnergySpec::None, PotentialSpec::Zero, KernelSpec::Zero);
        let e = free_energy(&m, &Field::constant(&g, 1.0).unwrap()).unwrap();
        assert_eq!(e, EnergyBreakdown::default());
    }

    #[test]
    fn porous_medium_uniform() {
        let g = unit_line(10);
        let m = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, KernelSpec::Zero);
        let e = free_energy(&m, &Field::constant(&g, 1.0).unwrap()).unwrap();
        assert!((e.internal - 1.0).abs() < 1e-14);
        assert_eq!(e.total, e.internal);
    }

    #[test]
    fn quadratic_interaction_uniform() {
        // ½ ∬ (x-y)²/2 dx dy over the unit square is 1/24; the midpoint
        // double sum differs by ½·½·(2·dx²/12)
        for n in [16, 64, 256] {
            let g = unit_line(n);
            let dx = 1.0 / n as f64;
            let m = ModelSpec::new(InternalEnergySpec::None, PotentialSpec::Zero, KernelSpec::quadratic(1.0));
            let e = free_energy(&m, &Field::constant(&g, 1.0).unwrap()).unwrap();
            let discrete = 1.0 / 24.0 - dx * dx / 24.0;
            assert!((e.interaction - discrete).abs() < 1e-13, "n={n}");
            assert!((e.interaction - 1.0 / 24.0).abs() < dx * dx);
        }
    }

    #[test]
    fn negative_density_rejected() {
        let g = unit_line(4);
        let op = SystemOperator::from_model(&ModelSpec::heat(), &g).unwrap();
        assert!(matches!(
            op.energy(&[&[1.0, -0.5, 1.0, 1.0]]),
            Err(EnergyError::NegativeDensity { index: 1, .. })
        ));
    }

    #[test]
    fn interaction_is_symmetric_double_sum() {
        let g = Grid::line(9, -1.0, 1.0, Boundary::Periodic).unwrap();
        let conv = Convolution::new(&KernelSpec::Log { chi: 1.0 }, &g).unwrap();
        let a: Vec<f64> = (0..9).map(|i| 1.0 + (i as f64).sin().abs()).collect();
        let b: Vec<f64> = (0..9).map(|i| 0.5 + (i as f64 * 0.7).cos().abs()).collect();
        let ab: f64 = a.iter().zip(conv.apply_direct(&b)).map(|(x, y)| x * y).sum();
        let ba: f64 = b.iter().zip(conv.apply_direct(&a)).map(|(x, y)| x * y).sum();
        assert!((ab - ba).abs() < 1e-12 * ab.abs());
    }

    fn decoupled_pair() -> (ModelSpec, ModelSpec, SystemSpec) {
        let m1 = ModelSpec::new(
            InternalEnergySpec::Power { m: 2.0 },
            PotentialSpec::harmonic(),
            KernelSpec::Exponential { amplitude: 1.0, range: 0.3 },
        );
        let m2 = ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::Zero, KernelSpec::quadratic(0.5));
        let spec = |m: &ModelSpec| SpeciesSpec {
            internal: m.internal,
            potential: m.potential.clone(),
            mobility: m.mobility,
            mass: 1.0,
        };
        let sys = SystemSpec {
            species: vec![spec(&m1), spec(&m2)],
            coupling: vec![vec![m1.kernel.clone(), KernelSpec::Zero], vec![KernelSpec::Zero, m2.kernel.clone()]],
            epsilon: 0.0,
        };
        (m1, m2, sys)
    }

    proptest! {
        #[test]
        fn decoupled_system_is_sum_of_models(vals in prop::collection::vec(0.0f64..3.0, 32)) {
            let g = Grid::line(16, -1.0, 1.0, Boundary::NoFlux).unwrap();
            let f1 = Field::new(g.clone(), vals[..16].to_vec()).unwrap();
            let f2 = Field::new(g.clone(), vals[16..].to_vec()).unwrap();
            let (m1, m2, sys) = decoupled_pair();
            let e = free_energy_system(&sys, &[f1.clone(), f2.clone()]).unwrap();
            let sum = free_energy(&m1, &f1).unwrap().total + free_energy(&m2, &f2).unwrap().total;
            prop_assert!((e.total - sum).abs() <= 1e-12 * sum.abs().max(1.0));
        }

        #[test]
        fn total_is_sum_of_parts(vals in prop::collection::vec(0.0f64..3.0, 16)) {
            let g = Grid::line(16, -1.0, 1.0, Boundary::Periodic).unwrap();
            let f = Field::new(g, vals).unwrap();
            let (m1, _, _) = decoupled_pair();
            let e = free_energy(&m1, &f).unwrap();
            let s = e.internal + e.potential + e.interaction;
            prop_assert!((e.total - s).abs() <= 1e-14 * s.abs().max(1e-300));
        }
    }

    #[test]
    fn local_repulsion_term() {
        let g = unit_line(8);
        let mut sys = SystemSpec {
            species: vec![SpeciesSpec::inert(1.0), SpeciesSpec::inert(1.0)],
            coupling: vec![vec![KernelSpec::Zero; 2]; 2],
            epsilon: 2.0,
        };
        let f1 = Field::constant(&g, 1.0).unwrap();
        let f2 = Field::constant(&g, 2.0).unwrap();
        // (ε/2)·∫(1+2)² = 9
        let e = interaction_energy_system(&sys, &[f1.clone(), f2.clone()]).unwrap();
        assert!((e - 9.0).abs() < 1e-13);
        sys.epsilon = 0.0;
        assert_eq!(interaction_energy_system(&sys, &[f1, f2]).unwrap(), 0.0);
    }

    #[test]
    fn batched_potentials_match_single_convolutions() {
        let g = Grid::square(8, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let k11 = KernelSpec::Gaussian { amplitude: 1.0, width: 0.4 };
        let k12 = KernelSpec::Power { k: -0.5, chi: 0.3 };
        let sys = SystemSpec {
            species: vec![SpeciesSpec::inert(1.0), SpeciesSpec::inert(1.0)],
            coupling: vec![vec![k11.clone(), k12.clone()], vec![KernelSpec::Zero, KernelSpec::Zero]],
            epsilon: 0.0,
        };
        let op = SystemOperator::new(&sys, &g).unwrap();
        let r1 = Field::from_fn(&g, |x| 1.0 + x[0] * x[0]).unwrap();
        let r2 = Field::from_fn(&g, |x| (x[1] - x[0]).abs()).unwrap();
        let pots = op.interaction_potentials(&[r1.values(), r2.values()]);
        let a = Convolution::new(&k11, &g).unwrap().apply_direct(r1.values());
        let b = Convolution::new(&k12, &g).unwrap().apply_direct(r2.values());
        for i in 0..g.len() {
            assert!((pots[0][i] - a[i] - b[i]).abs() < 1e-12);
            assert_eq!(pots[1][i], 0.0);
        }
    }
}

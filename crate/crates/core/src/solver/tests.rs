use proptest::prelude::*;

use super::*;
use crate::energetics::{free_energy, InternalEnergySpec, KernelSpec, MobilitySpec, PotentialSpec, SpeciesSpec};
use crate::mesh::{Boundary, Grid};

fn line(n: usize, lo: f64, hi: f64, b: Boundary) -> Grid {
    Grid::line(n, lo, hi, b).unwrap()
}

fn drift_model(v: Vec<f64>) -> ModelSpec {
    ModelSpec::new(InternalEnergySpec::None, PotentialSpec::Table(v), KernelSpec::Zero)
}

fn aggregation_model() -> ModelSpec {
    ModelSpec::new(
        InternalEnergySpec::Power { m: 2.0 },
        PotentialSpec::harmonic(),
        KernelSpec::Exponential { amplitude: 1.0, range: 0.5 },
    )
}

fn bump(g: &Grid, c: f64, w: f64) -> Field {
    Field::from_fn(g, |x| 0.05 + (-(x[0] - c).powi(2) / (2.0 * w * w)).exp()).unwrap()
}

#[test]
fn uniform_density_has_no_flux() {
    let g = line(8, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 2.0).unwrap();
    let fa = assemble_flux(&ModelSpec::heat(), &rho, &rho).unwrap();
    assert!(fa.u[0].iter().all(|u| *u == 0.0));
    assert!(fa.flux[0].iter().all(|f| *f == 0.0));
}

#[test]
fn upwind_flux_formula() {
    let g = line(4, 0.0, 4.0, Boundary::NoFlux);
    let rho = Field::new(g.clone(), vec![2.0, 5.0, 1.0, 1.0]).unwrap();
    let fa = assemble_flux(&drift_model(vec![0.0, -3.0, -6.0, -9.0]), &rho, &rho).unwrap();
    assert_eq!(fa.u[0][0], 3.0);
    assert_eq!(fa.flux[0][0], 6.0);
    assert_eq!(fa.flux[0][3], 0.0);
    let fa = assemble_flux(&drift_model(vec![0.0, 3.0, 6.0, 9.0]), &rho, &rho).unwrap();
    assert_eq!(fa.u[0][0], -3.0);
    assert_eq!(fa.flux[0][0], -15.0);
}

#[test]
fn quadratic_potential_velocity_on_uniform_density() {
    let g = line(10, -1.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 1.0).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::power(2.0), KernelSpec::Zero);
    let fa = assemble_flux(&model, &rho, &rho).unwrap();
    let dx = g.axis(0).dx;
    for i in 0..9 {
        let (a, b) = (g.center(i)[0], g.center(i + 1)[0]);
        assert!((fa.u[0][i] + (b * b - a * a) / dx).abs() < 1e-12);
    }
}

#[test]
fn saturating_mobility_scales_flux() {
    let g = line(4, 0.0, 4.0, Boundary::NoFlux);
    let rho = Field::new(g, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
    let m = drift_model(vec![0.0, -3.0, -6.0, -9.0]).with_mobility(MobilitySpec::Saturating { rho_max: 2.0 });
    let fa = assemble_flux(&m, &rho, &rho).unwrap();
    assert_eq!(fa.flux[0][0], 1.5);
}

#[test]
fn empty_cells_with_linear_diffusion() {
    let g = line(6, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::new(g, vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]).unwrap();
    let fa = assemble_flux(&ModelSpec::heat(), &rho, &rho).unwrap();
    assert!(fa.xi.iter().all(|x| x.is_finite()));
    // nothing leaves an empty cell
    assert!(fa.flux[0][0] == 0.0);
    assert!(fa.flux[0][1] <= 0.0);
    assert!(fa.flux[0][4] == 0.0);
}

#[test]
fn rhs_zero_for_uniform_state() {
    let g = line(8, 0.0, 1.0, Boundary::Periodic);
    let rho = Field::constant(&g, 1.5).unwrap();
    assert!(rhs_semidiscrete(&ModelSpec::heat(), &rho).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn porous_medium_rhs_negative_at_peak() {
    let g = line(41, -1.0, 1.0, Boundary::NoFlux);
    let rho = Field::from_fn(&g, |x| (1.0 - 4.0 * x[0] * x[0]).max(0.0) + 0.1).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, KernelSpec::Zero);
    let rhs = rhs_semidiscrete(&model, &rho).unwrap();
    // central difference of (ρ²)_xx at the peak is negative as well
    let dx = g.axis(0).dx;
    let v = rho.values();
    let lap = (v[21] * v[21] - 2.0 * v[20] * v[20] + v[19] * v[19]) / (dx * dx);
    assert!(lap < 0.0);
    assert!(rhs[20] < 0.0);
}

proptest! {
    #[test]
    fn rhs_conserves_mass(vals in prop::collection::vec(0.01f64..4.0, 16), periodic in any::<bool>()) {
        let b = if periodic { Boundary::Periodic } else { Boundary::NoFlux };
        let g = line(16, -2.0, 2.0, b);
        let rho = Field::new(g.clone(), vals).unwrap();
        let rhs = rhs_semidiscrete(&aggregation_model(), &rho).unwrap();
        let s: f64 = rhs.iter().sum::<f64>() * g.axis(0).dx;
        let norm: f64 = rho.values().iter().map(|v| v.abs()).sum();
        prop_assert!(s.abs() <= 1e-13 * norm.max(1.0) * 10.0);
    }

    #[test]
    fn implicit_step_positive_conservative_dissipative(
        vals in prop::collection::vec(0.0f64..3.0, 24),
        dt in 1e-4f64..0.5,
        periodic in any::<bool>(),
    ) {
        let b = if periodic { Boundary::Periodic } else { Boundary::NoFlux };
        let g = line(24, -2.0, 2.0, b);
        let mut vals = vals;
        vals[7] += 0.5;
        let rho = Field::new(g, vals).unwrap();
        let cfg = SolverConfig::default();
        let (next, rep) = step_implicit(&aggregation_model(), &rho, dt, &cfg).unwrap();
        prop_assert!(next.min() >= 0.0);
        let (m0, m1) = (rho.mass(), next.mass());
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
        prop_assert!(rep.dissipation_bound <= 0.0);
        prop_assert!(rep.energy_drop / rep.dt_used <= rep.dissipation_bound + 10.0 * cfg.picard_tol);
        prop_assert!(rep.monotone);
    }
}

#[test]
fn implicit_uniform_periodic_is_fixed_point() {
    let g = line(16, 0.0, 1.0, Boundary::Periodic);
    let rho = Field::constant(&g, 0.7).unwrap();
    let (next, rep) = step_implicit(&ModelSpec::heat(), &rho, 0.1, &SolverConfig::default()).unwrap();
    assert_eq!(next, rho);
    assert_eq!(rep.picard_iters, 1);
}

#[test]
fn implicit_heat_decreases_energy() {
    let g = line(64, -4.0, 4.0, Boundary::NoFlux);
    let rho = Field::from_fn(&g, |x| (-x[0] * x[0]).exp()).unwrap();
    let mut state = rho.clone();
    let model = ModelSpec::heat();
    let mut e = free_energy(&model, &state).unwrap().total;
    for _ in 0..10 {
        let (next, rep) = step_implicit(&model, &state, 0.05, &SolverConfig::default()).unwrap();
        let e1 = free_energy(&model, &next).unwrap().total;
        assert!(e1 <= e);
        assert!((e1 - e - rep.energy_drop).abs() < 1e-12);
        assert!(rep.monotone);
        e = e1;
        state = next;
    }
}

#[test]
fn implicit_without_newton_agrees() {
    let g = line(32, -2.0, 2.0, Boundary::NoFlux);
    let rho = bump(&g, 0.3, 0.4);
    let with = SolverConfig::default();
    let without = SolverConfig { newton: false, ..with.clone() };
    // small enough for the plain fixed-point map to contract
    let dt = 5e-4;
    let (a, ra) = step_implicit(&aggregation_model(), &rho, dt, &with).unwrap();
    let (b, rb) = step_implicit(&aggregation_model(), &rho, dt, &without).unwrap();
    assert_eq!((ra.dt_used, rb.dt_used), (dt, dt));
    assert!(a.l1_distance(&b).unwrap() < 1e-8);
    assert!(ra.picard_iters <= rb.picard_iters);
}

#[test]
fn translation_equivariance_is_exact_without_interaction() {
    let g = line(32, 0.0, 1.0, Boundary::Periodic);
    let rho = Field::from_fn(&g, |x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin().powi(3)).unwrap();
    let mut shifted = rho.values().to_vec();
    shifted.rotate_right(1);
    let shifted = Field::new(g, shifted).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Power { m: 3.0 }, PotentialSpec::Zero, KernelSpec::Zero);
    let cfg = SolverConfig::default();
    let (a, _) = step_implicit(&model, &rho, 0.01, &cfg).unwrap();
    let (b, _) = step_implicit(&model, &shifted, 0.01, &cfg).unwrap();
    let mut a = a.into_values();
    a.rotate_right(1);
    assert_eq!(a, b.into_values());
}

#[test]
fn translation_equivariance_with_interaction() {
    let g = line(32, 0.0, 1.0, Boundary::Periodic);
    let rho = Field::from_fn(&g, |x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin().powi(3)).unwrap();
    let mut shifted = rho.values().to_vec();
    shifted.rotate_right(1);
    let shifted = Field::new(g, shifted).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::Zero, KernelSpec::Gaussian { amplitude: 2.0, width: 0.1 });
    let cfg = SolverConfig::default();
    let (a, _) = step_implicit(&model, &rho, 0.01, &cfg).unwrap();
    let (b, _) = step_implicit(&model, &shifted, 0.01, &cfg).unwrap();
    let mut a = a.into_values();
    a.rotate_right(1);
    for (x, y) in a.iter().zip(b.values()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn explicit_identity_on_zero_rhs() {
    let g = line(8, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 1.0).unwrap();
    let cfg = SolverConfig { time_integrator: TimeIntegrator::ExplicitRk2, ..SolverConfig::default() };
    let (next, _) = step_explicit(&ModelSpec::heat(), &rho, 0.01, &cfg).unwrap();
    assert_eq!(next, rho);
}

#[test]
fn explicit_heat_positive_and_conservative() {
    let g = line(50, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::from_fn(&g, |x| 0.01 + (-(x[0] - 0.5).powi(2) * 50.0).exp()).unwrap();
    let model = ModelSpec::heat();
    let dx = g.axis(0).dx;
    let cfg = SolverConfig { time_integrator: TimeIntegrator::ExplicitEuler, ..SolverConfig::default() };
    let mut state = rho.clone();
    for _ in 0..20 {
        let limit = Solver::for_model(&model, &g, 1.0, cfg.clone()).unwrap().explicit_limit(&[state.values()]).unwrap();
        let dt = (0.4 * dx * dx / 2.0).min(0.9 * limit);
        let (next, rep) = step_explicit(&model, &state, dt, &cfg).unwrap();
        assert!(next.min() > 0.0);
        assert!((next.mass() - rho.mass()).abs() <= 1e-13 * rho.mass());
        assert!(rep.monotone);
        state = next;
    }
}

#[test]
fn explicit_rejects_unstable_step() {
    let g = line(20, 0.0, 1.0, Boundary::NoFlux);
    let rho = bump(&g, 0.5, 0.1);
    let cfg = SolverConfig { time_integrator: TimeIntegrator::ExplicitEuler, ..SolverConfig::default() };
    let err = step_explicit(&ModelSpec::heat(), &rho, 1.0, &cfg).unwrap_err();
    assert!(matches!(err, SolverError::StabilityViolated { .. }));
}

#[test]
fn adaptive_dt_examples() {
    let g = line(10, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 1.0).unwrap();
    let dt = adaptive_dt(&ModelSpec::heat(), &rho, 0.5).unwrap();
    assert!((dt - 0.0025).abs() < 1e-15);
    let v: Vec<f64> = (0..10).map(|i| -2.0 * g.center(i)[0]).collect();
    let dt = adaptive_dt(&drift_model(v.clone()), &rho, 0.9).unwrap();
    assert!((dt - 0.045).abs() < 1e-12);
    let both = ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::Table(v), KernelSpec::Zero);
    let dt = adaptive_dt(&both, &rho, 0.5).unwrap();
    assert!((dt - 0.0025).abs() < 1e-15);
    let idle = ModelSpec::new(InternalEnergySpec::None, PotentialSpec::Zero, KernelSpec::Zero);
    assert_eq!(adaptive_dt(&idle, &rho, 0.5).unwrap(), SolverConfig::default().dt_max);
}

#[test]
fn implicit_adaptive_dt_is_relaxed() {
    let g = line(10, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 1.0).unwrap();
    let s = Solver::for_model(&ModelSpec::heat(), &g, 1.0, SolverConfig::default()).unwrap();
    assert!((s.adaptive_dt(&[rho.values()]).unwrap() - 0.05).abs() < 1e-15);
}

fn square(n: usize, b: Boundary) -> Grid {
    Grid::square(n, -1.0, 1.0, b).unwrap()
}

#[test]
fn split_uniform_periodic_identity() {
    let g = square(8, Boundary::Periodic);
    let rho = Field::constant(&g, 1.0).unwrap();
    let (next, _) = step_2d_split(&ModelSpec::heat(), &rho, 0.1, &SolverConfig::default()).unwrap();
    assert_eq!(next, rho);
}

#[test]
fn split_axis0_invariant_datum_only_moves_along_axis1() {
    // ρ depends on x1 only: the axis-0 sweep leaves it unchanged, so the
    // split step equals the 1D step along axis 1 on every line
    let g = square(8, Boundary::NoFlux);
    let rho = Field::from_fn(&g, |x| 1.0 + x[1] * x[1]).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, KernelSpec::Zero);
    let (next, _) = step_2d_split(&model, &rho, 0.01, &SolverConfig::default()).unwrap();
    let g1 = line(8, -1.0, 1.0, Boundary::NoFlux);
    let r1 = Field::from_fn(&g1, |x| 1.0 + x[0] * x[0]).unwrap();
    let (n1, _) = step_implicit(&model, &r1, 0.01, &SolverConfig::default()).unwrap();
    for i0 in 0..8 {
        for i1 in 0..8 {
            let v = next.values()[g.ravel([i0, i1])];
            assert!((v - n1.values()[i1]).abs() < 1e-12);
        }
    }
}

#[test]
fn split_radial_datum_is_swap_symmetric() {
    // Lie splitting breaks the axis symmetry at O(dt²) per step
    let g = square(16, Boundary::NoFlux);
    let rho = Field::from_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1]) * 4.0).exp() + 0.01).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Linear, PotentialSpec::harmonic(), KernelSpec::Gaussian { amplitude: 1.0, width: 0.5 });
    let (next, rep) = step_2d_split(&model, &rho, 1e-5, &SolverConfig::default()).unwrap();
    assert!(rep.monotone);
    for i0 in 0..16 {
        for i1 in 0..16 {
            let a = next.values()[g.ravel([i0, i1])];
            let b = next.values()[g.ravel([i1, i0])];
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert!((next.mass() - rho.mass()).abs() < 1e-12 * rho.mass());
}

#[test]
fn split_requires_2d() {
    let g = line(8, 0.0, 1.0, Boundary::NoFlux);
    let rho = Field::constant(&g, 1.0).unwrap();
    assert!(step_2d_split(&ModelSpec::heat(), &rho, 0.1, &SolverConfig::default()).is_err());
}

fn two_species(w12: KernelSpec, w21: KernelSpec, eps: f64) -> SystemSpec {
    let sp = SpeciesSpec {
        internal: InternalEnergySpec::Power { m: 2.0 },
        potential: PotentialSpec::Zero,
        mobility: MobilitySpec::Linear,
        mass: 1.0,
    };
    let self_k = KernelSpec::Exponential { amplitude: 1.0, range: 0.3 };
    SystemSpec {
        species: vec![sp.clone(), sp],
        coupling: vec![vec![self_k.clone(), w12], vec![w21, self_k]],
        epsilon: eps,
    }
}

#[test]
fn decoupled_system_matches_scalar_steps() {
    let g = line(32, -2.0, 2.0, Boundary::NoFlux);
    let sys = two_species(KernelSpec::Zero, KernelSpec::Zero, 0.0);
    let a = bump(&g, -0.5, 0.3);
    let b = bump(&g, 0.7, 0.2);
    let cfg = SolverConfig::default();
    let (out, reps) = system_step(&sys, &[a.clone(), b.clone()], 0.01, &cfg).unwrap();
    let model = ModelSpec::new(InternalEnergySpec::Power { m: 2.0 }, PotentialSpec::Zero, sys.coupling[0][0].clone());
    let (sa, _) = step_implicit(&model, &a, 0.01, &cfg).unwrap();
    let (sb, _) = step_implicit(&model, &b, 0.01, &cfg).unwrap();
    assert!(out[0].l1_distance(&sa).unwrap() < 1e-8);
    assert!(out[1].l1_distance(&sb).unwrap() < 1e-8);
    assert_eq!(reps.len(), 2);
}

#[test]
fn coupled_system_conserves_each_species() {
    let g = line(40, -2.0, 2.0, Boundary::NoFlux);
    let w = KernelSpec::Gaussian { amplitude: 0.5, width: 0.4 };
    let sys = two_species(w.clone(), w, 0.3);
    let mut state = vec![bump(&g, -0.5, 0.3), bump(&g, 0.7, 0.2)];
    let m0: Vec<f64> = state.iter().map(Field::mass).collect();
    for _ in 0..5 {
        let (out, reps) = system_step(&sys, &state, 0.02, &SolverConfig::default()).unwrap();
        assert!(reps[0].monotone);
        state = out;
    }
    for (f, m) in state.iter().zip(m0) {
        assert!((f.mass() - m).abs() <= 1e-12 * m * 5.0);
        assert!(f.min() >= 0.0);
    }
}

#[test]
fn mirrored_system_stays_mirrored() {
    let g = line(40, -2.0, 2.0, Boundary::NoFlux);
    let w = KernelSpec::Gaussian { amplitude: 0.5, width: 0.4 };
    let sys = two_species(w.clone(), w, 0.2);
    let a = bump(&g, -0.6, 0.3);
    let mut rev = a.values().to_vec();
    rev.reverse();
    let b = Field::new(g, rev).unwrap();
    let mut state = vec![a, b];
    for _ in 0..5 {
        state = system_step(&sys, &state, 0.02, &SolverConfig::default()).unwrap().0;
    }
    let mut rev = state[1].values().to_vec();
    rev.reverse();
    for (x, y) in state[0].values().iter().zip(rev) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn asymmetric_system_is_not_a_gradient_flow() {
    let g = line(16, -1.0, 1.0, Boundary::NoFlux);
    let sys = two_species(KernelSpec::Gaussian { amplitude: 1.0, width: 0.3 }, KernelSpec::Gaussian { amplitude: -1.0, width: 0.3 }, 0.0);
    let s = Solver::new(&sys, &g, SolverConfig::default()).unwrap();
    assert!(!s.is_gradient_flow());
}

#[test]
fn state_mismatch_rejected() {
    let g = line(16, -1.0, 1.0, Boundary::NoFlux);
    let sys = two_species(KernelSpec::Zero, KernelSpec::Zero, 0.0);
    let f = Field::constant(&g, 1.0).unwrap();
    assert!(matches!(
        system_step(&sys, &[f], 0.1, &SolverConfig::default()),
        Err(SolverError::StateMismatch(_))
    ));
}

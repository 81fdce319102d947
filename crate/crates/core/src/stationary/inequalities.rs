//! Interpolated HLS and reversed HLS ratios, the critical interaction
//! strength of fair competition, and shape diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StationaryError;
use crate::energetics::{Convolution, InternalEnergySpec, KernelSpec, ModelSpec, PotentialSpec, SystemOperator};
use crate::mesh::{pairwise_sum, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs_without_constant: f64,
    /// `lhs / rhs_without_constant`, reported as 0 when both vanish.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concentration {
    Concentrating,
    Integrable,
    Undecided,
}

/// Sum in sorted order: the result depends on the multiset of terms only,
/// so permuting cells (a periodic shift) gives the same bits.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    pairwise_sum(&v)
}

/// `∬ f(x) |x-y|^k f(y)` with the cell weights of the power kernel.
fn power_pair_integral(f: &Field, k: f64) -> Result<f64, StationaryError> {
    let conv = Convolution::new(&KernelSpec::Power { k, chi: 1.0 }, f.grid())?;
    let w = conv.apply_direct(f.values());
    let terms = f.values().iter().zip(&w).map(|(a, b)| a * b).collect();
    Ok(k * sorted_sum(terms) * f.grid().cell_volume())
}

fn lp_power(f: &Field, p: f64) -> f64 {
    sorted_sum(f.values().iter().map(|v| v.powf(p)).collect()) * f.grid().cell_volume()
}

fn l1(f: &Field) -> f64 {
    sorted_sum(f.values().to_vec()) * f.grid().cell_volume()
}

fn finish(lhs: f64, rhs: f64) -> InequalityCheck {
    InequalityCheck {
        lhs,
        rhs_without_constant: rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    }
}

/// `|∬ f|x-y|^k f| ≤ C_* ‖f‖₁^{(d+k)/d} ‖f‖_m^m` for `d(m-1) + k = 0`.
pub fn check_hls_variant(f: &Field, k: f64, m: f64) -> Result<InequalityCheck, StationaryError> {
    let d = f.grid().dims() as f64;
    if !(k > -d && k < 0.0) || !(m > 1.0 && m < 2.0) || (d * (m - 1.0) + k).abs() > 1e-12 {
        return Err(StationaryError::InvalidParameters(format!(
            "need k in (-d, 0), m in (1, 2) and d(m-1) + k = 0; got d = {d}, k = {k}, m = {m}"
        )));
    }
    let lhs = power_pair_integral(f, k)?.abs();
    let rhs = l1(f).powf((d + k) / d) * lp_power(f, m);
    Ok(finish(lhs, rhs))
}

/// Exponent `α` of the reversed inequality, fixed by requiring both sides
/// to scale alike under `f ↦ λ^d f(λ·)`: the left side scales as `λ^{-k}`,
/// `∫f^m` as `λ^{d(m-1)}`, hence `(2-α) d(m-1)/m = -k`.
pub fn rhls_exponent(k: f64, m: f64, d: usize) -> f64 {
    let d = d as f64;
    (2.0 * d - m * (2.0 * d + k)) / (d * (1.0 - m))
}

/// `∬ f|x-y|^k f ≥ C (∫f)^α (∫f^m)^{(2-α)/m}` for `k > 0`, `d/(d+k) < m < 1`.
pub fn check_rhls(f: &Field, k: f64, m: f64) -> Result<InequalityCheck, StationaryError> {
    let dims = f.grid().dims();
    let d = dims as f64;
    if !(k > 0.0 && k.is_finite()) || !(m > d / (d + k) && m < 1.0) {
        return Err(StationaryError::InvalidParameters(format!(
            "need k > 0 and d/(d+k) < m < 1; got d = {d}, k = {k}, m = {m}"
        )));
    }
    let alpha = rhls_exponent(k, m, dims);
    let lhs = power_pair_integral(f, k)?;
    let mass = l1(f);
    let rhs = if mass > 0.0 {
        mass.powf(alpha) * lp_power(f, m).powf((2.0 - alpha) / m)
    } else {
        0.0
    };
    Ok(finish(lhs, rhs))
}

/// Largest HLS ratio over `family`, a lower estimate of `C_*`.
pub fn estimate_hls_constant(family: &[Field], k: f64, m: f64) -> Result<f64, StationaryError> {
    family
        .iter()
        .map(|f| check_hls_variant(f, k, m).map(|c| c.ratio))
        .try_fold(0.0f64, |acc, r| r.map(|r| acc.max(r)))
}

/// Smallest reversed HLS ratio over `family`, an upper estimate of the
/// optimal constant.
pub fn estimate_rhls_constant(family: &[Field], k: f64, m: f64) -> Result<f64, StationaryError> {
    family
        .iter()
        .map(|f| check_rhls(f, k, m).map(|c| c.ratio))
        .try_fold(f64::INFINITY, |acc, r| r.map(|r| acc.min(r)))
}

/// Critical strength of the fair-competition model: the infimum over the
/// unit-mass normalised `family` of `∫U(ρ) / (-½∬ρ(|x-y|^k/k)ρ)`, i.e. the
/// largest `χ` keeping the free energy of every member non-negative.
pub fn estimate_chi_c(m: f64, k: f64, d: usize, family: &[Field]) -> Result<f64, StationaryError> {
    let df = d as f64;
    if !(m > 1.0 && k < 0.0 && k > -df) || (k - (1.0 - m) * df).abs() > 1e-12 {
        return Err(StationaryError::InvalidParameters(format!(
            "estimate_chi_c needs fair-competition parameters k = (1-m)d, got m = {m}, k = {k}, d = {d}"
        )));
    }
    if family.is_empty() {
        return Err(StationaryError::InvalidParameters("empty family".into()));
    }
    let model = ModelSpec::new(InternalEnergySpec::Power { m }, PotentialSpec::Zero, KernelSpec::Power { k, chi: 1.0 });
    let mut best = f64::INFINITY;
    for f in family {
        if f.grid().dims() != d {
            return Err(StationaryError::InvalidParameters(format!(
                "family member on a {}D grid, expected {d}D",
                f.grid().dims()
            )));
        }
        if !(f.mass() > 0.0) {
            return Err(StationaryError::InvalidParameters("family member has zero mass".into()));
        }
        let unit = f.clone().with_mass(1.0);
        let e = SystemOperator::from_model(&model, unit.grid())?.energy(&[unit.values()])?;
        if e.interaction < 0.0 {
            best = best.min(e.internal / -e.interaction);
        }
    }
    Ok(best)
}

/// Test profiles on `grid`, each of unit mass: centred Gaussians of three
/// widths, a Barenblatt-type profile for exponent `m`, then `extra`
/// seeded mixtures of one to three Gaussians.
pub fn candidate_family(grid: &Grid, m: f64, extra: usize, seed: u64) -> Result<Vec<Field>, StationaryError> {
    let dims = grid.dims();
    let c = grid.domain_center();
    let len = (0..dims).map(|a| grid.axis(a).length()).fold(f64::INFINITY, f64::min);
    let r2 = |x: [f64; 2], y: [f64; 2]| (0..dims).map(|a| (x[a] - y[a]).powi(2)).sum::<f64>();
    let gaussian = |centre: [f64; 2], w: f64| move |x: [f64; 2]| (-r2(x, centre) / (2.0 * w * w)).exp();

    let mut out = Vec::new();
    for w in [len / 24.0, len / 12.0, len / 6.0] {
        out.push(Field::from_fn(grid, gaussian(c, w))?.with_mass(1.0));
    }
    let radius = len / 4.0;
    let barenblatt = Field::from_fn(grid, |x| {
        let s = r2(x, c) / (radius * radius);
        if m > 1.0 {
            (1.0 - s).max(0.0).powf(1.0 / (m - 1.0))
        } else {
            (1.0 + 16.0 * s).powf(-1.0 / (1.0 - m))
        }
    })?;
    out.push(barenblatt.with_mass(1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let parts = rng.gen_range(1..=3);
        let bumps: Vec<([f64; 2], f64, f64)> = (0..parts)
            .map(|_| {
                let mut centre = c;
                for a in 0..dims {
                    centre[a] += rng.gen_range(-0.25..0.25) * len;
                }
                (centre, rng.gen_range(len / 32.0..len / 6.0), rng.gen_range(0.2..1.0))
            })
            .collect();
        let f = Field::from_fn(grid, |x| {
            bumps.iter().map(|(centre, w, a)| a * gaussian(*centre, *w)(x)).sum()
        })?;
        out.push(f.with_mass(1.0));
    }
    Ok(out)
}

/// Whether a profile computed on successive refinements carries a point
/// mass: fits the peak-cell mass against `Δx` on a log-log scale. An
/// exponent below 0.5 means concentrating, at least 0.8 integrable.
pub fn concentration_indicator(results: &[Field]) -> Result<Concentration, StationaryError> {
    if results.len() < 3 {
        return Err(StationaryError::InvalidParameters(format!(
            "need at least 3 refinements, got {}",
            results.len()
        )));
    }
    let mut pts = Vec::with_capacity(results.len());
    for f in results {
        let peak = f.max() * f.grid().cell_volume();
        if !(peak > 0.0) {
            return Err(StationaryError::EmptySupport);
        }
        pts.push((f.grid().min_dx().ln(), peak.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(StationaryError::InvalidParameters("refinements share one cell size".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Ok(if slope < 0.5 {
        Concentration::Concentrating
    } else if slope >= 0.8 {
        Concentration::Integrable
    } else {
        Concentration::Undecided
    })
}

/// True iff cell values ordered by distance from `center` never increase
/// by more than `1e-8 · max ρ`.
pub fn radial_monotonicity_check(rho: &Field, center: &[f64]) -> bool {
    let grid = rho.grid();
    let tol = 1e-8 * rho.max();
    let mut cells: Vec<(f64, f64)> = (0..rho.len())
        .map(|i| {
            let x = grid.center(i);
            let r2: f64 = (0..grid.dims()).map(|a| (x[a] - center.get(a).copied().unwrap_or(0.0)).powi(2)).sum();
            (r2, rho.values()[i])
        })
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    cells.windows(2).all(|w| w[1].1 <= w[0].1 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{moment, Boundary};

    fn bump(g: &Grid, c: f64, w: f64) -> Field {
        Field::from_fn(g, |x| (-(x[0] - c).powi(2) / (2.0 * w * w)).exp()).unwrap()
    }

    #[test]
    fn hls_zero_field() {
        let g = Grid::line(32, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let c = check_hls_variant(&Field::zeros(&g), -0.5, 1.5).unwrap();
        assert_eq!(c, InequalityCheck { lhs: 0.0, rhs_without_constant: 0.0, ratio: 0.0 });
    }

    #[test]
    fn hls_rejects_wrong_exponents() {
        let g = Grid::line(32, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let f = bump(&g, 0.0, 0.2);
        assert!(check_hls_variant(&f, -0.5, 1.4).is_err());
        assert!(check_hls_variant(&f, 0.5, 0.5).is_err());
    }

    #[test]
    fn hls_ratio_is_dilation_invariant() {
        let g = Grid::line(1024, -8.0, 8.0, Boundary::NoFlux).unwrap();
        let base = |x: f64| (-x * x).exp() + 0.5 * (-(x - 1.0).powi(2) * 4.0).exp();
        let f1 = Field::from_fn(&g, |x| base(x[0])).unwrap();
        let f2 = Field::from_fn(&g, |x| 2.0 * base(2.0 * x[0])).unwrap();
        let r1 = check_hls_variant(&f1, -0.5, 1.5).unwrap().ratio;
        let r2 = check_hls_variant(&f2, -0.5, 1.5).unwrap().ratio;
        assert!((r1 - r2).abs() < 0.02 * r1, "{r1} {r2}");
        // mass homogeneity
        let f3 = Field::new(g.clone(), f1.values().iter().map(|v| 3.0 * v).collect()).unwrap();
        let r3 = check_hls_variant(&f3, -0.5, 1.5).unwrap().ratio;
        assert!((r1 - r3).abs() < 1e-12 * r1);
    }

    #[test]
    fn hls_ratio_is_translation_invariant_exactly() {
        let g = Grid::line(64, 0.0, 1.0, Boundary::Periodic).unwrap();
        let v: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 + 0.5).sqrt()).collect();
        let f = Field::new(g.clone(), v.clone()).unwrap();
        let r = check_hls_variant(&f, -0.5, 1.5).unwrap();
        for s in [1, 5, 33] {
            let shifted: Vec<f64> = (0..64).map(|i| v[(i + 64 - s) % 64]).collect();
            let rs = check_hls_variant(&Field::new(g.clone(), shifted).unwrap(), -0.5, 1.5).unwrap();
            assert_eq!(r, rs);
        }
        let g2 = Grid::square(12, 0.0, 1.0, Boundary::Periodic).unwrap();
        let v2: Vec<f64> = (0..144).map(|i| ((i * 53 % 17) as f64 + 0.25).ln_1p()).collect();
        let r2 = check_hls_variant(&Field::new(g2.clone(), v2.clone()).unwrap(), -1.0, 1.5).unwrap();
        let shifted: Vec<f64> = (0..144)
            .map(|i| {
                let (a, b) = (i / 12, i % 12);
                v2[((a + 12 - 3) % 12) * 12 + (b + 12 - 7) % 12]
            })
            .collect();
        let rs = check_hls_variant(&Field::new(g2, shifted).unwrap(), -1.0, 1.5).unwrap();
        assert_eq!(r2, rs);
    }

    #[test]
    fn hls_constant_bounds_the_family() {
        let g = Grid::line(256, -4.0, 4.0, Boundary::NoFlux).unwrap();
        let fam = candidate_family(&g, 1.5, 100, 7).unwrap();
        let c = estimate_hls_constant(&fam, -0.5, 1.5).unwrap();
        assert!(c > 0.0);
        for f in &fam {
            assert!(check_hls_variant(f, -0.5, 1.5).unwrap().ratio <= c);
        }
    }

    #[test]
    fn rhls_exponent_matches_dilation() {
        for (k, m, d) in [(1.0, 0.7, 1usize), (2.0, 0.8, 2), (3.0, 0.5, 1)] {
            let a = rhls_exponent(k, m, d);
            assert!(((2.0 - a) * d as f64 * (m - 1.0) / m + k).abs() < 1e-12);
        }
    }

    #[test]
    fn rhls_quadratic_moment_identity() {
        let g = Grid::line(200, -3.0, 3.0, Boundary::NoFlux).unwrap();
        let f = bump(&g, 0.0, 0.4).with_mass(1.0);
        let c = check_rhls(&f, 2.0, 0.8).unwrap();
        let m2 = moment(&f, 2, &[0.0]).unwrap();
        assert!((c.lhs - 2.0 * m2).abs() < 1e-12);

        let two = Field::from_fn(&g, |x| {
            if (x[0].abs() - 1.0).abs() < 0.02 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let c = check_rhls(&two, 2.0, 0.8).unwrap();
        let (m0, m1, m2) = (
            two.mass(),
            two.values().iter().enumerate().map(|(i, v)| v * g.center(i)[0]).sum::<f64>() * g.axis(0).dx,
            moment(&two, 2, &[0.0]).unwrap(),
        );
        assert!((c.lhs - (2.0 * m0 * m2 - 2.0 * m1 * m1)).abs() < 1e-10, "{} {} {} {}", c.lhs, m0, m1, m2);
    }

    #[test]
    fn rhls_dilation_invariance() {
        let g = Grid::line(1024, -8.0, 8.0, Boundary::NoFlux).unwrap();
        let f1 = bump(&g, 0.3, 0.5);
        let f2 = Field::from_fn(&g, |x| 2.0 * (-(2.0 * x[0] - 0.3).powi(2) / 0.5).exp()).unwrap();
        let r1 = check_rhls(&f1, 1.0, 0.7).unwrap().ratio;
        let r2 = check_rhls(&f2, 1.0, 0.7).unwrap().ratio;
        assert!((r1 - r2).abs() < 0.02 * r1, "{r1} {r2}");
        assert!(check_rhls(&f1, 1.0, 0.4).is_err());
    }

    #[test]
    fn chi_c_estimate_is_monotone_in_the_family() {
        let g = Grid::line(256, -4.0, 4.0, Boundary::NoFlux).unwrap();
        let fam = candidate_family(&g, 1.5, 20, 3).unwrap();
        let one = estimate_chi_c(1.5, -0.5, 1, &fam[..1]).unwrap();
        let some = estimate_chi_c(1.5, -0.5, 1, &fam[..4]).unwrap();
        let all = estimate_chi_c(1.5, -0.5, 1, &fam).unwrap();
        assert!(one.is_finite() && one > 0.0);
        assert!(some <= one && all <= some);
        assert!(estimate_chi_c(2.0, -0.5, 1, &fam).is_err());
    }

    #[test]
    fn concentration_examples() {
        let grids: Vec<Grid> = [32, 64, 128, 256]
            .iter()
            .map(|&n| Grid::line(n, -1.0, 1.0, Boundary::NoFlux).unwrap())
            .collect();
        let smooth: Vec<Field> = grids.iter().map(|g| bump(g, 0.0, 0.3)).collect();
        assert_eq!(concentration_indicator(&smooth).unwrap(), Concentration::Integrable);
        let dirac: Vec<Field> = grids
            .iter()
            .map(|g| {
                let dx = g.axis(0).dx;
                let i = g.locate(&[0.0]).unwrap();
                let mut v: Vec<f64> = bump(g, 0.0, 0.3).with_mass(0.7).into_values();
                v[i] += 0.3 / dx;
                Field::new(g.clone(), v).unwrap()
            })
            .collect();
        assert_eq!(concentration_indicator(&dirac).unwrap(), Concentration::Concentrating);
        assert!(concentration_indicator(&smooth[..2]).is_err());
    }

    #[test]
    fn radial_monotonicity_examples() {
        let g = Grid::square(33, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let gauss = Field::from_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1]) * 3.0).exp()).unwrap();
        assert!(radial_monotonicity_check(&gauss, &[0.0, 0.0]));
        let two = Field::from_fn(&g, |x| (-((x[0] - 0.5).powi(2) + x[1] * x[1]) * 20.0).exp() + (-((x[0] + 0.5).powi(2) + x[1] * x[1]) * 20.0).exp()).unwrap();
        assert!(!radial_monotonicity_check(&two, &[0.0, 0.0]));
        assert!(radial_monotonicity_check(&Field::constant(&g, 1.0).unwrap(), &[0.3, 0.1]));
    }

    #[test]
    fn family_members_have_unit_mass() {
        let g = Grid::square(24, -2.0, 2.0, Boundary::NoFlux).unwrap();
        for f in candidate_family(&g, 0.7, 5, 1).unwrap() {
            assert!((f.mass() - 1.0).abs() < 1e-12);
        }
    }
}

//! Minimising movements `argmin d₂²(ρ, ρ_k)/(2Δt) + 𝓕[ρ]` in quantile
//! coordinates.
//!
//! `M` points `q_j` each carry mass `h = mass/M`; the density between
//! neighbours is `h/(q_{j+1} - q_j)`. Then
//! `𝓕 = Σ Δ_j U(h/Δ_j) + h Σ V(q_j) + ½ h² Σ_{i≠j} W(q_i - q_j)` and the
//! transport term is `h/(2Δt) Σ (q_j - q^k_j)²`.

use super::{to_quantiles, QuantileRep, TransportError};
use crate::energetics::{InternalEnergySpec, ModelSpec, PotentialSpec};
use crate::mesh::{pairwise_sum, Field, Grid};

const JKO_TOL: f64 = 1e-12;
const JKO_MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct JkoStep {
    pub density: Field,
    pub quantiles: QuantileRep,
    /// Objective at the minimiser and at `ρ_k` (where it equals `𝓕[ρ_k]`).
    pub objective: f64,
    pub initial_objective: f64,
    /// `𝓕` at the minimiser, in quantile coordinates.
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_model(model: &ModelSpec) -> Result<(), TransportError> {
    model.validate()?;
    if matches!(model.potential, PotentialSpec::Table(_)) {
        return Err(TransportError::Unsupported("tabulated potentials have no point values".into()));
    }
    if model.kernel.radial_derivative(1.0).is_none() {
        return Err(TransportError::Unsupported("kernel has no pointwise derivative".into()));
    }
    Ok(())
}

/// `Δ U(h/Δ)`; infinite for crossed points and for collisions unless the
/// internal energy vanishes there.
fn cell_internal(internal: &InternalEnergySpec, h: f64, gap: f64) -> f64 {
    if gap < 0.0 {
        return f64::INFINITY;
    }
    if gap == 0.0 {
        return match internal {
            InternalEnergySpec::None => 0.0,
            InternalEnergySpec::Power { m } if *m < 1.0 => 0.0,
            _ => f64::INFINITY,
        };
    }
    gap * internal.value_unchecked(h / gap)
}

/// Free energy of a quantile configuration of total mass `mass`.
pub fn quantile_energy(q: &[f64], mass: f64, model: &ModelSpec) -> f64 {
    let h = mass / q.len() as f64;
    let mut terms = Vec::with_capacity(2 * q.len());
    if !model.internal.is_none() {
        for w in q.windows(2) {
            terms.push(cell_internal(&model.internal, h, w[1] - w[0]));
        }
    }
    if !model.potential.is_zero() {
        for x in q {
            terms.push(h * model.potential.value_at(&[*x]).unwrap_or(0.0));
        }
    }
    if !model.kernel.is_zero() {
        for (i, x) in q.iter().enumerate() {
            let row: Vec<f64> = q[i + 1..].iter().map(|y| model.kernel.value((x - y).abs())).collect();
            terms.push(h * h * pairwise_sum(&row));
        }
    }
    let e = pairwise_sum(&terms);
    if e.is_nan() || e == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        e
    }
}

fn gradient(q: &[f64], h: f64, model: &ModelSpec) -> Vec<f64> {
    let n = q.len();
    let mut g = vec![0.0; n];
    if !model.internal.is_none() {
        // d/dΔ [Δ U(h/Δ)] = -P(h/Δ)
        let p: Vec<f64> = q.windows(2).map(|w| model.internal.pressure(h / (w[1] - w[0]))).collect();
        for j in 0..n {
            let left = if j > 0 { p[j - 1] } else { 0.0 };
            let right = if j + 1 < n { p[j] } else { 0.0 };
            g[j] += right - left;
        }
    }
    if !model.potential.is_zero() {
        for (gj, x) in g.iter_mut().zip(q) {
            *gj += h * model.potential.gradient_at(&[*x]).map_or(0.0, |v| v[0]);
        }
    }
    if !model.kernel.is_zero() {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let d = q[i] - q[j];
                if i == j || d == 0.0 {
                    continue;
                }
                s += model.kernel.radial_derivative(d.abs()).unwrap_or(0.0) * d.signum();
            }
            g[i] += h * h * s;
        }
    }
    g
}

/// Tridiagonal curvature of the local terms, used as the metric of the
/// descent: `h/Δt` from transport, `ρ²U''(ρ)/Δ` per gap, `h max(V'', 0)`.
fn curvature(q: &[f64], h: f64, dt: f64, model: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let mut diag = vec![h / dt; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    if !model.internal.is_none() {
        for j in 0..n - 1 {
            let gap = q[j + 1] - q[j];
            let rho = h / gap;
            let k = rho * rho * model.internal.second_derivative(rho, 0.0) / gap;
            if k.is_finite() {
                diag[j] += k;
                diag[j + 1] += k;
                off[j] = -k;
            }
        }
    }
    if !model.potential.is_zero() {
        let eps = 1e-6;
        for (d, x) in diag.iter_mut().zip(q) {
            let gp = model.potential.gradient_at(&[x + eps]).map_or(0.0, |v| v[0]);
            let gm = model.potential.gradient_at(&[x - eps]).map_or(0.0, |v| v[0]);
            let v2 = (gp - gm) / (2.0 * eps);
            if v2.is_finite() && v2 > 0.0 {
                *d += h * v2;
            }
        }
    }
    (diag, off)
}

/// Solves the symmetric tridiagonal system `(diag, off) x = b`.
fn thomas(diag: &[f64], off: &[f64], b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = b[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (b[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Pool-adjacent-violators: the non-decreasing sequence closest to `v`
/// in the Euclidean norm.
fn isotonic(v: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(x, n)| std::iter::repeat(x).take(n)).collect()
}

fn project(v: &[f64], bounds: (f64, f64)) -> Vec<f64> {
    isotonic(v).into_iter().map(|x| x.clamp(bounds.0, bounds.1)).collect()
}

struct Outcome {
    q: Vec<f64>,
    objective: f64,
    initial: f64,
    energy: f64,
    iterations: usize,
    converged: bool,
}

fn minimise(prev: &QuantileRep, dt: f64, model: &ModelSpec, bounds: (f64, f64)) -> Outcome {
    let qk = &prev.quantile_values;
    let n = qk.len();
    let mass = prev.total_mass;
    let h = mass / n as f64;
    let objective = |q: &[f64]| -> f64 {
        let t: Vec<f64> = q.iter().zip(qk).map(|(a, b)| (a - b) * (a - b)).collect();
        h / (2.0 * dt) * pairwise_sum(&t) + quantile_energy(q, mass, model)
    };
    let mut q = qk.clone();
    let initial = objective(&q);
    let mut value = initial;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < JKO_MAX_ITER {
        iterations += 1;
        let mut g = gradient(&q, h, model);
        for (gj, (a, b)) in g.iter_mut().zip(q.iter().zip(qk)) {
            *gj += h / dt * (a - b);
        }
        let (diag, off) = curvature(&q, h, dt, model);
        let dir: Vec<f64> = thomas(&diag, &off, &g).into_iter().map(|x| -x).collect();
        let decrement: f64 = -g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        if !(decrement > JKO_TOL * value.abs().max(1.0)) {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = q.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let cand = project(&trial, bounds);
            let slope: f64 = g.iter().zip(cand.iter().zip(&q)).map(|(gj, (c, a))| gj * (c - a)).sum();
            let v = objective(&cand);
            if v.is_finite() && v <= value + 1e-4 * slope.min(0.0) {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v)) = accepted else {
            // no descent left at round-off level
            converged = true;
            break;
        };
        let drop = value - v;
        q = cand;
        value = v;
        if drop <= JKO_TOL * value.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let energy = quantile_energy(&q, mass, model);
    Outcome {
        q,
        objective: value,
        initial,
        energy,
        iterations,
        converged,
    }
}

/// One minimising movement of a quantile configuration confined to `bounds`.
pub fn jko_step_quantiles(
    prev: &QuantileRep,
    dt: f64,
    model: &ModelSpec,
    bounds: (f64, f64),
) -> Result<(QuantileRep, f64, bool), TransportError> {
    check_model(model)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TransportError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if prev.len() < 2 {
        return Err(TransportError::Invalid("need at least two quantiles".into()));
    }
    let out = minimise(prev, dt, model, bounds);
    Ok((
        QuantileRep {
            quantile_values: out.q,
            total_mass: prev.total_mass,
        },
        out.objective,
        out.converged,
    ))
}

/// One JKO step of a 1D density with `m` quantiles, re-binned on its grid.
pub fn jko_step_1d(rho_k: &Field, dt: f64, model: &ModelSpec, m: usize) -> Result<JkoStep, TransportError> {
    check_model(model)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TransportError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if m < 2 {
        return Err(TransportError::Invalid("need at least two quantiles".into()));
    }
    let grid = rho_k.grid();
    let prev = to_quantiles(rho_k, m)?;
    let out = minimise(&prev, dt, model, bounds_of(grid));
    let quantiles = QuantileRep {
        quantile_values: out.q,
        total_mass: prev.total_mass,
    };
    Ok(JkoStep {
        density: quantiles.to_field(grid)?,
        quantiles,
        objective: out.objective,
        initial_objective: out.initial,
        energy: out.energy,
        iterations: out.iterations,
        converged: out.converged,
    })
}

fn bounds_of(grid: &Grid) -> (f64, f64) {
    let a = grid.axis(0);
    (a.lo, a.hi)
}

/// `steps` JKO steps from `rho0`, iterated in quantile coordinates and
/// re-binned once at the end. The flag is false if any step stopped at
/// the iteration cap.
pub fn jko_flow(
    rho0: &Field,
    dt: f64,
    steps: usize,
    model: &ModelSpec,
    m: usize,
) -> Result<(QuantileRep, Field, bool), TransportError> {
    let grid = rho0.grid();
    let mut q = to_quantiles(rho0, m)?;
    let mut all = true;
    for _ in 0..steps {
        let (next, _, ok) = jko_step_quantiles(&q, dt, model, bounds_of(grid))?;
        all &= ok;
        q = next;
    }
    let field = q.to_field(grid)?;
    Ok((q, field, all))
}

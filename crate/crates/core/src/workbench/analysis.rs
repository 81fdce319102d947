//! Diagnostics of runs: bump counts, free-energy plateaus and radial
//! sorting of two populations.

use crate::mesh::{mass_radius, Field};
use crate::stationary::components;

pub const DEFAULT_BUMP_THRESHOLD: f64 = 0.01;

/// Connected components of `{ρ > threshold · max ρ}`; 0 for a zero field.
pub fn bump_census(field: &Field, threshold: f64) -> usize {
    let max = field.max();
    if !(max > 0.0) {
        return 0;
    }
    components(field, threshold * max).1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub t_start: f64,
    pub t_end: f64,
    /// Mean relative energy change per unit time over the plateau.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauReport {
    pub plateaus: Vec<Plateau>,
    /// Largest relative energy change per unit time between consecutive
    /// plateaus.
    pub drops: Vec<f64>,
}

impl PlateauReport {
    /// Smallest ratio of a drop to the slopes of the two plateaus around it.
    pub fn min_contrast(&self) -> Option<f64> {
        self.drops
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let s = self.plateaus[i].slope.max(self.plateaus[i + 1].slope).max(f64::MIN_POSITIVE);
                d / s
            })
            .reduce(f64::min)
    }
}

/// Relative rate `|E_{n+1} - E_n| / (|E_n| (t_{n+1} - t_n))` for every interval.
pub fn relative_rates(t: &[f64], energy: &[f64]) -> Vec<f64> {
    t.windows(2)
        .zip(energy.windows(2))
        .map(|(tw, ew)| {
            let dt = tw[1] - tw[0];
            let scale = ew[0].abs().max(f64::MIN_POSITIVE);
            if dt > 0.0 {
                (ew[1] - ew[0]).abs() / (scale * dt)
            } else {
                0.0
            }
        })
        .collect()
}

/// Maximal time spans of at least `window` over which the relative
/// energy rate stays below `threshold`.
pub fn detect_plateaus(t: &[f64], energy: &[f64], threshold: f64, window: f64) -> PlateauReport {
    let rates = relative_rates(t, energy);
    let mut plateaus = Vec::new();
    let mut gaps = Vec::new();
    let mut gap_max = 0.0f64;
    let mut i = 0;
    while i < rates.len() {
        if rates[i] >= threshold {
            gap_max = gap_max.max(rates[i]);
            i += 1;
            continue;
        }
        let start = i;
        let mut quiet_max = 0.0f64;
        while i < rates.len() && rates[i] < threshold {
            quiet_max = quiet_max.max(rates[i]);
            i += 1;
        }
        let (t0, t1) = (t[start], t[i]);
        let slope = (energy[i] - energy[start]).abs() / (energy[start].abs().max(f64::MIN_POSITIVE) * (t1 - t0));
        if t1 - t0 >= window {
            if !plateaus.is_empty() {
                gaps.push(gap_max);
            }
            plateaus.push(Plateau {
                t_start: t0,
                t_end: t1,
                slope,
            });
            gap_max = 0.0;
        } else {
            // short quiet spans belong to the transition around them
            gap_max = gap_max.max(quiet_max);
        }
    }
    // merge neighbours with no drop between them
    let mut merged: Vec<Plateau> = Vec::new();
    let mut drops = Vec::new();
    for (k, p) in plateaus.into_iter().enumerate() {
        if k > 0 && gaps[k - 1] < threshold {
            let last = merged.last_mut().expect("non-empty");
            let span = |q: &Plateau| q.t_end - q.t_start;
            last.slope = (last.slope * span(last) + p.slope * span(&p)) / (span(last) + span(&p));
            last.t_end = p.t_end;
        } else {
            if k > 0 {
                drops.push(gaps[k - 1]);
            }
            merged.push(p);
        }
    }
    PlateauReport {
        plateaus: merged,
        drops,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortingReport {
    /// Radius holding 90% of the mass of each species, about the domain centre.
    pub r90_inner: f64,
    pub r90_outer: f64,
    /// Density of the outer species near the domain centre over its maximum.
    pub outer_center_ratio: f64,
}

impl SortingReport {
    /// Halo pattern: the inner species sits strictly inside and the outer
    /// one leaves the centre nearly empty.
    pub fn is_engulfed(&self) -> bool {
        self.r90_inner < self.r90_outer && self.outer_center_ratio < 0.1
    }
}

/// Mean over the cells within one cell diagonal of the domain centre.
pub fn central_density(f: &Field) -> f64 {
    let grid = f.grid();
    let c = grid.domain_center();
    let reach2: f64 = (0..grid.dims()).map(|a| grid.axis(a).dx.powi(2)).sum();
    let (mut s, mut n) = (0.0, 0);
    for (i, v) in f.values().iter().enumerate() {
        let x = grid.center(i);
        let d2: f64 = (0..grid.dims()).map(|a| (x[a] - c[a]).powi(2)).sum();
        if d2 <= reach2 {
            s += v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn sorting_report(inner: &Field, outer: &Field) -> SortingReport {
    let c = inner.grid().domain_center();
    let c = &c[..inner.grid().dims()];
    let max = outer.max();
    SortingReport {
        r90_inner: mass_radius(inner, c, 0.9),
        r90_outer: mass_radius(outer, c, 0.9),
        outer_center_ratio: if max > 0.0 { central_density(outer) / max } else { 0.0 },
    }
}

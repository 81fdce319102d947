//! Regimes of the homogeneous model `U = ρ^m/(m-1)`, `W = χ|x|^k/k`.

use super::StationaryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    DiffusionDominated,
    FairCompetition,
    AggregationDominated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundedBelow {
    Yes,
    No,
    DichotomyAtChiC,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub m: f64,
    pub k: f64,
    pub d: usize,
    /// `(d - k)/d`.
    pub m_c: f64,
    /// Fast-diffusion zone; `None` for `m < 1` with `k <= 0`, which lies
    /// outside the zone diagram.
    pub zone: Option<Zone>,
    pub regime: Regime,
    pub bounded_below: BoundedBelow,
    pub concentration_possible: bool,
}

/// Relative tolerance for the equality cases `m = m_c`.
const EQ_TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQ_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Part of zone II where minimisers are known to be integrable: above the
/// curve `m = 2d/(2d+k)`, and for `k >= 2` above `m = (d-2)/d`.
fn integrable_minimisers(m: f64, k: f64, d: f64) -> bool {
    m >= 2.0 * d / (2.0 * d + k) || (k >= 2.0 && m >= (d - 2.0) / d)
}

/// Case split for `m > 0`, `k > -d` (`k = 0` standing for `log`), `d ∈ {1, 2}`.
pub fn classify_regime(m: f64, k: f64, d: usize) -> Result<RegimeReport, StationaryError> {
    let bad = |msg: String| Err(StationaryError::InvalidParameters(msg));
    if !(d == 1 || d == 2) {
        return bad(format!("dimension must be 1 or 2, got {d}"));
    }
    let df = d as f64;
    if !(m > 0.0 && m.is_finite()) {
        return bad(format!("m must be positive, got {m}"));
    }
    if !(k > -df && k.is_finite()) {
        return bad(format!("k must exceed -d = {}, got {k}", -df));
    }
    let m_c = (df - k) / df;

    let zone = if m >= 1.0 {
        Some(Zone::III)
    } else if k > 0.0 {
        if m <= df / (df + k) {
            Some(Zone::I)
        } else {
            Some(Zone::II)
        }
    } else {
        None
    };

    let (regime, bounded_below) = if m > 1.0 && k < 0.0 && close(k, (1.0 - m) * df) {
        (Regime::FairCompetition, BoundedBelow::DichotomyAtChiC)
    } else if m > 1.0 && k < 0.0 && k > (1.0 - m) * df {
        (Regime::DiffusionDominated, BoundedBelow::Yes)
    } else if k > 0.0 && m <= df / (df + k) {
        (Regime::AggregationDominated, BoundedBelow::No)
    } else if k > 0.0 && m < 1.0 {
        (Regime::DiffusionDominated, BoundedBelow::Yes)
    } else if close(m, m_c) {
        // k = 0, m = 1: logarithmic Keller–Segel
        (Regime::FairCompetition, BoundedBelow::DichotomyAtChiC)
    } else if m > m_c {
        (Regime::DiffusionDominated, BoundedBelow::Yes)
    } else {
        (Regime::AggregationDominated, BoundedBelow::No)
    };

    let concentration_possible = zone == Some(Zone::II) && !integrable_minimisers(m, k, df);
    Ok(RegimeReport {
        m,
        k,
        d,
        m_c,
        zone,
        regime,
        bounded_below,
        concentration_possible,
    })
}

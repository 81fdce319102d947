//! Cyclic tridiagonal solves for the M-matrices of the implicit scheme.

/// Solves `A x = b` where row `i` reads
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = b[i]` with cyclic
/// indices, so `lower[0]` and `upper[n-1]` are the corner entries (zero on
/// a no-flux line).
///
/// Gaussian elimination without pivoting. The fill-in of a cyclic band is
/// confined to the last row and column. For an M-matrix with non-negative
/// column sums every update adds a non-negative quantity to the right-hand
/// side, so `b >= 0` gives `x >= 0` exactly in floating point.
///
/// Returns `None` if a pivot is not strictly positive.
pub(crate) fn solve_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert!(n >= 3 && lower.len() == n && upper.len() == n && b.len() == n);
    let last = n - 1;
    let mut d = diag.to_vec();
    let mut sup = upper.to_vec();
    let mut col = vec![0.0; n];
    let mut row = vec![0.0; n];
    let mut y = b.to_vec();
    col[0] = lower[0];
    col[last - 1] += sup[last - 1];
    sup[last - 1] = 0.0;
    row[0] = upper[last];
    row[last - 1] += lower[last];
    let mut dn = diag[last];

    for k in 0..last {
        let p = d[k];
        if !(p > 0.0) {
            return None;
        }
        if k + 1 < last {
            let l = lower[k + 1] / p;
            d[k + 1] -= l * sup[k];
            col[k + 1] -= l * col[k];
            y[k + 1] -= l * y[k];
        }
        let l2 = row[k] / p;
        if k + 1 < last {
            row[k + 1] -= l2 * sup[k];
        }
        dn -= l2 * col[k];
        y[last] -= l2 * y[k];
    }
    if !(dn > 0.0) {
        return None;
    }
    let mut x = vec![0.0; n];
    x[last] = y[last] / dn;
    for k in (0..last).rev() {
        let next = if k + 1 < last { sup[k] * x[k + 1] } else { 0.0 };
        x[k] = (y[k] - next - col[k] * x[last]) / d[k];
    }
    Some(x)
}

/// Index of the lexicographically least rotation of `rows`.
fn least_rotation(rows: &[[f64; 4]]) -> usize {
    let n = rows.len();
    let cmp = |a: &[f64; 4], b: &[f64; 4]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let (mut i, mut j, mut k) = (0usize, 1usize, 0usize);
    while i < n && j < n && k < n {
        match cmp(&rows[(i + k) % n], &rows[(j + k) % n]) {
            std::cmp::Ordering::Equal => k += 1,
            std::cmp::Ordering::Greater => {
                i += k + 1;
                if i <= j {
                    i = j + 1;
                }
                k = 0;
            }
            std::cmp::Ordering::Less => {
                j += k + 1;
                if j <= i {
                    j = i + 1;
                }
                k = 0;
            }
        }
    }
    i.min(j)
}

/// [`solve_cyclic`] started from a row chosen by the data alone, so that
/// rotating the system rotates the solution bit for bit.
pub(crate) fn solve_cyclic_canonical(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let rows: Vec<[f64; 4]> = (0..n).map(|k| [lower[k], diag[k], upper[k], b[k]]).collect();
    let s = least_rotation(&rows);
    if s == 0 {
        return solve_cyclic(lower, diag, upper, b);
    }
    let rot = |v: &[f64]| -> Vec<f64> { (0..n).map(|k| v[(k + s) % n]).collect() };
    let x = solve_cyclic(&rot(lower), &rot(diag), &rot(upper), &rot(b))?;
    let mut out = vec![0.0; n];
    for (k, v) in x.into_iter().enumerate() {
        out[(k + s) % n] = v;
    }
    Some(out)
}

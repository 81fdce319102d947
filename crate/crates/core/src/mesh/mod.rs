//! Uniform cell-centred grids in one and two dimensions, the non-negative
//! fields living on them, and deterministic quadrature.
//!
//! Two-dimensional data is stored row-major: the flat index of cell
//! `(i0, i1)` is `i0 * n1 + i1`, so axis 1 varies fastest.

mod io;

pub use io::atomic_write;
pub use io::{read_field, read_field_from, write_field, write_field_to, FIELD_MAGIC, FIELD_VERSION};

use thiserror::Error;

/// Smallest admissible number of cells along an axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("axis {axis}: need at least {MIN_CELLS} cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: extent must be positive, got [{lo}, {hi}]")]
    NonPositiveExtent { axis: usize, lo: f64, hi: f64 },
    #[error("expected {expected} values per axis, got {got}")]
    AxisCountMismatch { expected: usize, got: usize },
    #[error("field has {got} values but the grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell {index} holds {value}, densities must be finite and non-negative")]
    InvalidDensity { index: usize, value: f64 },
    #[error("moment order {0} is not supported (use 0, 1 or 2)")]
    UnsupportedMoment(u32),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("malformed field dump: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MeshError {
    fn from(e: std::io::Error) -> Self {
        MeshError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    NoFlux,
    Periodic,
}

impl Boundary {
    pub fn tag(self) -> u8 {
        match self {
            Boundary::NoFlux => 0,
            Boundary::Periodic => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Boundary::NoFlux),
            1 => Some(Boundary::Periodic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::NoFlux => "no-flux",
            Boundary::Periodic => "periodic",
        }
    }
}

/// One axis of a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub cells: usize,
    pub lo: f64,
    pub hi: f64,
    pub dx: f64,
}

impl Axis {
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.dx
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(
        cells_per_axis: &[usize],
        bounds_per_axis: &[(f64, f64)],
        boundary: Boundary,
    ) -> Result<Self, MeshError> {
        let dims = cells_per_axis.len();
        if dims == 0 || dims > 2 {
            return Err(MeshError::UnsupportedDimension(dims));
        }
        if bounds_per_axis.len() != dims {
            return Err(MeshError::AxisCountMismatch {
                expected: dims,
                got: bounds_per_axis.len(),
            });
        }
        let mut axes = Vec::with_capacity(dims);
        for (axis, (&cells, &(lo, hi))) in cells_per_axis.iter().zip(bounds_per_axis).enumerate() {
            if cells < MIN_CELLS {
                return Err(MeshError::TooFewCells { axis, cells });
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(MeshError::NonPositiveExtent { axis, lo, hi });
            }
            axes.push(Axis {
                cells,
                lo,
                hi,
                dx: (hi - lo) / cells as f64,
            });
        }
        Ok(Grid { axes, boundary })
    }

    pub fn line(cells: usize, lo: f64, hi: f64, boundary: Boundary) -> Result<Self, MeshError> {
        Grid::new(&[cells], &[(lo, hi)], boundary)
    }

    pub fn square(cells: usize, lo: f64, hi: f64, boundary: Boundary) -> Result<Self, MeshError> {
        Grid::new(&[cells, cells], &[(lo, hi), (lo, hi)], boundary)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume `Π dx`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.dx).product()
    }

    pub fn min_dx(&self) -> f64 {
        self.axes.iter().map(|a| a.dx).fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.length()).product()
    }

    /// Splits a flat index into per-axis indices.
    pub fn unravel(&self, flat: usize) -> [usize; 2] {
        match self.dims() {
            1 => [flat, 0],
            _ => {
                let n1 = self.axes[1].cells;
                [flat / n1, flat % n1]
            }
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        match self.dims() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].cells + idx[1],
        }
    }

    /// Centre of cell `flat`; the second component is zero in 1D.
    pub fn center(&self, flat: usize) -> [f64; 2] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 2];
        for (a, axis) in self.axes.iter().enumerate() {
            x[a] = axis.center(idx[a]);
        }
        x
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Geometric centre of the domain.
    pub fn domain_center(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (a, axis) in self.axes.iter().enumerate() {
            c[a] = 0.5 * (axis.lo + axis.hi);
        }
        c
    }

    /// Cell containing `x`, if any. Points on an interior face go right.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for (a, axis) in self.axes.iter().enumerate() {
            let s = (x[a] - axis.lo) / axis.dx;
            if !(s >= 0.0 && x[a] <= axis.hi) {
                return None;
            }
            idx[a] = (s.floor() as usize).min(axis.cells - 1);
        }
        Some(self.ravel(idx))
    }

    /// The same domain with twice as many cells per axis.
    pub fn refined(&self) -> Grid {
        let axes = self
            .axes
            .iter()
            .map(|a| Axis {
                cells: 2 * a.cells,
                lo: a.lo,
                hi: a.hi,
                dx: (a.hi - a.lo) / (2 * a.cells) as f64,
            })
            .collect();
        Grid {
            axes,
            boundary: self.boundary,
        }
    }

    /// Starting offsets of every grid line running along `axis`, and the
    /// stride between consecutive cells on such a line.
    pub fn lines(&self, axis: usize) -> (Vec<usize>, usize) {
        match (self.dims(), axis) {
            (1, _) => (vec![0], 1),
            (_, 0) => {
                let n1 = self.axes[1].cells;
                ((0..n1).collect(), n1)
            }
            _ => {
                let (n0, n1) = (self.axes[0].cells, self.axes[1].cells);
                ((0..n0).map(|i| i * n1).collect(), 1)
            }
        }
    }
}

/// Cell-averaged non-negative density bound to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != grid.len() {
            return Err(MeshError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(MeshError::InvalidDensity { index, value });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Field {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self, MeshError> {
        Field::new(grid.clone(), vec![value; grid.len()])
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self, MeshError> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Field::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total mass `Σ ρ_i Π dx`.
    pub fn mass(&self) -> f64 {
        integrate(self)
    }

    /// Rescales to the requested total mass. A zero field stays zero.
    pub fn with_mass(mut self, mass: f64) -> Self {
        let current = integrate(&self);
        if current > 0.0 {
            let s = mass / current;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        self
    }

    pub fn l1_distance(&self, other: &Field) -> Result<f64, MeshError> {
        if self.grid != other.grid {
            return Err(MeshError::GridMismatch);
        }
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(pairwise_sum(&diff) * self.grid.cell_volume())
    }

    pub fn center_of_mass(&self) -> [f64; 2] {
        let m = integrate(self);
        let mut c = [0.0; 2];
        if m <= 0.0 {
            return c;
        }
        for (a, ca) in c.iter_mut().enumerate().take(self.grid.dims()) {
            let terms: Vec<f64> = self
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| v * self.grid.center(i)[a])
                .collect();
            *ca = pairwise_sum(&terms) * self.grid.cell_volume() / m;
        }
        c
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, which makes energy series reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn integrate(f: &Field) -> f64 {
    pairwise_sum(&f.values) * f.grid.cell_volume()
}

/// `Σ_i f_i |x_i - c|^p Π dx` for `p ∈ {0, 1, 2}`.
pub fn moment(f: &Field, order: u32, center: &[f64]) -> Result<f64, MeshError> {
    if order > 2 {
        return Err(MeshError::UnsupportedMoment(order));
    }
    if order == 0 {
        return Ok(integrate(f));
    }
    let grid = &f.grid;
    let terms: Vec<f64> = f
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.center(i);
            let r2: f64 = (0..grid.dims())
                .map(|a| {
                    let d = x[a] - center.get(a).copied().unwrap_or(0.0);
                    d * d
                })
                .sum();
            if order == 1 {
                v * r2.sqrt()
            } else {
                v * r2
            }
        })
        .collect();
    Ok(pairwise_sum(&terms) * grid.cell_volume())
}

/// Radius of the smallest ball around `center` holding `fraction` of the mass.
pub fn mass_radius(f: &Field, center: &[f64], fraction: f64) -> f64 {
    let grid = &f.grid;
    let mut cells: Vec<(f64, f64)> = f
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.center(i);
            let r: f64 = (0..grid.dims())
                .map(|a| (x[a] - center[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            (r, *v)
        })
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = f.values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let target = fraction * total;
    let mut acc = 0.0;
    for (r, v) in cells {
        acc += v;
        if acc >= target {
            return r;
        }
    }
    f64::INFINITY
}

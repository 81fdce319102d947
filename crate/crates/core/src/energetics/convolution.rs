//! Discrete convolution `(W*ρ)_i = Σ_j w_{i-j} ρ_j Π dx`.
//!
//! Periodic grids use circular indexing with minimum-image offsets; no-flux
//! grids use the zero-padded linear convolution. The direct double sum is
//! the definition; the FFT route is what the solvers call.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{EnergyError, KernelSpec};
use crate::mesh::{Field, Grid, MeshError};

pub(crate) struct FftPlan {
    len: [usize; 2],
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len).finish()
    }
}

impl FftPlan {
    pub(crate) fn for_grid(grid: &Grid) -> Arc<Self> {
        let mut len = [1usize; 2];
        for (a, axis) in grid.axes().iter().enumerate() {
            len[a] = if grid.is_periodic() { axis.cells } else { 2 * axis.cells };
        }
        let mut planner = FftPlanner::new();
        Arc::new(FftPlan {
            len,
            forward: [planner.plan_fft_forward(len[0]), planner.plan_fft_forward(len[1])],
            inverse: [planner.plan_fft_inverse(len[0]), planner.plan_fft_inverse(len[1])],
        })
    }

    fn size(&self) -> usize {
        self.len[0] * self.len[1]
    }

    fn transform(&self, data: &mut [Complex<f64>], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [l0, l1] = self.len;
        if l1 > 1 {
            plans[1].process(data);
        }
        if l0 > 1 {
            if l1 == 1 {
                plans[0].process(data);
            } else {
                let mut col = vec![Complex::new(0.0, 0.0); l0 * l1];
                for i in 0..l0 {
                    for j in 0..l1 {
                        col[j * l0 + i] = data[i * l1 + j];
                    }
                }
                plans[0].process(&mut col);
                for i in 0..l0 {
                    for j in 0..l1 {
                        data[i * l1 + j] = col[j * l0 + i];
                    }
                }
            }
        }
    }

    /// Zero-pads `rho` into the transform box and applies the forward FFT.
    pub(crate) fn forward(&self, grid: &Grid, rho: &[f64]) -> Vec<Complex<f64>> {
        let mut data = vec![Complex::new(0.0, 0.0); self.size()];
        let shape = shape2(grid);
        for i0 in 0..shape[0] {
            for i1 in 0..shape[1] {
                data[i0 * self.len[1] + i1] = Complex::new(rho[i0 * shape[1] + i1], 0.0);
            }
        }
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse FFT, crop to the grid, scale by `Π dx / len`.
    pub(crate) fn inverse(&self, grid: &Grid, mut data: Vec<Complex<f64>>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = grid.cell_volume() / self.size() as f64;
        let shape = shape2(grid);
        let mut out = vec![0.0; grid.len()];
        for i0 in 0..shape[0] {
            for i1 in 0..shape[1] {
                out[i0 * shape[1] + i1] = data[i0 * self.len[1] + i1].re * scale;
            }
        }
        out
    }
}

fn shape2(grid: &Grid) -> [usize; 2] {
    let s = grid.shape();
    [s[0], s.get(1).copied().unwrap_or(1)]
}

/// Minimum-image representative of a periodic offset `m ∈ [0, n)`.
fn min_image(m: usize, n: usize) -> i64 {
    if m > n / 2 {
        m as i64 - n as i64
    } else {
        m as i64
    }
}

/// Convolution with a fixed kernel on a fixed grid.
#[derive(Debug, Clone)]
pub struct Convolution {
    grid: Grid,
    kernel: KernelSpec,
    /// Weights indexed by offset: periodic `[m0 mod n0][m1 mod n1]`,
    /// no-flux `[m0 + n0 - 1][m1 + n1 - 1]`.
    table: Vec<f64>,
    table_shape: [usize; 2],
    plan: Arc<FftPlan>,
    spectrum: Vec<Complex<f64>>,
}

impl Convolution {
    pub fn new(kernel: &KernelSpec, grid: &Grid) -> Result<Self, EnergyError> {
        Convolution::with_plan(kernel, grid, FftPlan::for_grid(grid))
    }

    pub(crate) fn with_plan(kernel: &KernelSpec, grid: &Grid, plan: Arc<FftPlan>) -> Result<Self, EnergyError> {
        kernel.validate_on(grid)?;
        let shape = shape2(grid);
        let dx0 = grid.axis(0).dx;
        let dx1 = if grid.dims() == 2 { grid.axis(1).dx } else { 1.0 };
        let weight = |m0: i64, m1: i64| -> f64 {
            if grid.dims() == 1 {
                kernel.weight_1d(m0, dx0)
            } else {
                kernel.weight_2d(m0, m1, dx0, dx1)
            }
        };
        let periodic = grid.is_periodic();
        let table_shape = if periodic {
            shape
        } else {
            [2 * shape[0] - 1, if shape[1] == 1 { 1 } else { 2 * shape[1] - 1 }]
        };
        let mut table = vec![0.0; table_shape[0] * table_shape[1]];
        let mut spectrum = vec![Complex::new(0.0, 0.0); plan.size()];
        let [l0, l1] = plan.len;
        for t0 in 0..table_shape[0] {
            for t1 in 0..table_shape[1] {
                let (m0, m1) = if periodic {
                    (min_image(t0, shape[0]), min_image(t1, shape[1]))
                } else {
                    (t0 as i64 - (shape[0] as i64 - 1), t1 as i64 - (shape[1] as i64 - 1))
                };
                let w = weight(m0, m1);
                table[t0 * table_shape[1] + t1] = w;
                let s0 = m0.rem_euclid(l0 as i64) as usize;
                let s1 = m1.rem_euclid(l1 as i64) as usize;
                spectrum[s0 * l1 + s1] = Complex::new(w, 0.0);
            }
        }
        plan.transform(&mut spectrum, &plan.forward);
        Ok(Convolution {
            grid: grid.clone(),
            kernel: kernel.clone(),
            table,
            table_shape,
            plan,
            spectrum,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn is_zero(&self) -> bool {
        self.kernel.is_zero()
    }

    /// Weight `w_m` for the offset `m = i - j` (per axis).
    pub fn weight(&self, offset: [i64; 2]) -> f64 {
        let shape = shape2(&self.grid);
        let idx = |a: usize| -> usize {
            if self.grid.is_periodic() {
                offset[a].rem_euclid(shape[a] as i64) as usize
            } else {
                (offset[a] + shape[a] as i64 - 1) as usize
            }
        };
        self.table[idx(0) * self.table_shape[1] + idx(1)]
    }

    /// FFT evaluation.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0; self.grid.len()];
        }
        let mut hat = self.plan.forward(&self.grid, rho);
        self.multiply(&mut hat);
        self.plan.inverse(&self.grid, hat)
    }

    /// Direct `O(N^2)` evaluation of the double sum.
    pub fn apply_direct(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let vol = self.grid.cell_volume();
        if self.is_zero() {
            return vec![0.0; n];
        }
        let shape = shape2(&self.grid);
        let periodic = self.grid.is_periodic();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let xi = self.grid.unravel(i);
            let mut s = 0.0;
            // periodic sums run in offset order from `i`, so a shifted
            // input reproduces the same sequence of products
            for t0 in 0..shape[0] {
                for t1 in 0..shape[1] {
                    let j = if periodic {
                        [(xi[0] + t0) % shape[0], (xi[1] + t1) % shape[1]]
                    } else {
                        [t0, t1]
                    };
                    let r = rho[j[0] * shape[1] + j[1]];
                    if r == 0.0 {
                        continue;
                    }
                    s += self.weight([xi[0] as i64 - j[0] as i64, xi[1] as i64 - j[1] as i64]) * r;
                }
            }
            *o = s * vol;
        }
        out
    }

    pub(crate) fn multiply(&self, hat: &mut [Complex<f64>]) {
        for (h, k) in hat.iter_mut().zip(&self.spectrum) {
            *h *= k;
        }
    }

    pub(crate) fn accumulate(&self, hat: &[Complex<f64>], acc: &mut [Complex<f64>]) {
        for ((a, h), k) in acc.iter_mut().zip(hat).zip(&self.spectrum) {
            *a += h * k;
        }
    }
}

fn check(kernel: &KernelSpec, rho: &Field) -> Result<Convolution, EnergyError> {
    if rho.len() != rho.grid().len() {
        return Err(MeshError::GridMismatch.into());
    }
    Convolution::new(kernel, rho.grid())
}

/// `W * ρ` through the FFT route.
pub fn convolve(kernel: &KernelSpec, rho: &Field) -> Result<Vec<f64>, EnergyError> {
    Ok(check(kernel, rho)?.apply(rho.values()))
}

/// `W * ρ` by the direct double sum.
pub fn convolve_direct(kernel: &KernelSpec, rho: &Field) -> Result<Vec<f64>, EnergyError> {
    Ok(check(kernel, rho)?.apply_direct(rho.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{moment, Boundary};

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let g = Grid::line(16, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let f = Field::constant(&g, 2.0).unwrap();
        assert_eq!(convolve(&KernelSpec::Zero, &f).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn point_mass_reproduces_kernel() {
        let g = Grid::line(32, -1.0, 1.0, Boundary::NoFlux).unwrap();
        let dx = g.axis(0).dx;
        let j = 11;
        let mut v = vec![0.0; 32];
        v[j] = 1.0 / dx;
        let f = Field::new(g.clone(), v).unwrap();
        let k = KernelSpec::Gaussian { amplitude: 1.0, width: 0.3 };
        let c = convolve(&k, &f).unwrap();
        for (i, ci) in c.iter().enumerate() {
            if i != j {
                let r = (g.center(i)[0] - g.center(j)[0]).abs();
                assert!((ci - k.value(r)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadratic_kernel_moment_identity() {
        let g = Grid::line(64, -2.0, 3.0, Boundary::NoFlux).unwrap();
        let f = Field::from_fn(&g, |x| (-(x[0] - 0.3f64).powi(2)).exp() + 0.2).unwrap().with_mass(1.0);
        let c = convolve(&KernelSpec::quadratic(1.0), &f).unwrap();
        let m1 = f.center_of_mass()[0];
        let m2 = moment(&f, 2, &[0.0]).unwrap();
        for (i, ci) in c.iter().enumerate() {
            let x = g.center(i)[0];
            let exact = 0.5 * (x * x - 2.0 * x * m1 + m2);
            assert!((ci - exact).abs() < 1e-10, "i={i}");
        }
    }

    #[test]
    fn fft_matches_direct_1d_and_2d() {
        let kernels = [
            KernelSpec::Power { k: -0.5, chi: 1.0 },
            KernelSpec::Log { chi: 1.0 },
            KernelSpec::Exponential { amplitude: 1.0, range: 0.4 },
            KernelSpec::Characteristic { radius: 0.3, depth: 2.0 },
            KernelSpec::quadratic(0.7),
        ];
        for boundary in [Boundary::NoFlux, Boundary::Periodic] {
            let g1 = Grid::line(37, -1.0, 1.0, boundary).unwrap();
            let g2 = Grid::new(&[12, 9], &[(-1.0, 1.0), (0.0, 1.5)], boundary).unwrap();
            for g in [g1, g2] {
                let f = Field::from_fn(&g, |x| 1.0 + (3.0 * x[0]).sin().abs() + x[1] * x[1]).unwrap();
                for k in &kernels {
                    let a = convolve(k, &f).unwrap();
                    let b = convolve_direct(k, &f).unwrap();
                    assert!(rel_err(&a, &b) < 1e-12, "{k:?} {boundary:?} dims={}", g.dims());
                }
            }
        }
    }

    #[test]
    fn periodic_shift_equivariance() {
        let g = Grid::line(24, 0.0, 1.0, Boundary::Periodic).unwrap();
        let f = Field::from_fn(&g, |x| (-(x[0] - 0.4f64).powi(2) * 30.0).exp()).unwrap();
        let mut shifted = f.values().to_vec();
        shifted.rotate_right(1);
        let fs = Field::new(g.clone(), shifted).unwrap();
        let k = KernelSpec::Exponential { amplitude: 1.0, range: 0.1 };
        let conv = Convolution::new(&k, &g).unwrap();
        let mut a = conv.apply_direct(f.values());
        a.rotate_right(1);
        let b = conv.apply_direct(fs.values());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_inadmissible_kernel() {
        let g = Grid::line(16, 0.0, 1.0, Boundary::NoFlux).unwrap();
        let f = Field::constant(&g, 1.0).unwrap();
        assert!(convolve(&KernelSpec::Power { k: -1.0, chi: 1.0 }, &f).is_err());
    }
}

//! Radial interaction kernels and their cell weights.

use std::f64::consts::PI;

use super::EnergyError;
use crate::mesh::Grid;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Zero,
    /// `W(x) = chi |x|^k / k`, `k != 0`.
    Power { k: f64, chi: f64 },
    /// `W(x) = chi log|x|`, the `k -> 0` member of the power family.
    Log { chi: f64 },
    /// `W(x) = -A exp(-|x| / l)`.
    Exponential { amplitude: f64, range: f64 },
    /// `W(x) = -A exp(-|x|^2 / (2 sigma^2))`.
    Gaussian { amplitude: f64, width: f64 },
    /// `W(x) = -a` for `|x| <= R`, zero outside.
    Characteristic { radius: f64, depth: f64 },
}

impl KernelSpec {
    pub fn quadratic(chi: f64) -> Self {
        KernelSpec::Power { k: 2.0, chi }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |msg: String| Err(EnergyError::InadmissibleKernel(msg));
        match *self {
            KernelSpec::Zero => Ok(()),
            KernelSpec::Power { k, chi } => {
                if !(k.is_finite() && k != 0.0) {
                    return bad(format!("power exponent must be finite and non-zero, got {k}"));
                }
                if !(chi > 0.0 && chi.is_finite()) {
                    return bad(format!("strength must be positive, got {chi}"));
                }
                Ok(())
            }
            KernelSpec::Log { chi } if !(chi > 0.0 && chi.is_finite()) => {
                bad(format!("strength must be positive, got {chi}"))
            }
            KernelSpec::Exponential { amplitude, range } if !(range > 0.0 && amplitude.is_finite()) => {
                bad(format!("exponential range must be positive, got {range}"))
            }
            KernelSpec::Gaussian { amplitude, width } if !(width > 0.0 && amplitude.is_finite()) => {
                bad(format!("gaussian width must be positive, got {width}"))
            }
            KernelSpec::Characteristic { radius, depth } if !(radius > 0.0 && depth.is_finite()) => {
                bad(format!("characteristic radius must be positive, got {radius}"))
            }
            _ => Ok(()),
        }
    }

    /// Checks local integrability on a grid of dimension `dims`.
    pub fn validate_on(&self, grid: &Grid) -> Result<(), EnergyError> {
        self.validate()?;
        if let KernelSpec::Power { k, .. } = *self {
            let d = grid.dims() as f64;
            if k <= -d {
                return Err(EnergyError::InadmissibleKernel(format!(
                    "power exponent {k} is not locally integrable in {} dimension(s)",
                    grid.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, KernelSpec::Zero)
    }

    /// Kernels unbounded at the origin.
    pub fn is_singular(&self) -> bool {
        match *self {
            KernelSpec::Power { k, .. } => k < 0.0,
            KernelSpec::Log { .. } => true,
            _ => false,
        }
    }

    /// Multiplies the strength (or amplitude, or depth) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            KernelSpec::Zero => KernelSpec::Zero,
            KernelSpec::Power { k, chi } => KernelSpec::Power { k, chi: chi * factor },
            KernelSpec::Log { chi } => KernelSpec::Log { chi: chi * factor },
            KernelSpec::Exponential { amplitude, range } => KernelSpec::Exponential {
                amplitude: amplitude * factor,
                range,
            },
            KernelSpec::Gaussian { amplitude, width } => KernelSpec::Gaussian {
                amplitude: amplitude * factor,
                width,
            },
            KernelSpec::Characteristic { radius, depth } => KernelSpec::Characteristic {
                radius,
                depth: depth * factor,
            },
        }
    }

    /// `W` as a function of `r = |x|`. Singular kernels return `±inf` at 0.
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Zero => 0.0,
            KernelSpec::Power { k, chi } => chi * r.powf(k) / k,
            KernelSpec::Log { chi } => chi * r.ln(),
            KernelSpec::Exponential { amplitude, range } => -amplitude * (-r / range).exp(),
            KernelSpec::Gaussian { amplitude, width } => {
                -amplitude * (-(r * r) / (2.0 * width * width)).exp()
            }
            KernelSpec::Characteristic { radius, depth } => {
                if r <= radius {
                    -depth
                } else {
                    0.0
                }
            }
        }
    }

    /// `W'(r)` for `r > 0`; `None` where the derivative is a distribution
    /// (the jump of the characteristic kernel).
    pub fn radial_derivative(&self, r: f64) -> Option<f64> {
        match *self {
            KernelSpec::Zero => Some(0.0),
            KernelSpec::Power { k, chi } => Some(chi * r.powf(k - 1.0)),
            KernelSpec::Log { chi } => Some(chi / r),
            KernelSpec::Exponential { amplitude, range } => Some(amplitude / range * (-r / range).exp()),
            KernelSpec::Gaussian { amplitude, width } => {
                Some(amplitude * r / (width * width) * (-(r * r) / (2.0 * width * width)).exp())
            }
            KernelSpec::Characteristic { .. } => None,
        }
    }

    /// Antiderivative in `s > 0` of the 1D profile, used for cell averages
    /// of singular kernels.
    fn antiderivative_1d(&self, s: f64) -> f64 {
        match *self {
            KernelSpec::Power { k, chi } => {
                if s == 0.0 {
                    0.0
                } else {
                    chi * s.powf(k + 1.0) / (k * (k + 1.0))
                }
            }
            KernelSpec::Log { chi } => {
                if s == 0.0 {
                    0.0
                } else {
                    chi * (s * s.ln() - s)
                }
            }
            _ => unreachable!("cell averages are only taken for singular kernels"),
        }
    }

    /// Cell weight for an offset of `m` cells (1D).
    ///
    /// Singular kernels use the exact average over the offset cell,
    /// `(1/dx) ∫_{(m-1/2)dx}^{(m+1/2)dx} W(s) ds`, which is finite on the
    /// self cell. Bounded kernels are sampled at the cell offset, so the
    /// quadratic kernel reproduces the moment identity exactly.
    pub(crate) fn weight_1d(&self, m: i64, dx: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let am = m.unsigned_abs() as f64;
        if !self.is_singular() {
            return self.value(am * dx);
        }
        if m == 0 {
            2.0 * self.antiderivative_1d(0.5 * dx) / dx
        } else {
            (self.antiderivative_1d((am + 0.5) * dx) - self.antiderivative_1d((am - 0.5) * dx)) / dx
        }
    }

    /// Cell weight for an offset of `(m0, m1)` cells (2D). The self cell of
    /// a singular kernel is averaged over the disc of equal area; every
    /// other offset is sampled at its centre distance.
    pub(crate) fn weight_2d(&self, m0: i64, m1: i64, dx0: f64, dx1: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if m0 == 0 && m1 == 0 && self.is_singular() {
            let r = (dx0 * dx1 / PI).sqrt();
            return match *self {
                // (1/(π r²)) ∫_0^r chi s^k/k 2π s ds
                KernelSpec::Power { k, chi } => chi / k * 2.0 * r.powf(k) / (k + 2.0),
                KernelSpec::Log { chi } => chi * (r.ln() - 0.5),
                _ => unreachable!(),
            };
        }
        let x = m0 as f64 * dx0;
        let y = m1 as f64 * dx1;
        self.value((x * x + y * y).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // composite Gauss-Legendre (3 points) on n panels
        let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let wts = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for p in 0..n {
            let c = a + (p as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(wts) {
                s += w * f(c + 0.5 * h * x) * 0.5 * h;
            }
        }
        s
    }

    #[test]
    fn self_weight_closed_form() {
        let dx = 0.1;
        let (k, chi) = (-0.5, 2.0);
        let w0 = KernelSpec::Power { k, chi }.weight_1d(0, dx);
        let expected = chi * 2.0 * (dx / 2.0f64).powf(k + 1.0) / (k * (k + 1.0) * dx);
        assert!((w0 - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn off_cell_weights_match_quadrature() {
        let dx = 0.07;
        for kernel in [KernelSpec::Power { k: -0.5, chi: 1.3 }, KernelSpec::Log { chi: 0.8 }] {
            for m in 1..6i64 {
                let a = (m as f64 - 0.5) * dx;
                let b = (m as f64 + 0.5) * dx;
                let q = quad(|s| kernel.value(s), a, b, 400) / dx;
                let w = kernel.weight_1d(m, dx);
                assert!((q - w).abs() < 1e-9 * q.abs().max(1.0), "{kernel:?} m={m}");
                assert_eq!(w, kernel.weight_1d(-m, dx));
            }
        }
    }

    #[test]
    fn log_self_weight() {
        let dx = 0.2;
        let w0 = KernelSpec::Log { chi: 1.0 }.weight_1d(0, dx);
        assert!((w0 - ((dx / 2.0f64).ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn disc_average_matches_radial_quadrature() {
        let (dx0, dx1) = (0.1, 0.05);
        let r = (dx0 * dx1 / PI).sqrt();
        let k = KernelSpec::Power { k: -1.2, chi: 1.0 };
        // s = r t^5 removes the endpoint singularity
        let q = quad(
            |t| {
                let s = r * t.powi(5);
                k.value(s) * 2.0 * PI * s * 5.0 * r * t.powi(4)
            },
            0.0,
            1.0,
            400,
        ) / (PI * r * r);
        let w = k.weight_2d(0, 0, dx0, dx1);
        assert!((q - w).abs() < 1e-9 * w.abs());
    }

    #[test]
    fn admissibility() {
        let g1 = Grid::line(8, 0.0, 1.0, crate::mesh::Boundary::NoFlux).unwrap();
        let g2 = Grid::square(8, 0.0, 1.0, crate::mesh::Boundary::NoFlux).unwrap();
        let k = KernelSpec::Power { k: -1.5, chi: 1.0 };
        assert!(k.validate_on(&g1).is_err());
        assert!(k.validate_on(&g2).is_ok());
        assert!(KernelSpec::Power { k: 0.0, chi: 1.0 }.validate().is_err());
        assert!(KernelSpec::Power { k: 1.0, chi: -1.0 }.validate().is_err());
    }

    #[test]
    fn radial_derivatives() {
        for k in [
            KernelSpec::Power { k: 3.0, chi: 0.5 },
            KernelSpec::Exponential { amplitude: 2.0, range: 0.3 },
            KernelSpec::Gaussian { amplitude: 1.5, width: 0.4 },
            KernelSpec::Log { chi: 1.0 },
        ] {
            let r = 0.37;
            let h = 1e-6;
            let fd = (k.value(r + h) - k.value(r - h)) / (2.0 * h);
            assert!((fd - k.radial_derivative(r).unwrap()).abs() < 1e-6, "{k:?}");
        }
    }
}

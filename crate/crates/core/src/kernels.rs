//! Stationary covariance functions.

use alloc::format;

use crate::error::{Error, Result};
use crate::Matrix;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern32,
    Rbf,
}

/// A stationary, isotropic kernel `k(d)` acting on distances.
///
/// `k(0) = amplitude` and `k` is nonincreasing in `d` for both families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    rho: f64,
    amplitude: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, rho: f64, amplitude: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Input(format!("length scale must be positive, got {rho}")));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::Input(format!("amplitude must be positive, got {amplitude}")));
        }
        Ok(Self { family, rho, amplitude })
    }

    /// Matérn-3/2 kernel with unit amplitude.
    pub fn matern32(rho: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, rho, 1.0)
    }

    pub fn rbf(rho: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, rho, 1.0)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// `k(d)`; rejects negative or non-finite distances.
    pub fn evaluate(&self, d: f64) -> Result<f64> {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::Input(format!("distance must be finite and nonnegative, got {d}")));
        }
        Ok(self.at(d))
    }

    /// `k(|d|)` without validation. Used on hot paths where distances come
    /// from already-checked coordinates.
    #[inline]
    pub fn at(&self, d: f64) -> f64 {
        let d = d.abs();
        match self.family {
            KernelFamily::Matern32 => {
                let t = SQRT_3 * d / self.rho;
                self.amplitude * (1.0 + t) * libm::exp(-t)
            }
            KernelFamily::Rbf => {
                let t = d / self.rho;
                self.amplitude * libm::exp(-0.5 * t * t)
            }
        }
    }

    /// Cross-Gram matrix `K[i, j] = k(|x[i] - y[j]|)`.
    pub fn gram(&self, x: &[f64], y: &[f64]) -> Result<Matrix> {
        if let Some(bad) = x.iter().chain(y).find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("location must be finite, got {bad}")));
        }
        Ok(Matrix::from_fn(x.len(), y.len(), |i, j| self.at(x[i] - y[j])))
    }
}

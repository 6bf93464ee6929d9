//! Symmetric smoothing kernels.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
    Triangular,
}

/// Kernel derivative together with a flag set when `u` sits on a kink, in
/// which case `value` is the one-sided derivative taken from the interior of
/// the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGrad {
    pub value: f64,
    pub at_kink: bool,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Gaussian, Kernel::Epanechnikov, Kernel::Triangular];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Triangular => "triangular",
        }
    }

    /// Half-width of the support, `None` for infinite support.
    pub fn support(self) -> Option<f64> {
        match self {
            Kernel::Gaussian => None,
            Kernel::Epanechnikov | Kernel::Triangular => Some(1.0),
        }
    }

    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Triangular => (1.0 - u.abs()).max(0.0),
        }
    }

    pub fn grad(self, u: f64) -> f64 {
        self.grad_flagged(u).value
    }

    pub fn grad_flagged(self, u: f64) -> KernelGrad {
        let smooth = |value| KernelGrad { value, at_kink: false };
        match self {
            Kernel::Gaussian => smooth(-u * self.eval(u)),
            Kernel::Epanechnikov => {
                let a = u.abs();
                if a < 1.0 {
                    smooth(-1.5 * u)
                } else if a == 1.0 {
                    KernelGrad { value: -1.5 * u, at_kink: true }
                } else {
                    smooth(0.0)
                }
            }
            Kernel::Triangular => {
                let a = u.abs();
                if a > 1.0 {
                    smooth(0.0)
                } else if a == 1.0 {
                    KernelGrad { value: -u.signum(), at_kink: true }
                } else if u == 0.0 {
                    // right-hand derivative at the peak
                    KernelGrad { value: -1.0, at_kink: true }
                } else {
                    smooth(-u.signum())
                }
            }
        }
    }

    /// Second moment `∫ u² K(u) du`.
    pub fn moment2(self) -> f64 {
        match self {
            Kernel::Gaussian => 1.0,
            Kernel::Epanechnikov => 0.2,
            Kernel::Triangular => 1.0 / 6.0,
        }
    }

    /// Roughness `∫ K(u)² du`.
    pub fn roughness(self) -> f64 {
        match self {
            Kernel::Gaussian => 1.0 / (2.0 * PI.sqrt()),
            Kernel::Epanechnikov => 0.6,
            Kernel::Triangular => 2.0 / 3.0,
        }
    }

    /// `∫_{-∞}^{u} K(s) ds`.
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => 0.5 * (1.0 + erf(u / SQRT_2)),
            Kernel::Epanechnikov => {
                let u = u.clamp(-1.0, 1.0);
                0.5 + 0.75 * (u - u * u * u / 3.0)
            }
            Kernel::Triangular => {
                let u = u.clamp(-1.0, 1.0);
                if u <= 0.0 {
                    0.5 * (1.0 + u) * (1.0 + u)
                } else {
                    1.0 - 0.5 * (1.0 - u) * (1.0 - u)
                }
            }
        }
    }

    /// `(1/h) ∫_{lo}^{hi} K((center − t)/h) dt`, the fraction of kernel mass
    /// around `center` that falls inside `[lo, hi]`. Equals 1 when the
    /// kernel is fully interior.
    pub fn boundary_mass(self, center: f64, h: f64, lo: f64, hi: f64) -> Result<f64> {
        let mass = self.cdf((hi - center) / h) - self.cdf((lo - center) / h);
        if mass < 1e-12 {
            return Err(Error::NoBoundaryMass { center });
        }
        Ok(mass)
    }

    /// Derivative of [`Kernel::boundary_mass`] with respect to `center`.
    pub fn boundary_mass_grad(self, center: f64, h: f64, lo: f64, hi: f64) -> f64 {
        (self.eval((lo - center) / h) - self.eval((hi - center) / h)) / h
    }
}

/// The triangular kernel written as a combination of hinge functions,
/// `max(−1, u) − 2 max(0, u) + max(1, u)`. Agrees with
/// `Kernel::Triangular.eval(u)` for every real `u`.
pub fn triangular_hinge_decomposition(u: f64) -> f64 {
    let hinge = |a: f64| a.max(u);
    hinge(-1.0) - 2.0 * hinge(0.0) + hinge(1.0)
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "triangular" => Ok(Kernel::Triangular),
            other => Err(Error::Config(format!(
                "unknown kernel `{other}` (expected gaussian | epanechnikov | triangular)"
            ))),
        }
    }
}

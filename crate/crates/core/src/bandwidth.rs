//! Plug-in selection of the MSE-optimal bandwidth.
//!
//! The leading-order MSE of the IPW estimator is `c1² h⁴ + c3 / (n h)` with
//!
//! * `c1 = κ₂(K) · E[∫ (y/2) ∂²f(y | τ(X), X)/∂t² dy]` (bias constant)
//! * `c3 = R(K) · E[E[Y² | τ(X), X] / f(τ(X) | X)]` (variance constant)
//!
//! minimized at `h* = (c3 / (4 c1² n))^{1/5}`. Both expectations are
//! estimated by averaging over the records, with the conditional outcome
//! density taken from a product-Gaussian kernel density estimate, its
//! treatment curvature from a central second difference, and the
//! `y`-integrals from the trapezoid rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::policies::Policy;
use crate::propensity::{GpsModel, MIN_PROPENSITY};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Smallest `f(t, x)` accepted in the conditional-density denominator.
pub const MIN_JOINT_DENSITY: f64 = 1e-10;

/// Largest covariate dimension the plug-in supports.
pub const MAX_PLUGIN_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginDiagnostics {
    pub n: usize,
    pub y_grid_points: usize,
    pub y_grid: (f64, f64),
    pub fd_step: f64,
    /// KDE bandwidths in the order `(y, t, x_0, ..., x_{d-1})`.
    pub kde_bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimate {
    pub c1: f64,
    pub c3: f64,
    pub h_star: f64,
    pub diagnostics: Option<PluginDiagnostics>,
}

impl PluginEstimate {
    /// `h* = (c3 / (4 c1² n))^{1/5}`.
    pub fn from_constants(c1: f64, c3: f64, n: usize) -> Result<Self> {
        if c1 * c1 < 1e-12 {
            return Err(Error::FlatCurvature(c1 * c1));
        }
        if !(c3 > 0.0) {
            return Err(Error::Config(format!("variance constant must be positive, got {c3}")));
        }
        let h_star = (c3 / (4.0 * c1 * c1 * n as f64)).powf(0.2);
        Ok(Self { c1, c3, h_star, diagnostics: None })
    }
}

/// `h0 · (n0 / n)^{1/5}`.
pub fn rescale_bandwidth(h0: f64, n0: usize, n: usize) -> f64 {
    h0 * (n0 as f64 / n as f64).powf(0.2)
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Product-Gaussian kernel density estimate of `f(y | t, x)`.
///
/// The `(t, x)` bandwidths are shared between the joint `f(y, t, x)` and the
/// marginal `f(t, x)`, so the ratio is a proper mixture density in `y`:
/// `f(y | t, x) = sum_i w_i(t, x) φ_{h_y}(y − y_i)`.
#[derive(Debug, Clone)]
pub struct ConditionalKde {
    y: Vec<f64>,
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    h_y: f64,
    h_t: f64,
    h_x: Vec<f64>,
}

impl ConditionalKde {
    /// Per-dimension rule-of-thumb bandwidths `1.06 σ̂ n^{-1/(4 + d + 2)}`.
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let n = dataset.len();
        if n < 10 {
            return Err(Error::TooFewRecords { needed: 9, got: n });
        }
        let d = dataset.dim();
        let factor = 1.06 * (n as f64).powf(-1.0 / (4.0 + d as f64 + 2.0));
        let bw = |name: &str, sd: f64| -> Result<f64> {
            if !(sd > 0.0) {
                return Err(Error::Config(format!("KDE: `{name}` has zero spread")));
            }
            Ok(factor * sd)
        };
        let recs = dataset.records();
        let h_y = bw("y", mean_sd(recs.iter().map(|r| r.y)).1)?;
        let h_t = bw("t", mean_sd(recs.iter().map(|r| r.t)).1)?;
        let h_x = (0..d)
            .map(|j| bw(&format!("x{j}"), mean_sd(recs.iter().map(|r| r.x[j])).1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            y: recs.iter().map(|r| r.y).collect(),
            t: recs.iter().map(|r| r.t).collect(),
            x: recs.iter().map(|r| r.x.clone()).collect(),
            h_y,
            h_t,
            h_x,
        })
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        let mut out = vec![self.h_y, self.h_t];
        out.extend(&self.h_x);
        out
    }

    fn log_kernel_tx(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        let mut s = {
            let u = (t - self.t[i]) / self.h_t;
            -0.5 * u * u
        };
        for ((xi, q), h) in self.x[i].iter().zip(x).zip(&self.h_x) {
            let u = (q - xi) / h;
            s -= 0.5 * u * u;
        }
        s
    }

    /// Mixture weights `w_i(t, x)`; fails when the KDE of `f(t, x)` is below
    /// [`MIN_JOINT_DENSITY`].
    pub fn weights(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.t.len();
        let mut w: Vec<f64> = (0..n).map(|i| self.log_kernel_tx(i, t, x).exp()).collect();
        let total: f64 = w.iter().sum();
        let density = self.normalize_joint(total);
        if !(density >= MIN_JOINT_DENSITY) {
            return Err(Error::OutsideSupport(density));
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(w)
    }

    /// KDE of `f(t, x)`.
    pub fn joint_density(&self, t: f64, x: &[f64]) -> f64 {
        let total: f64 = (0..self.t.len()).map(|i| self.log_kernel_tx(i, t, x).exp()).sum();
        self.normalize_joint(total)
    }

    /// Turns a sum of unnormalized Gaussian factors over `(t, x)` into a density.
    fn normalize_joint(&self, total: f64) -> f64 {
        let n = self.t.len() as f64;
        let scale = self.h_t * self.h_x.iter().product::<f64>();
        total * FRAC_1_SQRT_2PI.powi(self.h_x.len() as i32 + 1) / (n * scale)
    }

    fn y_kernel(&self, y: f64, i: usize) -> f64 {
        let u = (y - self.y[i]) / self.h_y;
        FRAC_1_SQRT_2PI * (-0.5 * u * u).exp() / self.h_y
    }

    /// `f(y | t, x)`.
    pub fn conditional(&self, y: f64, t: f64, x: &[f64]) -> Result<f64> {
        let w = self.weights(t, x)?;
        Ok(w.iter().enumerate().map(|(i, wi)| wi * self.y_kernel(y, i)).sum())
    }
}

/// One-shot `f(y | t, x)` from a freshly built [`ConditionalKde`].
pub fn kde_conditional_density(dataset: &Dataset, y: f64, t: f64, x: &[f64]) -> Result<f64> {
    ConditionalKde::new(dataset)?.conditional(y, t, x)
}

/// Central second difference in `t`: `(f(t+δ) − 2 f(t) + f(t−δ)) / δ²`.
pub fn second_derivative_t<F>(f: F, y: f64, t: f64, x: &[f64], step: f64) -> Result<f64>
where
    F: Fn(f64, f64, &[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let up = f(y, t + step, x)?;
    let mid = f(y, t, x)?;
    let down = f(y, t - step, x)?;
    Ok((up - 2.0 * mid + down) / (step * step))
}

fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) * dx
}

/// Tunables of the plug-in estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginConfig {
    pub y_grid_points: usize,
    /// Grid spans `[min y − pad σ̂_y, max y + pad σ̂_y]`.
    pub y_pad_sd: f64,
    /// Finite-difference step `fd_scale · σ̂_t · n^{-1/6}`, clamped to
    /// `[1e-3 σ̂_t, σ̂_t]`.
    pub fd_scale: f64,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self { y_grid_points: 201, y_pad_sd: 3.0, fd_scale: 0.5 }
    }
}

pub fn plugin_bandwidth(dataset: &Dataset, policy: &Policy, kernel: Kernel, gps: &GpsModel) -> Result<PluginEstimate> {
    plugin_bandwidth_with(dataset, policy, kernel, gps, &PluginConfig::default())
}

pub fn plugin_bandwidth_with(
    dataset: &Dataset,
    policy: &Policy,
    kernel: Kernel,
    gps: &GpsModel,
    cfg: &PluginConfig,
) -> Result<PluginEstimate> {
    let n = dataset.len();
    if n < 50 {
        return Err(Error::TooFewRecords { needed: 49, got: n });
    }
    if dataset.dim() > MAX_PLUGIN_DIM {
        return Err(Error::PluginDimension(dataset.dim()));
    }
    if cfg.y_grid_points < 3 {
        return Err(Error::Config("y grid needs at least 3 points".into()));
    }
    let kde = ConditionalKde::new(dataset)?;
    let recs = dataset.records();

    let (_, sd_y) = mean_sd(recs.iter().map(|r| r.y));
    let (_, sd_t) = mean_sd(recs.iter().map(|r| r.t));
    let y_min = recs.iter().map(|r| r.y).fold(f64::INFINITY, f64::min) - cfg.y_pad_sd * sd_y;
    let y_max = recs.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max) + cfg.y_pad_sd * sd_y;
    let m = cfg.y_grid_points;
    let dy = (y_max - y_min) / (m - 1) as f64;
    let grid: Vec<f64> = (0..m).map(|g| y_min + g as f64 * dy).collect();
    let step = (cfg.fd_scale * sd_t * (n as f64).powf(-1.0 / 6.0)).clamp(1e-3 * sd_t, sd_t);

    // φ_{h_y}(y_g − y_j), row-major by grid point
    let phi: Vec<f64> = grid.iter().flat_map(|&y| (0..n).map(move |j| (y, j))).map(|(y, j)| kde.y_kernel(y, j)).collect();
    let density_on_grid = |w: &[f64]| -> Vec<f64> {
        (0..m).map(|g| phi[g * n..(g + 1) * n].iter().zip(w).map(|(p, wi)| p * wi).sum()).collect()
    };

    let per_record: Vec<(f64, f64)> = recs
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<(f64, f64)> {
            let tau = policy.apply(&r.x)?;
            let f_mid = density_on_grid(&kde.weights(tau, &r.x)?);
            let f_up = density_on_grid(&kde.weights(tau + step, &r.x)?);
            let f_down = density_on_grid(&kde.weights(tau - step, &r.x)?);
            let curvature: Vec<f64> = (0..m)
                .map(|g| 0.5 * grid[g] * (f_up[g] - 2.0 * f_mid[g] + f_down[g]) / (step * step))
                .collect();
            let second_moment: Vec<f64> = (0..m).map(|g| grid[g] * grid[g] * f_mid[g]).collect();
            let q = gps.density(tau, &r.x);
            if !(q >= MIN_PROPENSITY) {
                return Err(Error::ZeroPropensity { index: i, q });
            }
            Ok((trapezoid(&curvature, dy), trapezoid(&second_moment, dy) / q))
        })
        .collect::<Result<Vec<_>>>()?;

    let (sum_bias, sum_var) = per_record.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let c1 = kernel.moment2() * sum_bias / n as f64;
    let c3 = kernel.roughness() * sum_var / n as f64;
    let mut est = PluginEstimate::from_constants(c1, c3, n)?;
    est.diagnostics = Some(PluginDiagnostics {
        n,
        y_grid_points: m,
        y_grid: (y_min, y_max),
        fd_step: step,
        kde_bandwidths: kde.bandwidths(),
    });
    Ok(est)
}

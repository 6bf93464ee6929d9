//! Kernelized off-policy value estimators for continuous treatments.
//!
//! All three estimators replace the indicator `1{tau(x_i) = t_i}` of discrete
//! inverse propensity weighting with a kernel weight
//! `K((tau(x_i) - t_i) / h) / h`:
//!
//! * IPW: `(1/(n h)) sum K(u_i) y_i / q_i`
//! * self-normalized: `sum K(u_i) y_i / q_i / sum K(u_i) / q_i`
//! * doubly robust: `(1/n) sum [r(tau_i, x_i) + K(u_i) (y_i - r(t_i, x_i)) / (h q_i)]`
//!
//! Propensities are clipped from below at `clip_theta` before inversion.
//! With boundary correction on, each kernel weight is further divided by the
//! fraction of kernel mass that falls inside the dataset's treatment bounds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::DoseResponse;
use crate::data::{Dataset, EvalResult};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::policies::Policy;
use crate::propensity::{effective_propensity, DEFAULT_CLIP};

/// Evaluations with fewer contributing records than this are flagged.
pub const LOW_OVERLAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[serde(alias = "ipw")]
    Ipw,
    #[serde(alias = "sn")]
    SelfNormalized,
    #[serde(alias = "dr")]
    DoublyRobust,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipw" => Ok(Self::Ipw),
            "sn" | "self_normalized" => Ok(Self::SelfNormalized),
            "dr" | "doubly_robust" => Ok(Self::DoublyRobust),
            other => Err(Error::Config(format!("unknown estimator `{other}` (expected ipw | sn | dr)"))),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ipw => "ipw",
            Self::SelfNormalized => "sn",
            Self::DoublyRobust => "dr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub kernel: Kernel,
    pub bandwidth: f64,
    /// Lower clip on propensities; 0 disables clipping.
    #[serde(default = "default_clip")]
    pub clip_theta: f64,
    #[serde(default)]
    pub boundary_correction: bool,
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, kernel: Kernel, bandwidth: f64) -> Self {
        Self { kind, kernel, bandwidth, clip_theta: DEFAULT_CLIP, boundary_correction: false }
    }

    pub fn with_clip(mut self, theta: f64) -> Self {
        self.clip_theta = theta;
        self
    }

    pub fn with_boundary_correction(mut self, on: bool) -> Self {
        self.boundary_correction = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.clip_theta >= 0.0) {
            return Err(Error::Config(format!("clip threshold must be >= 0, got {}", self.clip_theta)));
        }
        Ok(())
    }
}

/// Per-record kernel weights `a_i = K(u_i) / (h q_i m_i)` and, on request,
/// their derivatives with respect to the assigned treatment `tau_i`.
pub(crate) struct KernelWeights {
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub n_eff: usize,
    /// `sum_i K(u_i) / (q_i m_i)`, the unscaled self-normalization mass.
    pub mass: f64,
}

pub(crate) fn kernel_weights(
    dataset: &Dataset,
    taus: &[f64],
    cfg: &EstimatorConfig,
    with_grad: bool,
) -> Result<KernelWeights> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bounds = if cfg.boundary_correction {
        Some(dataset.bounds().ok_or(Error::MissingTreatmentBounds)?)
    } else {
        None
    };
    let h = cfg.bandwidth;
    let k = cfg.kernel;
    let n = dataset.len();
    let mut a = Vec::with_capacity(n);
    let mut da = if with_grad { Vec::with_capacity(n) } else { Vec::new() };
    let mut n_eff = 0;
    let mut mass = 0.0;
    for (i, (r, &tau)) in dataset.records().iter().zip(taus).enumerate() {
        let q = effective_propensity(i, r.q, cfg.clip_theta)?;
        let u = (tau - r.t) / h;
        let kv = k.eval(u);
        let (m, dm) = match bounds {
            Some(b) => (
                k.boundary_mass(tau, h, b.lo, b.hi)?,
                if with_grad { k.boundary_mass_grad(tau, h, b.lo, b.hi) } else { 0.0 },
            ),
            None => (1.0, 0.0),
        };
        if kv != 0.0 {
            n_eff += 1;
        }
        mass += kv / (q * m);
        a.push(kv / (h * q * m));
        if with_grad {
            let dk = k.grad(u) / h;
            da.push((dk / m - kv * dm / (m * m)) / (h * q));
        }
    }
    Ok(KernelWeights { a, da, n_eff, mass })
}

fn finish(estimate: f64, terms: Vec<f64>, n_eff: usize, bandwidth: f64) -> EvalResult {
    let std = dispersion(&terms, estimate);
    EvalResult { estimate, terms, std, n_eff, bandwidth, low_overlap: n_eff < LOW_OVERLAP }
}

fn dispersion(terms: &[f64], estimate: f64) -> f64 {
    let ss: f64 = terms.iter().map(|z| (z - estimate).powi(2)).sum();
    ss.sqrt() / terms.len() as f64
}

fn check_kind(cfg: &EstimatorConfig, want: EstimatorKind) -> Result<()> {
    if cfg.kind != want {
        return Err(Error::Config(format!("estimator kind is {}, expected {want}", cfg.kind)));
    }
    Ok(())
}

pub(crate) fn ipw_from_taus(dataset: &Dataset, taus: &[f64], cfg: &EstimatorConfig) -> Result<EvalResult> {
    let w = kernel_weights(dataset, taus, cfg, false)?;
    let terms: Vec<f64> = w.a.iter().zip(dataset.outcomes()).map(|(a, y)| a * y).collect();
    let estimate = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(finish(estimate, terms, w.n_eff, cfg.bandwidth))
}

pub(crate) fn sn_from_taus(dataset: &Dataset, taus: &[f64], cfg: &EstimatorConfig) -> Result<EvalResult> {
    let w = kernel_weights(dataset, taus, cfg, false)?;
    if w.mass <= 1e-12 {
        return Err(Error::NoOverlap { denominator: w.mass });
    }
    let denom: f64 = w.a.iter().sum();
    let n = dataset.len() as f64;
    let numer: f64 = w.a.iter().zip(dataset.outcomes()).map(|(a, y)| a * y).sum();
    let estimate = numer / denom;
    // n * normalized weight * y, so that mean(terms) == estimate
    let terms = w.a.iter().zip(dataset.outcomes()).map(|(a, y)| n * a * y / denom).collect();
    Ok(finish(estimate, terms, w.n_eff, cfg.bandwidth))
}

pub(crate) fn dr_from_taus(
    dataset: &Dataset,
    taus: &[f64],
    cfg: &EstimatorConfig,
    regressor: &dyn DoseResponse,
) -> Result<EvalResult> {
    let w = kernel_weights(dataset, taus, cfg, false)?;
    let terms: Vec<f64> = dataset
        .records()
        .iter()
        .zip(taus)
        .zip(&w.a)
        .map(|((r, &tau), a)| regressor.predict(tau, &r.x) + a * (r.y - regressor.predict(r.t, &r.x)))
        .collect();
    let estimate = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(finish(estimate, terms, w.n_eff, cfg.bandwidth))
}

pub fn ipw_evaluate(dataset: &Dataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<EvalResult> {
    check_kind(cfg, EstimatorKind::Ipw)?;
    ipw_from_taus(dataset, &policy.treatments(dataset)?, cfg)
}

pub fn sn_evaluate(dataset: &Dataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<EvalResult> {
    check_kind(cfg, EstimatorKind::SelfNormalized)?;
    sn_from_taus(dataset, &policy.treatments(dataset)?, cfg)
}

pub fn dr_evaluate(
    dataset: &Dataset,
    policy: &Policy,
    cfg: &EstimatorConfig,
    regressor: &dyn DoseResponse,
) -> Result<EvalResult> {
    check_kind(cfg, EstimatorKind::DoublyRobust)?;
    dr_from_taus(dataset, &policy.treatments(dataset)?, cfg, regressor)
}

/// Dispatches on `cfg.kind`. The regressor is required for the doubly
/// robust kind and ignored otherwise.
pub fn evaluate(
    dataset: &Dataset,
    policy: &Policy,
    cfg: &EstimatorConfig,
    regressor: Option<&dyn DoseResponse>,
) -> Result<EvalResult> {
    let taus = policy.treatments(dataset)?;
    evaluate_taus(dataset, &taus, cfg, regressor)
}

pub(crate) fn evaluate_taus(
    dataset: &Dataset,
    taus: &[f64],
    cfg: &EstimatorConfig,
    regressor: Option<&dyn DoseResponse>,
) -> Result<EvalResult> {
    match cfg.kind {
        EstimatorKind::Ipw => ipw_from_taus(dataset, taus, cfg),
        EstimatorKind::SelfNormalized => sn_from_taus(dataset, taus, cfg),
        EstimatorKind::DoublyRobust => dr_from_taus(dataset, taus, cfg, regressor.ok_or(Error::MissingRegressor)?),
    }
}

/// The variance-regularization statistic `(1/n) sqrt(sum (z_i - v)^2)`,
/// computed on the per-record terms (which include the `1/h` factor).
pub fn reg_std(result: &EvalResult) -> f64 {
    dispersion(&result.terms, result.estimate)
}

/// `(1/(n h)) sum K(u_i) / q_i`, the self-normalization denominator on the
/// IPW scale. Converges to 1 under a correctly specified GPS.
pub fn weight_mass(dataset: &Dataset, policy: &Policy, cfg: &EstimatorConfig) -> Result<f64> {
    let w = kernel_weights(dataset, &policy.treatments(dataset)?, cfg, false)?;
    Ok(w.a.iter().sum::<f64>() / dataset.len() as f64)
}

//! Experiment specs and the Monte Carlo replication harness.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadratic::{gen_10d, QuadraticDesign10D};
use super::synthetic::{gen_1d, true_value_1d, SyntheticDesign1D};
use super::warfarin::{load_cohort_csv, run_warfarin, surrogate_cohort, WarfarinConfig};
use crate::baselines::{discretized_evaluate, dm_evaluate, dm_fit};
use crate::bandwidth::rescale_bandwidth;
use crate::error::{Error, Result};
use crate::estimators::{evaluate, EstimatorConfig, EstimatorKind};
use crate::kernels::Kernel;
use crate::optimizer::{logged_starts, optimize, overlap_init_box, OptimizeConfig, SearchConfig};
use crate::policies::{ConstraintSet, LinearClass, Policy, PolicyKind};
use crate::propensity::impute_gps_linear;
use crate::rng::{derive_seed, stream};

/// 1.96, the two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed { h: f64 },
    /// `h0 · (n0 / n)^{1/5}`.
    Rescaled { h0: f64, n0: usize },
}

impl BandwidthRule {
    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            BandwidthRule::Fixed { h } => h,
            BandwidthRule::Rescaled { h0, n0 } => rescale_bandwidth(h0, n0, n),
        }
    }
}

fn default_clip() -> f64 {
    crate::propensity::DEFAULT_CLIP
}

fn default_kernel() -> Kernel {
    Kernel::Epanechnikov
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method1D {
    Kernelized {
        estimator: EstimatorKind,
        #[serde(default = "default_kernel")]
        kernel: Kernel,
        #[serde(default = "default_clip")]
        clip_theta: f64,
        #[serde(default)]
        boundary_correction: bool,
    },
    Discretized {
        bins: usize,
        #[serde(default = "default_clip")]
        clip_theta: f64,
    },
    DirectMethod {
        degree: u32,
    },
}

/// Off-policy evaluation of a fixed policy on the one-dimensional design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluate1D {
    #[serde(default)]
    pub design: SyntheticDesign1D,
    pub n: usize,
    pub policy: Policy,
    pub method: Method1D,
    pub bandwidth: BandwidthRule,
}

/// Policy learning over `tau(x) = beta·x` on the one-dimensional design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learn1D {
    #[serde(default)]
    pub design: SyntheticDesign1D,
    pub n: usize,
    pub estimator: EstimatorKind,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule,
    #[serde(default = "default_clip")]
    pub clip_theta: f64,
    #[serde(default)]
    pub lambda_reg: f64,
    #[serde(default)]
    pub min_overlap: usize,
    /// Box on `beta`; `None` leaves it unconstrained.
    #[serde(default)]
    pub beta_bounds: Option<(f64, f64)>,
    #[serde(default)]
    pub search: SearchConfig,
}

/// Ten-dimensional quadratic design with imputed propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRun {
    #[serde(default)]
    pub design: QuadraticDesign10D,
    pub estimator: EstimatorKind,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    pub bandwidth: f64,
    #[serde(default)]
    pub clip_theta: f64,
    #[serde(default)]
    pub lambda_reg: f64,
    #[serde(default)]
    pub min_overlap: usize,
    /// Seed the search with the mean logged dose and the least-squares fit
    /// of logged dose on `x`, and draw random starts near the logged doses.
    #[serde(default)]
    pub start_from_logged: bool,
    #[serde(default)]
    pub search: SearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CohortSource {
    Surrogate {
        n: usize,
    },
    Csv {
        path: PathBuf,
        /// Explicit feature list; otherwise the `top_k` features most
        /// correlated with the therapeutic dose.
        #[serde(default)]
        features: Option<Vec<String>>,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
}

fn default_top_k() -> usize {
    81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarfarinRun {
    pub cohort: CohortSource,
    #[serde(default)]
    pub config: WarfarinConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Evaluate1d(Evaluate1D),
    Learn1d(Learn1D),
    Quadratic(QuadraticRun),
    Warfarin(WarfarinRun),
}

pub type Metrics = BTreeMap<String, f64>;

fn linear_truth(policy: &Policy) -> Option<f64> {
    match &policy.kind {
        PolicyKind::Linear { beta, intercept } if beta.len() == 1 => Some(true_value_1d(beta[0], *intercept)),
        PolicyKind::Constant { dose } => Some(true_value_1d(0.0, *dose)),
        _ => None,
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    /// One replication with the given seed; returns named metrics. A
    /// self-normalized evaluation with an empty kernel window reports
    /// `no_overlap = 1` and no estimate.
    pub fn run_once(&self, seed: u64) -> Result<Metrics> {
        let mut m = Metrics::new();
        match self {
            ExperimentSpec::Evaluate1d(spec) => {
                let ds = gen_1d(&spec.design, spec.n, seed);
                let h = spec.bandwidth.resolve(spec.n);
                let estimate = match spec.method {
                    Method1D::Kernelized { estimator, kernel, clip_theta, boundary_correction } => {
                        let cfg = EstimatorConfig::new(estimator, kernel, h)
                            .with_clip(clip_theta)
                            .with_boundary_correction(boundary_correction);
                        match evaluate(&ds, &spec.policy, &cfg, None) {
                            Ok(r) => r.estimate,
                            // small samples can leave the kernel window empty
                            Err(Error::NoOverlap { .. }) => {
                                m.insert("no_overlap".into(), 1.0);
                                return Ok(m);
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    Method1D::Discretized { bins, clip_theta } => {
                        discretized_evaluate(&ds, &spec.policy, &spec.design.gps(), bins, clip_theta)?
                    }
                    Method1D::DirectMethod { degree } => dm_evaluate(&dm_fit(&ds, degree)?, &ds, &spec.policy)?,
                };
                m.insert("estimate".into(), estimate);
                m.insert("no_overlap".into(), 0.0);
                if let Some(truth) = linear_truth(&spec.policy) {
                    m.insert("truth".into(), truth);
                    m.insert("error".into(), estimate - truth);
                }
            }
            ExperimentSpec::Learn1d(spec) => {
                let ds = gen_1d(&spec.design, spec.n, seed);
                let constraints = match spec.beta_bounds {
                    Some((lo, hi)) => ConstraintSet::Box { lower: vec![lo], upper: vec![hi] },
                    None => ConstraintSet::None,
                };
                let class = LinearClass::new(1, false, constraints);
                let cfg = OptimizeConfig {
                    estimator: EstimatorConfig::new(spec.estimator, spec.kernel, spec.bandwidth.resolve(spec.n))
                        .with_clip(spec.clip_theta),
                    lambda_reg: spec.lambda_reg,
                    min_overlap: spec.min_overlap,
                    search: SearchConfig { seed: derive_seed(seed, stream::RESTART, 0), ..spec.search.clone() },
                };
                let report = optimize(&ds, &class, &cfg, None)?;
                let beta = report.best_params[0];
                m.insert("beta".into(), beta);
                m.insert("objective".into(), report.best_objective);
                m.insert("regret".into(), true_value_1d(beta, 0.0));
            }
            ExperimentSpec::Quadratic(spec) => {
                let (train, oracle) = gen_10d(&spec.design, seed);
                let gps = impute_gps_linear(&train)?;
                let train = gps.attach(&train);
                let class = LinearClass::new(spec.design.dim, true, ConstraintSet::None);
                let mut search = SearchConfig { seed: derive_seed(seed, stream::RESTART, 0), ..spec.search.clone() };
                if spec.start_from_logged {
                    search.starts.extend(logged_starts(&train)?);
                    search.init_box.get_or_insert_with(|| overlap_init_box(&train));
                }
                let cfg = OptimizeConfig {
                    estimator: EstimatorConfig::new(spec.estimator, spec.kernel, spec.bandwidth).with_clip(spec.clip_theta),
                    lambda_reg: spec.lambda_reg,
                    min_overlap: spec.min_overlap,
                    search,
                };
                let report = optimize(&train, &class, &cfg, None)?;
                let mean_t = train.treatments().sum::<f64>() / train.len() as f64;
                m.insert("cpo".into(), oracle.mean_loss(&report.best_policy)?);
                m.insert("mean_dose".into(), oracle.mean_loss(&Policy::constant(mean_t))?);
                m.insert("oracle".into(), oracle.oracle_mean_loss());
            }
            ExperimentSpec::Warfarin(spec) => {
                let cohort = match &spec.cohort {
                    CohortSource::Surrogate { n } => surrogate_cohort(*n, seed),
                    CohortSource::Csv { path, features, top_k } => {
                        let c = load_cohort_csv(path)?;
                        let names = features.clone().unwrap_or_else(|| c.rank_by_correlation(*top_k));
                        c.select(&names)?
                    }
                };
                let report = run_warfarin(&cohort, &spec.config, seed)?;
                for (k, v) in &report.losses {
                    m.insert(format!("{k}_l1"), v.mean_l1);
                    m.insert(format!("{k}_l2"), v.mean_l2);
                }
            }
        }
        Ok(m)
    }
}

/// Mean, spread and 95% intervals of one metric across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    /// Monte Carlo standard error of the mean, `std / √reps`.
    pub std_error: f64,
    /// `mean ± 1.96 · std_error`.
    pub ci_low: f64,
    pub ci_high: f64,
    /// `mean ± 1.96 · std`, the band holding about 95% of single estimates.
    pub spread_low: f64,
    pub spread_high: f64,
}

pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.len() < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = std / n.sqrt();
    Ok(MetricSummary {
        mean,
        std,
        std_error: se,
        ci_low: mean - Z95 * se,
        ci_high: mean + Z95 * se,
        spread_low: mean - Z95 * std,
        spread_high: mean + Z95 * std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub spec: ExperimentSpec,
    pub reps: usize,
    pub seed: u64,
    /// Per-replication metrics, in replication order.
    pub rows: Vec<Metrics>,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl ReplicationReport {
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.get(metric).copied()).collect()
    }

    /// Per-replication rows as CSV: `rep` followed by the metric columns.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let names: Vec<&String> = self.summary.keys().collect();
        let mut header = vec!["rep".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(names.iter().map(|k| row.get(*k).map_or(String::new(), |v| v.to_string())));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io { context: "writing replication CSV".into(), source })?;
        Ok(())
    }
}

/// Runs `f` once per replication with seeds derived from `(seed, rep)` and
/// summarizes every metric. Replications run in parallel; results keep
/// replication order.
pub fn replicate_with<F>(reps: usize, seed: u64, f: F) -> Result<(Vec<Metrics>, BTreeMap<String, MetricSummary>)>
where
    F: Fn(u64) -> Result<Metrics> + Sync,
{
    if reps < 2 {
        return Err(Error::Config(format!("reps must be at least 2, got {reps}")));
    }
    let rows = (0..reps)
        .into_par_iter()
        .map(|r| f(derive_seed(seed, stream::REPLICATION, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<String> = rows.iter().flat_map(|r| r.keys().cloned()).collect();
    names.sort();
    names.dedup();
    let summary = names
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(&k).copied()).collect();
            Ok((k, summarize(&vals)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok((rows, summary))
}

pub fn replicate(spec: &ExperimentSpec, reps: usize, seed: u64) -> Result<ReplicationReport> {
    let (rows, summary) = replicate_with(reps, seed, |s| spec.run_once(s))?;
    Ok(ReplicationReport { spec: spec.clone(), reps, seed, rows, summary })
}

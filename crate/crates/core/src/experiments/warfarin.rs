//! Semi-simulated dosing study: logged doses are drawn around the mean
//! therapeutic dose with a BMI-driven shift, and the loss is the distance
//! from the ±10% band around each patient's therapeutic dose.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Normal};

use crate::baselines::dm_fit_pruned;
use crate::data::{Dataset, LogRecord};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::kernels::Kernel;
use crate::linalg::least_squares;
use crate::optimizer::{
    feature_step_scales, logged_starts, optimize, optimize_objective, overlap_init_box, DirectMethodObjective, OptimizeConfig,
    SearchConfig,
};
use crate::policies::{warfarin_box_named, LinearClass, Policy};
use crate::rng::{rng_for, std_normal, stream};

pub const DOSE_COLUMN: &str = "therapeutic_dose";
pub const BMI_COLUMN: &str = "bmi";

/// Patients with candidate features, therapeutic dose and BMI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub therapeutic: Vec<f64>,
    pub bmi: Vec<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.therapeutic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.therapeutic.is_empty()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|row| row[j]).collect()
    }

    /// Keeps the named features, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Cohort> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::Config(format!("feature `{n}` not in cohort")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cohort {
            feature_names: names.to_vec(),
            features: self.features.iter().map(|row| idx.iter().map(|&j| row[j]).collect()).collect(),
            therapeutic: self.therapeutic.clone(),
            bmi: self.bmi.clone(),
        })
    }

    /// Names of the `k` features most correlated (in absolute value) with
    /// the therapeutic dose. Constant and zero-mean columns are skipped; ties
    /// keep column order.
    pub fn rank_by_correlation(&self, k: usize) -> Vec<String> {
        let (md, sd_d) = mean_sd(&self.therapeutic);
        let mut scored: Vec<(usize, f64)> = (0..self.feature_names.len())
            .filter_map(|j| {
                let col = self.column(j);
                let (m, s) = mean_sd(&col);
                if !(s > 0.0) || m.abs() < 1e-12 {
                    return None;
                }
                let cov = col.iter().zip(&self.therapeutic).map(|(a, b)| (a - m) * (b - md)).sum::<f64>()
                    / (col.len() as f64 - 1.0);
                Some((j, (cov / (s * sd_d)).abs()))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.into_iter().take(k).map(|(j, _)| self.feature_names[j].clone()).collect()
    }
}

/// Synthetic stand-in for a clinical cohort: log-normal therapeutic doses
/// (mean around 30 mg/week) driven by BMI, age and binary risk markers.
pub fn surrogate_cohort(n: usize, seed: u64) -> Cohort {
    let mut rng = rng_for(seed, stream::DESIGN, 0);
    let mut rows = Vec::with_capacity(n);
    let mut therapeutic = Vec::with_capacity(n);
    let mut bmi = Vec::with_capacity(n);
    for _ in 0..n {
        let z: [f64; 3] = std::array::from_fn(|_| std_normal(&mut rng));
        let b = (28.5 + 5.5 * z[0]).clamp(16.0, 55.0);
        let age = (6.0 + 1.5 * z[1]).round().clamp(2.0, 9.0);
        let v: f64 = rng.random();
        let (ag, aa) = if v < 0.2 { (0.0, 1.0) } else if v < 0.6 { (1.0, 0.0) } else { (0.0, 0.0) };
        let cyp = f64::from(rng.random::<f64>() < 0.2);
        let amio = f64::from(rng.random::<f64>() < 0.07);
        let inducer = f64::from(rng.random::<f64>() < 0.05);
        let log_dose = 3.43 + 0.025 * (b - 28.5) - 0.08 * (age - 6.0) - 0.2 * ag - 0.55 * aa - 0.3 * cyp - 0.25 * amio
            + 0.3 * inducer
            + 0.22 * z[2];
        rows.push(vec![b, age, ag, aa, cyp, amio, inducer]);
        therapeutic.push(log_dose.exp());
        bmi.push(b);
    }
    let feature_names = ["bmi", "age_decades", "vkorc1_ag", "vkorc1_aa", "cyp2c9_variant", "amiodarone", "enzyme_inducer"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Cohort { feature_names, features: rows, therapeutic, bmi }
}

/// Reads a cohort CSV with a `therapeutic_dose` column and either `bmi` or
/// `height` (cm) and `weight` (kg). Every other column holding only numbers
/// or blanks becomes a candidate feature, blanks imputed by the column mean.
/// Rows without a dose or BMI are skipped.
pub fn read_cohort_csv<R: Read>(reader: R) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let pos = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let dose_col = pos(DOSE_COLUMN).ok_or_else(|| Error::Config(format!("missing required column `{DOSE_COLUMN}`")))?;
    let bmi_cols = match (pos(BMI_COLUMN), pos("height"), pos("weight")) {
        (Some(b), _, _) => (b, None),
        (None, Some(h), Some(w)) => (h, Some(w)),
        _ => return Err(Error::Config("missing `bmi` column (or both `height` and `weight`)".into())),
    };

    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut numeric = vec![true; headers.len()];
    let mut dose = Vec::new();
    let mut bmi = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Parse { line, message: format!("expected {} fields, found {}", headers.len(), rec.len()) });
        }
        let row: Vec<Option<f64>> = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                if s.is_empty() || s.eq_ignore_ascii_case("na") {
                    None
                } else {
                    let v = s.parse::<f64>().ok().filter(|v| v.is_finite());
                    if v.is_none() {
                        numeric[j] = false;
                    }
                    v
                }
            })
            .collect();
        let b = match bmi_cols {
            (b, None) => row[b],
            (h, Some(w)) => match (row[h], row[w]) {
                (Some(h), Some(w)) if h > 0.0 => Some(w / (h / 100.0).powi(2)),
                _ => None,
            },
        };
        let (Some(d), Some(b)) = (row[dose_col], b) else { continue };
        if !(d > 0.0) {
            return Err(Error::Parse { line, message: format!("therapeutic dose must be positive, got {d}") });
        }
        dose.push(d);
        bmi.push(b);
        cells.push(row);
    }
    if dose.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if j == dose_col || !numeric[j] {
            continue;
        }
        let present: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
        if present.is_empty() {
            continue;
        }
        let fill = present.iter().sum::<f64>() / present.len() as f64;
        names.push(h.to_lowercase());
        columns.push(cells.iter().map(|r| r[j].unwrap_or(fill)).collect());
    }
    if bmi_cols.1.is_some() {
        names.push(BMI_COLUMN.into());
        columns.push(bmi.clone());
    }
    let features = (0..dose.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(Cohort { feature_names: names, features, therapeutic: dose, bmi })
}

pub fn load_cohort_csv(path: impl AsRef<Path>) -> Result<Cohort> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { context: path.display().to_string(), source })?;
    read_cohort_csv(file)
}

/// Distance from the band `[0.9 T*, 1.1 T*]`.
pub fn loss_band(dose: f64, t_star: f64) -> f64 {
    ((dose - t_star).abs() - 0.1 * t_star).max(0.0)
}

pub fn loss_band_sq(dose: f64, t_star: f64) -> f64 {
    loss_band(dose, t_star).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarfarinDesign {
    pub theta: f64,
}

impl Default for WarfarinDesign {
    fn default() -> Self {
        Self { theta: 0.5 }
    }
}

/// Logged doses `T = μ* + σ*√θ Z_BMI + σ*√(1−θ) ε` with the exact
/// conditional density of each draw, returned as `(dose, q)` pairs.
pub fn simulate_doses(therapeutic: &[f64], bmi: &[f64], theta: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    if therapeutic.len() != bmi.len() {
        return Err(Error::DimensionMismatch { expected: therapeutic.len(), got: bmi.len() });
    }
    if therapeutic.len() < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: therapeutic.len() });
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [0, 1), got {theta}")));
    }
    let (mu_t, sd_t) = mean_sd(therapeutic);
    let (mu_b, sd_b) = mean_sd(bmi);
    if !(sd_b > 1e-12) {
        return Err(Error::DegenerateBmi);
    }
    let cond_sd = sd_t * (1.0 - theta).sqrt();
    let mut rng = rng_for(seed, stream::TREATMENT, 0);
    bmi.iter()
        .map(|b| {
            let center = mu_t + sd_t * theta.sqrt() * (b - mu_b) / sd_b;
            let eps = std_normal(&mut rng);
            let dose = center + cond_sd * eps;
            let q = Normal::new(center, cond_sd).map_err(|e| Error::Config(e.to_string()))?.pdf(dose);
            Ok((dose, q))
        })
        .collect()
}

/// Logged dataset over the cohort's features: simulated doses, band losses
/// and exact propensities.
pub fn warfarin_simulate(cohort: &Cohort, design: &WarfarinDesign, seed: u64) -> Result<Dataset> {
    let draws = simulate_doses(&cohort.therapeutic, &cohort.bmi, design.theta, seed)?;
    let records = draws
        .iter()
        .zip(&cohort.features)
        .zip(&cohort.therapeutic)
        .map(|(((t, q), x), star)| LogRecord::new(x.clone(), *t, loss_band(*t, *star), *q))
        .collect();
    Ok(Dataset::new(cohort.feature_names.len(), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub mean_l1: f64,
    pub sd_l1: f64,
    pub mean_l2: f64,
}

pub fn score_doses(doses: &[f64], therapeutic: &[f64]) -> LossSummary {
    let l1: Vec<f64> = doses.iter().zip(therapeutic).map(|(d, t)| loss_band(*d, *t)).collect();
    let (mean_l1, sd_l1) = mean_sd(&l1);
    let mean_l2 = doses.iter().zip(therapeutic).map(|(d, t)| loss_band_sq(*d, *t)).sum::<f64>() / l1.len() as f64;
    LossSummary { mean_l1, sd_l1, mean_l2 }
}

pub fn score_policy(cohort: &Cohort, policy: &Policy) -> Result<LossSummary> {
    let doses = cohort.features.iter().map(|x| policy.apply(x)).collect::<Result<Vec<_>>>()?;
    Ok(score_doses(&doses, &cohort.therapeutic))
}

/// Median (least absolute deviation) regression with intercept by
/// iteratively reweighted least squares. Returns `(beta, intercept)`.
pub fn lad_fit(features: &[Vec<f64>], target: &[f64], names: &[String]) -> Result<(Vec<f64>, f64)> {
    let n = target.len();
    let d = features.first().map_or(0, Vec::len);
    let mut cols: Vec<String> = names.to_vec();
    cols.push("intercept".into());
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { features[i][j] } else { 1.0 });
    let y = DVector::from_column_slice(target);
    let mut coef = least_squares(&design, &y, &cols)?;
    for _ in 0..200 {
        let resid = &y - &design * &coef;
        let w: Vec<f64> = resid.iter().map(|r| 1.0 / r.abs().max(1e-6)).collect();
        let sw = DVector::from_iterator(n, w.iter().map(|v| v.sqrt()));
        let wd = DMatrix::from_fn(n, d + 1, |i, j| design[(i, j)] * sw[i]);
        let wy = y.component_mul(&sw);
        let next = least_squares(&wd, &wy, &cols)?;
        let change = (&next - &coef).norm() / coef.norm().max(1.0);
        coef = next;
        if change < 1e-10 {
            break;
        }
    }
    Ok((coef.rows(0, d).iter().copied().collect(), coef[d]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarfarinConfig {
    pub design: WarfarinDesign,
    pub estimator: EstimatorKind,
    pub kernel: Kernel,
    /// Defaults to `1.06 · σ*√(1−θ) · n^{−1/5}`.
    pub bandwidth: Option<f64>,
    pub clip_theta: f64,
    pub lambda_reg: f64,
    /// Smallest number of logged records a candidate policy's kernel
    /// window must hold during the search.
    pub min_overlap: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub dm_degree: u32,
}

impl Default for WarfarinConfig {
    fn default() -> Self {
        Self {
            design: WarfarinDesign::default(),
            estimator: EstimatorKind::SelfNormalized,
            kernel: Kernel::Epanechnikov,
            bandwidth: None,
            clip_theta: 0.0,
            lambda_reg: 0.0,
            min_overlap: 50,
            restarts: 20,
            max_iters: 300,
            dm_degree: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarfarinReport {
    pub n: usize,
    pub features: Vec<String>,
    pub bandwidth: f64,
    /// Loss summaries keyed by `best`, `cpo`, `dm`, `mean_dose`, `original`.
    pub losses: BTreeMap<String, LossSummary>,
    pub cpo_policy: Policy,
    pub dm_policy: Policy,
    pub best_policy: Policy,
}

/// Simulates logged doses for the cohort, learns a linear dosing policy by
/// minimizing the kernelized estimate of the band loss, and scores it
/// against median regression on the true doses, a direct-method policy,
/// the mean dose and the logged doses.
pub fn run_warfarin(cohort: &Cohort, cfg: &WarfarinConfig, seed: u64) -> Result<WarfarinReport> {
    let ds = warfarin_simulate(cohort, &cfg.design, seed)?;
    let n = ds.len();
    let (mu_t, sd_t) = mean_sd(&cohort.therapeutic);
    let h = cfg
        .bandwidth
        .unwrap_or_else(|| 1.06 * sd_t * (1.0 - cfg.design.theta).sqrt() * (n as f64).powf(-0.2));
    let (_, t_max) = ds.treatment_range().ok_or(Error::EmptyDataset)?;
    let mut class = LinearClass::new(ds.dim(), true, warfarin_box_named(&ds, &cohort.feature_names)?);
    class.intercept_bounds = Some((0.0, t_max));

    let search = SearchConfig {
        restarts: cfg.restarts,
        max_iters: cfg.max_iters,
        seed,
        init_box: Some(overlap_init_box(&ds)),
        starts: logged_starts(&ds)?,
        step_scales: Some(feature_step_scales(&ds)),
        ..SearchConfig::default()
    };
    let opt = OptimizeConfig {
        estimator: EstimatorConfig::new(cfg.estimator, cfg.kernel, h).with_clip(cfg.clip_theta),
        lambda_reg: cfg.lambda_reg,
        min_overlap: cfg.min_overlap,
        search: search.clone(),
    };
    let cpo = optimize(&ds, &class, &opt, None)?;

    let regressor = dm_fit_pruned(&ds, cfg.dm_degree)?;
    let dm_obj = DirectMethodObjective { dataset: &ds, class: &class, regressor: &regressor };
    let dm = optimize_objective(&dm_obj, &class, &ds, &search)?;

    let (beta, b0) = lad_fit(&cohort.features, &cohort.therapeutic, &cohort.feature_names)?;
    let best_policy = Policy::linear(beta, b0);

    let logged: Vec<f64> = ds.treatments().collect();
    let mut losses = BTreeMap::new();
    losses.insert("best".to_string(), score_policy(cohort, &best_policy)?);
    losses.insert("cpo".to_string(), score_policy(cohort, &cpo.best_policy)?);
    losses.insert("dm".to_string(), score_policy(cohort, &dm.best_policy)?);
    losses.insert("mean_dose".to_string(), score_policy(cohort, &Policy::constant(mu_t))?);
    losses.insert("original".to_string(), score_doses(&logged, &cohort.therapeutic));
    Ok(WarfarinReport {
        n,
        features: cohort.feature_names.clone(),
        bandwidth: h,
        losses,
        cpo_policy: cpo.best_policy,
        dm_policy: dm.best_policy,
        best_policy,
    })
}

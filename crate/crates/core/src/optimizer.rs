//! Policy search over linear policies by projected gradient descent with
//! Armijo backtracking and seeded random restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dm_evaluate, DoseResponse};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{evaluate_taus, kernel_weights, EstimatorConfig, EstimatorKind};
use crate::policies::{ConstraintSet, LinearClass, Policy};
use crate::rng::{rng_for, std_normal, stream};

/// A differentiable objective over policy parameters. `value` returns
/// `+∞` where the objective is undefined (e.g. no overlap).
pub trait Objective: Sync {
    fn value(&self, params: &[f64]) -> f64;
    fn gradient(&self, params: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when the projected-gradient step `||p − P(p − g)||` is below this.
    pub tolerance: f64,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub max_backtracks: usize,
    pub seed: u64,
    /// Per-parameter sampling ranges for restart initialization; derived from
    /// the data and constraints when absent.
    #[serde(default)]
    pub init_box: Option<Vec<(f64, f64)>>,
    /// Explicit starting points, run before the random restarts and
    /// indexed first.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    /// Positive per-parameter multipliers on the gradient step (a diagonal
    /// preconditioner); useful when features live on very different scales.
    #[serde(default)]
    pub step_scales: Option<Vec<f64>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 500,
            tolerance: 1e-6,
            initial_step: 1.0,
            armijo: 1e-4,
            max_backtracks: 60,
            seed: 0,
            init_box: None,
            starts: Vec::new(),
            step_scales: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        if let Some(s) = &self.step_scales {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config("step scales must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub estimator: EstimatorConfig,
    /// Weight on the standard-deviation regularizer.
    #[serde(default)]
    pub lambda_reg: f64,
    /// Policies whose kernel window holds fewer logged records than this
    /// are treated as infeasible during the search.
    #[serde(default)]
    pub min_overlap: usize,
    #[serde(flatten)]
    pub search: SearchConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartStatus {
    /// Projected gradient fell below tolerance.
    Converged,
    /// No step length passed the sufficient-decrease test.
    Stalled,
    MaxIters,
    /// The objective was not finite at the starting point.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub initial_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: RestartStatus,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub best_policy: Policy,
    pub best_params: Vec<f64>,
    pub best_objective: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Kernelized estimator plus `lambda_reg` times the regularizer, as a
/// function of linear-policy parameters.
pub struct EstimatorObjective<'a> {
    pub dataset: &'a Dataset,
    pub class: &'a LinearClass,
    pub estimator: EstimatorConfig,
    pub lambda_reg: f64,
    pub regressor: Option<&'a dyn DoseResponse>,
    pub min_overlap: usize,
}

impl<'a> EstimatorObjective<'a> {
    pub fn new(dataset: &'a Dataset, class: &'a LinearClass, estimator: EstimatorConfig, lambda_reg: f64) -> Self {
        Self { dataset, class, estimator, lambda_reg, regressor: None, min_overlap: 0 }
    }

    pub fn with_regressor(mut self, regressor: &'a dyn DoseResponse) -> Self {
        self.regressor = Some(regressor);
        self
    }

    fn taus(&self, params: &[f64]) -> Vec<f64> {
        self.dataset.records().iter().map(|r| self.class.treatment(params, &r.x)).collect()
    }

    /// Estimator value plus the weighted regularizer. Estimator errors are
    /// returned as-is; see [`Objective::value`] for the search-time mapping.
    pub fn evaluate(&self, params: &[f64]) -> Result<f64> {
        if params.len() != self.class.n_params() {
            return Err(Error::DimensionMismatch { expected: self.class.n_params(), got: params.len() });
        }
        let res = evaluate_taus(self.dataset, &self.taus(params), &self.estimator, self.regressor)?;
        if res.n_eff < self.min_overlap {
            return Err(Error::LowOverlap { n_eff: res.n_eff, required: self.min_overlap });
        }
        Ok(res.estimate + self.lambda_reg * res.std)
    }

    /// Analytic gradient, derived per record through `tau_i` and chained
    /// into the parameters.
    pub fn analytic_gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        let ds = self.dataset;
        let n = ds.len() as f64;
        let taus = self.taus(params);
        let w = kernel_weights(ds, &taus, &self.estimator, true)?;
        let ys: Vec<f64> = ds.outcomes().collect();

        // terms z_i, estimate v, dv/dtau_i and G_i = sum_j (z_j - v) dz_j/dtau_i
        let (v, dv, g): (f64, Vec<f64>, Vec<f64>) = match self.estimator.kind {
            EstimatorKind::Ipw => {
                let z: Vec<f64> = w.a.iter().zip(&ys).map(|(a, y)| a * y).collect();
                let v = z.iter().sum::<f64>() / n;
                let dv = w.da.iter().zip(&ys).map(|(da, y)| da * y / n).collect();
                let g = w.da.iter().zip(&ys).zip(&z).map(|((da, y), z)| (z - v) * da * y).collect();
                (v, dv, g)
            }
            EstimatorKind::SelfNormalized => {
                if w.mass <= 1e-12 {
                    return Err(Error::NoOverlap { denominator: w.mass });
                }
                let d: f64 = w.a.iter().sum();
                let v = w.a.iter().zip(&ys).map(|(a, y)| a * y).sum::<f64>() / d;
                let z: Vec<f64> = w.a.iter().zip(&ys).map(|(a, y)| n * a * y / d).collect();
                let c = z.iter().zip(&w.a).zip(&ys).map(|((z, a), y)| (z - v) * a * y).sum::<f64>() / d;
                let dv = w.da.iter().zip(&ys).map(|(da, y)| da * (y - v) / d).collect();
                let g = w.da.iter().zip(&ys).zip(&z).map(|((da, y), z)| n * da / d * ((z - v) * y - c)).collect();
                (v, dv, g)
            }
            EstimatorKind::DoublyRobust => {
                let reg = self.regressor.ok_or(Error::MissingRegressor)?;
                let mut z = Vec::with_capacity(ds.len());
                let mut dz = Vec::with_capacity(ds.len());
                for (i, r) in ds.records().iter().enumerate() {
                    let resid = r.y - reg.predict(r.t, &r.x);
                    z.push(reg.predict(taus[i], &r.x) + w.a[i] * resid);
                    dz.push(reg.predict_dt(taus[i], &r.x) + w.da[i] * resid);
                }
                let v = z.iter().sum::<f64>() / n;
                let dv = dz.iter().map(|d| d / n).collect();
                let g = z.iter().zip(&dz).map(|(z, d)| (z - v) * d).collect();
                (v, dv, g)
            }
        };

        let ss: f64 = match self.estimator.kind {
            EstimatorKind::SelfNormalized => {
                let d: f64 = w.a.iter().sum();
                w.a.iter().zip(&ys).map(|(a, y)| (n * a * y / d - v).powi(2)).sum()
            }
            EstimatorKind::Ipw => w.a.iter().zip(&ys).map(|(a, y)| (a * y - v).powi(2)).sum(),
            EstimatorKind::DoublyRobust => {
                let reg = self.regressor.ok_or(Error::MissingRegressor)?;
                ds.records()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let z = reg.predict(taus[i], &r.x) + w.a[i] * (r.y - reg.predict(r.t, &r.x));
                        (z - v).powi(2)
                    })
                    .sum()
            }
        };
        // d std / d tau_i = G_i / (n sqrt(SS)); zero where std vanishes
        let reg_scale = if self.lambda_reg != 0.0 && ss > 0.0 { self.lambda_reg / (n * ss.sqrt()) } else { 0.0 };

        let mut grad = vec![0.0; self.class.n_params()];
        for (i, r) in ds.records().iter().enumerate() {
            let scale = dv[i] + reg_scale * g[i];
            if scale != 0.0 {
                self.class.treatment_grad(&r.x, scale, &mut grad);
            }
        }
        Ok(grad)
    }
}

impl Objective for EstimatorObjective<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        self.evaluate(params).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.analytic_gradient(params).unwrap_or_else(|_| vec![0.0; params.len()])
    }
}

/// Direct-method objective `(1/n) sum r(tau(x_i), x_i)` with numerical
/// gradients.
pub struct DirectMethodObjective<'a> {
    pub dataset: &'a Dataset,
    pub class: &'a LinearClass,
    pub regressor: &'a dyn DoseResponse,
}

impl Objective for DirectMethodObjective<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        dm_evaluate(self.regressor, self.dataset, &self.class.policy(params)).unwrap_or(f64::INFINITY)
    }

    /// Central difference of the regressor in `t` at each record's assigned
    /// dose, chained into the parameters. Costs two predictions per record
    /// instead of two per record and parameter.
    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.dataset.len().max(1) as f64;
        let mut g = vec![0.0; params.len()];
        for r in self.dataset.records() {
            let t = self.class.treatment(params, &r.x);
            let step = 1e-6 * t.abs().max(1.0);
            let s = (self.regressor.predict(t + step, &r.x) - self.regressor.predict(t - step, &r.x)) / (2.0 * step * n);
            for (gj, xj) in g.iter_mut().zip(&r.x) {
                *gj += s * xj;
            }
            if self.class.intercept {
                g[self.class.dim] += s;
            }
        }
        g
    }
}

/// Objective value at the linear policy given by `params`.
pub fn objective(dataset: &Dataset, class: &LinearClass, params: &[f64], cfg: &OptimizeConfig) -> Result<f64> {
    match EstimatorObjective::new(dataset, class, cfg.estimator.clone(), cfg.lambda_reg).evaluate(params) {
        Err(Error::NoOverlap { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

pub fn gradient(dataset: &Dataset, class: &LinearClass, params: &[f64], cfg: &OptimizeConfig) -> Result<Vec<f64>> {
    EstimatorObjective::new(dataset, class, cfg.estimator.clone(), cfg.lambda_reg).analytic_gradient(params)
}

/// Sampling ranges used to draw restart points when the constraint set
/// does not bound a coordinate. Each coefficient gets
/// `±max|t| / (d · mean|x_j|)`; the intercept gets the observed treatment
/// range.
pub fn default_init_box(dataset: &Dataset, class: &LinearClass) -> Vec<(f64, f64)> {
    let (t_lo, t_hi) = dataset.treatment_range().unwrap_or((-1.0, 1.0));
    let t_abs = t_lo.abs().max(t_hi.abs()).max(1e-12);
    let n = dataset.len().max(1) as f64;
    let mut out: Vec<(f64, f64)> = (0..class.dim)
        .map(|j| {
            let mean_abs = dataset.records().iter().map(|r| r.x[j].abs()).sum::<f64>() / n;
            let s = t_abs / (class.dim as f64 * mean_abs.max(1e-12));
            (-s, s)
        })
        .collect();
    if let ConstraintSet::Box { lower, upper } = &class.constraints {
        out = lower.iter().cloned().zip(upper.iter().cloned()).collect();
    }
    if class.intercept {
        out.push(class.intercept_bounds.unwrap_or((t_lo, t_hi)));
    }
    out
}

/// Restart sampling ranges that keep random policies near the logged
/// doses: each coefficient moves the dose by at most `σ_T / d` per feature
/// standard deviation, and the intercept lies within `2σ_T` of the mean
/// logged dose.
pub fn overlap_init_box(ds: &Dataset) -> Vec<(f64, f64)> {
    let t: Vec<f64> = ds.treatments().collect();
    let (mu, sd) = mean_sd(&t);
    let d = ds.dim();
    let mut out: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let col: Vec<f64> = ds.records().iter().map(|r| r.x[j]).collect();
            let (_, s) = mean_sd(&col);
            let w = if s > 0.0 { sd / (d as f64 * s) } else { 0.0 };
            (-w, w)
        })
        .collect();
    out.push((mu - 2.0 * sd, mu + 2.0 * sd));
    out
}

/// `1 / E[x_j²]` per coefficient and 1 for the intercept, so a unit step
/// moves every feature's dose contribution by a comparable amount.
pub fn feature_step_scales(ds: &Dataset) -> Vec<f64> {
    let n = ds.len().max(1) as f64;
    let mut out: Vec<f64> = (0..ds.dim())
        .map(|j| {
            let ms = ds.records().iter().map(|r| r.x[j] * r.x[j]).sum::<f64>() / n;
            if ms > 0.0 { 1.0 / ms } else { 1.0 }
        })
        .collect();
    out.push(1.0);
    out
}

/// Starting points for a class with an intercept: the constant mean logged
/// dose and the least-squares fit of logged dose on the features.
pub fn logged_starts(ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let t: Vec<f64> = ds.treatments().collect();
    let (mu, _) = mean_sd(&t);
    let d = ds.dim();
    let mut constant = vec![0.0; d];
    constant.push(mu);
    let n = ds.len();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { ds.records()[i].x[j] } else { 1.0 });
    let names: Vec<String> = (0..=d).map(|j| format!("x{j}")).collect();
    let mut starts = vec![constant];
    // collinear features only cost the second start
    if let Ok(fit) = crate::linalg::least_squares(&design, &DVector::from_vec(t), &names) {
        starts.push(fit.iter().copied().collect());
    }
    Ok(starts)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

fn draw_start<R: Rng>(rng: &mut R, class: &LinearClass, init: &[(f64, f64)]) -> Vec<f64> {
    let mut p: Vec<f64> = init.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }).collect();
    if let ConstraintSet::L2Ball { radius } = class.constraints {
        // uniform in the ball: gaussian direction, radius U^{1/d}
        let dir: Vec<f64> = (0..class.dim).map(|_| std_normal(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = radius * rng.random::<f64>().powf(1.0 / class.dim as f64);
        for (pj, d) in p.iter_mut().zip(&dir) {
            *pj = r * d / norm;
        }
    }
    class.project(&p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn run_restart(obj: &dyn Objective, class: &LinearClass, cfg: &SearchConfig, start: Vec<f64>, index: usize) -> RestartSummary {
    let mut p = start.clone();
    let mut f = obj.value(&p);
    let initial_objective = f;
    let mut trace = vec![f];
    let summary = |p: Vec<f64>, f: f64, iterations: usize, status: RestartStatus, trace: Vec<f64>| RestartSummary {
        index,
        initial_params: start.clone(),
        final_params: p,
        initial_objective,
        final_objective: f,
        iterations,
        converged: status == RestartStatus::Converged,
        status,
        trace,
    };
    if !f.is_finite() {
        return summary(p, f, 0, RestartStatus::Infeasible, trace);
    }
    let direction = |g: Vec<f64>| match &cfg.step_scales {
        Some(s) => g.iter().zip(s).map(|(gi, si)| gi * si).collect(),
        None => g,
    };
    let mut g = obj.gradient(&p);
    let mut dir: Vec<f64> = direction(g.clone());
    let mut step = cfg.initial_step;
    for iter in 0..cfg.max_iters {
        let unit: Vec<f64> = p.iter().zip(&dir).map(|(x, di)| x - di).collect();
        let pg = class.project(&unit);
        let pg_norm = p.iter().zip(&pg).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if pg_norm < cfg.tolerance {
            return summary(p, f, iter, RestartStatus::Converged, trace);
        }
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<f64> = p.iter().zip(&dir).map(|(x, di)| x - step * di).collect();
            let cand = class.project(&trial);
            let fc = obj.value(&cand);
            let decrease: Vec<f64> = cand.iter().zip(&p).map(|(c, x)| c - x).collect();
            if fc.is_finite() && fc <= f && fc <= f + cfg.armijo * dot(&g, &decrease) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let moved = cand.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                p = cand;
                f = fc;
                trace.push(f);
                if moved < cfg.tolerance * 1e-3 {
                    return summary(p, f, iter + 1, RestartStatus::Converged, trace);
                }
                g = obj.gradient(&p);
                dir = direction(g.clone());
                step = (step * 2.0).min(cfg.initial_step * 1e6);
            }
            None => return summary(p, f, iter, RestartStatus::Stalled, trace),
        }
    }
    summary(p, f, cfg.max_iters, RestartStatus::MaxIters, trace)
}

/// Multi-restart projected gradient descent on an arbitrary objective.
/// Restarts run in parallel; each draws its start from its own generator
/// keyed by `(seed, restart index)`, and the lowest final objective wins
/// with ties going to the lowest index.
pub fn optimize_objective(obj: &dyn Objective, class: &LinearClass, dataset: &Dataset, cfg: &SearchConfig) -> Result<OptimizeReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    class.constraints.validate(class.dim)?;
    let init = cfg.init_box.clone().unwrap_or_else(|| default_init_box(dataset, class));
    if init.len() != class.n_params() {
        return Err(Error::DimensionMismatch { expected: class.n_params(), got: init.len() });
    }
    if cfg.step_scales.as_ref().is_some_and(|s| s.len() != class.n_params()) {
        return Err(Error::DimensionMismatch { expected: class.n_params(), got: cfg.step_scales.as_ref().map_or(0, Vec::len) });
    }
    if let Some(bad) = cfg.starts.iter().find(|s| s.len() != class.n_params()) {
        return Err(Error::DimensionMismatch { expected: class.n_params(), got: bad.len() });
    }
    let fixed = cfg.starts.len();
    let restarts: Vec<RestartSummary> = (0..fixed + cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let start = if k < fixed {
                class.project(&cfg.starts[k])
            } else {
                let mut rng = rng_for(cfg.seed, stream::RESTART, (k - fixed) as u64);
                draw_start(&mut rng, class, &init)
            };
            run_restart(obj, class, cfg, start, k)
        })
        .collect();

    let best = restarts
        .iter()
        .filter(|r| r.final_objective.is_finite())
        .min_by(|a, b| a.final_objective.total_cmp(&b.final_objective).then(a.index.cmp(&b.index)));
    let Some(best) = best else {
        let diagnostics = restarts
            .iter()
            .map(|r| format!("#{}: {:?} at {:?}", r.index, r.status, r.initial_params))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllRestartsFailed { restarts: restarts.len(), diagnostics });
    };
    Ok(OptimizeReport {
        best_policy: class.policy(&best.final_params),
        best_params: best.final_params.clone(),
        best_objective: best.final_objective,
        best_restart: best.index,
        restarts,
    })
}

/// Minimizes the configured estimator (plus regularizer) over `class`.
pub fn optimize(
    dataset: &Dataset,
    class: &LinearClass,
    cfg: &OptimizeConfig,
    regressor: Option<&dyn DoseResponse>,
) -> Result<OptimizeReport> {
    cfg.estimator.validate()?;
    if cfg.estimator.kind == EstimatorKind::DoublyRobust && regressor.is_none() {
        return Err(Error::MissingRegressor);
    }
    if !(cfg.lambda_reg >= 0.0) {
        return Err(Error::Config("lambda_reg must be >= 0".into()));
    }
    let mut obj = EstimatorObjective::new(dataset, class, cfg.estimator.clone(), cfg.lambda_reg);
    obj.min_overlap = cfg.min_overlap;
    if let Some(r) = regressor {
        obj = obj.with_regressor(r);
    }
    optimize_objective(&obj, class, dataset, &cfg.search)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LogRecord;
    use crate::kernels::Kernel;

    fn cfg(kind: EstimatorKind, h: f64, lambda: f64) -> OptimizeConfig {
        OptimizeConfig {
            estimator: EstimatorConfig::new(kind, Kernel::Epanechnikov, h).with_clip(0.0),
            lambda_reg: lambda,
            min_overlap: 0,
            search: SearchConfig { restarts: 4, max_iters: 200, ..SearchConfig::default() },
        }
    }

    #[test]
    fn single_record_objective() {
        let ds = Dataset::new(1, vec![LogRecord::new(vec![2.0], 1.0, 3.0, 0.5)]);
        let class = LinearClass::new(1, false, ConstraintSet::None);
        for lambda in [0.0, 2.0] {
            let v = objective(&ds, &class, &[0.5], &cfg(EstimatorKind::Ipw, 0.4, lambda)).unwrap();
            assert!((v - 3.0 * 0.75 / (0.4 * 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn sn_without_overlap_is_infinite() {
        let ds = Dataset::new(1, vec![LogRecord::new(vec![1.0], 0.0, 1.0, 1.0)]);
        let class = LinearClass::new(1, false, ConstraintSet::None);
        assert_eq!(objective(&ds, &class, &[10.0], &cfg(EstimatorKind::SelfNormalized, 0.5, 0.0)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_gradient_outside_support() {
        let ds = Dataset::new(1, vec![LogRecord::new(vec![1.0], 0.0, 1.0, 1.0), LogRecord::new(vec![2.0], 0.1, 2.0, 1.0)]);
        let class = LinearClass::new(1, true, ConstraintSet::None);
        let g = gradient(&ds, &class, &[5.0, 3.0], &cfg(EstimatorKind::Ipw, 0.5, 1.0)).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_outcomes_give_zero_objective() {
        let ds = Dataset::new(1, (0..30).map(|i| LogRecord::new(vec![i as f64 / 30.0], (i % 7) as f64 / 7.0, 0.0, 1.0)).collect());
        let class = LinearClass::new(1, false, ConstraintSet::Box { lower: vec![-2.0], upper: vec![2.0] });
        let rep = optimize(&ds, &class, &cfg(EstimatorKind::Ipw, 0.3, 0.0), None).unwrap();
        assert_eq!(rep.best_objective, 0.0);
    }

    #[test]
    fn invalid_search_settings() {
        let ds = Dataset::new(1, vec![LogRecord::new(vec![1.0], 0.0, 1.0, 1.0)]);
        let class = LinearClass::new(1, false, ConstraintSet::None);
        let mut c = cfg(EstimatorKind::Ipw, 0.5, 0.0);
        c.search.restarts = 0;
        assert!(optimize(&ds, &class, &c, None).is_err());
        let c = cfg(EstimatorKind::DoublyRobust, 0.5, 0.0);
        assert!(matches!(optimize(&ds, &class, &c, None), Err(Error::MissingRegressor)));
    }
}

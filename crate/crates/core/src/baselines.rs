//! Comparison methods: the direct method (plug-in dose-response regression)
//! and discretized off-policy evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::propensity::{clip_weight, GpsModel};

/// An outcome model `r(t, x) ≈ E[Y | X = x, T = t]`.
pub trait DoseResponse: Send + Sync {
    fn predict(&self, t: f64, x: &[f64]) -> f64;

    /// `∂r/∂t`; central differences unless overridden.
    fn predict_dt(&self, t: f64, x: &[f64]) -> f64 {
        let step = 1e-6 * t.abs().max(1.0);
        (self.predict(t + step, x) - self.predict(t - step, x)) / (2.0 * step)
    }
}

/// Least-squares polynomial in the joint vector `(x_0, ..., x_{d-1}, t)`
/// with every monomial of total degree at most `degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialRegressor {
    degree: u32,
    dim: usize,
    /// Exponents per monomial; the last entry of each is the power of `t`.
    exponents: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
}

fn monomials(vars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(var: usize, vars: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if var == vars {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(var + 1, vars, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, vars, degree, &mut Vec::with_capacity(vars), &mut out);
    // graded order: constant first, then by total degree
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

fn term_name(exps: &[u32], dim: usize) -> String {
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(j, &e)| {
            let v = if j == dim { "t".to_string() } else { format!("x{j}") };
            if e == 1 { v } else { format!("{v}^{e}") }
        })
        .collect();
    if parts.is_empty() { "1".into() } else { parts.join("*") }
}

fn eval_monomial(exps: &[u32], t: f64, x: &[f64]) -> f64 {
    let mut v = 1.0;
    for (j, &e) in exps.iter().enumerate() {
        if e > 0 {
            let base = if j == x.len() { t } else { x[j] };
            v *= base.powi(e as i32);
        }
    }
    v
}

impl PolynomialRegressor {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn term_names(&self) -> Vec<String> {
        self.exponents.iter().map(|e| term_name(e, self.dim)).collect()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Coefficient of the named monomial, e.g. `"1"`, `"t"`, `"x0*t^2"`.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.term_names().iter().position(|n| n == name).map(|i| self.coefficients[i])
    }
}

impl DoseResponse for PolynomialRegressor {
    fn predict(&self, t: f64, x: &[f64]) -> f64 {
        self.exponents.iter().zip(&self.coefficients).map(|(e, c)| c * eval_monomial(e, t, x)).sum()
    }

    fn predict_dt(&self, t: f64, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, c) in self.exponents.iter().zip(&self.coefficients) {
            let et = e[self.dim];
            if et == 0 {
                continue;
            }
            let mut d = e.clone();
            d[self.dim] -= 1;
            total += c * f64::from(et) * eval_monomial(&d, t, x);
        }
        total
    }
}

/// Fits the direct-method regressor by least squares on polynomial features.
pub fn dm_fit(dataset: &Dataset, degree: u32) -> Result<PolynomialRegressor> {
    if degree < 1 {
        return Err(Error::Config("polynomial degree must be at least 1".into()));
    }
    let dim = dataset.dim();
    let exponents = monomials(dim + 1, degree);
    let p = exponents.len();
    let n = dataset.len();
    if n <= p {
        return Err(Error::TooFewRecords { needed: p, got: n });
    }
    let design = DMatrix::from_fn(n, p, |i, j| {
        let r = &dataset.records()[i];
        eval_monomial(&exponents[j], r.t, &r.x)
    });
    let target = DVector::from_iterator(n, dataset.outcomes());
    let names: Vec<String> = exponents.iter().map(|e| term_name(e, dim)).collect();
    let beta = crate::linalg::least_squares(&design, &target, &names)?;
    Ok(PolynomialRegressor { degree, dim, exponents, coefficients: beta.iter().copied().collect() })
}

/// Like [`dm_fit`], but drops monomials that are linearly dependent on the
/// ones before them (`x^2` of a 0/1 feature, products of exclusive
/// indicators) instead of failing.
pub fn dm_fit_pruned(dataset: &Dataset, degree: u32) -> Result<PolynomialRegressor> {
    if degree < 1 {
        return Err(Error::Config("polynomial degree must be at least 1".into()));
    }
    let dim = dataset.dim();
    let mut exponents = monomials(dim + 1, degree);
    let n = dataset.len();
    let target = DVector::from_iterator(n, dataset.outcomes());
    loop {
        let p = exponents.len();
        if n <= p {
            return Err(Error::TooFewRecords { needed: p, got: n });
        }
        let design = DMatrix::from_fn(n, p, |i, j| {
            let r = &dataset.records()[i];
            eval_monomial(&exponents[j], r.t, &r.x)
        });
        let names: Vec<String> = exponents.iter().map(|e| term_name(e, dim)).collect();
        match crate::linalg::least_squares(&design, &target, &names) {
            Ok(beta) => {
                return Ok(PolynomialRegressor { degree, dim, exponents, coefficients: beta.iter().copied().collect() })
            }
            Err(Error::RankDeficient { column }) => {
                let j = names.iter().position(|nm| *nm == column).expect("named column");
                if j == 0 {
                    return Err(Error::RankDeficient { column });
                }
                exponents.remove(j);
            }
            Err(e) => return Err(e),
        }
    }
}

/// `(1/n) sum r(tau(x_i), x_i)`.
pub fn dm_evaluate(regressor: &dyn DoseResponse, dataset: &Dataset, policy: &Policy) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for r in dataset.records() {
        total += regressor.predict(policy.apply(&r.x)?, &r.x);
    }
    Ok(total / dataset.len() as f64)
}

/// Equal-width treatment bins over `[min t, max t]` with per-record
/// discrete propensities obtained by integrating the GPS over each
/// record's bin. Bins are half-open `[lo, hi)` except the last, which is
/// closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discretization {
    pub edges: Vec<f64>,
    pub bins: Vec<usize>,
    pub propensities: Vec<f64>,
}

impl Discretization {
    pub fn new(dataset: &Dataset, gps: &GpsModel, n_bins: usize) -> Result<Self> {
        if n_bins < 1 {
            return Err(Error::Config("need at least one bin".into()));
        }
        let (lo, hi) = dataset.treatment_range().ok_or(Error::EmptyDataset)?;
        let width = (hi - lo) / n_bins as f64;
        let mut edges: Vec<f64> = (0..=n_bins).map(|k| lo + k as f64 * width).collect();
        edges[n_bins] = hi;
        let mut disc = Self { edges, bins: Vec::with_capacity(dataset.len()), propensities: Vec::new() };
        for r in dataset.records() {
            let b = disc.bin_of(r.t).expect("observed treatment lies in the binned range");
            disc.bins.push(b);
            disc.propensities.push(gps.cdf(disc.edges[b + 1], &r.x) - gps.cdf(disc.edges[b], &r.x));
        }
        Ok(disc)
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin containing `t`, or `None` outside `[edges[0], edges[last]]`.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], *self.edges.last()?);
        if !(t >= lo && t <= hi) {
            return None;
        }
        if self.n_bins() == 1 || t == hi {
            return Some(self.n_bins() - 1);
        }
        // first edge strictly greater than t, minus one
        let idx = self.edges.partition_point(|e| *e <= t);
        Some((idx - 1).min(self.n_bins() - 1))
    }

    /// `(1/n) sum y_i / clip(p_i, theta) · 1{bin(tau(x_i)) = bin(t_i)}`.
    pub fn evaluate(&self, dataset: &Dataset, policy: &Policy, theta: f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, r) in dataset.records().iter().enumerate() {
            if self.bin_of(policy.apply(&r.x)?) == Some(self.bins[i]) {
                let p = if theta > 0.0 { clip_weight(self.propensities[i], theta) } else { self.propensities[i] };
                if !(p > 0.0) {
                    return Err(Error::ZeroPropensity { index: i, q: p });
                }
                total += r.y / p;
            }
        }
        Ok(total / dataset.len() as f64)
    }
}

pub fn discretized_evaluate(
    dataset: &Dataset,
    policy: &Policy,
    gps: &GpsModel,
    n_bins: usize,
    theta: f64,
) -> Result<f64> {
    Discretization::new(dataset, gps, n_bins)?.evaluate(dataset, policy, theta)
}

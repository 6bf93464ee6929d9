//! Deterministic treatment policies and their constraint sets.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    #[default]
    None,
    L2Ball { radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ConstraintSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ConstraintSet::None => Ok(()),
            ConstraintSet::L2Ball { radius } if *radius > 0.0 => Ok(()),
            ConstraintSet::L2Ball { radius } => Err(Error::Config(format!("l2 ball radius must be positive, got {radius}"))),
            ConstraintSet::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: lower.len().min(upper.len()) });
                }
                if let Some(j) = (0..dim).find(|&j| !(lower[j] <= upper[j])) {
                    return Err(Error::Config(format!("box lower > upper at coordinate {j}")));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::None => true,
            ConstraintSet::L2Ball { radius } => norm(v) <= radius + tol,
            ConstraintSet::Box { lower, upper } => {
                v.iter().zip(lower.iter().zip(upper)).all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean projection onto `constraints`.
pub fn project(params: &[f64], constraints: &ConstraintSet) -> Vec<f64> {
    match constraints {
        ConstraintSet::None => params.to_vec(),
        ConstraintSet::L2Ball { radius } => {
            let n = norm(params);
            if n > *radius {
                params.iter().map(|x| x * radius / n).collect()
            } else {
                params.to_vec()
            }
        }
        ConstraintSet::Box { lower, upper } => {
            params.iter().zip(lower.iter().zip(upper)).map(|(x, (l, u))| x.clamp(*l, *u)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Linear {
        beta: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    Constant { dose: f64 },
}

/// A deterministic map from covariates to a treatment.
///
/// Serialized as `{"kind": "linear", "beta": [...], "intercept": 0.0,
/// "constraints": {...}}` or `{"kind": "constant", "dose": 35.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub constraints: ConstraintSet,
}

impl Policy {
    pub fn linear(beta: Vec<f64>, intercept: f64) -> Self {
        Self { kind: PolicyKind::Linear { beta, intercept }, constraints: ConstraintSet::None }
    }

    pub fn constant(dose: f64) -> Self {
        Self { kind: PolicyKind::Constant { dose }, constraints: ConstraintSet::None }
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn apply(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            PolicyKind::Linear { beta, intercept } => {
                if beta.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: beta.len(), got: x.len() });
                }
                Ok(dot(beta, x) + intercept)
            }
            PolicyKind::Constant { dose } => Ok(*dose),
        }
    }

    /// Treatments assigned to every record of `dataset`.
    pub fn treatments(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset.records().iter().map(|r| self.apply(&r.x)).collect()
    }

    /// Whether the coefficient vector satisfies the policy's own constraints.
    pub fn is_feasible(&self, tol: f64) -> bool {
        match &self.kind {
            PolicyKind::Linear { beta, .. } => self.constraints.contains(beta, tol),
            PolicyKind::Constant { .. } => true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear policy class searched by the optimizer. Parameters are laid out
/// as `[beta_0, ..., beta_{d-1}, intercept]`, the intercept present only when
/// enabled. `constraints` restrict `beta`; the intercept is clamped to
/// `intercept_bounds` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClass {
    pub dim: usize,
    pub intercept: bool,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub intercept_bounds: Option<(f64, f64)>,
}

impl LinearClass {
    pub fn new(dim: usize, intercept: bool, constraints: ConstraintSet) -> Self {
        Self { dim, intercept, constraints, intercept_bounds: None }
    }

    pub fn n_params(&self) -> usize {
        self.dim + usize::from(self.intercept)
    }

    pub fn project(&self, params: &[f64]) -> Vec<f64> {
        let mut out = project(&params[..self.dim], &self.constraints);
        if self.intercept {
            let b = params[self.dim];
            out.push(match self.intercept_bounds {
                Some((lo, hi)) => b.clamp(lo, hi),
                None => b,
            });
        }
        out
    }

    pub fn policy(&self, params: &[f64]) -> Policy {
        let intercept = if self.intercept { params[self.dim] } else { 0.0 };
        Policy::linear(params[..self.dim].to_vec(), intercept).with_constraints(self.constraints.clone())
    }

    /// `tau(x) = beta·x + intercept` for a parameter vector.
    pub fn treatment(&self, params: &[f64], x: &[f64]) -> f64 {
        let b = if self.intercept { params[self.dim] } else { 0.0 };
        dot(&params[..self.dim], x) + b
    }

    /// Gradient of `tau(x)` with respect to the parameters, written into `out`.
    pub fn treatment_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += scale * v;
        }
        if self.intercept {
            out[self.dim] += scale;
        }
    }
}

/// Symmetric coefficient box with half-width `T_max / (0.25 · d · |mean_j|)`
/// per feature, where `T_max` is the largest observed treatment and `d` the
/// covariate dimension.
pub fn warfarin_box(dataset: &Dataset) -> Result<ConstraintSet> {
    let names: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
    warfarin_box_named(dataset, &names)
}

pub fn warfarin_box_named(dataset: &Dataset, names: &[String]) -> Result<ConstraintSet> {
    let (_, t_max) = dataset.treatment_range().ok_or(Error::EmptyDataset)?;
    let d = dataset.dim() as f64;
    let means = dataset.covariate_means();
    let mut upper = Vec::with_capacity(means.len());
    for (j, m) in means.iter().enumerate() {
        if m.abs() < 1e-12 {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
            return Err(Error::ZeroMeanFeature(name));
        }
        upper.push(t_max / (0.25 * d * m.abs()));
    }
    let lower = upper.iter().map(|u| -u).collect();
    Ok(ConstraintSet::Box { lower, upper })
}

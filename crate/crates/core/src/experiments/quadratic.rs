//! Ten-dimensional design with an outcome quadratic in the treatment.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LogRecord};
use crate::error::Result;
use crate::policies::{dot, Policy};
use crate::rng::{rng_for, std_normal, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticDesign10D {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Nonzero coordinates kept in each coefficient vector.
    pub nonzeros: usize,
    pub beta_t: f64,
    pub noise_variance: f64,
    /// Coefficients of the treatment mean on the leading covariates.
    pub treatment_mean: Vec<f64>,
    pub treatment_variance: f64,
    /// Treatment range scanned by the per-x oracle.
    pub oracle_range: (f64, f64),
    pub oracle_points: usize,
}

impl Default for QuadraticDesign10D {
    fn default() -> Self {
        Self {
            dim: 10,
            n_train: 400,
            n_test: 1000,
            nonzeros: 3,
            beta_t: -5.0,
            noise_variance: 5.0,
            treatment_mean: vec![2.0, 4.0, -3.0],
            treatment_variance: 4.0,
            oracle_range: (-60.0, 60.0),
            oracle_points: 2001,
        }
    }
}

/// Drawn coefficients and covariate variances of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub variances: Vec<f64>,
    pub beta_x: Vec<f64>,
    pub beta_xt: Vec<f64>,
    pub beta_xt2: Vec<f64>,
    pub beta_t: f64,
}

impl QuadraticModel {
    /// `β_T·t·β_xᵀx + β_xTᵀx·t + (t − β_xT²ᵀx)²`.
    pub fn noiseless(&self, t: f64, x: &[f64]) -> f64 {
        self.beta_t * t * dot(&self.beta_x, x) + dot(&self.beta_xt, x) * t + (t - dot(&self.beta_xt2, x)).powi(2)
    }

    /// Vertex of the parabola in `t`.
    pub fn best_response(&self, x: &[f64]) -> f64 {
        dot(&self.beta_xt2, x) - (self.beta_t * dot(&self.beta_x, x) + dot(&self.beta_xt, x)) / 2.0
    }
}

/// Held-out covariates plus the noiseless outcome, for scoring policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOracle {
    pub model: QuadraticModel,
    pub test_x: Vec<Vec<f64>>,
    pub oracle_range: (f64, f64),
    pub oracle_points: usize,
}

impl TestOracle {
    pub fn losses(&self, policy: &Policy) -> Result<Vec<f64>> {
        self.test_x.iter().map(|x| Ok(self.model.noiseless(policy.apply(x)?, x))).collect()
    }

    pub fn mean_loss(&self, policy: &Policy) -> Result<f64> {
        Ok(mean(&self.losses(policy)?))
    }

    /// Per-x best response by grid search over `oracle_range`.
    pub fn oracle_losses(&self) -> Vec<f64> {
        self.test_x
            .iter()
            .map(|x| {
                let t = oracle_best_response(|t| self.model.noiseless(t, x), self.oracle_range, self.oracle_points);
                self.model.noiseless(t, x)
            })
            .collect()
    }

    pub fn oracle_mean_loss(&self) -> f64 {
        mean(&self.oracle_losses())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Minimizes `f` over `points` evenly spaced values in `range`, then takes
/// one parabolic step through the best grid point and its neighbours.
pub fn oracle_best_response<F: Fn(f64) -> f64>(f: F, range: (f64, f64), points: usize) -> f64 {
    let (lo, hi) = range;
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let grid = |k: usize| lo + k as f64 * step;
    let values: Vec<f64> = (0..points).map(|k| f(grid(k))).collect();
    let best = (0..points).fold(0, |b, k| if values[k] < values[b] { k } else { b });
    if best == 0 || best == points - 1 {
        return grid(best);
    }
    let (fl, fm, fr) = (values[best - 1], values[best], values[best + 1]);
    let curvature = fl - 2.0 * fm + fr;
    if curvature <= 0.0 {
        return grid(best);
    }
    let t = grid(best) + 0.5 * step * (fl - fr) / curvature;
    if f(t) <= fm {
        t
    } else {
        grid(best)
    }
}

fn sparse_normal<R: Rng>(rng: &mut R, dim: usize, nonzeros: usize, variance: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let mut idx: Vec<usize> = sample(rng, dim, nonzeros.min(dim)).into_vec();
    idx.sort_unstable();
    for j in idx {
        // a draw of exactly 0.0 would break the sparsity count
        let mut z: f64 = 0.0;
        while z == 0.0 {
            z = std_normal(rng);
        }
        v[j] = variance.sqrt() * z;
    }
    v
}

fn draw_covariates<R: Rng>(rng: &mut R, variances: &[f64]) -> Vec<f64> {
    variances.iter().map(|v| v.sqrt() * std_normal(rng)).collect()
}

/// Draws a model instance, a training set without propensities, and a test
/// oracle. Covariates are independent zero-mean normals with variances
/// `1 + |z_j|`.
pub fn gen_10d(design: &QuadraticDesign10D, seed: u64) -> (Dataset, TestOracle) {
    let d = design.dim;
    let mut rng = rng_for(seed, stream::DESIGN, 0);
    let variances: Vec<f64> = (0..d).map(|_| 1.0 + std_normal(&mut rng).abs()).collect();
    let model = QuadraticModel {
        beta_x: sparse_normal(&mut rng, d, design.nonzeros, 1.0),
        beta_xt: sparse_normal(&mut rng, d, design.nonzeros, 1.5),
        beta_xt2: sparse_normal(&mut rng, d, design.nonzeros, 1.0),
        beta_t: design.beta_t,
        variances,
    };

    let mut rng = rng_for(seed, stream::DATA, 0);
    let t_sd = design.treatment_variance.sqrt();
    let noise_sd = design.noise_variance.sqrt();
    let records = (0..design.n_train)
        .map(|_| {
            let x = draw_covariates(&mut rng, &model.variances);
            let mean: f64 = design.treatment_mean.iter().zip(&x).map(|(a, b)| a * b).sum();
            let t = mean + t_sd * std_normal(&mut rng);
            let y = model.noiseless(t, &x) + noise_sd * std_normal(&mut rng);
            LogRecord::without_propensity(x, t, y)
        })
        .collect();

    let mut rng = rng_for(seed, stream::TEST_SET, 0);
    let test_x = (0..design.n_test).map(|_| draw_covariates(&mut rng, &model.variances)).collect();
    let oracle = TestOracle { model, test_x, oracle_range: design.oracle_range, oracle_points: design.oracle_points };
    (Dataset::new(d, records), oracle)
}

//! One-dimensional design: `x ~ U[0, 1]`, `y = 2|x − t|^1.5 + 0.2ε`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LogRecord, TreatmentBounds};
use crate::propensity::GpsModel;
use crate::rng::{rng_for, std_normal, stream};

pub const UNIFORM_LO: f64 = -0.5;
pub const UNIFORM_HI: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling1D {
    /// `t ~ U[−0.5, 1.3]` independent of `x`.
    Uniform,
    /// `t | x ~ N(x + 0.1, spread)`; `spread` is a variance unless
    /// `spread_is_sd` is set.
    ConfoundedNormal {
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default)]
        spread_is_sd: bool,
    },
}

fn default_spread() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign1D {
    pub sampling: Sampling1D,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
}

fn default_noise() -> f64 {
    0.2
}

impl Default for SyntheticDesign1D {
    fn default() -> Self {
        Self::uniform()
    }
}

impl SyntheticDesign1D {
    pub fn uniform() -> Self {
        Self { sampling: Sampling1D::Uniform, noise_scale: 0.2 }
    }

    pub fn confounded() -> Self {
        Self { sampling: Sampling1D::ConfoundedNormal { spread: 0.5, spread_is_sd: false }, noise_scale: 0.2 }
    }

    pub fn gps(&self) -> GpsModel {
        match self.sampling {
            Sampling1D::Uniform => GpsModel::KnownUniform { lo: UNIFORM_LO, hi: UNIFORM_HI },
            Sampling1D::ConfoundedNormal { spread, spread_is_sd } => GpsModel::KnownNormal {
                intercept: 0.1,
                coefficients: vec![1.0],
                variance: if spread_is_sd { spread * spread } else { spread },
            },
        }
    }

    pub fn bounds(&self) -> Option<TreatmentBounds> {
        match self.sampling {
            Sampling1D::Uniform => Some(TreatmentBounds { lo: UNIFORM_LO, hi: UNIFORM_HI }),
            Sampling1D::ConfoundedNormal { .. } => None,
        }
    }
}

/// Noiseless outcome.
pub fn outcome_1d(x: f64, t: f64) -> f64 {
    2.0 * (x - t).abs().powf(1.5)
}

/// `n` records with exact propensities; deterministic in `seed`.
pub fn gen_1d(design: &SyntheticDesign1D, n: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, stream::DATA, 0);
    let gps = design.gps();
    let sd = match gps {
        GpsModel::KnownNormal { variance, .. } => variance.sqrt(),
        _ => 0.0,
    };
    let records = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let t = match design.sampling {
                Sampling1D::Uniform => UNIFORM_LO + (UNIFORM_HI - UNIFORM_LO) * rng.random::<f64>(),
                Sampling1D::ConfoundedNormal { .. } => x + 0.1 + sd * std_normal(&mut rng),
            };
            let eps = std_normal(&mut rng);
            let q = gps.density(t, &[x]);
            LogRecord::new(vec![x], t, outcome_1d(x, t) + design.noise_scale * eps, q)
        })
        .collect();
    let ds = Dataset::new(1, records);
    match design.bounds() {
        Some(b) => ds.with_bounds(b),
        None => ds,
    }
}

/// True value `E[2|x − (βx + c)|^1.5]` over `x ~ U[0, 1]`; closed form
/// `0.8|1 − β|^1.5` when `c = 0`, composite Simpson otherwise.
pub fn true_value_1d(beta: f64, intercept: f64) -> f64 {
    if intercept == 0.0 {
        return 0.8 * (1.0 - beta).abs().powf(1.5);
    }
    let f = |x: f64| outcome_1d(x, beta * x + intercept);
    // split at the kink so each piece is smooth
    let mut cuts = vec![0.0, 1.0];
    if (1.0 - beta).abs() > 1e-15 {
        let root = intercept / (1.0 - beta);
        if root > 0.0 && root < 1.0 {
            cuts.insert(1, root);
        }
    }
    cuts.windows(2).map(|w| simpson(f, w[0], w[1], 2000)).sum()
}

pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Boundary design: `t ~ U[0, 1]`, `y ≡ 1`, exact `q = 1`, bounds `[0, 1]`.
pub fn gen_boundary(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, stream::DATA, 0);
    let records = (0..n).map(|_| LogRecord::new(vec![rng.random::<f64>()], rng.random::<f64>(), 1.0, 1.0)).collect();
    Dataset::new(1, records).with_bounds(TreatmentBounds { lo: 0.0, hi: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{sn_evaluate, EstimatorConfig, EstimatorKind};
    use crate::kernels::Kernel;
    use crate::policies::Policy;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_propensities_are_exact() {
        let ds = gen_1d(&SyntheticDesign1D::uniform(), 200, 1);
        assert!(ds.records().iter().all(|r| r.q == Some(1.0 / 1.8)));
        assert!(ds.validate().is_empty());
    }

    #[test]
    fn covariate_mean() {
        let ds = gen_1d(&SyntheticDesign1D::uniform(), 100_000, 2);
        let mean = ds.covariate_means()[0];
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn noiseless_outcome_vanishes_on_the_diagonal() {
        let design = SyntheticDesign1D { noise_scale: 0.0, ..SyntheticDesign1D::uniform() };
        let ds = gen_1d(&design, 50, 3);
        for r in ds.records() {
            assert_eq!(outcome_1d(r.x[0], r.x[0]), 0.0);
            assert_relative_eq!(r.y, outcome_1d(r.x[0], r.t));
        }
        let recs: Vec<_> = ds.records().iter().map(|r| LogRecord::new(r.x.clone(), r.x[0], outcome_1d(r.x[0], r.x[0]), 1.0)).collect();
        let cfg = EstimatorConfig::new(EstimatorKind::SelfNormalized, Kernel::Epanechnikov, 0.2);
        assert_eq!(sn_evaluate(&Dataset::new(1, recs), &Policy::linear(vec![1.0], 0.0), &cfg).unwrap().estimate, 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let d = SyntheticDesign1D::confounded();
        assert_eq!(gen_1d(&d, 30, 9), gen_1d(&d, 30, 9));
        assert_ne!(gen_1d(&d, 30, 9), gen_1d(&d, 30, 10));
    }

    #[test]
    fn confounded_variance_switch() {
        let var = gen_1d(&SyntheticDesign1D::confounded(), 20_000, 4);
        let sd = SyntheticDesign1D { sampling: Sampling1D::ConfoundedNormal { spread: 0.5, spread_is_sd: true }, noise_scale: 0.2 };
        let sd = gen_1d(&sd, 20_000, 4);
        let resid_var = |ds: &Dataset| ds.records().iter().map(|r| (r.t - r.x[0] - 0.1).powi(2)).sum::<f64>() / ds.len() as f64;
        assert!((resid_var(&var) - 0.5).abs() < 0.02);
        assert!((resid_var(&sd) - 0.25).abs() < 0.01);
    }

    #[test]
    fn true_value_quadrature_matches_closed_form() {
        for beta in [0.0, 0.4, 1.0, 1.3] {
            // intercept of 1e-300 forces the quadrature path
            assert_relative_eq!(true_value_1d(beta, 1e-300), true_value_1d(beta, 0.0), epsilon = 1e-8);
        }
        assert_eq!(true_value_1d(1.0, 0.0), 0.0);
        // constant policy t = 0.5: 2 E|x − 0.5|^1.5 = 4 ∫_0^0.5 u^1.5 du = 1.6 · 0.5^2.5
        assert_relative_eq!(true_value_1d(0.0, 0.5), 1.6 * 0.5f64.powf(2.5), epsilon = 1e-8);
    }

    #[test]
    fn boundary_design() {
        let ds = gen_boundary(100, 1);
        assert!(ds.validate().is_empty());
        assert!(ds.records().iter().all(|r| r.y == 1.0 && (0.0..=1.0).contains(&r.t)));
    }
}

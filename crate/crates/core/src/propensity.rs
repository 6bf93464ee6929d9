//! Generalized propensity score (GPS) models: the conditional treatment
//! density `f(t | x)` of the logging policy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// Propensities below this are treated as zero when clipping is disabled.
pub const MIN_PROPENSITY: f64 = 1e-12;

/// Default clipping threshold applied to propensity densities.
pub const DEFAULT_CLIP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GpsModel {
    /// Treatment uniform on `[lo, hi]` regardless of covariates.
    KnownUniform { lo: f64, hi: f64 },
    /// `t | x ~ N(intercept + coefficients·x, variance)`.
    KnownNormal { intercept: f64, coefficients: Vec<f64>, variance: f64 },
    /// Homoscedastic Gaussian fitted by least squares of `t` on `x`.
    ImputedLinear { intercept: f64, coefficients: Vec<f64>, residual_variance: f64 },
}

impl GpsModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            GpsModel::KnownUniform { lo, hi } if !(lo < hi) => {
                Err(Error::Config(format!("uniform GPS interval [{lo}, {hi}] is degenerate")))
            }
            GpsModel::KnownNormal { variance: v, .. } | GpsModel::ImputedLinear { residual_variance: v, .. }
                if !(*v > 0.0) =>
            {
                Err(Error::Config(format!("GPS variance must be positive, got {v}")))
            }
            _ => Ok(()),
        }
    }

    /// Conditional mean and standard deviation for the Gaussian kinds.
    fn normal_params(&self, x: &[f64]) -> Option<(f64, f64)> {
        match self {
            GpsModel::KnownUniform { .. } => None,
            GpsModel::KnownNormal { intercept, coefficients, variance }
            | GpsModel::ImputedLinear { intercept, coefficients, residual_variance: variance } => {
                let mean = intercept + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
                Some((mean, variance.sqrt()))
            }
        }
    }

    /// `f(t | x)`.
    pub fn density(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            GpsModel::KnownUniform { lo, hi } => {
                if t >= *lo && t <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            _ => {
                let (mean, sd) = self.normal_params(x).expect("normal kind");
                let z = (t - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    /// `P(T <= t | x)`.
    pub fn cdf(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            GpsModel::KnownUniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => {
                let (mean, sd) = self.normal_params(x).expect("normal kind");
                0.5 * (1.0 + erf((t - mean) / (sd * std::f64::consts::SQRT_2)))
            }
        }
    }

    /// Attaches `density(t_i, x_i)` as the propensity of every record.
    pub fn attach(&self, dataset: &Dataset) -> Dataset {
        dataset.with_propensities(|t, x| self.density(t, x))
    }
}

/// Fits `t ~ intercept + coefficients·x` by ordinary least squares and
/// returns the homoscedastic Gaussian GPS with residual variance
/// `RSS / (n − d − 1)`.
pub fn impute_gps_linear(dataset: &Dataset) -> Result<GpsModel> {
    let (n, d) = (dataset.len(), dataset.dim());
    if n <= d + 1 {
        return Err(Error::TooFewRecords { needed: d + 1, got: n });
    }
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { dataset.records()[i].x[j - 1] });
    let target = DVector::from_iterator(n, dataset.treatments());
    let mut names = vec!["intercept".to_string()];
    names.extend((0..d).map(|j| format!("x{j}")));
    let beta = least_squares(&design, &target, &names)?;

    let residuals = &target - &design * &beta;
    let residual_variance = residuals.norm_squared() / (n - d - 1) as f64;
    if residual_variance < 1e-12 {
        return Err(Error::DegenerateResiduals(residual_variance));
    }
    Ok(GpsModel::ImputedLinear {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        residual_variance,
    })
}

/// `max(q, theta)`.
pub fn clip_weight(q: f64, theta: f64) -> f64 {
    q.max(theta)
}

/// The propensity used in inverse weighting: clipped when `theta > 0`,
/// otherwise required to be at least [`MIN_PROPENSITY`].
pub fn effective_propensity(index: usize, q: Option<f64>, theta: f64) -> Result<f64> {
    let q = q.ok_or(Error::MissingPropensity { index })?;
    if theta > 0.0 {
        return Ok(clip_weight(q, theta));
    }
    if !(q >= MIN_PROPENSITY) {
        return Err(Error::ZeroPropensity { index, q });
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LogRecord;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..=n).map(|i| f(a + i as f64 * h) * if i == 0 || i == n { 0.5 } else { 1.0 }).sum::<f64>() * h
    }

    #[test]
    fn density_examples() {
        let u = GpsModel::KnownUniform { lo: -0.5, hi: 1.3 };
        assert_relative_eq!(u.density(0.0, &[0.3]), 1.0 / 1.8, epsilon = 1e-15);
        assert_eq!(u.density(2.0, &[0.3]), 0.0);
        let sigma2 = 0.5;
        let n = GpsModel::KnownNormal { intercept: 0.1, coefficients: vec![1.0], variance: sigma2 };
        let x = 0.4;
        assert_relative_eq!(
            n.density(x + 0.1, &[x]),
            1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn densities_integrate_to_one() {
        let models = [
            GpsModel::KnownUniform { lo: -0.5, hi: 1.3 },
            GpsModel::KnownNormal { intercept: 0.1, coefficients: vec![1.0], variance: 0.5 },
            GpsModel::ImputedLinear { intercept: -2.0, coefficients: vec![3.0], residual_variance: 4.0 },
        ];
        for m in &models {
            let x = [0.7];
            let total = match m {
                GpsModel::KnownUniform { lo, hi } => trapezoid(|t| m.density(t, &x), *lo, *hi, 10_000),
                _ => trapezoid(|t| m.density(t, &x), -40.0, 40.0, 200_000),
            };
            assert!((total - 1.0).abs() < 1e-6, "{m:?}: {total}");
            assert!((m.cdf(1e3, &x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_weight(0.05, 0.1), 0.1);
        assert_eq!(clip_weight(0.5, 0.1), 0.5);
        assert_eq!(clip_weight(0.0, 0.1), 0.1);
        assert!(matches!(effective_propensity(4, Some(0.0), 0.0), Err(Error::ZeroPropensity { index: 4, .. })));
        assert!(matches!(effective_propensity(2, None, 0.1), Err(Error::MissingPropensity { index: 2 })));
    }

    fn linear_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unif = Uniform::new(0.0, 1.0).unwrap();
        let records = (0..n)
            .map(|_| {
                let x: f64 = unif.sample(&mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                LogRecord::without_propensity(vec![x], 2.0 * x + e, 0.0)
            })
            .collect();
        Dataset::new(1, records)
    }

    #[test]
    fn imputation_recovers_linear_gaussian_policy() {
        let ds = linear_dataset(10_000, 7);
        match impute_gps_linear(&ds).unwrap() {
            GpsModel::ImputedLinear { coefficients, residual_variance, intercept } => {
                assert!((coefficients[0] - 2.0).abs() < 0.05, "{coefficients:?}");
                assert!((residual_variance - 1.0).abs() < 0.05, "{residual_variance}");
                assert!(intercept.abs() < 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn imputation_errors() {
        let constant: Vec<_> = (0..20).map(|i| LogRecord::without_propensity(vec![i as f64], 3.0, 0.0)).collect();
        assert!(matches!(impute_gps_linear(&Dataset::new(1, constant)), Err(Error::DegenerateResiduals(_))));

        let dup: Vec<_> = (0..20)
            .map(|i| LogRecord::without_propensity(vec![i as f64, i as f64], (i * i) as f64, 0.0))
            .collect();
        match impute_gps_linear(&Dataset::new(2, dup)) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "x1"),
            other => panic!("{other:?}"),
        }
        let few = vec![LogRecord::without_propensity(vec![1.0], 1.0, 0.0); 2];
        assert!(matches!(impute_gps_linear(&Dataset::new(1, few)), Err(Error::TooFewRecords { .. })));
    }

    proptest! {
        #[test]
        fn clip_is_monotone_and_bounded(a in 0.0f64..2.0, b in 0.0f64..2.0, theta in 1e-3f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(clip_weight(lo, theta) <= clip_weight(hi, theta));
            prop_assert!(clip_weight(lo, theta) >= theta);
        }

        #[test]
        fn imputation_is_shift_equivariant(shift in -50.0f64..50.0, seed in 0u64..1000) {
            let ds = linear_dataset(60, seed);
            let shifted = Dataset::new(1, ds.records().iter().map(|r| LogRecord { t: r.t + shift, ..r.clone() }).collect());
            let (a, b) = (impute_gps_linear(&ds).unwrap(), impute_gps_linear(&shifted).unwrap());
            match (a, b) {
                (
                    GpsModel::ImputedLinear { intercept: i0, coefficients: c0, residual_variance: v0 },
                    GpsModel::ImputedLinear { intercept: i1, coefficients: c1, residual_variance: v1 },
                ) => {
                    prop_assert!((i1 - i0 - shift).abs() < 1e-8);
                    prop_assert!((c1[0] - c0[0]).abs() < 1e-8);
                    prop_assert!((v1 - v0).abs() < 1e-8);
                }
                _ => unreachable!(),
            }
        }
    }
}

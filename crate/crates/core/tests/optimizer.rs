use proptest::prelude::*;

use cpo_core::estimators::evaluate;
use cpo_core::experiments::{gen_1d, gen_10d, QuadraticDesign10D, SyntheticDesign1D};
use cpo_core::optimizer::{objective, optimize, OptimizeConfig, SearchConfig};
use cpo_core::propensity::impute_gps_linear;
use cpo_core::{ConstraintSet, EstimatorConfig, EstimatorKind, Kernel, LinearClass};

fn config(kind: EstimatorKind, h: f64, lambda: f64, seed: u64) -> OptimizeConfig {
    OptimizeConfig {
        estimator: EstimatorConfig::new(kind, Kernel::Epanechnikov, h),
        lambda_reg: lambda,
        min_overlap: 0,
        search: SearchConfig { restarts: 8, max_iters: 200, seed, ..SearchConfig::default() },
    }
}

#[test]
fn reports_are_bit_identical() {
    let (train, _) = gen_10d(&QuadraticDesign10D::default(), 3);
    let train = impute_gps_linear(&train).unwrap().attach(&train);
    let class = LinearClass::new(10, true, ConstraintSet::L2Ball { radius: 5.0 });
    let cfg = config(EstimatorKind::Ipw, 2.6, 0.1, 11);
    let a = optimize(&train, &class, &cfg, None).unwrap();
    let b = optimize(&train, &class, &cfg, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn best_is_the_minimum_over_restarts() {
    let ds = gen_1d(&SyntheticDesign1D::uniform(), 300, 1);
    let class = LinearClass::new(1, false, ConstraintSet::Box { lower: vec![0.0], upper: vec![2.0] });
    let report = optimize(&ds, &class, &config(EstimatorKind::SelfNormalized, 0.25, 0.0, 2), None).unwrap();
    let min = report.restarts.iter().map(|r| r.final_objective).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_objective, min);
    assert_eq!(report.restarts[report.best_restart].final_objective, min);
}

#[test]
fn more_restarts_never_hurt() {
    let ds = gen_1d(&SyntheticDesign1D::uniform(), 200, 4);
    let class = LinearClass::new(1, true, ConstraintSet::None);
    let mut cfg = config(EstimatorKind::SelfNormalized, 0.25, 0.5, 5);
    cfg.search.restarts = 1;
    let one = optimize(&ds, &class, &cfg, None).unwrap().best_objective;
    cfg.search.restarts = 20;
    // restart k draws from its own stream, so restart 0 is shared
    assert!(optimize(&ds, &class, &cfg, None).unwrap().best_objective <= one);
}

#[test]
fn explicit_starts_come_first() {
    let ds = gen_1d(&SyntheticDesign1D::uniform(), 200, 6);
    let class = LinearClass::new(1, false, ConstraintSet::None);
    let mut cfg = config(EstimatorKind::SelfNormalized, 0.25, 0.0, 7);
    cfg.search.starts = vec![vec![1.0]];
    let report = optimize(&ds, &class, &cfg, None).unwrap();
    assert_eq!(report.restarts.len(), 9);
    assert_eq!(report.restarts[0].initial_params, vec![1.0]);
    cfg.search.starts = vec![vec![1.0, 2.0]];
    assert!(optimize(&ds, &class, &cfg, None).is_err());
}

// The unregularized sn minimum escapes to a window holding one or two
// records; the variance penalty keeps every seed on the data.
#[test]
fn regularized_search_keeps_overlap() {
    for seed in 0..20 {
        let ds = gen_1d(&SyntheticDesign1D::uniform(), 300, seed);
        let class = LinearClass::new(1, false, ConstraintSet::None);
        let mut cfg = config(EstimatorKind::SelfNormalized, 0.26, 1.0, seed);
        cfg.estimator = cfg.estimator.with_clip(0.1);
        cfg.search.restarts = 20;
        let report = optimize(&ds, &class, &cfg, None).unwrap();
        let e = evaluate(&ds, &report.best_policy, &cfg.estimator, None).unwrap();
        assert!(e.n_eff > 0, "seed {seed}: {:?}", report.best_params);
    }
}

#[test]
fn min_overlap_rejects_thin_windows() {
    for seed in 0..5 {
        let ds = gen_1d(&SyntheticDesign1D::uniform(), 300, seed);
        let class = LinearClass::new(1, false, ConstraintSet::None);
        let mut cfg = config(EstimatorKind::SelfNormalized, 0.26, 0.0, seed);
        cfg.min_overlap = 30;
        let report = optimize(&ds, &class, &cfg, None).unwrap();
        let e = evaluate(&ds, &report.best_policy, &cfg.estimator, None).unwrap();
        assert!(e.n_eff >= 30, "seed {seed}: n_eff {}", e.n_eff);
    }
}

#[test]
fn step_scales_must_match_parameters() {
    let ds = gen_1d(&SyntheticDesign1D::uniform(), 100, 1);
    let class = LinearClass::new(1, true, ConstraintSet::None);
    let mut cfg = config(EstimatorKind::SelfNormalized, 0.25, 0.0, 1);
    cfg.search.step_scales = Some(vec![1.0]);
    assert!(optimize(&ds, &class, &cfg, None).is_err());
    cfg.search.step_scales = Some(vec![1.0, -1.0]);
    assert!(optimize(&ds, &class, &cfg, None).is_err());
    cfg.search.step_scales = Some(vec![3.0, 1.0]);
    assert!(optimize(&ds, &class, &cfg, None).is_ok());
}

fn constraints() -> impl Strategy<Value = ConstraintSet> {
    prop_oneof![
        Just(ConstraintSet::None),
        (0.1f64..3.0).prop_map(|radius| ConstraintSet::L2Ball { radius }),
        (-2.0f64..0.5, 0.1f64..2.0).prop_map(|(lo, w)| ConstraintSet::Box { lower: vec![lo], upper: vec![lo + w] }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_descend_and_results_are_feasible(
        seed in 0u64..1000,
        c in constraints(),
        kind in prop_oneof![Just(EstimatorKind::Ipw), Just(EstimatorKind::SelfNormalized)],
        lambda in 0.0f64..1.0,
    ) {
        let ds = gen_1d(&SyntheticDesign1D::uniform(), 150, seed);
        let class = LinearClass::new(1, false, c.clone());
        let cfg = config(kind, 0.3, lambda, seed);
        let report = optimize(&ds, &class, &cfg, None).unwrap();
        for r in &report.restarts {
            prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.trace);
            prop_assert!(c.contains(&r.final_params, 1e-12));
            if r.final_objective.is_finite() {
                prop_assert_eq!(objective(&ds, &class, &r.final_params, &cfg).unwrap(), r.final_objective);
            }
        }
        prop_assert!(report.best_policy.is_feasible(1e-12));
    }
}

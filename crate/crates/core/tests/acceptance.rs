//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion. Failures are
//! reported but only fail the process when `CPO_ACCEPTANCE_STRICT=1`, so a
//! workspace test run still reaches the remaining targets.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cpo_core::bandwidth::{plugin_bandwidth, rescale_bandwidth};
use cpo_core::baselines::DoseResponse;
use cpo_core::estimators::{dr_evaluate, evaluate, ipw_evaluate, weight_mass};
use cpo_core::experiments::replicate::{replicate, summarize, ExperimentSpec, MetricSummary};
use cpo_core::experiments::warfarin::{load_cohort_csv, run_warfarin, surrogate_cohort, WarfarinConfig};
use cpo_core::experiments::{gen_1d, gen_boundary, SyntheticDesign1D};
use cpo_core::kernels::triangular_hinge_decomposition;
use cpo_core::optimizer::EstimatorObjective;
use cpo_core::{ConstraintSet, Dataset, EstimatorConfig, EstimatorKind, Kernel, LinearClass, LogRecord, Policy};

const N0: usize = 500;

struct Line {
    id: u32,
    pass: bool,
    text: String,
}

fn line(id: u32, pass: bool, text: impl Into<String>) -> Line {
    Line { id, pass, text: text.into() }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn kernel_constants() -> Line {
    let mut worst: f64 = 0.0;
    for k in Kernel::ALL {
        // piecewise-polynomial kernels integrate exactly on each smooth piece
        let (m2, rough) = match k {
            Kernel::Gaussian => (
                simpson(|u| u * u * k.eval(u), -12.0, 12.0, 24_000),
                simpson(|u| k.eval(u).powi(2), -12.0, 12.0, 24_000),
            ),
            _ => (
                simpson(|u| u * u * k.eval(u), -1.0, 0.0, 2000) + simpson(|u| u * u * k.eval(u), 0.0, 1.0, 2000),
                simpson(|u| k.eval(u).powi(2), -1.0, 0.0, 2000) + simpson(|u| k.eval(u).powi(2), 0.0, 1.0, 2000),
            ),
        };
        worst = worst.max((m2 - k.moment2()).abs()).max((rough - k.roughness()).abs());
    }
    line(1, worst <= 1e-8, format!("kernel constants vs quadrature: max abs diff {worst:.1e} (tol 1e-8)"))
}

fn gradient_check() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let kind = if checked % 2 == 0 { EstimatorKind::Ipw } else { EstimatorKind::SelfNormalized };
        let d = rng.random_range(1..=3);
        let n = rng.random_range(5..=40);
        let h = rng.random_range(0.2..1.0);
        let intercept = rng.random::<bool>();
        let class = LinearClass::new(d, intercept, ConstraintSet::None);
        let params: Vec<f64> = (0..class.n_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let records: Vec<LogRecord> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = class.treatment(&params, &x) + h * rng.random_range(-1.3..1.3);
                LogRecord::new(x, t, rng.random_range(-2.0..3.0), rng.random_range(0.05..2.0))
            })
            .collect();
        let ds = Dataset::new(d, records);
        // skip instances with a record near the kernel's kinks at |u| = 1
        let near_kink = ds.records().iter().any(|r| (((class.treatment(&params, &r.x) - r.t) / h).abs() - 1.0).abs() < 1e-3);
        let cfg = EstimatorConfig::new(kind, Kernel::Epanechnikov, h).with_clip(0.1);
        let lambda = if checked % 4 < 2 { 0.0 } else { 0.3 };
        let obj = EstimatorObjective::new(&ds, &class, cfg, lambda);
        if near_kink || obj.evaluate(&params).is_err() {
            continue;
        }
        let analytic = obj.analytic_gradient(&params).unwrap();
        let step = 1e-6;
        let mut p = params.clone();
        let fd: Vec<f64> = (0..params.len())
            .map(|j| {
                p[j] = params[j] + step;
                let up = obj.evaluate(&p).unwrap();
                p[j] = params[j] - step;
                let down = obj.evaluate(&p).unwrap();
                p[j] = params[j];
                (up - down) / (2.0 * step)
            })
            .collect();
        let scale = analytic.iter().chain(&fd).fold(1e-8f64, |m, v| m.max(v.abs()));
        let err = analytic.iter().zip(&fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs())) / scale;
        worst = worst.max(err);
        checked += 1;
    }
    line(2, worst <= 1e-5, format!("analytic vs central-difference gradients, 100 instances (ipw + sn): max rel err {worst:.1e} (tol 1e-5)"))
}

fn evaluate_spec(n: usize, method: &str, h0: f64) -> ExperimentSpec {
    ExperimentSpec::from_json(&format!(
        r#"{{"experiment":"evaluate1d","n":{n},"policy":{{"kind":"linear","beta":[1.0],"intercept":0.0}},
            "method":{method},"bandwidth":{{"rule":"rescaled","h0":{h0},"n0":{N0}}}}}"#
    ))
    .unwrap()
}

const SN: &str = r#"{"method":"kernelized","estimator":"self_normalized"}"#;
const DISCRETIZED: &str = r#"{"method":"discretized","bins":10}"#;

fn error_summary(n: usize, method: &str, h0: f64, reps: usize, seed: u64) -> MetricSummary {
    replicate(&evaluate_spec(n, method, h0), reps, seed).unwrap().summary["error"].clone()
}

/// Brute-force MSE-minimizing bandwidth for the sn estimator at `n0`,
/// over a grid, on shared Monte-Carlo datasets.
fn brute_force_bandwidth() -> (f64, Vec<(f64, f64)>) {
    let grid: Vec<f64> = (2..=30).map(|k| k as f64 / 100.0).collect();
    let reps = 400;
    let policy = Policy::linear(vec![1.0], 0.0);
    let sq: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let ds = gen_1d(&SyntheticDesign1D::uniform(), N0, 50_000 + r as u64);
            grid.iter()
                .map(|&h| {
                    let cfg = EstimatorConfig::new(EstimatorKind::SelfNormalized, Kernel::Epanechnikov, h);
                    evaluate(&ds, &policy, &cfg, None).map_or(f64::INFINITY, |e| e.estimate.powi(2))
                })
                .collect()
        })
        .collect();
    let mse: Vec<(f64, f64)> = grid.iter().enumerate().map(|(k, &h)| (h, sq.iter().map(|row| row[k]).sum::<f64>() / reps as f64)).collect();
    let best = mse.iter().fold(mse[0], |b, &m| if m.1 < b.1 { m } else { b });
    (best.0, mse)
}

fn consistency(h0: f64) -> Line {
    let ns = [200, 800, 3200];
    let s: Vec<MetricSummary> = ns.iter().map(|&n| error_summary(n, SN, h0, 200, 3)).collect();
    let last = s[2].mean.abs();
    let monotone = s.windows(2).all(|w| w[1].mean.abs() <= w[0].mean.abs() + 2.0 * w[0].std_error.hypot(w[1].std_error));
    let detail: Vec<String> = ns.iter().zip(&s).map(|(n, m)| format!("n={n}: {:.4}±{:.4}", m.mean, m.std_error)).collect();
    line(
        3,
        last <= 0.02 && monotone,
        format!(
            "sn consistency, h = {h0:.3}(500/n)^0.2, 200 reps: {} (need |mean| <= 0.02 at 3200, monotone within 2 SE: {monotone})",
            detail.join(", ")
        ),
    )
}

fn mse_rate(h0: f64) -> Line {
    let ns = [100usize, 200, 400, 800, 1600, 3200];
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let errs = replicate(&evaluate_spec(n, SN, h0), 500, 4).unwrap().values("error");
            let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
            ((n as f64).ln(), mse.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    line(4, (-1.0..=-0.6).contains(&slope), format!("log-MSE slope over n = 100..3200, 500 reps: {slope:.3} (need [-1.0, -0.6])"))
}

fn plugin_vs_brute(h_brute: f64, mse: &[(f64, f64)]) -> (Line, f64) {
    let design = SyntheticDesign1D::uniform();
    let ds = gen_1d(&design, N0, 5);
    let est = plugin_bandwidth(&ds, &Policy::linear(vec![1.0], 0.0), Kernel::Epanechnikov, &design.gps()).unwrap();
    let ratio = est.h_star / h_brute;
    let mse_at = |h: f64| mse.iter().min_by(|a, b| (a.0 - h).abs().total_cmp(&(b.0 - h).abs())).map_or(f64::NAN, |m| m.1);
    (
        line(
            5,
            (0.5..=2.0).contains(&ratio),
            format!(
                "plug-in h* = {:.3} vs brute-force h = {h_brute:.3} at n=500 (ratio {ratio:.2}, need within x2; MC MSE {:.2e} vs {:.2e})",
                est.h_star,
                mse_at(est.h_star),
                mse_at(h_brute)
            ),
        ),
        est.h_star,
    )
}

fn boundary() -> Line {
    let reps = 200;
    let policy = Policy::constant(0.0);
    let (plain, corrected): (Vec<f64>, Vec<f64>) = (0..reps)
        .into_par_iter()
        .map(|r| {
            let ds = gen_boundary(1000, 600 + r);
            let cfg = EstimatorConfig::new(EstimatorKind::Ipw, Kernel::Epanechnikov, 0.1);
            let a = ipw_evaluate(&ds, &policy, &cfg).unwrap().estimate;
            let b = ipw_evaluate(&ds, &policy, &cfg.with_boundary_correction(true)).unwrap().estimate;
            (a, b)
        })
        .unzip();
    let (p, c) = (summarize(&plain).unwrap().mean, summarize(&corrected).unwrap().mean);
    line(
        6,
        (c - 1.0).abs() <= 0.03 && p < 0.6,
        format!("boundary tau = 0, truth 1, 200 reps: corrected {c:.4} (need within 0.03), uncorrected {p:.4} (need < 0.6)"),
    )
}

fn discretization(h0: f64) -> Line {
    let cont = error_summary(3200, SN, h0, 200, 7);
    let disc = error_summary(3200, DISCRETIZED, h0, 200, 7);
    let covers = |m: &MetricSummary| m.ci_low <= 0.0 && 0.0 <= m.ci_high;
    let bias_ok = disc.mean.abs() > cont.mean.abs();
    line(
        7,
        bias_ok && covers(&cont) && !covers(&disc),
        format!(
            "n=3200, 200 reps: continuous bias {:.4} CI [{:.4}, {:.4}] covers 0: {}; discretized bias {:.4} CI [{:.4}, {:.4}] covers 0: {}",
            cont.mean,
            cont.ci_low,
            cont.ci_high,
            covers(&cont),
            disc.mean,
            disc.ci_low,
            disc.ci_high,
            covers(&disc)
        ),
    )
}

fn learn_spec(n: usize, h0: f64) -> ExperimentSpec {
    ExperimentSpec::from_json(&format!(
        r#"{{"experiment":"learn1d","n":{n},"estimator":"self_normalized","bandwidth":{{"rule":"rescaled","h0":{h0},"n0":{N0}}},
            "clip_theta":0.1,"beta_bounds":[0.0,2.0]}}"#
    ))
    .unwrap()
}

fn learning(h0: f64) -> Line {
    let ns = [50usize, 100, 200, 400, 800];
    let regret: Vec<f64> = ns.iter().map(|&n| replicate(&learn_spec(n, h0), 20, 8).unwrap().summary["regret"].mean).collect();
    let betas = replicate(&learn_spec(300, h0), 50, 9).unwrap().values("beta");
    let hits = betas.iter().filter(|b| (*b - 1.0).abs() <= 0.1).count();
    let frac = hits as f64 / betas.len() as f64;
    let pass = regret[4] < regret[0] && regret[4] <= 0.05 && frac >= 0.9;
    let detail: Vec<String> = ns.iter().zip(&regret).map(|(n, r)| format!("{n}:{r:.4}")).collect();
    line(
        8,
        pass,
        format!("sn policy learning, plug-in h0 = {h0:.3}: regret by n {} (need 800 < 50 and <= 0.05); |beta-1| <= 0.1 in {hits}/50 at n=300", detail.join(" ")),
    )
}

fn quadratic() -> Line {
    let spec = ExperimentSpec::from_json(
        r#"{"experiment":"quadratic","estimator":"ipw","bandwidth":2.6,"clip_theta":0.1,"start_from_logged":true}"#,
    )
    .unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let m = spec.run_once(seed).unwrap();
        ok &= m["oracle"] <= m["cpo"] && m["cpo"] <= m["mean_dose"];
        detail.push(format!("[{:.1} <= {:.1} <= {:.1}]", m["oracle"], m["cpo"], m["mean_dose"]));
    }
    line(9, ok, format!("10-D quadratic, oracle <= CPO <= mean dose, 5 seeds: {}", detail.join(" ")))
}

fn warfarin() -> Line {
    let cfg = WarfarinConfig::default();
    if let Ok(path) = std::env::var("CPO_WARFARIN_CSV") {
        let full = load_cohort_csv(&path).unwrap();
        let cohort = full.select(&full.rank_by_correlation(81)).unwrap();
        let r = run_warfarin(&cohort, &cfg, 0).unwrap();
        let l = |k: &str| r.losses[k].mean_l1;
        let gap = l("mean_dose") - l("cpo");
        // mean-dose minus learned-policy L1 loss on the full cohort
        let target_gap = 11.67 - 10.19;
        let order = l("best") < l("cpo") && l("cpo") < l("dm").min(l("mean_dose"));
        let gap_ok = (gap / target_gap - 1.0).abs() <= 0.3;
        return line(
            10,
            order && gap_ok,
            format!(
                "cohort {path}: best {:.2} cpo {:.2} dm {:.2} mean dose {:.2}; gap {gap:.2} vs 1.48 (+-30%: {gap_ok}), order: {order}",
                l("best"),
                l("cpo"),
                l("dm"),
                l("mean_dose")
            ),
        );
    }
    let mut ok = true;
    let mut beats_baseline = true;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let r = run_warfarin(&surrogate_cohort(2000, seed), &cfg, seed).unwrap();
        let l = |k: &str| r.losses[k].mean_l1;
        ok &= l("best") < l("cpo") && l("cpo") < l("dm").min(l("mean_dose"));
        beats_baseline &= l("best") < l("cpo") && l("cpo") < l("mean_dose");
        detail.push(format!("[{:.2} {:.2} {:.2} {:.2}]", l("best"), l("cpo"), l("dm"), l("mean_dose")));
    }
    line(
        10,
        ok,
        format!(
            "surrogate cohort, mean L1 [best cpo dm mean-dose], need best < cpo < min(dm, mean dose): {} (best < cpo < mean dose alone: {beats_baseline})",
            detail.join(" ")
        ),
    )
}

fn denominator() -> Line {
    let policy = Policy::linear(vec![1.0], 0.0);
    let h = rescale_bandwidth(0.1, N0, 2000);
    let mass: Vec<f64> = (0..50u64)
        .into_par_iter()
        .map(|r| {
            let ds = gen_1d(&SyntheticDesign1D::uniform(), 2000, 1100 + r);
            weight_mass(&ds, &policy, &EstimatorConfig::new(EstimatorKind::SelfNormalized, Kernel::Epanechnikov, h)).unwrap()
        })
        .collect();
    let m = summarize(&mass).unwrap().mean;
    line(11, (m - 1.0).abs() <= 0.05, format!("self-normalization denominator, n=2000, 50 reps: mean {m:.4} (need within 0.05 of 1)"))
}

fn hinge() -> Line {
    let points = 2_000_001;
    let worst = (0..points)
        .map(|k| -3.0 + 6.0 * k as f64 / (points - 1) as f64)
        .map(|u| (triangular_hinge_decomposition(u) - Kernel::Triangular.eval(u)).abs())
        .fold(0.0f64, f64::max);
    line(12, worst <= 1e-12, format!("triangular hinge identity on 2e6 points of [-3, 3]: max diff {worst:.1e} (tol 1e-12)"))
}

struct Zero;

impl DoseResponse for Zero {
    fn predict(&self, _: f64, _: &[f64]) -> f64 {
        0.0
    }
}

fn dr_degeneracy() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=200);
        let records = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                LogRecord::new(x, rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0), rng.random_range(0.01..3.0))
            })
            .collect();
        let ds = Dataset::new(d, records);
        let policy = Policy::linear((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-1.0..1.0));
        let kernel = Kernel::ALL[rng.random_range(0..3)];
        let h = rng.random_range(0.05..2.0);
        let clip = rng.random_range(0.0..0.5);
        let ipw = ipw_evaluate(&ds, &policy, &EstimatorConfig::new(EstimatorKind::Ipw, kernel, h).with_clip(clip)).unwrap().estimate;
        let dr = dr_evaluate(&ds, &policy, &EstimatorConfig::new(EstimatorKind::DoublyRobust, kernel, h).with_clip(clip), &Zero)
            .unwrap()
            .estimate;
        worst = worst.max((ipw - dr).abs());
    }
    line(13, worst <= 1e-12, format!("dr with zero regressor vs ipw, 100 random datasets: max diff {worst:.1e} (tol 1e-12)"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut lines = vec![kernel_constants(), gradient_check()];
    let (h_brute, mse) = brute_force_bandwidth();
    lines.push(consistency(h_brute));
    lines.push(mse_rate(h_brute));
    let (l5, h_plugin) = plugin_vs_brute(h_brute, &mse);
    lines.push(l5);
    lines.push(boundary());
    lines.push(discretization(h_brute));
    lines.push(learning(h_plugin));
    lines.push(quadratic());
    lines.push(warfarin());
    lines.push(denominator());
    lines.push(hinge());
    lines.push(dr_degeneracy());

    lines.sort_by_key(|l| l.id);
    for l in &lines {
        println!("[{}] {:>2}. {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.text);
    }
    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("acceptance: {}/{} passed in {:.0?}", lines.len() - failed.len(), lines.len(), start.elapsed());
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    println!("failed criteria: {failed:?}");
    if std::env::var("CPO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

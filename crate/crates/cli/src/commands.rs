use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use cpo_core::bandwidth::{plugin_bandwidth, rescale_bandwidth, PluginEstimate};
use cpo_core::baselines::{discretized_evaluate, dm_evaluate, dm_fit, PolynomialRegressor};
use cpo_core::estimators::evaluate;
use cpo_core::experiments::replicate::ReplicationReport;
use cpo_core::experiments::warfarin::{load_cohort_csv, warfarin_simulate, WarfarinDesign};
use cpo_core::experiments::{gen_10d, gen_1d, gen_boundary, replicate, surrogate_cohort};
use cpo_core::experiments::{ExperimentSpec, QuadraticDesign10D, SyntheticDesign1D};
use cpo_core::optimizer::{
    feature_step_scales, logged_starts, optimize, overlap_init_box, OptimizeConfig, OptimizeReport, SearchConfig,
};
use cpo_core::propensity::{impute_gps_linear, GpsModel};
use cpo_core::{Dataset, EstimatorConfig, EstimatorKind, EvalResult, Kernel, LinearClass, Policy, TreatmentBounds};

use crate::args::*;

/// A finished report, rendered once by the caller.
pub enum Output {
    Json(serde_json::Value),
    Csv(Vec<u8>),
}

fn render<T: Serialize>(format: Format, report: &T, csv: impl FnOnce() -> Result<Vec<u8>>) -> Result<Output> {
    Ok(match format {
        Format::Json => Output::Json(serde_json::to_value(report)?),
        Format::Csv => Output::Csv(csv()?),
    })
}

fn csv_rows(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn read_policy(path: &Path) -> Result<Policy> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading policy {}", path.display()))?;
    Policy::from_json(&text).with_context(|| format!("parsing policy {}", path.display()))
}

/// Where the propensities used by the estimators came from.
#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    Column,
    Gps,
}

#[derive(Debug, Serialize)]
pub struct DataSummary {
    pub path: String,
    pub n: usize,
    pub dim: usize,
    pub bounds: Option<TreatmentBounds>,
    pub propensities: PropensitySource,
    /// The GPS model in force, given or imputed; `null` when only the `q`
    /// column was used.
    pub gps: Option<GpsModel>,
}

/// Loaded, validated data with propensities in place.
struct Loaded {
    ds: Dataset,
    gps: Option<GpsModel>,
    summary: DataSummary,
}

fn load(args: &DataArgs, need_gps: bool) -> Result<Loaded> {
    let path = args.data.display().to_string();
    let mut ds = Dataset::from_csv_path(&args.data).with_context(|| format!("reading {path}"))?;
    ensure!(!ds.is_empty(), "{path}: no records");
    if let Some(b) = args.bounds {
        ds = ds.with_bounds(b.treatment()?);
    }
    let gps = match &args.gps {
        Some(GpsArg::Known(m)) => Some(m.clone()),
        Some(GpsArg::ImputeLinear) => Some(impute_gps_linear(&ds).context("imputing the GPS")?),
        None => None,
    };
    let source = match &gps {
        Some(m) => {
            if let GpsModel::KnownNormal { coefficients, .. } = m {
                ensure!(
                    coefficients.len() == ds.dim(),
                    "known-normal GPS has {} coefficients but the data has {} covariates",
                    coefficients.len(),
                    ds.dim()
                );
            }
            ds = m.attach(&ds);
            PropensitySource::Gps
        }
        None if ds.has_propensities() => PropensitySource::Column,
        None => bail!("{path}: missing column `q`; add a propensity column or pass --gps"),
    };
    let violations = ds.validate();
    if !violations.is_empty() {
        let lines: Vec<String> = violations
            .iter()
            .map(|v| format!("line {}: `{}` {}", v.index + 2, v.field, v.message))
            .collect();
        bail!("{path}: {} invalid record(s)\n  {}", lines.len(), lines.join("\n  "));
    }
    // plug-in and discretization need a density model even when q was supplied
    let gps = match gps {
        Some(m) => Some(m),
        None if need_gps => Some(impute_gps_linear(&ds).context("imputing the GPS")?),
        None => None,
    };
    let summary =
        DataSummary { path, n: ds.len(), dim: ds.dim(), bounds: ds.bounds(), propensities: source, gps: gps.clone() };
    Ok(Loaded { ds, gps, summary })
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSource {
    Fixed,
    Plugin,
    Rescaled,
}

#[derive(Debug, Serialize)]
pub struct BandwidthChoice {
    pub h: f64,
    pub source: BandwidthSource,
    pub plugin: Option<PluginEstimate>,
    pub pilot_h: Option<f64>,
    pub pilot_n: Option<usize>,
}

fn choose_bandwidth(
    arg: BandwidthArg,
    pilot: &PilotArgs,
    loaded: &Loaded,
    policy: Option<&Policy>,
    kernel: Kernel,
) -> Result<BandwidthChoice> {
    let mut c =
        BandwidthChoice { h: 0.0, source: BandwidthSource::Fixed, plugin: None, pilot_h: pilot.pilot_h, pilot_n: pilot.pilot_n };
    match (arg, pilot.pilot_h, pilot.pilot_n) {
        (BandwidthArg::Fixed(h), _, _) => c.h = h,
        (BandwidthArg::Auto, Some(h0), Some(n0)) => {
            ensure!(h0 > 0.0 && n0 > 0, "pilot bandwidth and size must be positive");
            c.h = rescale_bandwidth(h0, n0, loaded.ds.len());
            c.source = BandwidthSource::Rescaled;
        }
        (BandwidthArg::Auto, _, _) => {
            let policy = policy.context("automatic bandwidth needs a policy (--policy) or a pilot (--pilot-h/--pilot-n)")?;
            let gps = loaded.gps.as_ref().context("plug-in bandwidth needs a GPS model")?;
            let est = plugin_bandwidth(&loaded.ds, policy, kernel, gps).context("plug-in bandwidth")?;
            c.h = est.h_star;
            c.source = BandwidthSource::Plugin;
            c.plugin = Some(est);
        }
    }
    Ok(c)
}

fn estimator_config(args: &EstimatorArgs, h: f64) -> EstimatorConfig {
    EstimatorConfig::new(args.estimator, args.kernel, h)
        .with_clip(args.clip)
        .with_boundary_correction(args.boundary_correct)
}

fn fit_regressor(ds: &Dataset, args: &EstimatorArgs) -> Result<Option<(u32, PolynomialRegressor)>> {
    let degree = match (args.estimator, args.dm_degree) {
        (_, Some(k)) => k,
        (EstimatorKind::DoublyRobust, None) => 2,
        _ => return Ok(None),
    };
    let reg = dm_fit(ds, degree).with_context(|| format!("fitting the degree-{degree} outcome model"))?;
    Ok(Some((degree, reg)))
}

#[derive(Debug, Serialize)]
pub struct EvaluateConfig {
    pub data: DataSummary,
    pub estimator: EstimatorConfig,
    pub bandwidth: BandwidthChoice,
    pub policy: Policy,
    pub dm_degree: Option<u32>,
    pub discretize_bins: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct Baselines {
    pub direct_method: Option<f64>,
    pub discretized: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvaluateReport {
    pub command: &'static str,
    pub config: EvaluateConfig,
    pub result: EvalResult,
    pub baselines: Baselines,
}

pub fn evaluate_cmd(args: &EvaluateArgs, global: &GlobalArgs) -> Result<Output> {
    let policy = read_policy(&args.policy)?;
    let bw_auto = matches!(args.estimator.bandwidth, BandwidthArg::Auto) && args.estimator.pilot.pilot_h.is_none();
    let loaded = load(&args.data, bw_auto || args.discretize_bins.is_some())?;
    let bw = choose_bandwidth(args.estimator.bandwidth, &args.estimator.pilot, &loaded, Some(&policy), args.estimator.kernel)?;
    let cfg = estimator_config(&args.estimator, bw.h);
    let reg = fit_regressor(&loaded.ds, &args.estimator)?;
    let result = evaluate(&loaded.ds, &policy, &cfg, reg.as_ref().map(|(_, r)| r as _)).context("evaluating the policy")?;
    let direct_method = match &reg {
        Some((_, r)) => Some(dm_evaluate(r, &loaded.ds, &policy)?),
        None => None,
    };
    let discretized = match args.discretize_bins {
        Some(m) => {
            let gps = loaded.gps.as_ref().expect("loaded with a GPS model");
            Some(discretized_evaluate(&loaded.ds, &policy, gps, m, args.estimator.clip).context("discretized estimate")?)
        }
        None => None,
    };
    let report = EvaluateReport {
        command: "evaluate",
        config: EvaluateConfig {
            data: loaded.summary,
            estimator: cfg,
            bandwidth: bw,
            policy,
            dm_degree: reg.map(|(k, _)| k),
            discretize_bins: args.discretize_bins,
            seed: global.seed,
        },
        result,
        baselines: Baselines { direct_method, discretized },
    };
    render(global.format.unwrap_or(Format::Json), &report, || {
        csv_rows(
            &["index".into(), "term".into()],
            report.result.terms.iter().enumerate().map(|(i, t)| vec![i.to_string(), t.to_string()]),
        )
    })
}

#[derive(Debug, Serialize)]
pub struct OptimizeRunConfig {
    pub data: DataSummary,
    pub bandwidth: BandwidthChoice,
    pub class: LinearClass,
    pub optimizer: OptimizeConfig,
    pub dm_degree: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct OptimizeCmdReport {
    pub command: &'static str,
    pub config: OptimizeRunConfig,
    pub report: OptimizeReport,
}

pub fn optimize_cmd(args: &OptimizeArgs, global: &GlobalArgs) -> Result<Output> {
    let pilot_policy = args.policy.as_deref().map(read_policy).transpose()?;
    let bw_auto = matches!(args.estimator.bandwidth, BandwidthArg::Auto) && args.estimator.pilot.pilot_h.is_none();
    let loaded = load(&args.data, bw_auto)?;
    let ds = &loaded.ds;
    let bw = choose_bandwidth(args.estimator.bandwidth, &args.estimator.pilot, &loaded, pilot_policy.as_ref(), args.estimator.kernel)?;

    let mut class = LinearClass::new(ds.dim(), args.intercept, args.constraint.resolve(ds.dim()));
    class.intercept_bounds = args.intercept_bounds.map(|b| (b.0, b.1));
    let mut search = SearchConfig { restarts: args.restarts, max_iters: args.max_iters, seed: global.seed, ..SearchConfig::default() };
    if args.logged_starts {
        ensure!(args.intercept, "--logged-starts needs --intercept");
        search.starts = logged_starts(ds)?;
        search.init_box = Some(overlap_init_box(ds));
    }
    if args.scale_steps {
        let mut s = feature_step_scales(ds);
        s.truncate(class.n_params());
        search.step_scales = Some(s);
    }
    let cfg = OptimizeConfig {
        estimator: estimator_config(&args.estimator, bw.h),
        lambda_reg: args.lambda,
        min_overlap: args.min_overlap,
        search,
    };
    let reg = fit_regressor(ds, &args.estimator)?;
    let report = optimize(ds, &class, &cfg, reg.as_ref().map(|(_, r)| r as _)).context("optimizing")?;
    let out = OptimizeCmdReport {
        command: "optimize",
        config: OptimizeRunConfig { data: loaded.summary, bandwidth: bw, class, optimizer: cfg, dm_degree: reg.map(|(k, _)| k) },
        report,
    };
    render(global.format.unwrap_or(Format::Json), &out, || {
        let p = out.config.class.n_params();
        let mut header: Vec<String> =
            ["restart", "status", "iterations", "initial_objective", "final_objective"].map(String::from).to_vec();
        header.extend((0..p).map(|j| format!("p{j}")));
        let rows = out.report.restarts.iter().map(|r| {
            let mut row = vec![
                r.index.to_string(),
                serde_json::to_value(r.status).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
                r.iterations.to_string(),
                r.initial_objective.to_string(),
                r.final_objective.to_string(),
            ];
            row.extend(r.final_params.iter().map(|v| v.to_string()));
            row
        });
        csv_rows(&header, rows)
    })
}

#[derive(Debug, Serialize)]
pub struct BandwidthConfig {
    pub data: DataSummary,
    pub policy: Policy,
    pub kernel: Kernel,
}

#[derive(Debug, Serialize)]
pub struct BandwidthReport {
    pub command: &'static str,
    pub config: BandwidthConfig,
    pub bandwidth: BandwidthChoice,
}

pub fn bandwidth_cmd(args: &BandwidthArgs, global: &GlobalArgs) -> Result<Output> {
    let policy = read_policy(&args.policy)?;
    let loaded = load(&args.data, args.pilot.pilot_h.is_none())?;
    let bw = choose_bandwidth(BandwidthArg::Auto, &args.pilot, &loaded, Some(&policy), args.kernel)?;
    let report = BandwidthReport {
        command: "bandwidth",
        config: BandwidthConfig { data: loaded.summary, policy, kernel: args.kernel },
        bandwidth: bw,
    };
    render(global.format.unwrap_or(Format::Json), &report, || {
        let b = &report.bandwidth;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        csv_rows(
            &["h", "source", "c1", "c3"].map(String::from),
            [vec![
                b.h.to_string(),
                if b.plugin.is_some() { "plugin" } else { "rescaled" }.to_string(),
                opt(b.plugin.as_ref().map(|p| p.c1)),
                opt(b.plugin.as_ref().map(|p| p.c3)),
            ]],
        )
    })
}

#[derive(Debug, Serialize)]
pub struct SimulateConfig {
    pub design: Design,
    pub n: usize,
    pub cohort: Option<String>,
    pub theta: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub config: SimulateConfig,
    pub dataset: Dataset,
}

pub fn simulate_cmd(args: &SimulateArgs, global: &GlobalArgs) -> Result<Output> {
    ensure!(args.n > 0 || args.cohort.is_some(), "--n must be positive");
    let seed = global.seed;
    let mut config =
        SimulateConfig { design: args.design, n: args.n, cohort: None, theta: None, seed };
    let ds = match args.design {
        Design::Uniform1d => gen_1d(&SyntheticDesign1D::uniform(), args.n, seed),
        Design::Confounded1d => gen_1d(&SyntheticDesign1D::confounded(), args.n, seed),
        Design::Quadratic10d => gen_10d(&QuadraticDesign10D { n_train: args.n, ..Default::default() }, seed).0,
        Design::Boundary => gen_boundary(args.n, seed),
        Design::Warfarin => {
            let cohort = match &args.cohort {
                Some(p) => {
                    config.cohort = Some(p.display().to_string());
                    load_cohort_csv(p).with_context(|| format!("reading cohort {}", p.display()))?
                }
                None => surrogate_cohort(args.n, seed),
            };
            config.n = cohort.len();
            config.theta = Some(args.theta);
            warfarin_simulate(&cohort, &WarfarinDesign { theta: args.theta }, seed)?
        }
    };
    let report = SimulateReport { command: "simulate", config, dataset: ds };
    render(global.format.unwrap_or(Format::Csv), &report, || {
        let mut buf = Vec::new();
        report.dataset.write_csv(&mut buf)?;
        Ok(buf)
    })
}

#[derive(Debug, Serialize)]
pub struct ReplicateCmdReport {
    pub command: &'static str,
    #[serde(flatten)]
    pub report: ReplicationReport,
}

pub fn replicate_cmd(args: &ReplicateArgs, global: &GlobalArgs) -> Result<Output> {
    let path = args.spec.display();
    let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading spec {path}"))?;
    let spec = ExperimentSpec::from_json(&text).with_context(|| format!("parsing spec {path}"))?;
    let report = replicate(&spec, args.reps, global.seed).context("running replications")?;
    let out = ReplicateCmdReport { command: "replicate", report };
    render(global.format.unwrap_or(Format::Json), &out, || {
        let mut buf = Vec::new();
        out.report.write_csv(&mut buf)?;
        Ok(buf)
    })
}

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cpo_core::propensity::GpsModel;
use cpo_core::{ConstraintSet, EstimatorKind, Kernel, TreatmentBounds};

#[derive(Debug, Parser)]
#[command(name = "cpo", version, about = "Off-policy evaluation and optimization of continuous-treatment policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output format; `json` for reports, `csv` for per-record or per-replication detail.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the value of a fixed policy.
    Evaluate(EvaluateArgs),
    /// Learn a linear policy by minimizing an estimator.
    Optimize(OptimizeArgs),
    /// Choose a bandwidth by the plug-in rule or by rescaling a pilot.
    Bandwidth(BandwidthArgs),
    /// Generate a logged dataset from a built-in design.
    Simulate(SimulateArgs),
    /// Run an experiment spec over many seeded replications.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Logged data as CSV with columns x0..x{d-1}, t, y and optionally q.
    #[arg(long)]
    pub data: PathBuf,
    /// Propensity model: known-uniform:LO,HI | known-normal:VAR:B0,B1,... | impute-linear.
    #[arg(long)]
    pub gps: Option<GpsArg>,
    /// Treatment support LO,HI; required for --boundary-correct.
    #[arg(long)]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value = "sn")]
    pub estimator: EstimatorKind,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: Kernel,
    /// A positive number, or `auto` for the plug-in rule (or the pilot rescale when given).
    #[arg(long, default_value = "auto")]
    pub bandwidth: BandwidthArg,
    /// Propensity clipping threshold; 0 disables clipping.
    #[arg(long, default_value_t = cpo_core::propensity::DEFAULT_CLIP)]
    pub clip: f64,
    #[arg(long)]
    pub boundary_correct: bool,
    /// Degree of the polynomial outcome model used by `dr` and the direct method.
    #[arg(long)]
    pub dm_degree: Option<u32>,
    #[command(flatten)]
    pub pilot: PilotArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PilotArgs {
    /// Pilot bandwidth, rescaled to the data size as h0 (n0 / n)^(1/5).
    #[arg(long, requires = "pilot_n")]
    pub pilot_h: Option<f64>,
    /// Sample size the pilot bandwidth was chosen at.
    #[arg(long, requires = "pilot_h")]
    pub pilot_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Policy JSON file.
    #[arg(long)]
    pub policy: PathBuf,
    /// Also report the discretized estimate with this many treatment bins.
    #[arg(long)]
    pub discretize_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Pilot policy JSON for the plug-in bandwidth.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Weight on the standard-deviation regularizer.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Learn an intercept alongside the coefficients.
    #[arg(long)]
    pub intercept: bool,
    /// Intercept range LO,HI.
    #[arg(long, requires = "intercept")]
    pub intercept_bounds: Option<Bounds>,
    /// Coefficient constraint: none | l2:RADIUS | box:LO,HI.
    #[arg(long, default_value = "none")]
    pub constraint: ConstraintArg,
    /// Reject candidate policies whose kernel window holds fewer records.
    #[arg(long, default_value_t = 0)]
    pub min_overlap: usize,
    /// Also start from the best constant and linear fits of the logged treatments.
    #[arg(long)]
    pub logged_starts: bool,
    /// Precondition steps by inverse feature second moments.
    #[arg(long)]
    pub scale_steps: bool,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Policy JSON file the bandwidth is tuned for.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value = "epanechnikov")]
    pub kernel: Kernel,
    #[command(flatten)]
    pub pilot: PilotArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// x ~ U[0,1], t ~ U[-0.5, 1.3], y = 2|x - t|^1.5 + 0.2 e.
    #[value(name = "uniform-1d")]
    #[serde(rename = "uniform-1d")]
    Uniform1d,
    /// As uniform-1d with t | x ~ N(x + 0.1, 0.5).
    #[value(name = "confounded-1d")]
    #[serde(rename = "confounded-1d")]
    Confounded1d,
    /// Ten-dimensional quadratic outcome; propensities are not recorded.
    #[value(name = "quadratic-10d")]
    #[serde(rename = "quadratic-10d")]
    Quadratic10d,
    /// Simulated doses over a cohort, with band losses.
    Warfarin,
    /// t ~ U[0,1], y = 1.
    Boundary,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub design: Design,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Cohort CSV for the warfarin design; a synthetic cohort of size n otherwise.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// BMI share of the logged dose variance in the warfarin design.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthArg {
    Auto,
    Fixed(f64),
}

impl FromStr for BandwidthArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        let h: f64 = s.parse().with_context(|| format!("bandwidth `{s}` is neither a number nor `auto`"))?;
        if !(h > 0.0 && h.is_finite()) {
            bail!("bandwidth must be positive, got {h}");
        }
        Ok(Self::Fixed(h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GpsArg {
    Known(GpsModel),
    ImputeLinear,
}

fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("`{v}` is not a number"))).collect()
}

impl FromStr for GpsArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let model = match kind {
            "impute-linear" if rest.is_empty() => return Ok(Self::ImputeLinear),
            "known-uniform" => match numbers(rest)?[..] {
                [lo, hi] => GpsModel::KnownUniform { lo, hi },
                _ => bail!("known-uniform takes LO,HI"),
            },
            "known-normal" => {
                let (var, coefs) = rest.split_once(':').context("known-normal takes VAR:B0,B1,...")?;
                let var: f64 = var.parse().with_context(|| format!("variance `{var}` is not a number"))?;
                let coefs = numbers(coefs)?;
                GpsModel::KnownNormal { intercept: coefs[0], coefficients: coefs[1..].to_vec(), variance: var }
            }
            _ => bail!("unknown GPS `{s}`; expected known-uniform:LO,HI, known-normal:VAR:B0,B1,... or impute-linear"),
        };
        model.validate()?;
        Ok(Self::Known(model))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds(pub f64, pub f64);

impl FromStr for Bounds {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match numbers(s)?[..] {
            [lo, hi] if lo < hi => Ok(Self(lo, hi)),
            _ => bail!("expected LO,HI with LO < HI, got `{s}`"),
        }
    }
}

impl Bounds {
    pub fn treatment(self) -> Result<TreatmentBounds> {
        Ok(TreatmentBounds::new(self.0, self.1)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintArg {
    None,
    L2(f64),
    Box(f64, f64),
}

impl FromStr for ConstraintArg {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "none" if rest.is_empty() => Ok(Self::None),
            "l2" => {
                let r: f64 = rest.parse().with_context(|| format!("radius `{rest}` is not a number"))?;
                Ok(Self::L2(r))
            }
            "box" => {
                let b: Bounds = rest.parse()?;
                Ok(Self::Box(b.0, b.1))
            }
            _ => bail!("unknown constraint `{s}`; expected none, l2:RADIUS or box:LO,HI"),
        }
    }
}

impl ConstraintArg {
    pub fn resolve(&self, dim: usize) -> ConstraintSet {
        match *self {
            Self::None => ConstraintSet::None,
            Self::L2(radius) => ConstraintSet::L2Ball { radius },
            Self::Box(lo, hi) => ConstraintSet::Box { lower: vec![lo; dim], upper: vec![hi; dim] },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_gps_forms() {
        assert_eq!("impute-linear".parse::<GpsArg>().unwrap(), GpsArg::ImputeLinear);
        assert_eq!(
            "known-uniform:-0.5,1.3".parse::<GpsArg>().unwrap(),
            GpsArg::Known(GpsModel::KnownUniform { lo: -0.5, hi: 1.3 })
        );
        assert_eq!(
            "known-normal:0.5:0.1,1".parse::<GpsArg>().unwrap(),
            GpsArg::Known(GpsModel::KnownNormal { intercept: 0.1, coefficients: vec![1.0], variance: 0.5 })
        );
        assert!("known-uniform:1,0".parse::<GpsArg>().is_err());
        assert!("known-normal:-1:0".parse::<GpsArg>().is_err());
        assert!("logit".parse::<GpsArg>().is_err());
    }

    #[test]
    fn parses_bandwidth_and_constraints() {
        assert_eq!("auto".parse::<BandwidthArg>().unwrap(), BandwidthArg::Auto);
        assert_eq!("0.2".parse::<BandwidthArg>().unwrap(), BandwidthArg::Fixed(0.2));
        assert!("-1".parse::<BandwidthArg>().is_err());
        assert_eq!("l2:3".parse::<ConstraintArg>().unwrap().resolve(2), ConstraintSet::L2Ball { radius: 3.0 });
        assert_eq!(
            "box:0,2".parse::<ConstraintArg>().unwrap().resolve(2),
            ConstraintSet::Box { lower: vec![0.0; 2], upper: vec![2.0; 2] }
        );
        assert!("box:2,0".parse::<ConstraintArg>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

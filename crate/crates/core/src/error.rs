use thiserror::Error;

/// Errors raised by the estimators, fitting routines and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("record {index} has no propensity; supply a GPS model or a `q` column")]
    MissingPropensity { index: usize },

    #[error("record {index} has propensity {q:e} below 1e-12 with clipping disabled (common support violated)")]
    ZeroPropensity { index: usize, q: f64 },

    #[error("boundary correction requires treatment bounds on the dataset")]
    MissingTreatmentBounds,

    #[error("kernel places no mass inside the treatment bounds around {center}")]
    NoBoundaryMass { center: f64 },

    #[error("no overlap: self-normalization denominator {denominator:e} is below 1e-12")]
    NoOverlap { denominator: f64 },

    #[error("low overlap: {n_eff} records in the kernel window, at least {required} required")]
    LowOverlap { n_eff: usize, required: usize },

    #[error("doubly robust estimation requires a fitted dose-response regressor")]
    MissingRegressor,

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },

    #[error("not enough records: need more than {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("degenerate logging policy: residual variance {0:e} is below 1e-12")]
    DegenerateResiduals(f64),

    #[error("query point (t, x) lies outside the data support (density {0:e})")]
    OutsideSupport(f64),

    #[error("flat curvature: plug-in bandwidth undefined (c1^2 = {0:e}), supply a bandwidth manually")]
    FlatCurvature(f64),

    #[error("plug-in bandwidth supports covariate dimension <= 3, got {0}; supply a bandwidth or a pilot rescale")]
    PluginDimension(usize),

    #[error("feature `{0}` has zero mean; drop or recenter it before building the coefficient box")]
    ZeroMeanFeature(String),

    #[error("degenerate BMI: zero variance across the cohort")]
    DegenerateBmi,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all {restarts} restarts failed: {diagnostics}")]
    AllRestartsFailed { restarts: usize, diagnostics: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

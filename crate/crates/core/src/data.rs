//! Logged interaction data and estimator results.
//!
//! A [`Dataset`] is immutable once built. Value invariants (finite fields,
//! nonnegative propensities, treatments inside the declared bounds) are not
//! enforced at construction so that [`Dataset::validate`] can report every
//! violation at once; [`Dataset::checked`] rejects datasets with any.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged interaction: covariates, treatment, outcome (a loss) and the
/// generalized propensity `q = f(t | x)` when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub x: Vec<f64>,
    pub t: f64,
    pub y: f64,
    pub q: Option<f64>,
}

impl LogRecord {
    pub fn new(x: Vec<f64>, t: f64, y: f64, q: f64) -> Self {
        Self { x, t, y, q: Some(q) }
    }

    pub fn without_propensity(x: Vec<f64>, t: f64, y: f64) -> Self {
        Self { x, t, y, q: None }
    }
}

/// Closed treatment interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentBounds {
    pub lo: f64,
    pub hi: f64,
}

impl TreatmentBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!("treatment bounds need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

/// A single invariant violation found by [`Dataset::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<LogRecord>,
    dim: usize,
    bounds: Option<TreatmentBounds>,
}

impl Dataset {
    /// Builds a dataset with covariate dimension `dim`. Nothing is checked;
    /// call [`Dataset::validate`] or use [`Dataset::checked`].
    pub fn new(dim: usize, records: Vec<LogRecord>) -> Self {
        Self { records, dim, bounds: None }
    }

    /// Like [`Dataset::new`] but fails on the first batch of violations.
    pub fn checked(dim: usize, records: Vec<LogRecord>, bounds: Option<TreatmentBounds>) -> Result<Self> {
        let ds = Self { records, dim, bounds };
        let violations = ds.validate();
        if let Some(v) = violations.first() {
            return Err(Error::Config(format!(
                "{} invalid record(s); first at index {} field `{}`: {}",
                violations.len(),
                v.index,
                v.field,
                v.message
            )));
        }
        Ok(ds)
    }

    pub fn with_bounds(mut self, bounds: TreatmentBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<TreatmentBounds> {
        self.bounds
    }

    pub fn has_propensities(&self) -> bool {
        self.records.iter().all(|r| r.q.is_some())
    }

    /// Returns a copy whose propensities are replaced by `density(t, x)`.
    pub fn with_propensities<F>(&self, density: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64,
    {
        let records = self
            .records
            .iter()
            .map(|r| LogRecord { q: Some(density(r.t, &r.x)), ..r.clone() })
            .collect();
        Self { records, dim: self.dim, bounds: self.bounds }
    }

    pub fn treatments(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.t)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.y)
    }

    /// Observed `(min t, max t)`; `None` for an empty dataset.
    pub fn treatment_range(&self) -> Option<(f64, f64)> {
        let mut it = self.treatments();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dim];
        if self.records.is_empty() {
            return means;
        }
        for r in &self.records {
            for (m, v) in means.iter_mut().zip(&r.x) {
                *m += v;
            }
        }
        let n = self.records.len() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Reports every violated record invariant, in record order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |index: usize, field: &str, message: String| {
            out.push(Violation { index, field: field.to_string(), message })
        };
        for (i, r) in self.records.iter().enumerate() {
            if r.x.len() != self.dim {
                push(i, "x", format!("expected {} covariates, found {}", self.dim, r.x.len()));
            }
            if let Some(j) = r.x.iter().position(|v| !v.is_finite()) {
                push(i, "x", format!("covariate x{j} is not finite"));
            }
            if !r.t.is_finite() {
                push(i, "t", "treatment is not finite".into());
            } else if let Some(b) = self.bounds {
                if !b.contains(r.t) {
                    push(i, "t", format!("treatment {} outside bounds [{}, {}]", r.t, b.lo, b.hi));
                }
            }
            if !r.y.is_finite() {
                push(i, "y", "outcome is not finite".into());
            }
            if let Some(q) = r.q {
                if !q.is_finite() {
                    push(i, "q", "propensity is not finite".into());
                } else if q < 0.0 {
                    push(i, "q", format!("propensity {q} is negative"));
                }
            }
        }
        out
    }

    /// Reads the `x0,...,x{d-1},t,y[,q]` CSV layout. Columns may appear in
    /// any order; `q` is optional.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);

        let mut x_cols = Vec::new();
        while let Some(c) = find(&format!("x{}", x_cols.len())) {
            x_cols.push(c);
        }
        let t_col = find("t").ok_or_else(|| missing_column("t"))?;
        let y_col = find("y").ok_or_else(|| missing_column("y"))?;
        let q_col = find("q");

        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            // header is line 1
            let line = row + 2;
            let field = |col: usize| -> Result<f64> {
                let raw = rec.get(col).unwrap_or("");
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column `{}`: cannot parse `{raw}` as a number", &headers[col]),
                })
            };
            let x = x_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?;
            let q = match q_col {
                Some(c) => Some(field(c)?),
                None => None,
            };
            records.push(LogRecord { x, t: field(t_col)?, y: field(y_col)?, q });
        }
        Ok(Self::new(x_cols.len(), records))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|source| Error::Io { context: format!("opening {}", path.display()), source })?;
        Self::from_csv_reader(file)
    }

    /// Writes the CSV layout read by [`Dataset::from_csv_reader`]. The `q`
    /// column is emitted only when every record carries a propensity.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let with_q = self.has_propensities() && !self.records.is_empty();
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("t".into());
        header.push("y".into());
        if with_q {
            header.push("q".into());
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            row.push(r.t.to_string());
            row.push(r.y.to_string());
            if with_q {
                row.push(r.q.unwrap_or(f64::NAN).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| Error::Io { context: "writing csv".into(), source })?;
        Ok(())
    }
}

fn missing_column(name: &str) -> Error {
    Error::Config(format!("missing required column `{name}`"))
}

/// Output of a policy evaluation.
///
/// `terms` are per-record contributions on the scale of the estimate, so that
/// `estimate == mean(terms)` for every estimator kind. `std` is the
/// regularizer statistic `(1/n) * sqrt(sum (z_i - estimate)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub estimate: f64,
    pub terms: Vec<f64>,
    pub std: f64,
    pub n_eff: usize,
    pub bandwidth: f64,
    /// Set when fewer than 5 records carry nonzero kernel weight.
    pub low_overlap: bool,
}

//! Dense least squares shared by the GPS imputation and the direct method.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_jj| / ||column_j||` below which a column is
/// treated as a linear combination of the columns before it.
const COLLINEAR_TOL: f64 = 1e-10;

/// Ordinary least squares via Householder QR. `names[j]` labels column `j`
/// in rank-deficiency errors.
pub fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    let (n, p) = design.shape();
    if n < p {
        return Err(Error::TooFewRecords { needed: p - 1, got: n });
    }
    let qr = design.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let norm = design.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() < COLLINEAR_TOL * norm {
            let column = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::RankDeficient { column });
        }
    }
    let qty = qr.q().transpose() * target;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { column: "<unknown>".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = least_squares(&x, &y, &[]).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn names_the_collinear_column() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let names: Vec<String> = ["1", "a", "b"].iter().map(|s| s.to_string()).collect();
        match least_squares(&x, &y, &names) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "b"),
            other => panic!("{other:?}"),
        }
    }
}

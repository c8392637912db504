use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integration::FeatureMatrix;

/// Ridge term used when the design is rank-deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Least squares on the column-centred design via Householder QR.
///
/// Falls back to ridge (λ = 1e−8, intercept unpenalized) when `n ≤ p` or
/// the centred design is numerically rank-deficient.
pub fn fit_ols(x: &FeatureMatrix, y: &[f64]) -> Result<LinearModel> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::invalid(format!("{n} rows but {} targets", y.len())));
    }
    if n == 0 {
        return Err(Error::invalid("cannot fit OLS on zero rows"));
    }
    let x_mean: Vec<f64> = (0..p).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(LinearModel {
            intercept: y_mean,
            coefficients: Vec::new(),
        });
    }
    let design = DMatrix::from_fn(n, p, |i, j| x.get(i, j) - x_mean[j]);
    let target = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let solved = if n > p { solve_qr(design.clone(), target.clone()) } else { None };
    let beta = match solved {
        Some(b) => b,
        None => {
            log::warn!("OLS design is rank-deficient (n={n}, p={p}); refitting with ridge lambda {RIDGE_LAMBDA}");
            let mut aug = DMatrix::zeros(n + p, p);
            aug.view_mut((0, 0), (n, p)).copy_from(&design);
            for j in 0..p {
                aug[(n + j, j)] = RIDGE_LAMBDA.sqrt();
            }
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&target);
            solve_qr(aug, rhs).ok_or_else(|| Error::Invariant("ridge system is singular".into()))?
        }
    };
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Invariant("OLS produced non-finite coefficients".into()));
    }
    Ok(LinearModel {
        intercept,
        coefficients,
    })
}

/// Returns `None` when R has a (relatively) zero diagonal entry.
fn solve_qr(a: DMatrix<f64>, mut b: DVector<f64>) -> Option<DVector<f64>> {
    let p = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOLERANCE * max_diag) {
        return None;
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, p).into_owned();
    r.solve_upper_triangular(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        FeatureMatrix::from_rows(names, rows).unwrap()
    }

    #[test]
    fn simple_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64).collect();
        let m = fit_ols(&matrix(&rows), &y).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-8);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_target() {
        let mut rng = SplitMix64::new(2);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.next_f64(), rng.next_f64()]).collect();
        let m = fit_ols(&matrix(&rows), &[4.5; 20]).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!((m.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn recovers_planted_coefficients() {
        let mut rng = SplitMix64::new(3);
        let beta = [1.5, -2.0, 0.25, 4.0, -0.75];
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.next_gaussian() * 3.0).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| -7.0 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = fit_ols(&matrix(&rows), &y).unwrap();
        let err = m.coefficients.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
        assert!((m.intercept + 7.0).abs() <= 1e-8);
    }

    #[test]
    fn rank_deficient_uses_ridge() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let m = fit_ols(&matrix(&rows), &y).unwrap();
        let pred: Vec<f64> = rows.iter().map(|r| m.predict_row(r)).collect();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
        // Fewer rows than features also goes through ridge.
        let wide = matrix(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]]);
        assert!(fit_ols(&wide, &[1.0, 2.0]).is_ok());
    }
}

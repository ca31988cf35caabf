//! Ordinary least squares with standard errors and t-tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Result of [`ols`]. Coefficients are on the original (unscaled) columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    /// Two-sided p-values of `coef = 0`.
    pub p_values: Vec<f64>,
    pub rss: f64,
    /// Root-mean-square residual.
    pub rms: f64,
    pub dof: usize,
    pub rank: usize,
    /// Ratio of extreme singular values of the scaled design.
    pub condition_number: f64,
}

/// Fits `y ≈ Σ_j coef_j · columns[j]` by least squares.
///
/// Columns are scaled to unit RMS before an SVD solve and the coefficients
/// unscaled afterwards. Directions with singular values below
/// `max(n, k) · ε · s_max` are dropped, so rank-deficient designs still get
/// the minimum-norm solution.
pub fn ols(columns: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let k = columns.len();
    let n = y.len();
    if k == 0 {
        return Err(invalid("design", "no columns"));
    }
    if n < k {
        return Err(invalid("design", format!("{n} observations for {k} coefficients")));
    }
    let mut scales = Vec::with_capacity(k);
    for (j, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(invalid("design", format!("column {j} has {} rows, expected {n}", c.len())));
        }
        let s = (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid("design", format!("column {j} is zero or not finite")));
        }
        scales.push(s);
    }
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i] / scales[j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let tol = n.max(k) as f64 * f64::EPSILON * s_max;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * &yv;
    let mut beta_s = DVector::zeros(k);
    let mut rank = 0;
    for i in 0..s.len() {
        if s[i] > tol {
            rank += 1;
            beta_s += vt.row(i).transpose() * (uty[i] / s[i]);
        }
    }
    let resid = &yv - &x * &beta_s;
    let rss = resid.norm_squared();
    let dof = n - rank;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };

    let mut coef = Vec::with_capacity(k);
    let mut se = Vec::with_capacity(k);
    for j in 0..k {
        coef.push(beta_s[j] / scales[j]);
        let mut var = 0.0;
        for i in 0..s.len() {
            if s[i] > tol {
                var += vt[(i, j)] * vt[(i, j)] / (s[i] * s[i]);
            }
        }
        se.push((sigma2 * var).sqrt() / scales[j]);
    }
    let t: Vec<f64> = coef.iter().zip(&se).map(|(c, e)| c / e).collect();
    let p_values = if dof > 0 {
        let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof");
        t.iter()
            .map(|tv| {
                if tv.is_finite() {
                    (2.0 * dist.sf(tv.abs())).min(1.0)
                } else if tv.is_nan() {
                    f64::NAN
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        vec![f64::NAN; k]
    };
    Ok(OlsFit {
        coef,
        se,
        t,
        p_values,
        rss,
        rms: (rss / n as f64).sqrt(),
        dof,
        rank,
        condition_number: if s_min > 0.0 { s_max / s_min } else { f64::INFINITY },
    })
}

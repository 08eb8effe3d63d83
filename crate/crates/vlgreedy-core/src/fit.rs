//! Log-log least squares: turns `value ≈ c * N^s` data into a measurable
//! slope, prefactor, and goodness of fit.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    /// Natural log of the prefactor: `value ≈ exp(intercept) * N^slope`.
    pub intercept: f64,
    /// 1 when the data is an exact power law; defined as 1 on zero-variance
    /// data (a constant sequence is a perfect slope-0 law).
    pub r_squared: f64,
}

/// Least-squares fit of `log(value)` against `log(n)`.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<PowerFit> {
    if pairs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            pairs.len()
        )));
    }
    for &(n, v) in pairs {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::Fit(format!("sample size {n} outside [1, oo)")));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Fit(format!("value {v} outside (0, oo)")));
        }
    }
    for (i, &(n, _)) in pairs.iter().enumerate() {
        if pairs[i + 1..].iter().any(|&(m, _)| m == n) {
            return Err(Error::Fit(format!("duplicate sample size {n}")));
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|&(n, _)| n.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / k;
    let y_bar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_bar) * (y - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_bar) * (y - y_bar)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(PowerFit {
        slope,
        intercept,
        r_squared,
    })
}

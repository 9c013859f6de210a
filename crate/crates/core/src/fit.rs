//! Least-squares lines in log-log coordinates.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares `y = slope x + intercept`; `None` with fewer than two
/// distinct abscissae.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    assert_eq!(x.len(), y.len());
    let m = x.len();
    if m < 2 {
        return None;
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: m,
    })
}

/// Fit of `ln y` against `ln x`, skipping non-positive values.
pub fn fit_log_log(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    fit_line(&lx, &ly)
}

/// Same as [`fit_log_log`] after discarding the leading `fraction` of the points.
pub fn fit_log_log_tail(x: &[f64], y: &[f64], fraction: f64) -> Option<LineFit> {
    let skip = (fraction * x.len() as f64).floor() as usize;
    fit_log_log(&x[skip..], &y[skip..])
}

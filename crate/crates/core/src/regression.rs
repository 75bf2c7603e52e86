//! Ordinary least squares on a straight line.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressionError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate abscissae: all x values are equal")]
    DegenerateAbscissae,
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of the fitted pairs; 0 when y is constant.
    pub pearson_r: f64,
    /// Standard error of the slope, `sqrt(SSE / (n - 2) / Sxx)`; 0 for two points.
    pub se_slope: f64,
    pub n: usize,
}

/// Fits `y = intercept + slope * x`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit, RegressionError> {
    let n = points.len();
    if n < 2 {
        return Err(RegressionError::TooFewPoints(n));
    }
    if let Some(i) = points.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(RegressionError::NonFinite(i));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(RegressionError::DegenerateAbscissae);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let pearson_r = if syy == 0.0 { 0.0 } else { (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0) };
    let se_slope = if n == 2 {
        0.0
    } else {
        let sse: f64 = points
            .iter()
            .map(|&(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    };
    Ok(LineFit { slope, intercept, pearson_r, se_slope, n })
}

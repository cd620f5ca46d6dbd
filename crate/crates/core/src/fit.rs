//! Least-squares fit of exponential decays.

use crate::error::{Error, Result};

/// Straight-line fit `y ≈ intercept + slope·x`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::Numerical("a line fit needs at least two points".into()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("line fit needs two distinct abscissae".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        max_residual,
    })
}

/// Fit `f(m) = A·r^m` by least squares on `ln f(m)`. Returns `(r, fit)`.
///
/// Any non-positive value is a fit failure: the logarithm is undefined and
/// clamping would bias the rate.
pub fn fit_decay(samples: &[(usize, f64)]) -> Result<(f64, LineFit)> {
    let points = samples
        .iter()
        .map(|&(m, f)| {
            if f > 0.0 && f.is_finite() {
                Ok((m as f64, f.ln()))
            } else {
                Err(Error::Numerical(format!(
                    "decay value {f} at depth {m} is not positive"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_line(&points)?;
    Ok((fit.slope.exp(), fit))
}

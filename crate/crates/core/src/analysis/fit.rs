//! Exponential fit of a correlation histogram and its relative residuals.

use crate::analysis::events::Histogram;
use crate::error::{Error, Result};

/// Minimum number of non-empty bins the fit accepts.
pub const MIN_FIT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFit {
    /// `ln(count) = intercept + slope * t_ns` at bin centres.
    pub intercept: f64,
    pub slope: f64,
    /// `(bin_lo_ns, count / fit - 1)` for every fitted bin.
    pub residuals: Vec<(f64, f64)>,
    pub peak_to_peak: f64,
}

impl ExpFit {
    pub fn predict(&self, t_ns: f64) -> f64 {
        (self.intercept + self.slope * t_ns).exp()
    }
}

/// Least-squares line through the log-counts of the non-empty bins that
/// start at or after `fit_from_ns`, with residuals as fractions of the fit.
pub fn exp_fit_residuals(hist: &Histogram, fit_from_ns: f64) -> Result<ExpFit> {
    let pts: Vec<(f64, f64, f64)> = (0..hist.counts.len())
        .filter(|&i| hist.bin_lo(i) >= fit_from_ns && hist.counts[i] > 0)
        .map(|i| {
            let c = hist.counts[i] as f64;
            (hist.bin_lo(i), hist.bin_center(i), c)
        })
        .collect();
    if pts.len() < MIN_FIT_BINS {
        return Err(Error::domain(format!(
            "exponential fit needs {MIN_FIT_BINS} non-empty bins beyond {fit_from_ns} ns, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2.ln() - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(lo, x, c)| (lo, c / (intercept + slope * x).exp() - 1.0))
        .collect();
    let (min, max) = residuals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.1), b.max(r.1)));
    Ok(ExpFit {
        intercept,
        slope,
        residuals,
        peak_to_peak: max - min,
    })
}

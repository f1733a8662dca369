//! Ordinary least-squares fits of power laws in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum number of lags in an exponent fit.
pub const MIN_FIT_POINTS: usize = 8;
/// Minimum span of the lags, in decades.
pub const MIN_FIT_DECADES: f64 = 1.5;

/// `log y = intercept + slope log x` with the slope's standard error and the
/// coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub points: usize,
}

impl LogLogFit {
    /// `slope - 2 stderr >= alpha`.
    pub fn supports_exponent(&self, alpha: f64) -> bool {
        self.slope - 2.0 * self.stderr >= alpha
    }
}

/// Fit a power law through positive data. Needs at least three points.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} abscissae but {} ordinates", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if let Some((xi, yi)) = x.iter().zip(y).find(|(xi, yi)| !(**xi > 0.0 && **yi > 0.0 && xi.is_finite() && yi.is_finite())) {
        return Err(Error::Fit(format!("degenerate: non-positive or non-finite point ({xi}, {yi})")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate: all lags equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LogLogFit { slope, intercept, stderr, r2, points: x.len() })
}

/// Check that a set of lags is wide enough for an exponent fit.
pub fn check_fit_window(lags: &[f64]) -> Result<()> {
    if lags.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_POINTS} lags, got {}; add lags",
            lags.len()
        )));
    }
    let lo = lags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lags.iter().cloned().fold(0.0f64, f64::max);
    if !(lo > 0.0) {
        return Err(Error::Fit("lags must be positive".into()));
    }
    let decades = (hi / lo).log10();
    if decades < MIN_FIT_DECADES - 1e-9 {
        return Err(Error::Fit(format!(
            "lags span {decades:.2} decades, need at least {MIN_FIT_DECADES}; widen the lag range"
        )));
    }
    Ok(())
}

/// `n` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > 0.0 && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let x = log_space(1e-3, 1e-1, 9);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(1.25)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 1.25).abs() < 1e-12);
        assert!(f.stderr < 1e-10);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(f.supports_exponent(1.2));
        assert!(!f.supports_exponent(1.3));
    }

    #[test]
    fn refuses_degenerate_input() {
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(check_fit_window(&log_space(1.0, 10.0, 9)).is_err());
        assert!(check_fit_window(&log_space(1.0, 100.0, 7)).is_err());
        assert!(check_fit_window(&log_space(1.0, 10f64.powf(1.5), 8)).is_ok());
    }

    proptest! {
        #[test]
        fn slope_invariant_under_scaling(c in 0.01f64..100.0, p in -2.0f64..3.0) {
            let x = log_space(0.01, 1.0, 10);
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(p) * (1.0 + 0.01 * (v * 37.0).sin())).collect();
            let f1 = fit_loglog(&x, &y).unwrap();
            let y2: Vec<f64> = y.iter().map(|v| v * 7.0).collect();
            let f2 = fit_loglog(&x, &y2).unwrap();
            prop_assert!((f1.slope - f2.slope).abs() < 1e-12);
            prop_assert!((f1.slope - p).abs() < 0.02);
        }
    }
}

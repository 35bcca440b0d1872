//! Log-linear rate fitting.

use crate::{Error, Result};

/// Fewest points accepted after burn-in.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `exp(slope)`: the per-iteration contraction factor.
    pub tau: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; `None` when the log-series is constant.
    pub r_squared: Option<f64>,
    pub points: usize,
}

impl RateFit {
    /// `τ < 1` with `R² ≥ min_r2`.
    pub fn is_linear(&self, min_r2: f64) -> bool {
        self.tau < 1.0 && self.r_squared.is_some_and(|r| r >= min_r2)
    }
}

/// Least-squares fit of `log(series[k])` against `k` for `k ≥ burn_in`.
pub fn fit_linear_rate(series: &[f64], burn_in: usize) -> Result<RateFit> {
    let tail = series.get(burn_in..).unwrap_or(&[]);
    if tail.len() < MIN_FIT_POINTS {
        return Err(Error::SeriesTooShort {
            len: tail.len(),
            min: MIN_FIT_POINTS,
        });
    }
    if let Some((i, v)) = tail.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive {
            index: burn_in + i,
            value: *v,
        });
    }
    let m = tail.len() as f64;
    let xs = (0..tail.len()).map(|k| (burn_in + k) as f64);
    let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let x_mean = xs.clone().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.zip(&ys) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let r_squared = if syy > 0.0 {
        Some((sxy * sxy / (sxx * syy)).min(1.0))
    } else {
        None
    };
    Ok(RateFit {
        tau: slope.exp(),
        slope,
        intercept,
        r_squared,
        points: tail.len(),
    })
}

/// Prefix of `series` before the first entry at or below `rel_floor`
/// times its first entry. Used to drop the round-off floor of a
/// converged run before fitting.
pub fn truncate_at_floor(series: &[f64], rel_floor: f64) -> &[f64] {
    let Some(&first) = series.first() else {
        return series;
    };
    let cut = series
        .iter()
        .position(|v| !(*v > rel_floor * first))
        .unwrap_or(series.len());
    &series[..cut]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_series_is_exact() {
        let s: Vec<f64> = (0..50).map(|k| 3.0 * 0.9f64.powi(k)).collect();
        let fit = fit_linear_rate(&s, 0).unwrap();
        assert!((fit.tau - 0.9).abs() < 1e-12);
        assert!((fit.r_squared.unwrap() - 1.0).abs() < 1e-12);
        let fit = fit_linear_rate(&s, 20).unwrap();
        assert!((fit.tau - 0.9).abs() < 1e-12);
        assert_eq!(fit.points, 30);
    }

    #[test]
    fn constant_series_flags_r_squared() {
        let fit = fit_linear_rate(&[2.0; 12], 0).unwrap();
        assert_eq!(fit.tau, 1.0);
        assert_eq!(fit.r_squared, None);
        assert!(!fit.is_linear(0.99));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_linear_rate(&[1.0; 9], 0),
            Err(Error::SeriesTooShort { len: 9, .. })
        ));
        assert!(matches!(
            fit_linear_rate(&[1.0; 30], 25),
            Err(Error::SeriesTooShort { len: 5, .. })
        ));
        let mut s = vec![1.0; 20];
        s[13] = 0.0;
        assert!(matches!(
            fit_linear_rate(&s, 2),
            Err(Error::NonPositive { index: 13, .. })
        ));
    }

    #[test]
    fn sublinear_series_is_not_linear() {
        let s: Vec<f64> = (1..2000).map(|k| ((k as f64).ln() + 1.0) / k as f64).collect();
        let fit = fit_linear_rate(&s, 0).unwrap();
        assert!(!fit.is_linear(0.99), "{fit:?}");
    }

    #[test]
    fn floor_truncation() {
        let s = [1.0, 0.1, 1e-21, 1e-19];
        assert_eq!(truncate_at_floor(&s, 1e-20), &s[..2]);
        assert_eq!(truncate_at_floor(&[], 1e-20), &[] as &[f64]);
        assert_eq!(truncate_at_floor(&s[..2], 1e-20).len(), 2);
    }
}

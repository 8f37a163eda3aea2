//! Small statistics toolkit: Wilson intervals, Kolmogorov-Smirnov distance,
//! moments with fixed-order summation, log-log slopes.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::num::pairwise_sum;

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    wilson_interval_z(successes, trials, Z_95)
}

pub fn wilson_interval_z(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // Clamp so that `lo <= p <= hi` survives rounding at the extremes.
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (variance(xs) / xs.len() as f64).sqrt())
}

/// `sup_x |F_n(x) - F(x)|` for the empirical law of `xs`.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS distance to `N(0, sigma2)`.
pub fn ks_normal(xs: &[f64], sigma2: f64) -> Result<f64> {
    let normal = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| invalid("sigma2", format!("bad normal scale: {e}")))?;
    Ok(ks_distance(xs, |x| normal.cdf(x)))
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// 95% critical value of the two-sided KS statistic, asymptotic form.
pub fn ks_critical_95(samples: usize) -> f64 {
    1.358 / (samples as f64).sqrt()
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("regression", "need at least two paired points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let sxx = pairwise_sum(&sxx);
    if sxx == 0.0 {
        return Err(Error::Degenerate("regression abscissae are all equal".into()));
    }
    Ok(pairwise_sum(&sxy) / sxx)
}

/// Slope of `log y` against `log x`; all values must be positive.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(invalid("regression", "log-log slope needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.005);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((hi - lo - 2.0 * 0.0309).abs() < 1e-3);
        let (lo, hi) = wilson_interval(1000, 1000);
        assert!(lo > 0.995 && hi == 1.0);
    }

    #[test]
    fn wilson_coverage() {
        let p = 0.3;
        let trials = 1000;
        let mut covered = 0;
        let mut s = Stream::new(17, 0);
        for _ in 0..1000 {
            let hits = (0..trials).filter(|_| s.next_unit() < p).count() as u64;
            let (lo, hi) = wilson_interval(hits, trials);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        assert!((930..=970).contains(&covered), "coverage {covered}");
    }

    #[test]
    fn ks_of_normal_samples_is_small() {
        let mut s = Stream::new(3, 0);
        let normal = Normal::standard();
        let xs: Vec<f64> = (0..10_000).map(|_| normal.inverse_cdf(s.next_unit())).collect();
        let d = ks_normal(&xs, 1.0).unwrap();
        assert!(d <= ks_critical_95(xs.len()), "{d}");
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_normal(&shifted, 1.0).unwrap() > 0.05);
    }

    #[test]
    fn slopes() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 0.75).abs() < 1e-12);
        assert!(log_log_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(ols_slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }
}

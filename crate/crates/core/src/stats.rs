//! Small numeric helpers shared by several modules: summary statistics,
//! Pearson correlation, the normal CDF and Fisher's exact test.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::error::{LrsaError, Result};

/// Two times are treated as the same design point when closer than this.
pub const TIME_EPS: f64 = 1e-9;

pub fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Median with the even-count convention of averaging the two middle values.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_sf(x: f64) -> f64 {
    Normal::standard().sf(x)
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    (x * scale).round() / scale
}

/// Outcome of Fisher's exact test on a 2x2 table `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    /// Sample odds ratio `(a/b)/(c/d)`; 0 whenever `a = 0`.
    pub odds_ratio: f64,
    /// Two-sided p: total probability of tables no more likely than the observed one.
    pub p_value: f64,
}

/// Log hypergeometric probability of the table with top-left cell `a`
/// given the margins.
fn ln_table_prob(a: u64, row1: u64, row2: u64, col1: u64, n: u64) -> f64 {
    ln_binomial(row1, a) + ln_binomial(row2, col1 - a) - ln_binomial(n, col1)
}

pub fn fisher_exact(a: u64, b: u64, c: u64, d: u64) -> Result<FisherResult> {
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let col2 = b + d;
    if row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0 {
        return Err(LrsaError::EmptyMargin { table: [a, b, c, d] });
    }
    let n = row1 + row2;

    let odds_ratio = if a == 0 {
        0.0
    } else {
        (a as f64 * d as f64) / (b as f64 * c as f64)
    };

    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let ln_obs = ln_table_prob(a, row1, row2, col1, n);
    // Relative slack so tables tied with the observed one are not lost to rounding.
    let cutoff = ln_obs + 1e-7;
    let p: f64 = (lo..=hi)
        .map(|x| ln_table_prob(x, row1, row2, col1, n))
        .filter(|&lp| lp <= cutoff)
        .map(f64::exp)
        .sum();

    Ok(FisherResult {
        odds_ratio,
        p_value: p.min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[1.0, 10.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn pearson_two_pass_oracle() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 2.0, 3.0, 5.0];
        // raw-sums form: (n Sxy - Sx Sy) / sqrt((n Sxx - Sx^2)(n Syy - Sy^2))
        let n = 4.0;
        let (sx, sy) = (10.0, 11.0);
        let (sxx, syy, sxy) = (30.0, 39.0, 34.0);
        let expected = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy) as f64).sqrt();
        assert!((pearson(&x, &y).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 6.5 / (5.0f64 * 8.75).sqrt()).abs() < 1e-15);
        assert!(pearson(&x, &[2.0; 4]).is_none());
    }

    #[test]
    fn round_sig_matches_table_display() {
        assert_eq!(round_sig(9.0 / 2456.0, 1), 0.004);
        assert_eq!(round_sig(33.0 / 492.0, 1), 0.07);
        assert_eq!(round_sig(0.0659915, 1), 0.07);
        assert_eq!(round_sig(8.437e-38, 1), 8e-38);
    }

    #[test]
    fn fisher_symmetric_table_is_one() {
        let r = fisher_exact(5, 5, 5, 5).unwrap();
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!((r.odds_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_rejects_empty_margin() {
        assert!(matches!(
            fisher_exact(0, 0, 3, 4),
            Err(LrsaError::EmptyMargin { .. })
        ));
    }

    #[test]
    fn fisher_matches_reference_values() {
        // Reference values from an independent implementation.
        let r = fisher_exact(33, 375, 459, 9147).unwrap();
        assert!((r.p_value / 0.004655464916333258 - 1.0).abs() < 1e-8);
        let r = fisher_exact(9, 399, 2447, 7159).unwrap();
        assert!((r.p_value / 8.437129286617126e-38 - 1.0).abs() < 1e-6);
    }
}

//! Quadratic-regression F-test over time with Benjamini–Hochberg adjustment,
//! the comparison method for the band-based caller.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dataset::{distinct_times, format_value, ConsolidatedSeries};
use crate::error::{LrsaError, Result};
use crate::stats::{mean, same_time};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub probe_id: String,
    pub f_statistic: f64,
    pub p_value: f64,
    /// Filled by [`bh_adjust_results`]; equals `p_value` until then.
    pub p_adjusted: f64,
    pub max_abs_log2_delta: f64,
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if r.diagonal().iter().any(|v| v.abs() <= 1e-10 * scale) {
        return Err(LrsaError::invalid("rank-deficient regression design"));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| LrsaError::invalid("rank-deficient regression design"))?;
    Ok((y - x * beta).norm_squared())
}

/// F-test of the quadratic-in-time model against the intercept-only model.
pub fn anova_fit(series: &ConsolidatedSeries) -> Result<AnovaResult> {
    let n = series.len();
    let distinct = series.distinct_times();
    if n < 4 || distinct.len() < 3 {
        return Err(LrsaError::invalid(format!(
            "{}: quadratic F-test needs at least 4 observations at 3 times, got {} at {}",
            series.probe_id,
            n,
            distinct.len()
        )));
    }
    let times = series.times();
    let values = series.values();
    // centre and scale time for conditioning; the fitted space is unchanged
    let lo = distinct[0];
    let span = distinct[distinct.len() - 1] - lo;
    let x = DMatrix::from_fn(n, 3, |i, j| ((times[i] - lo) / span).powi(j as i32));
    let y = DVector::from_vec(values.clone());
    let m = mean(&values);
    let rss0: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let rss1 = rss(&x, &y)?.min(rss0);
    let d2 = (n - 3) as f64;
    let (f, p) = if rss0 <= 0.0 {
        (0.0, 1.0)
    } else if rss1 <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = ((rss0 - rss1) / 2.0) / (rss1 / d2);
        let dist = FisherSnedecor::new(2.0, d2).map_err(|e| LrsaError::invalid(e.to_string()))?;
        (f, dist.sf(f).clamp(0.0, 1.0))
    };

    let group_mean = |t: f64| {
        let vs: Vec<f64> = series
            .points
            .iter()
            .filter(|p| same_time(p.time_days, t))
            .map(|p| p.value)
            .collect();
        mean(&vs)
    };
    let control = group_mean(lo);
    let max_abs_log2_delta = distinct_times(times.iter().copied())
        .into_iter()
        .skip(1)
        .map(|t| (group_mean(t) - control).abs())
        .fold(0.0, f64::max);

    Ok(AnovaResult {
        probe_id: series.probe_id.clone(),
        f_statistic: f,
        p_value: p,
        p_adjusted: p,
        max_abs_log2_delta,
    })
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(LrsaError::invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        out[i] = running.min(1.0);
    }
    Ok(out)
}

/// Replaces every `p_adjusted` with its BH-adjusted value across `results`.
pub fn bh_adjust_results(results: &mut [AnovaResult]) -> Result<()> {
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    for (r, q) in results.iter_mut().zip(bh_adjust(&p)?) {
        r.p_adjusted = q;
    }
    Ok(())
}

pub fn is_anova_de(r: &AnovaResult, alpha: f64, fold_threshold: f64, adjust: bool) -> bool {
    let p = if adjust { r.p_adjusted } else { r.p_value };
    p <= alpha && r.max_abs_log2_delta >= fold_threshold.log2()
}

pub fn anova_call(
    results: &[AnovaResult],
    alpha: f64,
    fold_threshold: f64,
    adjust: bool,
) -> HashSet<String> {
    results
        .iter()
        .filter(|r| is_anova_de(r, alpha, fold_threshold, adjust))
        .map(|r| r.probe_id.clone())
        .collect()
}

/// Rows `probe_id, F, p, p_adj, delta, is_de`.
pub fn anova_tsv(results: &[AnovaResult], alpha: f64, fold_threshold: f64, adjust: bool) -> String {
    let mut s = String::from("probe_id\tF\tp\tp_adj\tdelta\tis_de\n");
    for r in results {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.probe_id,
            format_value(r.f_statistic),
            format_value(r.p_value),
            format_value(r.p_adjusted),
            format_value(r.max_abs_log2_delta),
            is_anova_de(r, alpha, fold_threshold, adjust)
        ));
    }
    s
}

//! Local quadratic regression with tricube weights and nearest-neighbour
//! bandwidths, plus GCV bandwidth selection.
//!
//! The fitted value at `t0` is a linear function of the observations,
//! `f(t0) = l(t0)' s`. Everything downstream (bands, variance estimates, the
//! tube length) is built from these hat vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{distinct_times, ConsolidatedSeries};
use crate::error::{LrsaError, Result};
use crate::stats::same_time;

/// Default nearest-neighbour fractions tried by GCV.
pub const DEFAULT_BANDWIDTH_GRID: [f64; 7] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// `n` equispaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFitConfig {
    pub bandwidth_grid: Vec<f64>,
    pub eval_grid: Vec<f64>,
}

impl Default for LocalFitConfig {
    fn default() -> Self {
        LocalFitConfig {
            bandwidth_grid: DEFAULT_BANDWIDTH_GRID.to_vec(),
            eval_grid: linspace(0.0, 30.0, 31),
        }
    }
}

impl LocalFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_grid.is_empty() {
            return Err(LrsaError::invalid("bandwidth grid is empty"));
        }
        if self
            .bandwidth_grid
            .iter()
            .any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return Err(LrsaError::invalid(format!(
                "bandwidth fractions must lie in (0, 1]: {:?}",
                self.bandwidth_grid
            )));
        }
        if self.bandwidth_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LrsaError::invalid("bandwidth grid must be strictly increasing"));
        }
        if self.eval_grid.iter().any(|t| !t.is_finite()) {
            return Err(LrsaError::invalid("evaluation grid has non-finite points"));
        }
        Ok(())
    }
}

/// Hat vector of a local fit at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct HatVector {
    pub t0: f64,
    pub weights: Vec<f64>,
    /// Local polynomial degree actually used: 2, or 1 after a fallback.
    pub degree: usize,
}

impl HatVector {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(l, s)| l * s).sum()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|l| l * l).sum::<f64>().sqrt()
    }
}

/// Distance from `t0` to its `ceil(fraction * n)`-th nearest observation.
pub fn nn_bandwidth(times: &[f64], t0: f64, fraction: f64) -> f64 {
    let n = times.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut d: Vec<f64> = times.iter().map(|t| (t - t0).abs()).collect();
    d.sort_by(f64::total_cmp);
    d[k - 1]
}

/// Tricube weights `(1 - |u|^3)^3` for `|t - t0| < h`, zero elsewhere.
pub fn tricube_weights(times: &[f64], t0: f64, h: f64) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let d = (t - t0).abs();
            if h > 0.0 && d < h {
                let u = d / h;
                let v = 1.0 - u * u * u;
                v * v * v
            } else {
                0.0
            }
        })
        .collect()
}

/// Hat vector `e1' (X'WX)^-1 X'W` of the local quadratic fit at `t0`.
///
/// Falls back to a local line when fewer than three distinct times carry
/// positive weight.
pub fn hat_vector(times: &[f64], t0: f64, fraction: f64) -> Result<HatVector> {
    if times.is_empty() {
        return Err(LrsaError::SingularDesign { t0 });
    }
    let h = nn_bandwidth(times, t0, fraction);
    let w = tricube_weights(times, t0, h);
    let support = distinct_times(
        times
            .iter()
            .zip(&w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(&t, _)| t),
    )
    .len();
    let max_degree = match support {
        0 | 1 => return Err(LrsaError::SingularDesign { t0 }),
        2 => 1,
        _ => 2,
    };
    for degree in (1..=max_degree).rev() {
        if let Some(weights) = solve_local(times, &w, t0, h, degree) {
            return Ok(HatVector {
                t0,
                weights,
                degree,
            });
        }
    }
    Err(LrsaError::SingularDesign { t0 })
}

fn solve_local(times: &[f64], w: &[f64], t0: f64, h: f64, degree: usize) -> Option<Vec<f64>> {
    let p = degree + 1;
    // Basis in scaled offsets (t - t0)/h; the fitted value at t0 is unchanged.
    let basis = |t: f64| -> Vec<f64> {
        let u = (t - t0) / h;
        (0..p).map(|k| u.powi(k as i32)).collect()
    };
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    for (&t, &wi) in times.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let x = basis(t);
        for a in 0..p {
            for b in 0..p {
                xtwx[(a, b)] += wi * x[a] * x[b];
            }
        }
    }
    let chol = xtwx.clone().cholesky()?;
    let diag = chol.l().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 1e-7 * hi) {
        return None;
    }
    let mut e1 = DVector::<f64>::zeros(p);
    e1[0] = 1.0;
    let z = chol.solve(&e1);
    Some(
        times
            .iter()
            .zip(w)
            .map(|(&t, &wi)| {
                if wi == 0.0 {
                    0.0
                } else {
                    let x = basis(t);
                    wi * (0..p).map(|k| x[k] * z[k]).sum::<f64>()
                }
            })
            .collect(),
    )
}

/// Fitted value and hat vector of the local fit to `series` at `t0`.
pub fn local_fit_at(series: &ConsolidatedSeries, t0: f64, fraction: f64) -> Result<(f64, HatVector)> {
    let hat = hat_vector(&series.times(), t0, fraction)?;
    let value = hat.apply(&series.values());
    Ok((value, hat))
}

/// Hat-matrix summaries at the observed times for one bandwidth.
#[derive(Debug, Clone)]
pub struct HatSummary {
    pub fitted: Vec<f64>,
    pub trace: f64,
    /// `tr(L'L)`
    pub trace2: f64,
    pub rss: f64,
}

fn hat_summary(times: &[f64], values: &[f64], fraction: f64) -> Result<HatSummary> {
    let mut fitted = Vec::with_capacity(times.len());
    let mut trace = 0.0;
    let mut trace2 = 0.0;
    let mut rss = 0.0;
    for (j, &t) in times.iter().enumerate() {
        let hat = hat_vector(times, t, fraction)?;
        let f = hat.apply(values);
        trace += hat.weights[j];
        trace2 += hat.weights.iter().map(|l| l * l).sum::<f64>();
        rss += (values[j] - f) * (values[j] - f);
        fitted.push(f);
    }
    Ok(HatSummary {
        fitted,
        trace,
        trace2,
        rss,
    })
}

fn gcv_from(n: usize, s: &HatSummary) -> Option<f64> {
    let n = n as f64;
    let df = n - s.trace;
    if df <= 1e-10 * n {
        return None;
    }
    Some(n * s.rss / (df * df))
}

/// `n * RSS / (n - tr L)^2` at the observed times, `None` when `tr L >= n` or
/// a local fit is singular.
pub fn gcv_score(series: &ConsolidatedSeries, fraction: f64) -> Option<f64> {
    let times = series.times();
    let values = series.values();
    let s = hat_summary(&times, &values, fraction).ok()?;
    gcv_from(times.len(), &s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub t: f64,
    pub value: f64,
    pub l_norm: f64,
}

/// A gene's selected local fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneFit {
    pub probe_id: String,
    pub bandwidth: f64,
    pub gcv: f64,
    /// Observed times, one per biological replicate, ascending.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Sorted union of the evaluation grid and the distinct observed times.
    pub points: Vec<FitPoint>,
    pub hat_trace: f64,
    pub hat_trace2: f64,
    /// Residuals at `times`.
    pub residuals: Vec<f64>,
    /// Points of `points` where the local fit fell back to degree 1.
    pub fallback_times: Vec<f64>,
    /// `(fraction, gcv)` for every bandwidth tried; `None` marks a degenerate one.
    pub gcv_path: Vec<(f64, Option<f64>)>,
}

impl GeneFit {
    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn hat_at(&self, t: f64) -> Result<HatVector> {
        hat_vector(&self.times, t, self.bandwidth)
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.hat_at(t)?.apply(&self.values))
    }

    pub fn point(&self, t: f64) -> Option<&FitPoint> {
        self.points.iter().find(|p| same_time(p.t, t))
    }

    pub fn design_times(&self) -> Vec<f64> {
        distinct_times(self.times.iter().copied())
    }

    /// Number of observations at time `t`.
    pub fn replicates_at(&self, t: f64) -> usize {
        self.times.iter().filter(|&&x| same_time(x, t)).count()
    }
}

/// Fits `series` at a fixed bandwidth and evaluates on `eval_grid` and the
/// observed times.
pub fn fit_with_bandwidth(
    series: &ConsolidatedSeries,
    fraction: f64,
    eval_grid: &[f64],
) -> Result<GeneFit> {
    let times = series.times();
    let values = series.values();
    let summary = hat_summary(&times, &values, fraction)?;
    let gcv = gcv_from(times.len(), &summary).unwrap_or(f64::INFINITY);
    let mut at = eval_grid.to_vec();
    at.extend(series.distinct_times());
    let at = distinct_times(at);
    let mut points = Vec::with_capacity(at.len());
    let mut fallback_times = Vec::new();
    for t in at {
        let hat = hat_vector(&times, t, fraction)?;
        if hat.degree < 2 {
            fallback_times.push(t);
        }
        points.push(FitPoint {
            t,
            value: hat.apply(&values),
            l_norm: hat.norm(),
        });
    }
    let residuals = values
        .iter()
        .zip(&summary.fitted)
        .map(|(s, f)| s - f)
        .collect();
    Ok(GeneFit {
        probe_id: series.probe_id.clone(),
        bandwidth: fraction,
        gcv,
        times,
        values,
        points,
        hat_trace: summary.trace,
        hat_trace2: summary.trace2,
        residuals,
        fallback_times,
        gcv_path: vec![(fraction, Some(gcv))],
    })
}

/// Points of the dense grid used to check a bandwidth and to trace the tube.
pub const DENSE_GRID_POINTS: usize = 301;

/// `DENSE_GRID_POINTS` equispaced points over the observed time range.
pub fn dense_grid(times: &[f64]) -> Vec<f64> {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    linspace(lo, hi, DENSE_GRID_POINTS)
}

/// Whether the local fit exists at every point of the dense grid.
fn defined_on_dense_grid(times: &[f64], fraction: f64) -> bool {
    dense_grid(times)
        .into_iter()
        .all(|t| hat_vector(times, t, fraction).is_ok())
}

/// Picks the GCV-minimising bandwidth from `cfg.bandwidth_grid`; ties go to
/// the smallest fraction. A fraction is usable only when the local fit exists
/// on the evaluation points and across the whole observed range; unusable
/// fractions are recorded with a `None` score.
pub fn select_bandwidth(series: &ConsolidatedSeries, cfg: &LocalFitConfig) -> Result<GeneFit> {
    cfg.validate()?;
    let mean_sq = series.values().iter().map(|v| v * v).sum::<f64>() / series.len().max(1) as f64;
    let times = series.times();
    let mut path = Vec::with_capacity(cfg.bandwidth_grid.len());
    let mut candidates: Vec<Option<GeneFit>> = Vec::with_capacity(cfg.bandwidth_grid.len());
    for &fraction in &cfg.bandwidth_grid {
        match fit_with_bandwidth(series, fraction, &cfg.eval_grid) {
            Ok(f) if f.gcv.is_finite() => {
                path.push((fraction, Some(f.gcv)));
                candidates.push(Some(f));
            }
            _ => {
                path.push((fraction, None));
                candidates.push(None);
            }
        }
    }
    loop {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            let Some(fit) = c else { continue };
            let better = match best.and_then(|b| candidates[b].as_ref()) {
                None => true,
                Some(b) => {
                    let tol = 1e-12 * b.gcv + 1e-20 * (1.0 + mean_sq);
                    fit.gcv < b.gcv - tol
                }
            };
            if better {
                best = Some(i);
            }
        }
        let Some(i) = best else {
            return Err(LrsaError::DegenerateBandwidths {
                probe: series.probe_id.clone(),
                grid: cfg.bandwidth_grid.clone(),
            });
        };
        let fit = candidates[i].take().expect("candidate present");
        if defined_on_dense_grid(&times, fit.bandwidth) {
            let mut fit = fit;
            fit.gcv_path = path;
            return Ok(fit);
        }
        path[i].1 = None;
    }
}

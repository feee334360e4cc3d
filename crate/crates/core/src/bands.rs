//! Simultaneous confidence bands around a local fit.
//!
//! The band is `f(t) +/- c * sigma(t) * ||l(t)||`. The critical value `c`
//! solves the two-sided Gaussian tube formula
//!
//! ```text
//! (kappa0 / pi) * exp(-c^2 / 2) + 2 * (1 - Phi(c)) = alpha
//! ```
//!
//! where `kappa0` is the length of the curve traced by the normalised hat
//! vector `l(t)/||l(t)||` over the design range.

use serde::{Deserialize, Serialize};

use crate::error::{LrsaError, Result};
use crate::smoother::{dense_grid, nn_bandwidth, tricube_weights, GeneFit, HatVector, DENSE_GRID_POINTS};
use crate::stats::{normal_sf, same_time};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_TUBE_GRID_POINTS: usize = DENSE_GRID_POINTS;

const BISECTION_TOL: f64 = 1e-8;
const C_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    /// `(t, sigma(t))` on the fit's evaluation points.
    pub sigma_hat: Vec<(f64, f64)>,
    pub floor: f64,
}

impl VarianceProfile {
    pub fn at(&self, t: f64) -> Option<f64> {
        self.sigma_hat
            .iter()
            .find(|(x, _)| same_time(*x, t))
            .map(|&(_, s)| s)
    }

    /// Multiplies every sigma by `k` (floor untouched).
    pub fn scaled(&self, k: f64) -> Self {
        VarianceProfile {
            sigma_hat: self.sigma_hat.iter().map(|&(t, s)| (t, s * k)).collect(),
            floor: self.floor,
        }
    }
}

/// Kernel-weighted mean of squared residuals at each point of `at`, using the
/// same nearest-neighbour tricube window as the smoother.
///
/// When no observation falls strictly inside the window (replicated design
/// points with a very small fraction), the observations nearest to `t` are
/// averaged with equal weight.
pub fn smooth_squared_residuals(
    times: &[f64],
    residuals: &[f64],
    fraction: f64,
    at: &[f64],
) -> Vec<f64> {
    at.iter()
        .map(|&t| {
            let h = nn_bandwidth(times, t, fraction);
            let mut w = tricube_weights(times, t, h);
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                let dmin = times
                    .iter()
                    .map(|x| (x - t).abs())
                    .fold(f64::INFINITY, f64::min);
                w = times
                    .iter()
                    .map(|x| if ((x - t).abs() - dmin).abs() <= 1e-12 { 1.0 } else { 0.0 })
                    .collect();
            }
            let total: f64 = w.iter().sum();
            w.iter().zip(residuals).map(|(wi, r)| wi * r * r).sum::<f64>() / total
        })
        .collect()
}

/// Degrees-of-freedom correction `n / (n - 2 tr L + tr L'L)`.
pub fn df_correction(n: usize, trace: f64, trace2: f64) -> Result<f64> {
    let n = n as f64;
    let denom = n - 2.0 * trace + trace2;
    if denom <= 1e-10 * n {
        return Err(LrsaError::NoResidualDf);
    }
    Ok(n / denom)
}

/// Heteroscedastic noise estimate on the fit's evaluation points.
pub fn estimate_variance(fit: &GeneFit, floor: f64) -> Result<VarianceProfile> {
    if fit.residuals.len() < 2 {
        return Err(LrsaError::invalid("need at least two residuals"));
    }
    let k = df_correction(fit.n(), fit.hat_trace, fit.hat_trace2)?;
    let at: Vec<f64> = fit.points.iter().map(|p| p.t).collect();
    let s2 = smooth_squared_residuals(&fit.times, &fit.residuals, fit.bandwidth, &at);
    Ok(VarianceProfile {
        sigma_hat: at
            .into_iter()
            .zip(s2)
            .map(|(t, v)| (t, (v * k).sqrt().max(floor)))
            .collect(),
        floor,
    })
}

/// Polygonal length of the path traced by the unit vectors `v_i / ||v_i||`.
pub fn path_length(vectors: &[HatVector]) -> Result<f64> {
    let mut prev: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for v in vectors {
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(LrsaError::ZeroNormHat { t: v.t0 });
        }
        let unit: Vec<f64> = v.weights.iter().map(|x| x / norm).collect();
        if let Some(p) = &prev {
            total += p
                .iter()
                .zip(&unit)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        prev = Some(unit);
    }
    Ok(total)
}

/// Tube length of a fit along `grid`.
pub fn tube_length(fit: &GeneFit, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(LrsaError::invalid("tube grid needs at least two points"));
    }
    let hats = grid
        .iter()
        .map(|&t| fit.hat_at(t))
        .collect::<Result<Vec<_>>>()?;
    path_length(&hats)
}

/// Equispaced tube grid over the observed time range.
pub fn default_tube_grid(fit: &GeneFit) -> Vec<f64> {
    dense_grid(&fit.times)
}

fn tube_tail(kappa0: f64, c: f64) -> f64 {
    kappa0 / std::f64::consts::PI * (-0.5 * c * c).exp() + 2.0 * normal_sf(c)
}

/// Critical value `c` of the Gaussian tube formula, by bisection on `[0, 10]`.
pub fn critical_value(kappa0: f64, alpha: f64) -> Result<f64> {
    if !(kappa0 >= 0.0 && kappa0.is_finite()) {
        return Err(LrsaError::invalid(format!("kappa0 must be >= 0, got {kappa0}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LrsaError::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let bound = tube_tail(kappa0, 0.0);
    if alpha >= bound {
        return Err(LrsaError::AlphaTooLarge { alpha, bound });
    }
    let (mut lo, mut hi) = (0.0, C_MAX);
    if tube_tail(kappa0, hi) > alpha {
        return Ok(hi);
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if tube_tail(kappa0, mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bonferroni-type coverage level `1 - alpha/m`.
pub fn multiplicity_level(alpha: f64, m: usize) -> f64 {
    assert!(m >= 1, "m must be positive");
    1.0 - alpha / m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t: f64,
    pub fit: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(t: f64, fit: f64, half_width: f64) -> Self {
        Interval {
            t,
            fit,
            half_width,
            lower: fit - half_width,
            upper: fit + half_width,
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn disjoint(&self, other: &Interval) -> bool {
        self.upper < other.lower || other.upper < self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub level: f64,
    pub critical_value: f64,
    pub kappa0: f64,
    pub intervals: Vec<Interval>,
}

impl BandSet {
    pub fn at(&self, t: f64) -> Option<&Interval> {
        self.intervals.iter().find(|i| same_time(i.t, t))
    }

    /// `t,fit,lower,upper` rows for plotting.
    pub fn to_csv(&self) -> String {
        use crate::dataset::format_value as f;
        let mut s = String::from("t,fit,lower,upper\n");
        for i in &self.intervals {
            s.push_str(&format!("{},{},{},{}\n", f(i.t), f(i.fit), f(i.lower), f(i.upper)));
        }
        s
    }
}

/// Builds the band from an already computed critical value.
pub fn band_with_critical_value(
    fit: &GeneFit,
    var: &VarianceProfile,
    level: f64,
    kappa0: f64,
    c: f64,
) -> Result<BandSet> {
    let intervals = fit
        .points
        .iter()
        .map(|p| {
            let sigma = var.at(p.t).ok_or(LrsaError::BandMismatch { t: p.t })?;
            let hw = c * sigma * p.l_norm;
            Ok(Interval::new(p.t, p.value, hw))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandSet {
        level,
        critical_value: c,
        kappa0,
        intervals,
    })
}

/// Simultaneous band at coverage `level` on the fit's evaluation points.
pub fn simultaneous_band(fit: &GeneFit, var: &VarianceProfile, level: f64) -> Result<BandSet> {
    let kappa0 = tube_length(fit, &default_tube_grid(fit))?;
    let c = critical_value(kappa0, 1.0 - level)?;
    band_with_critical_value(fit, var, level, kappa0, c)
}

/// Widens a band for designs with single replicates away from the anchors:
/// every non-anchor point gets the widest anchor half-width.
pub fn widen_to_anchors(band: &BandSet, anchor_times: &[f64]) -> Result<BandSet> {
    let mut widest: f64 = 0.0;
    for &a in anchor_times {
        let iv = band.at(a).ok_or(LrsaError::BandMismatch { t: a })?;
        widest = widest.max(iv.half_width());
    }
    let intervals = band
        .intervals
        .iter()
        .map(|iv| {
            if anchor_times.iter().any(|&a| same_time(a, iv.t)) {
                *iv
            } else {
                Interval::new(iv.t, iv.fit, widest)
            }
        })
        .collect();
    Ok(BandSet {
        intervals,
        ..band.clone()
    })
}

/// Band for sparsely replicated designs; anchors need at least two replicates.
pub fn sparse_replicate_band(
    fit: &GeneFit,
    var: &VarianceProfile,
    level: f64,
    anchor_times: &[f64],
) -> Result<BandSet> {
    for &a in anchor_times {
        let r = fit.replicates_at(a);
        if r < 2 {
            return Err(LrsaError::SparseAnchor {
                time: a,
                replicates: r,
            });
        }
    }
    let band = simultaneous_band(fit, var, level)?;
    widen_to_anchors(&band, anchor_times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ConsolidatedSeries;
    use crate::smoother::{select_bandwidth, LocalFitConfig};
    use statrs::distribution::{ContinuousCDF, Normal};

    const DESIGN: [f64; 6] = [0.0, 1.0, 3.0, 7.0, 14.0, 30.0];

    fn toy_fit() -> GeneFit {
        let s = ConsolidatedSeries::from_pairs("g", &DESIGN, &[1.0, 2.0, 0.0, 1.0, 3.0, 2.0]);
        select_bandwidth(&s, &LocalFitConfig::default()).unwrap()
    }

    #[test]
    fn critical_value_without_tube_is_normal_quantile() {
        let oracle = Normal::standard().inverse_cdf(0.975);
        let c = critical_value(0.0, 0.05).unwrap();
        assert!((c - oracle).abs() < 1e-4, "{c} vs {oracle}");
    }

    #[test]
    fn critical_value_for_kappa_pi() {
        let c = critical_value(std::f64::consts::PI, 0.05).unwrap();
        // residual of the defining equation at the returned root
        assert!((tube_tail(std::f64::consts::PI, c) - 0.05).abs() < 1e-8);
        assert!((c - 2.55).abs() < 0.01);
        assert!(c > critical_value(0.0, 0.05).unwrap());
    }

    #[test]
    fn multiplicity_levels() {
        assert_eq!(multiplicity_level(0.05, 1), 0.95);
        assert!((multiplicity_level(0.05, 6) - 0.9916667).abs() < 5e-8);
        assert!((multiplicity_level(0.05, 10014) - 0.9999950).abs() < 5e-8);
    }

    #[test]
    fn zero_residuals_hit_the_floor() {
        let mut fit = toy_fit();
        fit.residuals = vec![0.0; fit.n()];
        let var = estimate_variance(&fit, DEFAULT_VARIANCE_FLOOR).unwrap();
        assert!(var.sigma_hat.iter().all(|&(_, s)| s == DEFAULT_VARIANCE_FLOOR));
        let band = simultaneous_band(&fit, &var, 0.95).unwrap();
        for (iv, p) in band.intervals.iter().zip(&fit.points) {
            let want = band.critical_value * DEFAULT_VARIANCE_FLOOR * p.l_norm;
            assert!((iv.half_width() - want).abs() < 1e-15);
            assert!(iv.lower < iv.upper);
        }
    }

    #[test]
    fn equal_residuals_give_flat_profile() {
        let mut fit = toy_fit();
        fit.residuals = vec![0.3; fit.n()];
        let var = estimate_variance(&fit, DEFAULT_VARIANCE_FLOOR).unwrap();
        let k = df_correction(fit.n(), fit.hat_trace, fit.hat_trace2).unwrap();
        let want = (0.09 * k).sqrt();
        for &(_, s) in &var.sigma_hat {
            assert!((s - want).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_sigma_doubles_half_width() {
        let fit = toy_fit();
        let var = estimate_variance(&fit, DEFAULT_VARIANCE_FLOOR).unwrap();
        let b1 = simultaneous_band(&fit, &var, 0.95).unwrap();
        let b2 = simultaneous_band(&fit, &var.scaled(2.0), 0.95).unwrap();
        for (x, y) in b1.intervals.iter().zip(&b2.intervals) {
            assert!((2.0 * x.half_width() - y.half_width()).abs() < 1e-12);
        }
    }

    #[test]
    fn widening_uses_widest_anchor() {
        let iv = |t: f64, hw: f64| Interval::new(t, 1.0, hw);
        let band = BandSet {
            level: 0.95,
            critical_value: 2.0,
            kappa0: 1.0,
            intervals: vec![iv(0.0, 0.4), iv(1.0, 0.1), iv(7.0, 2.0), iv(14.0, 0.7), iv(30.0, 0.2)],
        };
        let wide = widen_to_anchors(&band, &[0.0, 14.0]).unwrap();
        let hw: Vec<f64> = wide.intervals.iter().map(|i| i.half_width()).collect();
        assert_eq!(hw, vec![0.4, 0.7, 0.7, 0.7, 0.7]);

        let equal = BandSet {
            intervals: vec![iv(0.0, 0.5), iv(3.0, 0.1), iv(14.0, 0.5)],
            ..band
        };
        let wide = widen_to_anchors(&equal, &[0.0, 14.0]).unwrap();
        assert!(wide.intervals.iter().all(|i| i.half_width() == 0.5));
    }

    #[test]
    fn sparse_band_requires_replicated_anchors() {
        let fit = toy_fit();
        let var = estimate_variance(&fit, DEFAULT_VARIANCE_FLOOR).unwrap();
        let err = sparse_replicate_band(&fit, &var, 0.95, &[0.0, 14.0]).unwrap_err();
        assert!(matches!(err, LrsaError::SparseAnchor { .. }));
    }

    #[test]
    fn band_csv_has_four_columns() {
        let fit = toy_fit();
        let var = estimate_variance(&fit, DEFAULT_VARIANCE_FLOOR).unwrap();
        let csv = simultaneous_band(&fit, &var, 0.95).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,fit,lower,upper"));
        assert!(lines.all(|l| l.split(',').count() == 4));
    }

    #[test]
    fn zero_hat_vector_is_an_error() {
        let z = HatVector {
            t0: 2.0,
            weights: vec![0.0, 0.0],
            degree: 2,
        };
        assert!(matches!(path_length(&[z]), Err(LrsaError::ZeroNormHat { .. })));
    }
}

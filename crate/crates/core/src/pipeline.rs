//! End-to-end runs: merge, fit, band and call every probe of a matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{
    estimate_variance, multiplicity_level, simultaneous_band, sparse_replicate_band, BandSet,
    VarianceProfile, DEFAULT_VARIANCE_FLOOR,
};
use crate::baseline::{anova_fit, bh_adjust_results, AnovaResult};
use crate::dataset::{format_value, merge_technical_replicates, ConsolidatedSeries, ExperimentMatrix};
use crate::decaller::{call_de, CallSettings, Correction, DECall, DECallReport, SignificanceRule};
use crate::error::{LrsaError, Result};
use crate::smoother::{select_bandwidth, GeneFit, LocalFitConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallConfig {
    pub alpha: f64,
    pub fold_threshold: f64,
    pub correction: Correction,
    pub rule: SignificanceRule,
    pub sparse_band: bool,
    pub anchor_times: Vec<f64>,
    pub variance_floor: f64,
}

impl Default for CallConfig {
    fn default() -> Self {
        CallConfig {
            alpha: 0.05,
            fold_threshold: 2.0,
            correction: Correction::None,
            rule: SignificanceRule::Disjoint,
            sparse_band: false,
            anchor_times: crate::dataset::DEFAULT_ANCHOR_TIMES.to_vec(),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl CallConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(LrsaError::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.fold_threshold >= 1.0) {
            return Err(LrsaError::invalid(format!(
                "fold threshold must be >= 1, got {}",
                self.fold_threshold
            )));
        }
        if !(self.variance_floor >= 0.0) {
            return Err(LrsaError::invalid("variance floor must be >= 0"));
        }
        Ok(())
    }

    /// Band coverage after the multiplicity correction.
    pub fn band_level(&self, n_times: usize, n_genes: usize) -> f64 {
        multiplicity_level(self.alpha, self.correction.factor(n_times, n_genes))
    }
}

/// Selects a bandwidth for every series; output follows input order.
pub fn fit_all(series: &[ConsolidatedSeries], cfg: &LocalFitConfig) -> Result<Vec<GeneFit>> {
    cfg.validate()?;
    series
        .par_iter()
        .map(|s| select_bandwidth(s, cfg).map_err(|e| e.for_gene(&s.probe_id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneBand {
    pub variance: VarianceProfile,
    pub band: BandSet,
    pub call: DECall,
}

/// Variance, band and call for one fitted gene.
pub fn band_and_call(fit: &GeneFit, level: f64, cfg: &CallConfig) -> Result<GeneBand> {
    let run = || -> Result<GeneBand> {
        let variance = estimate_variance(fit, cfg.variance_floor)?;
        let band = if cfg.sparse_band {
            sparse_replicate_band(fit, &variance, level, &cfg.anchor_times)?
        } else {
            simultaneous_band(fit, &variance, level)?
        };
        let call = call_de(
            &fit.probe_id,
            &band,
            cfg.fold_threshold,
            &fit.design_times(),
            cfg.rule,
        )?;
        Ok(GeneBand {
            variance,
            band,
            call,
        })
    };
    run().map_err(|e| e.for_gene(&fit.probe_id))
}

#[derive(Debug, Clone)]
pub struct LrsaRun {
    pub fits: Vec<GeneFit>,
    pub bands: Vec<GeneBand>,
    pub report: DECallReport,
}

/// Calls every probe from existing fits.
pub fn call_fits(fits: Vec<GeneFit>, m: &ExperimentMatrix, cfg: &CallConfig) -> Result<LrsaRun> {
    cfg.validate()?;
    let n_times = m.design_times().len();
    let level = cfg.band_level(n_times, m.n_probes());
    let bands = fits
        .par_iter()
        .map(|f| band_and_call(f, level, cfg))
        .collect::<Result<Vec<_>>>()?;
    let calls = bands.iter().map(|b| b.call.clone()).collect();
    let settings = CallSettings {
        alpha: cfg.alpha,
        fold_threshold: cfg.fold_threshold,
        correction: cfg.correction,
        rule: cfg.rule,
        band_level: level,
        sparse_band: cfg.sparse_band,
        anchor_times: cfg.anchor_times.clone(),
    };
    let report = DECallReport::build(calls, &m.annotations, settings)?;
    Ok(LrsaRun {
        fits,
        bands,
        report,
    })
}

pub fn run_lrsa(m: &ExperimentMatrix, fit_cfg: &LocalFitConfig, cfg: &CallConfig) -> Result<LrsaRun> {
    let series = merge_technical_replicates(m)?;
    let fits = fit_all(&series, fit_cfg)?;
    call_fits(fits, m, cfg)
}

/// Per-gene F-tests with BH-adjusted p-values across all probes.
pub fn run_anova(m: &ExperimentMatrix) -> Result<Vec<AnovaResult>> {
    let series = merge_technical_replicates(m)?;
    let mut results = series
        .par_iter()
        .map(|s| anova_fit(s).map_err(|e| e.for_gene(&s.probe_id)))
        .collect::<Result<Vec<_>>>()?;
    bh_adjust_results(&mut results)?;
    Ok(results)
}

/// Long-format fit table: one row per gene and evaluation point.
pub fn fits_tsv(fits: &[GeneFit]) -> String {
    let mut s = String::from("probe_id\tbandwidth\tgcv\tt\tfit\tl_norm\n");
    for f in fits {
        for p in &f.points {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                f.probe_id,
                format_value(f.bandwidth),
                format_value(f.gcv),
                format_value(p.t),
                format_value(p.value),
                format_value(p.l_norm)
            ));
        }
    }
    s
}

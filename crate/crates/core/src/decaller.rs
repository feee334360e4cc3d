//! DE calls against the control time, the external-control FDR surrogate,
//! control enrichment and the accuracy/overlap metrics used to compare
//! methods.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bands::BandSet;
use crate::dataset::ProbeAnnotation;
use crate::error::{LrsaError, Result};
use crate::stats::{fisher_exact, round_sig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    None,
}

/// How the significance half of a DE call is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceRule {
    /// Bands at `t_k` and at the control time do not overlap.
    #[default]
    Disjoint,
    /// The band at `t_k` excludes the fitted control value.
    ExcludesControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DECall {
    pub probe_id: String,
    pub is_de: bool,
    pub trigger_time: Option<f64>,
    /// `f(trigger) - f(control)`, or the largest absolute change when not DE.
    pub log2_delta: f64,
    pub direction: Direction,
}

/// Calls a gene DE when some design time after the control has a band
/// separated from the control band and a fitted change of at least
/// `log2(fold_threshold)`. The first design time is the control.
pub fn call_de(
    probe_id: &str,
    band: &BandSet,
    fold_threshold: f64,
    design_times: &[f64],
    rule: SignificanceRule,
) -> Result<DECall> {
    if !(fold_threshold >= 1.0) {
        return Err(LrsaError::invalid(format!(
            "fold threshold must be >= 1, got {fold_threshold}"
        )));
    }
    let control_t = *design_times
        .first()
        .ok_or_else(|| LrsaError::invalid("no design times"))?;
    let control = band
        .at(control_t)
        .ok_or(LrsaError::BandMismatch { t: control_t })?;
    let min_delta = fold_threshold.log2();

    let mut best_any: f64 = 0.0;
    let mut trigger: Option<(f64, f64)> = None;
    for &t in &design_times[1..] {
        let iv = band.at(t).ok_or(LrsaError::BandMismatch { t })?;
        let delta = iv.fit - control.fit;
        if delta.abs() > best_any.abs() {
            best_any = delta;
        }
        let significant = match rule {
            SignificanceRule::Disjoint => iv.disjoint(control),
            SignificanceRule::ExcludesControl => !iv.contains(control.fit),
        };
        if significant && delta.abs() >= min_delta && delta != 0.0 {
            if trigger.is_none_or(|(_, d)| delta.abs() > d.abs()) {
                trigger = Some((t, delta));
            }
        }
    }
    Ok(match trigger {
        Some((t, delta)) => DECall {
            probe_id: probe_id.to_string(),
            is_de: true,
            trigger_time: Some(t),
            log2_delta: delta,
            direction: if delta > 0.0 { Direction::Up } else { Direction::Down },
        },
        None => DECall {
            probe_id: probe_id.to_string(),
            is_de: false,
            trigger_time: None,
            log2_delta: best_any,
            direction: Direction::None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrEc {
    pub fdr_ec: f64,
    pub n_ec_de: usize,
    pub n_total_de: usize,
    /// Set when nothing was called, in which case `fdr_ec` is 0 by convention.
    pub no_calls: bool,
}

fn role_map(annotations: &[ProbeAnnotation]) -> HashMap<&str, bool> {
    annotations
        .iter()
        .map(|a| (a.probe_id.as_str(), a.role.is_control()))
        .collect()
}

/// `FDR_EC = N_EC,DE / N_T,DE` from counts.
pub fn fdr_ec_from_counts(n_ec_de: usize, n_total_de: usize) -> FdrEc {
    FdrEc {
        fdr_ec: if n_total_de == 0 {
            0.0
        } else {
            n_ec_de as f64 / n_total_de as f64
        },
        n_ec_de,
        n_total_de,
        no_calls: n_total_de == 0,
    }
}

pub fn fdr_ec(calls: &[DECall], annotations: &[ProbeAnnotation]) -> Result<FdrEc> {
    let roles = role_map(annotations);
    let mut n_total = 0;
    let mut n_ec = 0;
    for c in calls.iter().filter(|c| c.is_de) {
        let is_control = *roles
            .get(c.probe_id.as_str())
            .ok_or_else(|| LrsaError::MissingAnnotation {
                probe: c.probe_id.clone(),
            })?;
        n_total += 1;
        if is_control {
            n_ec += 1;
        }
    }
    Ok(fdr_ec_from_counts(n_ec, n_total))
}

/// 2x2 table `[EC&DE, EC&notDE, target&DE, target&notDE]` over the annotated probes.
pub fn control_table(de: &HashSet<&str>, annotations: &[ProbeAnnotation]) -> [u64; 4] {
    let mut t = [0u64; 4];
    for a in annotations {
        let called = de.contains(a.probe_id.as_str());
        let idx = match (a.role.is_control(), called) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        t[idx] += 1;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enrichment {
    pub odds_ratio: f64,
    pub p_value: f64,
    pub table: [u64; 4],
}

/// Fisher's exact test of whether controls are called DE more often than targets.
pub fn control_enrichment(calls: &[DECall], annotations: &[ProbeAnnotation]) -> Result<Enrichment> {
    let de: HashSet<&str> = calls
        .iter()
        .filter(|c| c.is_de)
        .map(|c| c.probe_id.as_str())
        .collect();
    enrichment_for_set(&de, annotations)
}

pub fn enrichment_for_set(de: &HashSet<&str>, annotations: &[ProbeAnnotation]) -> Result<Enrichment> {
    let table = control_table(de, annotations);
    let r = fisher_exact(table[0], table[1], table[2], table[3])?;
    Ok(Enrichment {
        odds_ratio: r.odds_ratio,
        p_value: r.p_value,
        table,
    })
}

/// Percentage of known plus verified genes that were called.
pub fn prediction_accuracy(
    called: &HashSet<&str>,
    known_genes: &[String],
    verified_genes: &[String],
) -> Result<f64> {
    let known: HashSet<&str> = known_genes.iter().map(String::as_str).collect();
    if verified_genes.iter().any(|g| known.contains(g.as_str())) {
        return Err(LrsaError::invalid("known and verified gene lists overlap"));
    }
    let total = known_genes.len() + verified_genes.len();
    if total == 0 {
        return Err(LrsaError::invalid("no known or verified genes given"));
    }
    let hits = known_genes
        .iter()
        .chain(verified_genes)
        .filter(|g| called.contains(g.as_str()))
        .count();
    Ok(hits as f64 / total as f64 * 100.0)
}

/// Share (in percent) of `real` calls also present in `sim`; 0 when `real` is empty.
pub fn overlap_percent(real: &HashSet<&str>, sim: &HashSet<&str>) -> f64 {
    if real.is_empty() {
        return 0.0;
    }
    real.intersection(sim).count() as f64 / real.len() as f64 * 100.0
}

/// Display form of a Table-1 style statistic: one significant figure.
pub fn reported(x: f64) -> f64 {
    round_sig(x, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    TimePoints,
    Genes,
}

impl Correction {
    /// Number of tests `m` the band level is corrected for.
    pub fn factor(self, n_times: usize, n_genes: usize) -> usize {
        match self {
            Correction::None => 1,
            Correction::TimePoints => n_times,
            Correction::Genes => n_genes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSettings {
    pub alpha: f64,
    pub fold_threshold: f64,
    pub correction: Correction,
    pub rule: SignificanceRule,
    /// Coverage level the bands were computed at.
    pub band_level: f64,
    pub sparse_band: bool,
    pub anchor_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DECallReport {
    pub calls: Vec<DECall>,
    pub n_total_de: usize,
    pub n_ec_de: usize,
    pub fdr_ec: f64,
    pub no_calls: bool,
    pub odds_ratio: f64,
    pub fisher_p: f64,
    pub settings: CallSettings,
}

impl DECallReport {
    pub fn build(
        calls: Vec<DECall>,
        annotations: &[ProbeAnnotation],
        settings: CallSettings,
    ) -> Result<Self> {
        let f = fdr_ec(&calls, annotations)?;
        // Without both roles and both outcomes the table has an empty margin.
        let (odds_ratio, fisher_p) = match control_enrichment(&calls, annotations) {
            Ok(e) => (e.odds_ratio, e.p_value),
            Err(LrsaError::EmptyMargin { .. }) => (0.0, 1.0),
            Err(e) => return Err(e),
        };
        Ok(DECallReport {
            calls,
            n_total_de: f.n_total_de,
            n_ec_de: f.n_ec_de,
            fdr_ec: f.fdr_ec,
            no_calls: f.no_calls,
            odds_ratio,
            fisher_p,
            settings,
        })
    }

    pub fn de_ids(&self) -> HashSet<&str> {
        self.calls
            .iter()
            .filter(|c| c.is_de)
            .map(|c| c.probe_id.as_str())
            .collect()
    }

    /// Per-gene rows: `probe_id, is_de, trigger_time, log2_delta, direction`.
    pub fn calls_tsv(&self) -> String {
        use crate::dataset::format_value as f;
        let mut s = String::from("probe_id\tis_de\ttrigger_time\tlog2_delta\tdirection\n");
        for c in &self.calls {
            let dir = match c.direction {
                Direction::Up => "up",
                Direction::Down => "down",
                Direction::None => "none",
            };
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                c.probe_id,
                c.is_de,
                c.trigger_time.map(f).unwrap_or_else(|| "NA".into()),
                f(c.log2_delta),
                dir
            ));
        }
        s
    }
}

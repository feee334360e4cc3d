//! Subcommand implementations. Each one is a pure function of the resolved
//! config and its input files.

use std::collections::HashSet;
use std::path::Path;

use lrsa::baseline::{anova_tsv, is_anova_de, AnovaResult};
use lrsa::dataset::{format_value, write_experiment, write_text, ExperimentFiles, ExperimentMatrix};
use lrsa::decaller::{
    enrichment_for_set, fdr_ec_from_counts, overlap_percent, prediction_accuracy, reported,
    CallSettings,
};
use lrsa::pipeline::{band_and_call, fit_all, fits_tsv, run_anova, run_lrsa, LrsaRun};
use lrsa::simgen::generate;
use lrsa::spectral::{build_profiles, cluster_profiles};
use lrsa::LrsaError;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load(cfg: &RunConfig) -> Result<ExperimentMatrix, CliError> {
    Ok(ExperimentFiles::in_dir(cfg.input_dir()?).load()?)
}

fn read_gene_list(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// File-name-safe form of a probe id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let (m, truth) = generate(&cfg.simulation)?;
    write_experiment(&m, &ExperimentFiles::in_dir(out))?;
    write_text(&out.join("truth.json"), &truth.to_json())?;
    Ok(())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    n_genes: usize,
    /// `(fraction, genes)` for every grid entry.
    bandwidth_counts: Vec<(f64, usize)>,
    genes_with_fallback: usize,
    band_genes: &'a [String],
    config: &'a RunConfig,
}

pub fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let m = load(cfg)?;
    let series = lrsa::dataset::merge_technical_replicates(&m)?;
    let fits = fit_all(&series, &cfg.fit_config())?;
    write_text(&out.join("fits.tsv"), &fits_tsv(&fits))?;

    let call_cfg = cfg.call_config();
    let level = call_cfg.band_level(m.design_times().len(), m.n_probes());
    for gene in &cfg.band_genes {
        let f = fits
            .iter()
            .find(|f| &f.probe_id == gene)
            .ok_or_else(|| LrsaError::invalid(format!("band requested for unknown probe {gene}")))?;
        let b = band_and_call(f, level, &call_cfg)?;
        write_text(
            &out.join("bands").join(format!("{}.csv", file_stem(gene))),
            &b.band.to_csv(),
        )?;
    }

    let bandwidth_counts = cfg
        .bandwidth_grid
        .iter()
        .map(|&b| (b, fits.iter().filter(|f| f.bandwidth == b).count()))
        .collect();
    let summary = FitSummary {
        n_genes: fits.len(),
        bandwidth_counts,
        genes_with_fallback: fits.iter().filter(|f| !f.fallback_times.is_empty()).count(),
        band_genes: &cfg.band_genes,
        config: cfg,
    };
    write_text(&out.join("fit_summary.json"), &to_json(&summary))?;
    Ok(())
}

#[derive(Serialize)]
struct CallSummary<'a> {
    n_genes: usize,
    n_total_de: usize,
    n_ec_de: usize,
    fdr_ec: f64,
    fdr_ec_reported: f64,
    no_calls: bool,
    odds_ratio: f64,
    odds_ratio_reported: f64,
    fisher_p: f64,
    fisher_p_reported: f64,
    settings: &'a CallSettings,
    config: &'a RunConfig,
}

fn lrsa_run(cfg: &RunConfig, m: &ExperimentMatrix) -> Result<LrsaRun, CliError> {
    Ok(run_lrsa(m, &cfg.fit_config(), &cfg.call_config())?)
}

pub fn call(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let m = load(cfg)?;
    let run = lrsa_run(cfg, &m)?;
    let r = &run.report;
    write_text(&out.join("calls.tsv"), &r.calls_tsv())?;
    let summary = CallSummary {
        n_genes: r.calls.len(),
        n_total_de: r.n_total_de,
        n_ec_de: r.n_ec_de,
        fdr_ec: r.fdr_ec,
        fdr_ec_reported: reported(r.fdr_ec),
        no_calls: r.no_calls,
        odds_ratio: r.odds_ratio,
        odds_ratio_reported: reported(r.odds_ratio),
        fisher_p: r.fisher_p,
        fisher_p_reported: reported(r.fisher_p),
        settings: &r.settings,
        config: cfg,
    };
    write_text(&out.join("call_summary.json"), &to_json(&summary))?;
    Ok(())
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    k: usize,
    n_genes: usize,
    cluster_sizes: Vec<usize>,
    excluded_flat: &'a [String],
    eigenvalues: &'a [f64],
    eigengap: f64,
    kmeans_inertia: f64,
    config: &'a RunConfig,
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let m = load(cfg)?;
    let run = lrsa_run(cfg, &m)?;
    let de = run.report.de_ids();
    if cfg.cluster_k > de.len() {
        return Err(LrsaError::TooManyClusters {
            k: cfg.cluster_k,
            n: de.len(),
        }
        .into());
    }
    let (profiles, flat) = build_profiles(&run.fits, &de, &cfg.eval_grid())?;
    let result = cluster_profiles(&profiles, cfg.cluster_k, cfg.seed, cfg.kmeans_restarts)?;
    write_text(&out.join("clusters.tsv"), &result.labels_tsv())?;
    for c in 1..=result.k {
        write_text(
            &out.join("medians").join(format!("cluster_{c}.csv")),
            &result.median_csv(c),
        )?;
    }
    let summary = ClusterSummary {
        k: result.k,
        n_genes: result.ids.len(),
        cluster_sizes: (1..=result.k)
            .map(|c| result.labels.iter().filter(|&&l| l == c).count())
            .collect(),
        excluded_flat: &flat,
        eigenvalues: &result.eigenvalues,
        eigengap: result.eigengap,
        kmeans_inertia: result.kmeans_inertia,
        config: cfg,
    };
    write_text(&out.join("cluster_summary.json"), &to_json(&summary))?;
    Ok(())
}

/// Table-1 style row for one method.
#[derive(Debug, Clone, Serialize)]
struct MethodRow {
    method: String,
    n_de: usize,
    n_ec_de: usize,
    fdr_ec: f64,
    odds_ratio: f64,
    fisher_p: f64,
    /// Percent of this method's calls also called by LRSA.
    overlap_percent: f64,
    prediction_accuracy: Option<f64>,
}

fn method_row(
    method: &str,
    de: &HashSet<&str>,
    reference: &HashSet<&str>,
    m: &ExperimentMatrix,
    lists: Option<&(Vec<String>, Vec<String>)>,
) -> Result<MethodRow, CliError> {
    let n_ec_de = m
        .annotations
        .iter()
        .filter(|a| a.role.is_control() && de.contains(a.probe_id.as_str()))
        .count();
    let f = fdr_ec_from_counts(n_ec_de, de.len());
    let (odds_ratio, fisher_p) = match enrichment_for_set(de, &m.annotations) {
        Ok(e) => (e.odds_ratio, e.p_value),
        Err(LrsaError::EmptyMargin { .. }) => (0.0, 1.0),
        Err(e) => return Err(e.into()),
    };
    let prediction_accuracy = match lists {
        Some((known, verified)) => Some(prediction_accuracy(de, known, verified)?),
        None => None,
    };
    Ok(MethodRow {
        method: method.to_string(),
        n_de: de.len(),
        n_ec_de,
        fdr_ec: f.fdr_ec,
        odds_ratio,
        fisher_p,
        overlap_percent: overlap_percent(de, reference),
        prediction_accuracy,
    })
}

fn anova_de<'a>(results: &'a [AnovaResult], cfg: &RunConfig) -> HashSet<&'a str> {
    results
        .iter()
        .filter(|r| is_anova_de(r, cfg.alpha, cfg.fold_threshold, cfg.anova_adjust))
        .map(|r| r.probe_id.as_str())
        .collect()
}

#[derive(Serialize)]
struct AnovaSummary<'a> {
    n_genes: usize,
    adjusted: bool,
    #[serde(flatten)]
    row: MethodRow,
    config: &'a RunConfig,
}

pub fn anova(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let m = load(cfg)?;
    let results = run_anova(&m)?;
    write_text(
        &out.join("anova.tsv"),
        &anova_tsv(&results, cfg.alpha, cfg.fold_threshold, cfg.anova_adjust),
    )?;
    let de = anova_de(&results, cfg);
    let mut row = method_row("ANOVA", &de, &de, &m, None)?;
    row.overlap_percent = if de.is_empty() { 0.0 } else { 100.0 };
    let summary = AnovaSummary {
        n_genes: results.len(),
        adjusted: cfg.anova_adjust,
        row,
        config: cfg,
    };
    write_text(&out.join("anova_summary.json"), &to_json(&summary))?;
    Ok(())
}

#[derive(Serialize)]
struct CompareReport<'a> {
    rows: &'a [MethodRow],
    config: &'a RunConfig,
}

fn opt(x: Option<f64>) -> String {
    x.map(format_value).unwrap_or_else(|| "NA".into())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.output_dir()?;
    let m = load(cfg)?;
    let lists = match (&cfg.known_genes, &cfg.verified_genes) {
        (None, None) => None,
        (k, v) => Some((
            k.as_deref().map(read_gene_list).transpose()?.unwrap_or_default(),
            v.as_deref().map(read_gene_list).transpose()?.unwrap_or_default(),
        )),
    };
    let run = lrsa_run(cfg, &m)?;
    let anova_results = run_anova(&m)?;
    let lrsa_de = run.report.de_ids();
    let anova_set = anova_de(&anova_results, cfg);
    let rows = vec![
        method_row("LRSA", &lrsa_de, &lrsa_de, &m, lists.as_ref())?,
        method_row("ANOVA", &anova_set, &lrsa_de, &m, lists.as_ref())?,
    ];
    let mut tsv = String::from(
        "method\tn_de\tn_ec_de\tfdr_ec\todds_ratio\tfisher_p\toverlap_percent\tprediction_accuracy\n",
    );
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.method,
            r.n_de,
            r.n_ec_de,
            format_value(r.fdr_ec),
            format_value(r.odds_ratio),
            format_value(r.fisher_p),
            format_value(r.overlap_percent),
            opt(r.prediction_accuracy)
        ));
    }
    write_text(&out.join("compare.tsv"), &tsv)?;
    write_text(
        &out.join("compare.json"),
        &to_json(&CompareReport {
            rows: &rows,
            config: cfg,
        }),
    )?;
    Ok(())
}

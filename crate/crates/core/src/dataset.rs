//! Expression matrices, sample sheets and probe annotations.
//!
//! Three tab-separated files describe an experiment:
//!
//! * matrix: header `probe_id<TAB>array_1<TAB>...`, one row per probe, log2 values
//! * sample sheet: `array_id, time_days, biological_replicate, technical_replicate_index`
//! * annotation: `probe_id, role` with role one of `target`, `positive_control`,
//!   `negative_control`
//!
//! Technical replicates of one biological replicate are averaged before any
//! modelling; see [`merge_technical_replicates`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LrsaError, Result};
use crate::stats::same_time;

/// Anchor times kept fully replicated when subsampling.
pub const DEFAULT_ANCHOR_TIMES: [f64; 2] = [0.0, 14.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub array_id: String,
    pub time_days: f64,
    pub biological_replicate: String,
    pub technical_replicate_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeRole {
    Target,
    PositiveControl,
    NegativeControl,
}

impl ProbeRole {
    pub fn is_control(self) -> bool {
        !matches!(self, ProbeRole::Target)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeRole::Target => "target",
            ProbeRole::PositiveControl => "positive_control",
            ProbeRole::NegativeControl => "negative_control",
        }
    }
}

impl fmt::Display for ProbeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "target" => Ok(ProbeRole::Target),
            "positive_control" => Ok(ProbeRole::PositiveControl),
            "negative_control" => Ok(ProbeRole::NegativeControl),
            other => Err(format!("unknown probe role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeAnnotation {
    pub probe_id: String,
    pub role: ProbeRole,
}

/// Validated genes x arrays matrix of log2 intensities.
///
/// Rows follow `row_index`, columns follow `col_index`, which is always the
/// sample sheet order. `annotations[i]` describes row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    values: Vec<f64>,
    pub row_index: Vec<String>,
    pub col_index: Vec<String>,
    pub meta: Vec<SampleMeta>,
    pub annotations: Vec<ProbeAnnotation>,
}

impl ExperimentMatrix {
    /// Builds a matrix from row-major values, checking every invariant.
    pub fn new(
        values: Vec<f64>,
        row_index: Vec<String>,
        meta: Vec<SampleMeta>,
        annotations: Vec<ProbeAnnotation>,
    ) -> Result<Self> {
        let n_rows = row_index.len();
        let n_cols = meta.len();
        if values.len() != n_rows * n_cols {
            return Err(LrsaError::DimensionMismatch(format!(
                "{} values for {} probes x {} arrays",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        if annotations.len() != n_rows {
            return Err(LrsaError::DimensionMismatch(format!(
                "{} annotations for {} probes",
                annotations.len(),
                n_rows
            )));
        }
        check_unique(row_index.iter(), "probe_id")?;
        check_unique(meta.iter().map(|m| &m.array_id), "array_id")?;
        check_unique(
            meta.iter()
                .map(|m| format!("{}#{}", m.biological_replicate, m.technical_replicate_index)),
            "biological/technical replicate pair",
        )?;
        for (probe, ann) in row_index.iter().zip(&annotations) {
            if probe != &ann.probe_id {
                return Err(LrsaError::MissingAnnotation {
                    probe: probe.clone(),
                });
            }
        }
        for m in &meta {
            if !(m.time_days.is_finite() && m.time_days >= 0.0) {
                return Err(LrsaError::invalid(format!(
                    "array {} has invalid time {}",
                    m.array_id, m.time_days
                )));
            }
            if m.technical_replicate_index == 0 {
                return Err(LrsaError::invalid(format!(
                    "array {} has technical_replicate_index 0",
                    m.array_id
                )));
            }
        }
        // A biological replicate is one animal sampled at one time.
        let mut bio_time: HashMap<&str, f64> = HashMap::new();
        for m in &meta {
            if let Some(&t) = bio_time.get(m.biological_replicate.as_str()) {
                if !same_time(t, m.time_days) {
                    return Err(LrsaError::invalid(format!(
                        "biological replicate {} appears at times {} and {}",
                        m.biological_replicate, t, m.time_days
                    )));
                }
            } else {
                bio_time.insert(&m.biological_replicate, m.time_days);
            }
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(LrsaError::invalid(format!(
                    "non-finite value for probe {} on array {}",
                    row_index[i / n_cols],
                    meta[i % n_cols].array_id
                )));
            }
        }
        let col_index = meta.iter().map(|m| m.array_id.clone()).collect();
        Ok(ExperimentMatrix {
            values,
            row_index,
            col_index,
            meta,
            annotations,
        })
    }

    pub fn n_probes(&self) -> usize {
        self.row_index.len()
    }

    pub fn n_arrays(&self) -> usize {
        self.col_index.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_arrays();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_arrays() + col]
    }

    /// Distinct design times, ascending.
    pub fn design_times(&self) -> Vec<f64> {
        distinct_times(self.meta.iter().map(|m| m.time_days))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_probes() * cols.len());
        for i in 0..self.n_probes() {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        let meta = cols.iter().map(|&j| self.meta[j].clone()).collect();
        ExperimentMatrix::new(
            values,
            self.row_index.clone(),
            meta,
            self.annotations.clone(),
        )
    }

    /// Collapses technical replicates into one column per biological replicate.
    ///
    /// Columns appear in order of first appearance of each biological
    /// replicate; the merged column keeps the biological replicate name as its
    /// array id and technical index 1.
    pub fn merged(&self) -> Self {
        let groups = self.bio_groups();
        let mut values = Vec::with_capacity(self.n_probes() * groups.len());
        for i in 0..self.n_probes() {
            let row = self.row(i);
            for g in &groups {
                let xs: Vec<f64> = g.columns.iter().map(|&j| row[j]).collect();
                values.push(technical_mean(&xs));
            }
        }
        let meta = groups
            .iter()
            .map(|g| SampleMeta {
                array_id: g.name.clone(),
                time_days: g.time,
                biological_replicate: g.name.clone(),
                technical_replicate_index: 1,
            })
            .collect();
        ExperimentMatrix::new(
            values,
            self.row_index.clone(),
            meta,
            self.annotations.clone(),
        )
        .expect("merging preserves matrix invariants")
    }

    fn bio_groups(&self) -> Vec<BioGroup> {
        let mut groups: Vec<BioGroup> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (j, m) in self.meta.iter().enumerate() {
            match pos.get(m.biological_replicate.as_str()) {
                Some(&g) => groups[g].columns.push(j),
                None => {
                    pos.insert(&m.biological_replicate, groups.len());
                    groups.push(BioGroup {
                        name: m.biological_replicate.clone(),
                        time: m.time_days,
                        columns: vec![j],
                    });
                }
            }
        }
        groups
    }
}

struct BioGroup {
    name: String,
    time: f64,
    columns: Vec<usize>,
}

fn check_unique<I, S>(ids: I, kind: &'static str) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    for id in ids {
        let id = id.as_ref();
        if !seen.insert(id.to_string()) {
            return Err(LrsaError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

pub(crate) fn distinct_times(times: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut ts: Vec<f64> = times.into_iter().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| same_time(*a, *b));
    ts
}

/// Mean of technical replicate values.
///
/// Values are sorted first so the result does not depend on replicate order,
/// and accumulated as deviations from the minimum so identical inputs come
/// back unchanged.
fn technical_mean(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let base = v[0];
    let dev: f64 = v.iter().map(|x| x - base).sum();
    base + dev / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time_days: f64,
    pub value: f64,
    pub biological_replicate: String,
}

/// One probe's merged time series, one point per biological replicate,
/// sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedSeries {
    pub probe_id: String,
    pub points: Vec<SeriesPoint>,
}

impl ConsolidatedSeries {
    /// Builds a series from parallel time/value slices, naming replicates by position.
    pub fn from_pairs(probe_id: impl Into<String>, times: &[f64], values: &[f64]) -> Self {
        assert_eq!(times.len(), values.len());
        let mut points: Vec<SeriesPoint> = times
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (&t, &v))| SeriesPoint {
                time_days: t,
                value: v,
                biological_replicate: format!("r{i}"),
            })
            .collect();
        points.sort_by(|a, b| a.time_days.total_cmp(&b.time_days));
        ConsolidatedSeries {
            probe_id: probe_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.time_days).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn distinct_times(&self) -> Vec<f64> {
        distinct_times(self.points.iter().map(|p| p.time_days))
    }
}

/// Averages technical replicates and returns one series per probe, in row order.
pub fn merge_technical_replicates(m: &ExperimentMatrix) -> Result<Vec<ConsolidatedSeries>> {
    let merged = m.merged();
    if merged.design_times().len() < 2 {
        return Err(LrsaError::invalid(
            "design needs at least two distinct time points",
        ));
    }
    let mut order: Vec<usize> = (0..merged.n_arrays()).collect();
    order.sort_by(|&a, &b| merged.meta[a].time_days.total_cmp(&merged.meta[b].time_days));
    Ok((0..merged.n_probes())
        .map(|i| {
            let row = merged.row(i);
            ConsolidatedSeries {
                probe_id: merged.row_index[i].clone(),
                points: order
                    .iter()
                    .map(|&j| SeriesPoint {
                        time_days: merged.meta[j].time_days,
                        value: row[j],
                        biological_replicate: merged.meta[j].biological_replicate.clone(),
                    })
                    .collect(),
            }
        })
        .collect())
}

/// Reduces a design to one technical replicate per biological replicate and
/// one biological replicate per time, except at `anchor_times` where every
/// biological replicate is kept. Deterministic for a given seed.
pub fn subsample_for_simulation(
    m: &ExperimentMatrix,
    seed: u64,
    anchor_times: &[f64],
) -> Result<ExperimentMatrix> {
    let times = m.design_times();
    for &a in anchor_times {
        if !times.iter().any(|&t| same_time(t, a)) {
            return Err(LrsaError::MissingAnchor { time: a });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = m.bio_groups();
    let mut keep = Vec::new();
    for &t in &times {
        let at_time: Vec<&BioGroup> = groups.iter().filter(|g| same_time(g.time, t)).collect();
        let chosen: Vec<&BioGroup> = if anchor_times.iter().any(|&a| same_time(a, t)) {
            at_time
        } else {
            vec![*at_time.choose(&mut rng).expect("time has a replicate")]
        };
        for g in chosen {
            keep.push(*g.columns.choose(&mut rng).expect("group has a column"));
        }
    }
    keep.sort_unstable();
    m.select_columns(&keep)
}

// ---------------------------------------------------------------------------
// TSV input/output
// ---------------------------------------------------------------------------

fn tsv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| LrsaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

/// Reads all records as string rows with their 1-based line numbers.
fn read_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = tsv_reader(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LrsaError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push((line, rec.iter().map(|f| f.trim().to_string()).collect()));
    }
    if rows.is_empty() {
        return Err(LrsaError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "file is empty".into(),
        });
    }
    Ok(rows)
}

fn expect_header(path: &Path, line: usize, got: &[String], want: &[&str]) -> Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g != w) {
        return Err(LrsaError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected header {:?}, found {:?}", want, got),
        });
    }
    Ok(())
}

pub const SAMPLE_SHEET_HEADER: [&str; 4] = [
    "array_id",
    "time_days",
    "biological_replicate",
    "technical_replicate_index",
];
pub const ANNOTATION_HEADER: [&str; 2] = ["probe_id", "role"];

pub fn read_sample_sheet(path: &Path) -> Result<Vec<SampleMeta>> {
    let rows = read_rows(path)?;
    expect_header(path, rows[0].0, &rows[0].1, &SAMPLE_SHEET_HEADER)?;
    let parse_err = |line: usize, message: String| LrsaError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (line, row) in &rows[1..] {
        if row.len() != 4 {
            return Err(parse_err(*line, format!("expected 4 fields, found {}", row.len())));
        }
        let time_days: f64 = row[1]
            .parse()
            .map_err(|_| parse_err(*line, format!("time_days {:?} is not a number", row[1])))?;
        let technical_replicate_index: u32 = row[3].parse().map_err(|_| {
            parse_err(
                *line,
                format!("technical_replicate_index {:?} is not a positive integer", row[3]),
            )
        })?;
        out.push(SampleMeta {
            array_id: row[0].clone(),
            time_days,
            biological_replicate: row[2].clone(),
            technical_replicate_index,
        });
    }
    check_unique(out.iter().map(|m| &m.array_id), "array_id")?;
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<ProbeAnnotation>> {
    let rows = read_rows(path)?;
    expect_header(path, rows[0].0, &rows[0].1, &ANNOTATION_HEADER)?;
    let mut out = Vec::new();
    for (line, row) in &rows[1..] {
        if row.len() != 2 {
            return Err(LrsaError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let role = row[1].parse().map_err(|message| LrsaError::Parse {
            path: path.to_path_buf(),
            line: *line,
            message,
        })?;
        out.push(ProbeAnnotation {
            probe_id: row[0].clone(),
            role,
        });
    }
    check_unique(out.iter().map(|a| &a.probe_id), "probe_id")?;
    Ok(out)
}

/// Loads and validates the matrix / sample sheet / annotation triplet.
/// Matrix columns are reordered to sample sheet order.
pub fn load_experiment(
    matrix_path: &Path,
    samplesheet_path: &Path,
    annotation_path: &Path,
) -> Result<ExperimentMatrix> {
    let meta = read_sample_sheet(samplesheet_path)?;
    let annotations = read_annotations(annotation_path)?;
    let rows = read_rows(matrix_path)?;
    let path = matrix_path.to_path_buf();

    let (hline, header) = &rows[0];
    if header.first().map(String::as_str) != Some("probe_id") {
        return Err(LrsaError::Parse {
            path,
            line: *hline,
            message: "first header field must be probe_id".into(),
        });
    }
    let arrays = &header[1..];
    check_unique(arrays.iter(), "array_id")?;
    if arrays.len() != meta.len() {
        return Err(LrsaError::DimensionMismatch(format!(
            "matrix has {} arrays, sample sheet has {}",
            arrays.len(),
            meta.len()
        )));
    }
    let sheet_pos: HashMap<&str, usize> = meta
        .iter()
        .enumerate()
        .map(|(i, m)| (m.array_id.as_str(), i))
        .collect();
    // matrix column j goes to sheet position col_map[j]
    let mut col_map = Vec::with_capacity(arrays.len());
    for a in arrays {
        match sheet_pos.get(a.as_str()) {
            Some(&p) => col_map.push(p),
            None => return Err(LrsaError::UnknownArray { array: a.clone() }),
        }
    }

    let ann_by_id: HashMap<&str, &ProbeAnnotation> = annotations
        .iter()
        .map(|a| (a.probe_id.as_str(), a))
        .collect();

    let n_cols = meta.len();
    let mut values = Vec::with_capacity((rows.len() - 1) * n_cols);
    let mut row_index = Vec::with_capacity(rows.len() - 1);
    let mut row_ann = Vec::with_capacity(rows.len() - 1);
    for (line, row) in &rows[1..] {
        if row.len() != n_cols + 1 {
            return Err(LrsaError::DimensionMismatch(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                line,
                n_cols + 1,
                row.len()
            )));
        }
        let probe = &row[0];
        let mut buf = vec![0.0; n_cols];
        for (j, cell) in row[1..].iter().enumerate() {
            let array = &arrays[j];
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                return Err(LrsaError::MissingValue {
                    path,
                    line: *line,
                    probe: probe.clone(),
                    array: array.clone(),
                });
            }
            let v: f64 = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(LrsaError::NonNumeric {
                        path,
                        line: *line,
                        probe: probe.clone(),
                        array: array.clone(),
                        value: cell.clone(),
                    })
                }
            };
            buf[col_map[j]] = v;
        }
        let ann = ann_by_id
            .get(probe.as_str())
            .ok_or_else(|| LrsaError::MissingAnnotation {
                probe: probe.clone(),
            })?;
        values.extend(buf);
        row_index.push(probe.clone());
        row_ann.push((*ann).clone());
    }
    ExperimentMatrix::new(values, row_index, meta, row_ann)
}

/// Formats a value with 6 significant digits, in plain decimal notation.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| LrsaError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let f = std::fs::File::create(path).map_err(|source| LrsaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| LrsaError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Paths of the three files describing one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentFiles {
    pub matrix: PathBuf,
    pub samplesheet: PathBuf,
    pub annotation: PathBuf,
}

impl ExperimentFiles {
    /// Conventional names inside a directory.
    pub fn in_dir(dir: &Path) -> Self {
        ExperimentFiles {
            matrix: dir.join("matrix.tsv"),
            samplesheet: dir.join("samples.tsv"),
            annotation: dir.join("annotation.tsv"),
        }
    }

    pub fn load(&self) -> Result<ExperimentMatrix> {
        load_experiment(&self.matrix, &self.samplesheet, &self.annotation)
    }
}

pub fn matrix_tsv(m: &ExperimentMatrix) -> String {
    let mut s = String::from("probe_id");
    for a in &m.col_index {
        s.push('\t');
        s.push_str(a);
    }
    s.push('\n');
    for i in 0..m.n_probes() {
        s.push_str(&m.row_index[i]);
        for &v in m.row(i) {
            s.push('\t');
            s.push_str(&format_value(v));
        }
        s.push('\n');
    }
    s
}

pub fn sample_sheet_tsv(meta: &[SampleMeta]) -> String {
    let mut s = SAMPLE_SHEET_HEADER.join("\t");
    s.push('\n');
    for m in meta {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.array_id,
            format_value(m.time_days),
            m.biological_replicate,
            m.technical_replicate_index
        ));
    }
    s
}

pub fn annotation_tsv(ann: &[ProbeAnnotation]) -> String {
    let mut s = ANNOTATION_HEADER.join("\t");
    s.push('\n');
    for a in ann {
        s.push_str(&format!("{}\t{}\n", a.probe_id, a.role));
    }
    s
}

pub fn write_experiment(m: &ExperimentMatrix, files: &ExperimentFiles) -> Result<()> {
    write_text(&files.matrix, &matrix_tsv(m))?;
    write_text(&files.samplesheet, &sample_sheet_tsv(&m.meta))?;
    write_text(&files.annotation, &annotation_tsv(&m.annotations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(id: &str, t: f64, bio: &str, tech: u32) -> SampleMeta {
        SampleMeta {
            array_id: id.into(),
            time_days: t,
            biological_replicate: bio.into(),
            technical_replicate_index: tech,
        }
    }

    fn targets(ids: &[&str]) -> Vec<ProbeAnnotation> {
        ids.iter()
            .map(|p| ProbeAnnotation {
                probe_id: p.to_string(),
                role: ProbeRole::Target,
            })
            .collect()
    }

    #[test]
    fn merge_averages_technical_replicates() {
        let m = ExperimentMatrix::new(
            vec![3.0, 5.0, 7.0, 1.0],
            vec!["p1".into()],
            vec![
                meta("a1", 0.0, "b1", 1),
                meta("a2", 0.0, "b1", 2),
                meta("a3", 1.0, "b2", 1),
                meta("a4", 2.0, "b3", 1),
            ],
            targets(&["p1"]),
        )
        .unwrap();
        let s = merge_technical_replicates(&m).unwrap();
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[0].points[0].value, 4.0);
        assert_eq!(s[0].points[1].value, 7.0);
    }

    #[test]
    fn bio_replicate_at_two_times_is_rejected() {
        let r = ExperimentMatrix::new(
            vec![1.0, 2.0],
            vec!["p".into()],
            vec![meta("a1", 0.0, "b1", 1), meta("a2", 1.0, "b1", 2)],
            targets(&["p"]),
        );
        assert!(r.is_err());
    }

    #[test]
    fn format_keeps_six_significant_digits() {
        assert_eq!(format_value(8.123456789), "8.12346");
        assert_eq!(format_value(12.0), "12");
        assert_eq!(format_value(0.00123456789), "0.00123457");
        assert_eq!(format_value(-0.0), "0");
    }

    #[test]
    fn subsample_rejects_missing_anchor() {
        let m = ExperimentMatrix::new(
            vec![1.0, 2.0],
            vec!["p".into()],
            vec![meta("a1", 0.0, "b1", 1), meta("a2", 1.0, "b2", 1)],
            targets(&["p"]),
        )
        .unwrap();
        assert!(matches!(
            subsample_for_simulation(&m, 1, &[0.0, 14.0]),
            Err(LrsaError::MissingAnchor { .. })
        ));
    }

    proptest! {
        #[test]
        fn technical_mean_is_permutation_invariant(
            mut xs in prop::collection::vec(-20.0f64..20.0, 1..8),
            seed in any::<u64>(),
        ) {
            let a = technical_mean(&xs);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            xs.shuffle(&mut rng);
            prop_assert_eq!(a.to_bits(), technical_mean(&xs).to_bits());
        }

        #[test]
        fn technical_mean_of_identical_values_is_exact(v in -1e6f64..1e6, m in 1usize..9) {
            prop_assert_eq!(technical_mean(&vec![v; m]), v);
        }
    }
}

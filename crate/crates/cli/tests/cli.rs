//! End-to-end runs of the `lrsa` binary on small inputs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const DESIGN: [f64; 6] = [0.0, 1.0, 3.0, 7.0, 14.0, 30.0];

fn lrsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrsa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lrsa(args);
    assert!(
        out.status.success(),
        "lrsa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Every value is exactly representable in six significant digits.
fn quadratic(t: f64) -> f64 {
    2.0 + t + 0.25 * t * t
}

/// Two biological replicates per design time; `q1` follows the quadratic,
/// the rest are flat.
fn write_toy(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut samples = String::from("array_id\ttime_days\tbiological_replicate\ttechnical_replicate_index\n");
    let mut arrays = Vec::new();
    for (i, t) in DESIGN.iter().enumerate() {
        for b in 0..2 {
            let id = format!("a{i}_{b}");
            samples.push_str(&format!("{id}\t{t}\tt{i}b{b}\t1\n"));
            arrays.push((id, *t));
        }
    }
    let probes = [("q1", "target"), ("f1", "target"), ("f2", "target"), ("c1", "positive_control")];
    let mut matrix = String::from("probe_id");
    for (id, _) in &arrays {
        matrix.push_str(&format!("\t{id}"));
    }
    matrix.push('\n');
    for (k, (probe, _)) in probes.iter().enumerate() {
        matrix.push_str(probe);
        for (j, (_, t)) in arrays.iter().enumerate() {
            let v = if *probe == "q1" {
                quadratic(*t)
            } else {
                8.0 + k as f64 + if j % 2 == 0 { 0.01 } else { -0.01 }
            };
            matrix.push_str(&format!("\t{v}"));
        }
        matrix.push('\n');
    }
    let mut ann = String::from("probe_id\trole\n");
    for (probe, role) in probes {
        ann.push_str(&format!("{probe}\t{role}\n"));
    }
    std::fs::write(dir.join("samples.tsv"), samples).unwrap();
    std::fs::write(dir.join("matrix.tsv"), matrix).unwrap();
    std::fs::write(dir.join("annotation.tsv"), ann).unwrap();
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["simulate", "--out", p(&data)];
    args.extend(extra);
    ok(&args);
    data
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schema")
}

fn assert_schema(doc: &Value, schema_file: &str) {
    let schema: Value = serde_json::from_str(&read(&schema_dir().join(schema_file))).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:#?}");
}

#[test]
fn noiseless_quadratic_fit_file_equals_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    write_toy(&data);
    let out = dir.path().join("fit");
    ok(&["fit", "--input", p(&data), "--out", p(&out), "--genes", "q1"]);

    let fits = read(&out.join("fits.tsv"));
    let mut lines = fits.lines();
    assert_eq!(lines.next(), Some("probe_id\tbandwidth\tgcv\tt\tfit\tl_norm"));
    let mut rows = 0;
    for line in lines.filter(|l| l.starts_with("q1\t")) {
        let f: Vec<&str> = line.split('\t').collect();
        let t: f64 = f[3].parse().unwrap();
        let v: f64 = f[4].parse().unwrap();
        assert!((v - quadratic(t)).abs() < 1e-9, "t={t}: {v} vs {}", quadratic(t));
        rows += 1;
    }
    assert_eq!(rows, 31);

    let band = read(&out.join("bands").join("q1.csv"));
    let mut lines = band.lines();
    assert_eq!(lines.next(), Some("t,fit,lower,upper"));
    let body: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(body.len(), 31);
    for r in &body {
        assert_eq!(r.len(), 4);
        // noiseless, so the band collapses below the printed precision
        assert!(r[2] <= r[1] && r[1] <= r[3] && r[3] - r[2] < 1e-3, "{r:?}");
    }
}

#[test]
fn fit_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    write_toy(&data);
    let out = dir.path().join("fit");
    ok(&["fit", "--input", p(&data), "--out", p(&out), "--genes", "q1,c1"]);
    let first = (read(&out.join("fits.tsv")), read(&out.join("fit_summary.json")));
    ok(&["--threads", "3", "fit", "--input", p(&data), "--out", p(&out), "--genes", "q1,c1"]);
    assert_eq!(first, (read(&out.join("fits.tsv")), read(&out.join("fit_summary.json"))));
}

#[test]
fn summaries_match_shipped_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &["--n-targets", "200", "--n-controls", "20", "--amplitude", "1.5"]);
    let known = dir.path().join("known.txt");
    std::fs::write(&known, "tgt_00001\ntgt_00002\n").unwrap();
    for cmd in ["fit", "call", "cluster", "anova", "compare"] {
        let out = dir.path().join(cmd);
        ok(&[
            cmd, "--input", p(&data), "--out", p(&out), "--cluster-k", "3", "--genes", "tgt_00003",
            "--known-genes", p(&known),
        ]);
    }
    let docs = [
        ("fit/fit_summary.json", "fit_summary.schema.json"),
        ("call/call_summary.json", "call_summary.schema.json"),
        ("cluster/cluster_summary.json", "cluster_summary.schema.json"),
        ("anova/anova_summary.json", "anova_summary.schema.json"),
        ("compare/compare.json", "compare.schema.json"),
    ];
    for (file, schema) in docs {
        let doc = json(&dir.path().join(file));
        assert_schema(&doc, schema);
        assert_schema(&doc["config"], "run_config.schema.json");
    }
}

#[test]
fn null_run_reports_fdr_ec() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &["--n-targets", "300", "--n-controls", "30", "--de-fraction", "0"]);
    let out = dir.path().join("call");
    ok(&["call", "--input", p(&data), "--out", p(&out)]);
    let s = json(&out.join("call_summary.json"));
    let total = s["n_total_de"].as_u64().unwrap();
    assert!(total <= 15, "{total} calls on a null experiment");
    assert!(s["fdr_ec"].as_f64().unwrap() >= 0.0);
    assert_eq!(s["no_calls"].as_bool().unwrap(), total == 0);
    assert_eq!(read(&out.join("calls.tsv")).lines().count(), 331);
}

#[test]
fn correction_levels_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), &["--n-targets", "9614", "--n-controls", "400"]);
    let level = |correction: &str| {
        let out = dir.path().join(correction);
        ok(&["call", "--input", p(&data), "--out", p(&out), "--correction", correction]);
        let s = json(&out.join("call_summary.json"));
        assert_eq!(s["n_genes"], 10014);
        s["settings"]["band_level"].as_f64().unwrap()
    };
    assert!((level("none") - 0.95).abs() < 1e-12);
    assert!((level("time-points") - 0.9916667).abs() < 5e-8);
    assert!((level("genes") - 0.9999950).abs() < 5e-8);
}

fn planted_two_families(dir: &Path) -> PathBuf {
    let cfg = dir.join("two.toml");
    std::fs::write(
        &cfg,
        "[simulation]
n_targets = 60
n_controls = 6
de_fraction = 0.5
noise_sd = 0.0
peak_log2_amplitude = 2.0
canonical_shapes = true
pattern_mix = { single_peak = 1.0, monotone = 1.0, cyclic = 0.0 }
",
    )
    .unwrap();
    let data = dir.join("data");
    ok(&["--config", p(&cfg), "simulate", "--out", p(&data)]);
    data
}

fn ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let sj: f64 = joint.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    (sj - expected) / ((sa + sb) / 2.0 - expected)
}

#[test]
fn cluster_separates_planted_families_and_writes_medians() {
    let dir = tempfile::tempdir().unwrap();
    let data = planted_two_families(dir.path());
    let out = dir.path().join("cluster");
    ok(&["cluster", "--input", p(&data), "--out", p(&out), "--cluster-k", "2"]);

    let truth = json(&data.join("truth.json"));
    let de: HashSet<&str> = truth["de_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let labels: BTreeMap<String, usize> = read(&out.join("clusters.tsv"))
        .lines()
        .skip(1)
        .map(|l| {
            let (g, c) = l.split_once('\t').unwrap();
            (g.to_string(), c.parse().unwrap())
        })
        .collect();
    let got: HashSet<&str> = labels.keys().map(String::as_str).collect();
    assert_eq!(got, de);
    let family = |g: &str| match truth["pattern_of"][g].as_str().unwrap() {
        "single_peak" => 0,
        _ => 1,
    };
    let (a, b): (Vec<usize>, Vec<usize>) = labels.iter().map(|(g, &c)| (c, family(g))).unzip();
    assert_eq!(ari(&a, &b), 1.0);

    for c in 1..=2 {
        let csv = read(&out.join("medians").join(format!("cluster_{c}.csv")));
        assert_eq!(csv.lines().next(), Some("t,median"));
        assert_eq!(csv.lines().count(), 1 + 31);
    }
}

#[test]
fn too_many_clusters_names_both_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = planted_two_families(dir.path());
    let out = lrsa(&["cluster", "--input", p(&data), "--out", p(&dir.path().join("c")), "--cluster-k", "500"]);
    assert_eq!(out.status.code(), Some(6));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error[cluster]") && err.contains("500") && err.contains("(30)"), "{err}");
}

#[test]
fn compare_rows_and_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data = planted_two_families(dir.path());
    let truth = json(&data.join("truth.json"));
    let mut de: Vec<&str> = truth["de_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    de.sort();
    // 4 known + 6 verified; two of the verified are never called
    let known = dir.path().join("known.txt");
    let verified = dir.path().join("verified.txt");
    std::fs::write(&known, de[..4].join("\n")).unwrap();
    std::fs::write(&verified, format!("{}\nec_0000\nec_0001\n", de[4..8].join("\n"))).unwrap();
    let out = dir.path().join("cmp");
    let args = [
        "compare", "--input", p(&data), "--out", p(&out), "--known-genes", p(&known),
        "--verified-genes", p(&verified),
    ];
    ok(&args);
    let report = json(&out.join("compare.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0]["method"].as_str(), rows[1]["method"].as_str()), (Some("LRSA"), Some("ANOVA")));
    assert_eq!(rows[0]["n_de"], 30);
    assert_eq!(rows[0]["overlap_percent"], 100.0);
    assert_eq!(rows[0]["prediction_accuracy"], 80.0);
    let tsv = read(&out.join("compare.tsv"));
    assert_eq!(tsv.lines().count(), 3);
    assert!(tsv.lines().skip(1).all(|l| l.split('\t').count() == 8 && !l.contains("\t\t")));

    let first = read(&out.join("compare.tsv"));
    ok(&args);
    assert_eq!(first, read(&out.join("compare.tsv")));
}

#[test]
fn errors_are_categorised() {
    let dir = tempfile::tempdir().unwrap();
    let missing = lrsa(&["fit", "--input", p(&dir.path().join("nope")), "--out", p(dir.path())]);
    assert_eq!(missing.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[io]"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "alpha = 0.05\nfold = 2\n").unwrap();
    let bad = lrsa(&["--config", p(&cfg), "fit"]);
    assert_eq!(bad.status.code(), Some(4));

    let no_out = lrsa(&["simulate"]);
    assert_eq!(no_out.status.code(), Some(2));

    let data = dir.path().join("toy");
    write_toy(&data);
    std::fs::write(data.join("annotation.tsv"), "probe_id\trole\nq1\ttarget\n").unwrap();
    let unannotated = lrsa(&["fit", "--input", p(&data), "--out", p(&dir.path().join("o"))]);
    assert_eq!(unannotated.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&unannotated.stderr).contains("f1"));
}

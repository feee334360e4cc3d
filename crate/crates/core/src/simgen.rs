//! Synthetic time-course experiments with planted DE genes, null targets and
//! null external controls.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ExperimentMatrix, ProbeAnnotation, ProbeRole, SampleMeta};
use crate::error::{LrsaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    SinglePeak,
    Monotone,
    Cyclic,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::SinglePeak, Pattern::Monotone, Pattern::Cyclic];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSd {
    Constant(f64),
    PerTime(Vec<f64>),
}

impl NoiseSd {
    pub fn at(&self, time_index: usize) -> f64 {
        match self {
            NoiseSd::Constant(s) => *s,
            NoiseSd::PerTime(v) => v[time_index],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMix {
    pub single_peak: f64,
    pub monotone: f64,
    pub cyclic: f64,
}

impl Default for PatternMix {
    fn default() -> Self {
        PatternMix {
            single_peak: 1.0,
            monotone: 1.0,
            cyclic: 1.0,
        }
    }
}

impl PatternMix {
    fn weights(&self) -> [f64; 3] {
        [self.single_peak, self.monotone, self.cyclic]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub n_targets: usize,
    pub n_controls: usize,
    pub de_fraction: f64,
    pub design_times: Vec<f64>,
    /// Biological replicates at each design time.
    pub replicates_per_time: Vec<u32>,
    /// Technical replicates of every biological replicate, per time; one each when absent.
    pub technical_replicates: Option<Vec<Vec<u32>>>,
    /// Biological (between-animal) noise sd.
    pub noise_sd: NoiseSd,
    /// Extra noise on each technical replicate.
    pub technical_sd: f64,
    pub pattern_mix: PatternMix,
    pub peak_log2_amplitude: f64,
    /// Gene baselines are drawn uniformly from this range.
    pub baseline_range: (f64, f64),
    /// Use one fixed, positive shape per pattern instead of random centres and signs.
    pub canonical_shapes: bool,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        let design = Table1sDesign::new();
        SimSpec {
            n_targets: 2000,
            n_controls: 200,
            de_fraction: 0.1,
            design_times: design.times.clone(),
            replicates_per_time: design.biological.clone(),
            technical_replicates: None,
            noise_sd: NoiseSd::Constant(0.3),
            technical_sd: 0.0,
            pattern_mix: PatternMix::default(),
            peak_log2_amplitude: 1.0,
            baseline_range: (6.0, 12.0),
            canonical_shapes: false,
            seed: 1,
        }
    }
}

/// The six-time design with its biological and technical replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1sDesign {
    pub times: Vec<f64>,
    pub biological: Vec<u32>,
    pub technical: Vec<Vec<u32>>,
}

impl Table1sDesign {
    pub fn new() -> Self {
        Table1sDesign {
            times: vec![0.0, 1.0, 3.0, 7.0, 14.0, 30.0],
            biological: vec![3, 3, 2, 3, 3, 1],
            technical: vec![
                vec![5, 4, 5],
                vec![1, 1, 1],
                vec![1, 1],
                vec![1, 1, 2],
                vec![1, 3, 1],
                vec![2],
            ],
        }
    }
}

impl Default for Table1sDesign {
    fn default() -> Self {
        Self::new()
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let nt = self.design_times.len();
        if nt < 2 {
            return Err(LrsaError::invalid("simulation needs at least two design times"));
        }
        if self.design_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LrsaError::invalid("design times must be strictly increasing"));
        }
        if self.replicates_per_time.len() != nt {
            return Err(LrsaError::DimensionMismatch(format!(
                "{} replicate counts for {} design times",
                self.replicates_per_time.len(),
                nt
            )));
        }
        if self.replicates_per_time.contains(&0) {
            return Err(LrsaError::invalid("every design time needs a replicate"));
        }
        if let Some(tech) = &self.technical_replicates {
            if tech.len() != nt
                || tech
                    .iter()
                    .zip(&self.replicates_per_time)
                    .any(|(t, &b)| t.len() != b as usize || t.contains(&0))
            {
                return Err(LrsaError::DimensionMismatch(
                    "technical replicate counts do not match the biological design".into(),
                ));
            }
        }
        match &self.noise_sd {
            NoiseSd::Constant(s) if !(s.is_finite() && *s >= 0.0) => {
                return Err(LrsaError::invalid(format!("noise sd {s} must be finite and >= 0")));
            }
            NoiseSd::PerTime(v) if v.len() != nt => {
                return Err(LrsaError::DimensionMismatch(format!(
                    "{} noise sds for {} design times",
                    v.len(),
                    nt
                )));
            }
            NoiseSd::PerTime(v) if v.iter().any(|s| !(s.is_finite() && *s >= 0.0)) => {
                return Err(LrsaError::invalid("noise sds must be finite and >= 0"));
            }
            _ => {}
        }
        if !(self.technical_sd.is_finite() && self.technical_sd >= 0.0) {
            return Err(LrsaError::invalid("technical sd must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.de_fraction) {
            return Err(LrsaError::invalid("de_fraction must lie in [0, 1]"));
        }
        if !(self.peak_log2_amplitude.is_finite() && self.peak_log2_amplitude >= 0.0) {
            return Err(LrsaError::invalid("peak amplitude must be finite and >= 0"));
        }
        let w = self.pattern_mix.weights();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(LrsaError::invalid("pattern weights must be >= 0 with a positive sum"));
        }
        let (lo, hi) = self.baseline_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(LrsaError::invalid("invalid baseline range"));
        }
        Ok(())
    }

    pub fn n_de(&self) -> usize {
        (self.de_fraction * self.n_targets as f64).round() as usize
    }
}

/// A planted response, evaluable at any time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub pattern: Pattern,
    pub baseline: f64,
    /// Signed scale applied to the unit shape.
    pub amplitude: f64,
    /// Peak centre, ramp midpoint, or unused for cyclic.
    pub location: f64,
    pub width: f64,
    /// Divides the raw shape so its largest design-time magnitude is 1.
    pub norm: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Curve {
    fn raw(&self, t: f64) -> f64 {
        let shape = |t: f64| match self.pattern {
            Pattern::SinglePeak => (-0.5 * ((t - self.location) / self.width).powi(2)).exp(),
            Pattern::Monotone => 1.0 / (1.0 + (-(t - self.location) / self.width).exp()),
            Pattern::Cyclic => (2.0 * PI * (t - self.t_min) / (self.t_max - self.t_min)).sin(),
        };
        shape(t) - shape(self.t_min)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.norm > 0.0 {
            self.baseline + self.amplitude * self.raw(t) / self.norm
        } else {
            self.baseline
        }
    }

    fn build(
        pattern: Pattern,
        baseline: f64,
        amplitude: f64,
        location: f64,
        width: f64,
        times: &[f64],
    ) -> Self {
        let mut c = Curve {
            pattern,
            baseline,
            amplitude,
            location,
            width,
            norm: 1.0,
            t_min: times[0],
            t_max: times[times.len() - 1],
        };
        c.norm = times.iter().map(|&t| c.raw(t).abs()).fold(0.0, f64::max);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub de_ids: BTreeSet<String>,
    pub pattern_of: BTreeMap<String, Pattern>,
    /// Noise-free values at the design times, for every probe.
    pub true_curves: BTreeMap<String, Vec<f64>>,
    pub curves: BTreeMap<String, Curve>,
    pub design_times: Vec<f64>,
}

impl SimTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }
}

pub fn target_id(i: usize) -> String {
    format!("tgt_{i:05}")
}

pub fn control_id(i: usize) -> String {
    format!("ec_{i:04}")
}

fn pick_pattern(mix: &PatternMix, rng: &mut ChaCha8Rng) -> Pattern {
    let w = mix.weights();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (p, wi) in Pattern::ALL.iter().zip(w) {
        if u < wi {
            return *p;
        }
        u -= wi;
    }
    *Pattern::ALL
        .iter()
        .zip(w)
        .rev()
        .find(|(_, wi)| *wi > 0.0)
        .expect("positive weight")
        .0
}

fn planted_curve(spec: &SimSpec, pattern: Pattern, baseline: f64, rng: &mut ChaCha8Rng) -> Curve {
    let times = &spec.design_times;
    let t0 = times[0];
    let t_max = times[times.len() - 1];
    let span = t_max - t0;
    let (sign, location, width) = if spec.canonical_shapes {
        let (loc, w) = match pattern {
            // the sinusoid already peaks mid-range, so the canonical peak is early
            Pattern::SinglePeak => {
                let c = times[1];
                (c, (0.4 * (c - t0)).max(span / 30.0))
            }
            Pattern::Monotone => (t0 + 0.25 * span, span / 15.0),
            Pattern::Cyclic => (t0, span),
        };
        (1.0, loc, w)
    } else {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (loc, w) = match pattern {
            Pattern::SinglePeak => {
                let c = times[rng.random_range(1..times.len())];
                (c, (0.4 * (c - t0)).max(span / 30.0))
            }
            Pattern::Monotone => {
                let mid = t0 + span * rng.random_range(0.1..0.5);
                (mid, span * rng.random_range(0.03..0.12))
            }
            Pattern::Cyclic => (t0, span),
        };
        (sign, loc, w)
    };
    Curve::build(
        pattern,
        baseline,
        sign * spec.peak_log2_amplitude,
        location,
        width,
        times,
    )
}

fn flat_curve(spec: &SimSpec, baseline: f64) -> Curve {
    let times = &spec.design_times;
    Curve {
        pattern: Pattern::Monotone,
        baseline,
        amplitude: 0.0,
        location: times[0],
        width: 1.0,
        norm: 0.0,
        t_min: times[0],
        t_max: times[times.len() - 1],
    }
}

/// Builds the synthetic matrix and its ground truth; deterministic in `spec.seed`.
pub fn generate(spec: &SimSpec) -> Result<(ExperimentMatrix, SimTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let times = &spec.design_times;

    let mut meta = Vec::new();
    let mut col_time = Vec::new();
    let mut col_bio = Vec::new();
    let mut n_bio = 0usize;
    for (ti, (&t, &reps)) in times.iter().zip(&spec.replicates_per_time).enumerate() {
        for b in 0..reps as usize {
            let techs = spec
                .technical_replicates
                .as_ref()
                .map(|tr| tr[ti][b])
                .unwrap_or(1);
            let bio = format!("t{ti}_b{}", b + 1);
            for k in 1..=techs {
                meta.push(SampleMeta {
                    array_id: format!("t{ti}_b{}_r{k}", b + 1),
                    time_days: t,
                    biological_replicate: bio.clone(),
                    technical_replicate_index: k,
                });
                col_time.push(ti);
                col_bio.push(n_bio);
            }
            n_bio += 1;
        }
    }

    let mut de_idx: Vec<usize> = (0..spec.n_targets).collect();
    de_idx.shuffle(&mut rng);
    de_idx.truncate(spec.n_de());
    let de_set: HashSet<usize> = de_idx.into_iter().collect();

    let n_probes = spec.n_targets + spec.n_controls;
    let mut row_index = Vec::with_capacity(n_probes);
    let mut annotations = Vec::with_capacity(n_probes);
    let mut curves = BTreeMap::new();
    let mut pattern_of = BTreeMap::new();
    let mut de_ids = BTreeSet::new();
    let mut true_curves = BTreeMap::new();
    let mut values = Vec::with_capacity(n_probes * meta.len());
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let (blo, bhi) = spec.baseline_range;

    for g in 0..n_probes {
        let (id, role) = if g < spec.n_targets {
            (target_id(g + 1), ProbeRole::Target)
        } else {
            (control_id(g - spec.n_targets + 1), ProbeRole::PositiveControl)
        };
        let baseline = if bhi > blo { rng.random_range(blo..bhi) } else { blo };
        let curve = if g < spec.n_targets && de_set.contains(&g) {
            let p = pick_pattern(&spec.pattern_mix, &mut rng);
            pattern_of.insert(id.clone(), p);
            de_ids.insert(id.clone());
            planted_curve(spec, p, baseline, &mut rng)
        } else {
            flat_curve(spec, baseline)
        };
        let mu: Vec<f64> = times.iter().map(|&t| curve.eval(t)).collect();
        let bio_noise: Vec<f64> = (0..n_bio).map(|_| std_normal.sample(&mut rng)).collect();
        for j in 0..meta.len() {
            let ti = col_time[j];
            let tech = if spec.technical_sd > 0.0 {
                spec.technical_sd * std_normal.sample(&mut rng)
            } else {
                0.0
            };
            values.push(mu[ti] + spec.noise_sd.at(ti) * bio_noise[col_bio[j]] + tech);
        }
        true_curves.insert(id.clone(), mu);
        curves.insert(id.clone(), curve);
        row_index.push(id.clone());
        annotations.push(ProbeAnnotation { probe_id: id, role });
    }

    let m = ExperimentMatrix::new(values, row_index, meta, annotations)?;
    Ok((
        m,
        SimTruth {
            de_ids,
            pattern_of,
            true_curves,
            curves,
            design_times: times.clone(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub power: f64,
    pub true_fdr: f64,
}

pub fn score_run(truth: &SimTruth, calls: &HashSet<&str>) -> RunScore {
    let hits = calls.iter().filter(|c| truth.de_ids.contains(**c)).count();
    let power = if truth.de_ids.is_empty() {
        0.0
    } else {
        hits as f64 / truth.de_ids.len() as f64
    };
    let true_fdr = if calls.is_empty() {
        0.0
    } else {
        (calls.len() - hits) as f64 / calls.len() as f64
    };
    RunScore { power, true_fdr }
}

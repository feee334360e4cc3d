//! `lrsa`: simulate, fit, call, cluster and compare short expression time courses.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrsa::decaller::{Correction, SignificanceRule};
use lrsa::simgen::NoiseSd;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lrsa", version, about = "Local regression and simultaneous bands for expression time courses")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for per-gene stages (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a synthetic experiment and its ground truth.
    Simulate,
    /// Fit every probe; write the fit table and requested band CSVs.
    Fit,
    /// Call DE genes and summarise the external-control FDR.
    Call,
    /// Cluster DE genes by fitted profile and write median patterns.
    Cluster,
    /// Run the quadratic-regression F-test baseline.
    Anova,
    /// Side-by-side LRSA and ANOVA summary.
    Compare,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrectionArg {
    None,
    TimePoints,
    Genes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Disjoint,
    ExcludesControl,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Directory with matrix.tsv, samples.tsv and annotation.tsv.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    fold_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    correction: Option<CorrectionArg>,
    #[arg(long, global = true, value_enum)]
    rule: Option<RuleArg>,
    #[arg(long, global = true)]
    cluster_k: Option<usize>,
    #[arg(long, global = true)]
    eval_grid_points: Option<usize>,
    /// Widen non-anchor bands to the widest anchor band.
    #[arg(long, global = true)]
    sparse_band_mode: Option<bool>,
    #[arg(long, global = true, value_delimiter = ',')]
    anchor_times: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    kmeans_restarts: Option<usize>,
    /// Use BH-adjusted p-values for the ANOVA baseline.
    #[arg(long, global = true)]
    anova_adjust: Option<bool>,
    /// Probes whose band CSV `fit` writes.
    #[arg(long, global = true, value_delimiter = ',')]
    genes: Option<Vec<String>>,
    /// File of known DE genes, one id per line.
    #[arg(long, global = true)]
    known_genes: Option<PathBuf>,
    /// File of experimentally verified genes, one id per line.
    #[arg(long, global = true)]
    verified_genes: Option<PathBuf>,
    #[arg(long, global = true)]
    n_targets: Option<usize>,
    #[arg(long, global = true)]
    n_controls: Option<usize>,
    #[arg(long, global = true)]
    de_fraction: Option<f64>,
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    #[arg(long, global = true)]
    noise_sd: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        if let Some(p) = &self.input {
            c.input_dir = Some(p.clone());
        }
        if let Some(p) = &self.out {
            c.output_dir = Some(p.clone());
        }
        set!(c.alpha, self.alpha);
        set!(c.fold_threshold, self.fold_threshold);
        if let Some(x) = self.correction {
            c.correction = match x {
                CorrectionArg::None => Correction::None,
                CorrectionArg::TimePoints => Correction::TimePoints,
                CorrectionArg::Genes => Correction::Genes,
            };
        }
        if let Some(x) = self.rule {
            c.rule = match x {
                RuleArg::Disjoint => SignificanceRule::Disjoint,
                RuleArg::ExcludesControl => SignificanceRule::ExcludesControl,
            };
        }
        set!(c.cluster_k, self.cluster_k);
        set!(c.eval_grid_points, self.eval_grid_points);
        set!(c.sparse_band_mode, self.sparse_band_mode);
        set!(c.anchor_times, self.anchor_times);
        set!(c.seed, self.seed);
        set!(c.kmeans_restarts, self.kmeans_restarts);
        set!(c.anova_adjust, self.anova_adjust);
        set!(c.band_genes, self.genes);
        if let Some(p) = &self.known_genes {
            c.known_genes = Some(p.clone());
        }
        if let Some(p) = &self.verified_genes {
            c.verified_genes = Some(p.clone());
        }
        set!(c.simulation.n_targets, self.n_targets);
        set!(c.simulation.n_controls, self.n_controls);
        set!(c.simulation.de_fraction, self.de_fraction);
        set!(c.simulation.peak_log2_amplitude, self.amplitude);
        if let Some(s) = self.noise_sd {
            c.simulation.noise_sd = NoiseSd::Constant(s);
        }
        // one seed drives both simulation and clustering
        c.simulation.seed = c.seed;
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;

    pool.install(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Call => commands::call(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Anova => commands::anova(&cfg),
        Command::Compare => commands::compare(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

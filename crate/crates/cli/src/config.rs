//! Run configuration: a TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use lrsa::dataset::DEFAULT_ANCHOR_TIMES;
use lrsa::decaller::{Correction, SignificanceRule};
use lrsa::pipeline::CallConfig;
use lrsa::simgen::SimSpec;
use lrsa::smoother::{linspace, LocalFitConfig, DEFAULT_BANDWIDTH_GRID};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub fold_threshold: f64,
    pub correction: Correction,
    pub rule: SignificanceRule,
    pub cluster_k: usize,
    pub eval_grid_points: usize,
    pub eval_range: [f64; 2],
    pub bandwidth_grid: Vec<f64>,
    pub variance_floor: f64,
    pub sparse_band_mode: bool,
    pub anchor_times: Vec<f64>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    /// Use BH-adjusted p-values for the ANOVA baseline.
    pub anova_adjust: bool,
    pub input_dir: Option<PathBuf>,
    /// Not embedded in reports, so reruns into another directory stay identical.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    /// Genes whose band CSV `fit` writes.
    pub band_genes: Vec<String>,
    pub known_genes: Option<PathBuf>,
    pub verified_genes: Option<PathBuf>,
    pub simulation: SimSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.05,
            fold_threshold: 2.0,
            correction: Correction::None,
            rule: SignificanceRule::Disjoint,
            cluster_k: 7,
            eval_grid_points: 31,
            eval_range: [0.0, 30.0],
            bandwidth_grid: DEFAULT_BANDWIDTH_GRID.to_vec(),
            variance_floor: lrsa::bands::DEFAULT_VARIANCE_FLOOR,
            sparse_band_mode: false,
            anchor_times: DEFAULT_ANCHOR_TIMES.to_vec(),
            seed: 1,
            kmeans_restarts: 20,
            anova_adjust: true,
            input_dir: None,
            output_dir: None,
            band_genes: Vec::new(),
            known_genes: None,
            verified_genes: None,
            simulation: SimSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| CliError::Config {
            path: None,
            message: m,
        };
        if self.eval_grid_points < 2 {
            return Err(bad(format!(
                "eval_grid_points must be at least 2, got {}",
                self.eval_grid_points
            )));
        }
        if !(self.eval_range[0] < self.eval_range[1]) {
            return Err(bad(format!("eval_range {:?} is not increasing", self.eval_range)));
        }
        if self.cluster_k < 2 {
            return Err(bad(format!("cluster_k must be at least 2, got {}", self.cluster_k)));
        }
        self.fit_config().validate().map_err(|e| bad(e.to_string()))?;
        self.call_config().validate().map_err(|e| bad(e.to_string()))?;
        self.simulation.validate().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn eval_grid(&self) -> Vec<f64> {
        linspace(self.eval_range[0], self.eval_range[1], self.eval_grid_points)
    }

    pub fn fit_config(&self) -> LocalFitConfig {
        LocalFitConfig {
            bandwidth_grid: self.bandwidth_grid.clone(),
            eval_grid: self.eval_grid(),
        }
    }

    pub fn call_config(&self) -> CallConfig {
        CallConfig {
            alpha: self.alpha,
            fold_threshold: self.fold_threshold,
            correction: self.correction,
            rule: self.rule,
            sparse_band: self.sparse_band_mode,
            anchor_times: self.anchor_times.clone(),
            variance_floor: self.variance_floor,
        }
    }

    pub fn input_dir(&self) -> Result<&Path, CliError> {
        self.input_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage("no input directory (use --input or input_dir)".into()))
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory (use --out or output_dir)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_headline_settings() {
        let c = RunConfig::default();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.fold_threshold, 2.0);
        assert_eq!(c.correction, Correction::None);
        assert_eq!(c.cluster_k, 7);
        assert_eq!(c.eval_grid().len(), 31);
        c.validate().unwrap();
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c: RunConfig = toml::from_str(
            "alpha = 0.01\ncorrection = \"time_points\"\n[simulation]\nn_targets = 10\n",
        )
        .unwrap();
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.correction, Correction::TimePoints);
        assert_eq!(c.cluster_k, 7);
        assert_eq!(c.simulation.n_targets, 10);
        assert_eq!(c.simulation.n_controls, SimSpec::default().n_controls);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("alpah = 0.01\n").is_err());
    }
}

//! Experiment harness: configuration, sweep drivers, and report assembly.
//!
//! Every command is a library function taking an [`ExperimentConfig`], so
//! the CLI, the tests, and downstream tooling share one code path. Commands
//! write CSV/JSON artifacts under the configured output directory and also
//! return their results in memory. All randomness is derived from the
//! config seed with per-purpose stream labels, so runs reproduce bit-for-bit
//! regardless of thread count.

mod csvutil;
mod parallel;
mod report;
mod sweeps;
mod train;
mod vmm;

pub use parallel::set_thread_count;
pub use report::{
    beta_checks, cmd_report, defect_checks, gnorm_checks, redundancy_growth_checks, train_checks,
    vmm_checks, CheckOutcome, ReportOutcome,
};
pub use sweeps::{
    cmd_beta_sweep, cmd_defect_sweep, cmd_gnorm_sweep, BetaRepeat, BetaSweepResult, DefectRepeat,
    DefectSweepResult, GnormRow, GnormSweepResult, RunKind,
};
pub use train::{cmd_train, SeedOutcome, TrainArtifacts, TrainSummary};
pub use vmm::{
    cmd_vmm_validate, vmm_validation, VmmPoint, VmmReport, VmmSummary, VmmValidateArtifacts,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chipsim::NoiseConfig;
use crate::ensemble::MappingOptions;
use crate::jsonio::load_json;
use crate::neuralnet::Hyperparams;
use crate::taskgen::{MultiTaskDataset, YinYangGeometry};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Full description of an experiment run. Every field has a default and can
/// be overridden from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed; every stream in the run is derived from it.
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub hyperparams: Hyperparams,
    /// Independent training runs for the statistics.
    pub train_seeds: usize,
    /// Noise preset for the beta and g_norm sweeps. The seed field is
    /// ignored; chips get derived seeds per repeat.
    pub noise: NoiseConfig,
    /// Per-kernel defect fractions for the defect sweep.
    pub fault_rates: Vec<f64>,
    pub beta_grid: Vec<usize>,
    /// Decoder normalization sweep values.
    pub g_norm_grid: Vec<f64>,
    /// Repeats per sweep point.
    pub repeats: usize,
    /// Defect fraction used by the beta and g_norm sweeps.
    pub beta_sweep_fault_rate: f64,
    pub mapping: MappingOptions,
    pub out_dir: PathBuf,
}

fn default_g_norm_grid() -> Vec<f64> {
    // Half-octave steps from 1/4 to 4, hitting 1.0 exactly.
    (-4..=4).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n_train: 5000,
            n_test: 1000,
            hyperparams: Hyperparams::default(),
            train_seeds: 20,
            noise: NoiseConfig::hardware_like(0),
            fault_rates: (0..=8).map(|k| k as f64 * 0.05).collect(),
            beta_grid: vec![1, 2, 3, 4],
            g_norm_grid: default_g_norm_grid(),
            repeats: 20,
            beta_sweep_fault_rate: 0.10,
            mapping: MappingOptions::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidInput("dataset sizes must be positive".into()));
        }
        self.hyperparams.validate()?;
        self.noise.validate()?;
        if self.train_seeds == 0 {
            return Err(Error::InvalidInput("train_seeds must be at least 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least 1".into()));
        }
        if self.fault_rates.is_empty() || self.beta_grid.is_empty() || self.g_norm_grid.is_empty()
        {
            return Err(Error::InvalidInput("sweep grids must be nonempty".into()));
        }
        if !self.fault_rates.iter().all(|r| (0.0..=1.0).contains(r)) {
            return Err(Error::InvalidInput("fault rates must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.beta_sweep_fault_rate) {
            return Err(Error::InvalidInput(
                "beta_sweep_fault_rate must lie in [0, 1]".into(),
            ));
        }
        if !self.beta_grid.iter().all(|&b| b >= 1) {
            return Err(Error::InvalidInput("beta values must be at least 1".into()));
        }
        if !self
            .g_norm_grid
            .iter()
            .all(|g| g.is_finite() && *g > 0.0)
        {
            return Err(Error::InvalidInput("g_norm values must be positive".into()));
        }
        Ok(())
    }

    /// Short content hash of the whole config, stamped into artifacts.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The dataset this config describes, regenerated deterministically.
    pub fn dataset(&self) -> Result<MultiTaskDataset> {
        MultiTaskDataset::generate(
            self.seed,
            self.n_train,
            self.n_test,
            &YinYangGeometry::default(),
        )
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out_dir.join("train")
    }

    pub fn solution_path(&self) -> PathBuf {
        self.train_dir().join("solution.json")
    }

    pub fn defect_sweep_path(&self) -> PathBuf {
        self.out_dir.join("defect_sweep").join("defect_sweep.csv")
    }

    pub fn beta_sweep_path(&self) -> PathBuf {
        self.out_dir.join("beta_sweep").join("beta_sweep.csv")
    }

    pub fn gnorm_sweep_path(&self) -> PathBuf {
        self.out_dir.join("gnorm_sweep").join("gnorm_sweep.csv")
    }

    pub fn vmm_dir(&self) -> PathBuf {
        self.out_dir.join("vmm")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }
}

/// Load a config from a JSON file, falling back to defaults per field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    let config: ExperimentConfig = load_json(path)?;
    config.validate()?;
    Ok(config)
}

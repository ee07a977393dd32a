//! Hardware sweep commands: defect tolerance, redundancy depth, and decoder
//! normalization.
//!
//! Every sweep point gets a fresh chip with seeds derived from the config,
//! deploys the trained solution, and scores it on both tasks' test sets.
//! Results go to a tidy CSV for plotting plus a JSON sidecar that the report
//! command reads back exactly. Mapping failures are recorded as data, not
//! treated as errors.

use serde::{Deserialize, Serialize};

use super::csvutil::{fmt_f64, provenance_line, write_csv};
use super::parallel::try_map_indexed;
use super::ExperimentConfig;
use crate::chipsim::{inject_faults, new_chip, FaultKind, NoiseConfig, SimChip};
use crate::ensemble::{
    deploy_solution, ensemble_stats, DeployConfig, EnsembleMapping, MappingStats, Polarity,
};
use crate::jsonio::save_json;
use crate::neuralnet::{Network, SolutionFile};
use crate::rngutil::derive_seed;
use crate::taskgen::{MultiTaskDataset, TaskId};
use crate::{Error, Result};

/// Redundancy depth used by the normalization sweep.
const GNORM_BETA: usize = 3;

/// One deployment in the defect sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectRepeat {
    pub rate: f64,
    pub repeat: usize,
    /// Whether every output kept at least beta clean copies after writing.
    pub success: bool,
    /// Copies placed per layer, `[pos, neg]`.
    pub alpha: Vec<[usize; 2]>,
    /// Devices claimed by the whole mapping.
    pub devices: usize,
    /// Test accuracy on (task1, task2); inference is forced, so failed
    /// mappings still produce numbers.
    pub acc: [f64; 2],
    /// Output lines (per layer, per polarity) left with fewer than beta
    /// clean copies.
    pub degraded_outputs: usize,
}

impl DefectRepeat {
    pub fn mean_acc(&self) -> f64 {
        (self.acc[0] + self.acc[1]) / 2.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectSweepResult {
    pub config_hash: String,
    /// The deployed solution's software accuracy on (task1, task2).
    pub software_acc: [f64; 2],
    /// Linear reference accuracy, for judging failed deployments.
    pub baseline: [f64; 2],
    pub n_layers: usize,
    /// Block shape per layer as placed, `[rows, cols]`.
    pub layer_blocks: Vec<[usize; 2]>,
    pub rows: Vec<DefectRepeat>,
}

/// One deployment in the redundancy sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaRepeat {
    pub beta: usize,
    pub repeat: usize,
    pub success: bool,
    /// None when the planner could not reach the requested depth.
    pub acc: Option<[f64; 2]>,
}

impl BetaRepeat {
    pub fn mean_acc(&self) -> Option<f64> {
        self.acc.map(|a| (a[0] + a[1]) / 2.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaSweepResult {
    pub config_hash: String,
    pub software_acc: [f64; 2],
    /// Mean accuracy of the same solution on a noiseless, defect-free chip.
    pub ideal_reference_mean: f64,
    pub rows: Vec<BetaRepeat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Noiseless chip, single deployment.
    Ideal,
    /// Configured noise preset, one deployment per repeat.
    Noisy,
}

impl RunKind {
    fn tag(self) -> &'static str {
        match self {
            RunKind::Ideal => "ideal",
            RunKind::Noisy => "noisy",
        }
    }
}

/// One (g_norm, repeat) evaluation in the normalization sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnormRow {
    pub g_norm: f64,
    pub repeat: usize,
    pub kind: RunKind,
    pub acc: Option<[f64; 2]>,
}

impl GnormRow {
    pub fn mean_acc(&self) -> Option<f64> {
        self.acc.map(|a| (a[0] + a[1]) / 2.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnormSweepResult {
    pub config_hash: String,
    pub software_acc: [f64; 2],
    pub baseline: [f64; 2],
    pub rows: Vec<GnormRow>,
}

fn software_accuracy(solution: &SolutionFile, data: &MultiTaskDataset) -> Result<[f64; 2]> {
    let net: Network = solution.ternary.to_network();
    Ok([
        net.evaluate(data.test(TaskId::Task1))?,
        net.evaluate(data.test(TaskId::Task2))?,
    ])
}

fn hardware_accuracy(
    net: &crate::ensemble::EnsembleNetwork,
    chip: &mut SimChip,
    data: &MultiTaskDataset,
    force: bool,
) -> Result<[f64; 2]> {
    Ok([
        net.evaluate(chip, data.test(TaskId::Task1), force)?,
        net.evaluate(chip, data.test(TaskId::Task2), force)?,
    ])
}

/// Output lines that ended up with fewer than beta clean copies.
fn degraded_outputs(mapping: &EnsembleMapping) -> usize {
    mapping
        .layers
        .iter()
        .map(|lm| {
            (0..lm.rows)
                .map(|j| {
                    let pos = (lm.clean_copies(Polarity::Pos, j).len() < lm.beta) as usize;
                    let neg = (lm.clean_copies(Polarity::Neg, j).len() < lm.beta) as usize;
                    pos + neg
                })
                .sum::<usize>()
        })
        .sum()
}

fn alpha_per_layer(stats: &MappingStats) -> Vec<[usize; 2]> {
    stats
        .per_layer
        .iter()
        .map(|l| [l.alpha_pos, l.alpha_neg])
        .collect()
}

pub(crate) fn defect_csv_header(n_layers: usize) -> String {
    let mut header = String::from("rate,repeat,success");
    for l in 0..n_layers {
        header.push_str(&format!(",alpha{l}_pos,alpha{l}_neg"));
    }
    header.push_str(",devices,acc_t1,acc_t2,acc_mean,degraded_outputs");
    header
}

/// Sweep stuck-device rates on otherwise ideal chips with no redundancy.
///
/// Each (rate, repeat) pair draws its own fault positions; deployment runs
/// forced so that accuracy is recorded even when coverage fails.
pub fn cmd_defect_sweep(
    config: &ExperimentConfig,
    solution: &SolutionFile,
) -> Result<DefectSweepResult> {
    config.validate()?;
    solution.validate()?;
    let data = config.dataset()?;
    let software_acc = software_accuracy(solution, &data)?;
    let n_layers = solution.ternary.ternary.len();
    // Weight matrices are input x output; blocks are placed transposed.
    let layer_blocks: Vec<[usize; 2]> = solution
        .ternary
        .ternary
        .iter()
        .map(|t| [t.cols(), t.rows()])
        .collect();

    let n_rates = config.fault_rates.len();
    let repeats = config.repeats;
    let rows = try_map_indexed(n_rates * repeats, |t| {
        let (ri, rep) = (t / repeats, t % repeats);
        let rate = config.fault_rates[ri];
        let mut chip = new_chip(
            NoiseConfig::ideal(derive_seed(config.seed, "defect/chip", t as u64)),
            true,
        )?;
        if rate > 0.0 {
            inject_faults(
                &mut chip,
                rate,
                FaultKind::StuckHigh,
                derive_seed(config.seed, "defect/faults", t as u64),
            )?;
        }
        let mut cfg = DeployConfig::new(1);
        cfg.options = config.mapping.clone();
        cfg.force = true;
        let (net, report) = deploy_solution(&mut chip, &solution.ternary, &cfg)?;
        let stats = ensemble_stats(&report.mapping);
        let acc = hardware_accuracy(&net, &mut chip, &data, true)?;
        Ok(DefectRepeat {
            rate,
            repeat: rep,
            success: report.mapping.success,
            alpha: alpha_per_layer(&stats),
            devices: stats.total_devices,
            acc,
            degraded_outputs: degraded_outputs(&report.mapping),
        })
    })?;

    let result = DefectSweepResult {
        config_hash: config.config_hash(),
        software_acc,
        baseline: solution.baseline_accuracy,
        n_layers,
        layer_blocks,
        rows,
    };

    let csv_rows: Vec<String> = result
        .rows
        .iter()
        .map(|r| {
            let mut line = format!("{},{},{}", fmt_f64(r.rate), r.repeat, r.success);
            for a in &r.alpha {
                line.push_str(&format!(",{},{}", a[0], a[1]));
            }
            line.push_str(&format!(
                ",{},{},{},{},{}",
                r.devices,
                fmt_f64(r.acc[0]),
                fmt_f64(r.acc[1]),
                fmt_f64(r.mean_acc()),
                r.degraded_outputs
            ));
            line
        })
        .collect();
    let path = config.defect_sweep_path();
    write_csv(
        &path,
        &[provenance_line(&result.config_hash)],
        &defect_csv_header(n_layers),
        &csv_rows,
    )?;
    save_json(&path.with_extension("json"), &result)?;
    Ok(result)
}

pub(crate) const BETA_CSV_HEADER: &str = "beta,repeat,success,acc_t1,acc_t2,acc_mean";

fn acc_fields(acc: Option<[f64; 2]>) -> String {
    match acc {
        Some(a) => format!(
            "{},{},{}",
            fmt_f64(a[0]),
            fmt_f64(a[1]),
            fmt_f64((a[0] + a[1]) / 2.0)
        ),
        None => "NaN,NaN,NaN".to_string(),
    }
}

/// Sweep redundancy depth on noisy chips sharing one fixed fault map.
///
/// The fault positions stay constant across all points so the sweep isolates
/// what averaging depth buys; device noise is redrawn per repeat.
pub fn cmd_beta_sweep(
    config: &ExperimentConfig,
    solution: &SolutionFile,
) -> Result<BetaSweepResult> {
    config.validate()?;
    solution.validate()?;
    let data = config.dataset()?;
    let software_acc = software_accuracy(solution, &data)?;
    let fault_seed = derive_seed(config.seed, "beta/faults", 0);

    // Reference: the same solution on a noiseless, defect-free chip.
    let ideal_reference_mean = {
        let mut chip = new_chip(NoiseConfig::ideal(derive_seed(config.seed, "beta/ideal", 0)), true)?;
        let mut cfg = DeployConfig::new(1);
        cfg.options = config.mapping.clone();
        let (net, _) = deploy_solution(&mut chip, &solution.ternary, &cfg)?;
        let acc = hardware_accuracy(&net, &mut chip, &data, false)?;
        (acc[0] + acc[1]) / 2.0
    };

    let repeats = config.repeats;
    let rows = try_map_indexed(config.beta_grid.len() * repeats, |t| {
        let (bi, rep) = (t / repeats, t % repeats);
        let beta = config.beta_grid[bi];
        let noise = NoiseConfig {
            seed: derive_seed(config.seed, "beta/chip", t as u64),
            ..config.noise.clone()
        };
        let mut chip = new_chip(noise, false)?;
        if config.beta_sweep_fault_rate > 0.0 {
            inject_faults(&mut chip, config.beta_sweep_fault_rate, FaultKind::StuckHigh, fault_seed)?;
        }
        let mut cfg = DeployConfig::new(beta);
        cfg.options = config.mapping.clone();
        match deploy_solution(&mut chip, &solution.ternary, &cfg) {
            Ok((net, _)) => {
                let acc = hardware_accuracy(&net, &mut chip, &data, false)?;
                Ok(BetaRepeat { beta, repeat: rep, success: true, acc: Some(acc) })
            }
            Err(Error::MappingUnsuccessful { .. }) => {
                Ok(BetaRepeat { beta, repeat: rep, success: false, acc: None })
            }
            Err(e) => Err(e),
        }
    })?;

    let result = BetaSweepResult {
        config_hash: config.config_hash(),
        software_acc,
        ideal_reference_mean,
        rows,
    };
    let csv_rows: Vec<String> = result
        .rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.beta, r.repeat, r.success, acc_fields(r.acc)))
        .collect();
    let path = config.beta_sweep_path();
    write_csv(
        &path,
        &[provenance_line(&result.config_hash)],
        BETA_CSV_HEADER,
        &csv_rows,
    )?;
    save_json(&path.with_extension("json"), &result)?;
    Ok(result)
}

pub(crate) const GNORM_CSV_HEADER: &str = "g_norm,repeat,kind,acc_t1,acc_t2,acc_mean";

/// Sweep the decoder normalization factor at fixed redundancy.
///
/// One pass on a noiseless chip traces the pure decoding error; noisy
/// repeats show how the usable window narrows. The deployment is reused
/// across the grid because the factor only enters current decoding.
pub fn cmd_gnorm_sweep(
    config: &ExperimentConfig,
    solution: &SolutionFile,
) -> Result<GnormSweepResult> {
    config.validate()?;
    solution.validate()?;
    let data = config.dataset()?;
    let software_acc = software_accuracy(solution, &data)?;
    let fault_seed = derive_seed(config.seed, "gnorm/faults", 0);

    let run_grid = |chip: &mut SimChip, repeat: usize, kind: RunKind| -> Result<Vec<GnormRow>> {
        let mut cfg = DeployConfig::new(GNORM_BETA);
        cfg.options = config.mapping.clone();
        match deploy_solution(chip, &solution.ternary, &cfg) {
            Ok((mut net, _)) => config
                .g_norm_grid
                .iter()
                .map(|&g| {
                    net.g_norm = g;
                    let acc = hardware_accuracy(&net, chip, &data, false)?;
                    Ok(GnormRow { g_norm: g, repeat, kind, acc: Some(acc) })
                })
                .collect(),
            Err(Error::MappingUnsuccessful { .. }) => Ok(config
                .g_norm_grid
                .iter()
                .map(|&g| GnormRow { g_norm: g, repeat, kind, acc: None })
                .collect()),
            Err(e) => Err(e),
        }
    };

    let mut rows = {
        let mut chip = new_chip(
            NoiseConfig::ideal(derive_seed(config.seed, "gnorm/ideal", 0)),
            true,
        )?;
        if config.beta_sweep_fault_rate > 0.0 {
            inject_faults(&mut chip, config.beta_sweep_fault_rate, FaultKind::StuckHigh, fault_seed)?;
        }
        run_grid(&mut chip, 0, RunKind::Ideal)?
    };

    let noisy = try_map_indexed(config.repeats, |rep| {
        let noise = NoiseConfig {
            seed: derive_seed(config.seed, "gnorm/chip", rep as u64),
            ..config.noise.clone()
        };
        let mut chip = new_chip(noise, false)?;
        if config.beta_sweep_fault_rate > 0.0 {
            inject_faults(&mut chip, config.beta_sweep_fault_rate, FaultKind::StuckHigh, fault_seed)?;
        }
        run_grid(&mut chip, rep, RunKind::Noisy)
    })?;
    rows.extend(noisy.into_iter().flatten());

    let result = GnormSweepResult {
        config_hash: config.config_hash(),
        software_acc,
        baseline: solution.baseline_accuracy,
        rows,
    };
    let csv_rows: Vec<String> = result
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                fmt_f64(r.g_norm),
                r.repeat,
                r.kind.tag(),
                acc_fields(r.acc)
            )
        })
        .collect();
    let path = config.gnorm_sweep_path();
    write_csv(
        &path,
        &[provenance_line(&result.config_hash)],
        GNORM_CSV_HEADER,
        &csv_rows,
    )?;
    save_json(&path.with_extension("json"), &result)?;
    Ok(result)
}

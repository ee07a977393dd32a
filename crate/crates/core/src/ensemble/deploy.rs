//! Writing a ternary network onto a chip and running it from there.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chipsim::{program_block, BlockAddr, SimChip};
use crate::jsonio::{check_version, load_json, save_json};
use crate::matrix::TernaryMat;
use crate::neuralnet::{softmax_in_place, TernarySolution};
use crate::taskgen::Sample;
use crate::{Error, Result};

use super::encode::encode_differential;
use super::infer::{decode_currents, ensemble_vmm};
use super::planner::{
    find_network_ensemble, EnsembleMapping, LayerMapping, MappingOptions, Polarity,
};

/// Voltage scaling applied to first-layer inputs so features up to 2.0 stay
/// within the read voltage. The decoder divides it back out.
pub const FIRST_LAYER_INPUT_SCALE: f64 = 0.5;

/// How a solution gets placed and written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployConfig {
    pub beta: usize,
    pub g_norm: f64,
    pub margin: f64,
    pub max_iters: usize,
    pub options: MappingOptions,
    /// Run even when coverage is incomplete, averaging whatever rows exist.
    pub force: bool,
}

impl DeployConfig {
    pub fn new(beta: usize) -> Self {
        DeployConfig {
            beta,
            g_norm: 1.0,
            margin: crate::chipsim::DEFAULT_MARGIN,
            max_iters: crate::chipsim::DEFAULT_MAX_ITERS,
            options: MappingOptions::default(),
            force: false,
        }
    }
}

/// Outcome of programming every placement of a mapping.
#[derive(Debug, Clone)]
pub struct WriteReport {
    /// The mapping with failed rows demoted out of the clean lists.
    pub mapping: EnsembleMapping,
    pub devices_written: usize,
    pub failed_devices: usize,
    pub demoted_rows: usize,
}

fn check_solution_fits(mapping: &EnsembleMapping, solution: &TernarySolution) -> Result<()> {
    if solution.ternary.len() != mapping.layers.len() {
        return Err(Error::InvalidInput(format!(
            "solution has {} layers, mapping has {}",
            solution.ternary.len(),
            mapping.layers.len()
        )));
    }
    for (lm, t) in mapping.layers.iter().zip(&solution.ternary) {
        if t.rows() != lm.cols || t.cols() != lm.rows {
            return Err(Error::InvalidInput(format!(
                "layer {} weights {}x{} do not fit block {}x{}",
                lm.layer,
                t.rows(),
                t.cols(),
                lm.rows,
                lm.cols
            )));
        }
    }
    Ok(())
}

/// Program every placement with the differential encoding of its layer.
/// Rows that fail programming are demoted out of their clean lists, so the
/// returned mapping reflects what the chip actually holds.
pub fn write_ensemble(
    chip: &mut SimChip,
    mapping: &EnsembleMapping,
    solution: &TernarySolution,
    margin: f64,
    max_iters: usize,
) -> Result<WriteReport> {
    check_solution_fits(mapping, solution)?;
    let levels = chip.levels().clone();
    let mut mapping = mapping.clone();
    let mut devices_written = 0;
    let mut failed_devices = 0;
    let mut demoted_rows = 0;
    for lm in &mut mapping.layers {
        let blocks = encode_differential(&solution.ternary[lm.layer], &levels);
        for pi in 0..lm.placements.len() {
            let p = lm.placements[pi];
            let targets = match p.polarity {
                Polarity::Pos => &blocks.pos,
                Polarity::Neg => &blocks.neg,
            };
            let block = BlockAddr {
                kernel: p.kernel,
                row0: p.row0,
                col0: p.col0,
                rows: p.rows,
                cols: p.cols,
            };
            let report = program_block(chip, block, targets, margin, max_iters)?;
            devices_written += p.rows * p.cols;
            failed_devices += p.rows * p.cols - report.success_count();
            for j in 0..p.rows {
                if !report.row_success(j)
                    && lm.clean_copies(p.polarity, j).contains(&p.copy_index)
                {
                    lm.demote(p.polarity, j, p.copy_index);
                    demoted_rows += 1;
                }
            }
        }
    }
    mapping.refresh_success();
    Ok(WriteReport {
        mapping,
        devices_written,
        failed_devices,
        demoted_rows,
    })
}

fn measure_layer_g_diff(
    chip: &mut SimChip,
    lm: &LayerMapping,
    tern: &TernaryMat,
) -> Result<f64> {
    let levels = chip.levels().clone();
    let blocks = encode_differential(tern, &levels);
    let mut on_sum = 0.0;
    let mut on_n = 0usize;
    let mut off_sum = 0.0;
    let mut off_n = 0usize;
    for p in &lm.placements {
        let targets = match p.polarity {
            Polarity::Pos => &blocks.pos,
            Polarity::Neg => &blocks.neg,
        };
        let block = BlockAddr {
            kernel: p.kernel,
            row0: p.row0,
            col0: p.col0,
            rows: p.rows,
            cols: p.cols,
        };
        let read = chip.read_block(block)?;
        for j in 0..p.rows {
            if !lm.clean_copies(p.polarity, j).contains(&p.copy_index) {
                continue;
            }
            for c in 0..p.cols {
                if targets.at(j, c) == levels.g_on {
                    on_sum += read.at(j, c);
                    on_n += 1;
                } else {
                    off_sum += read.at(j, c);
                    off_n += 1;
                }
            }
        }
    }
    if on_n == 0 || off_n == 0 {
        return Err(Error::DegenerateCalibration(format!(
            "layer {} clean rows hold {} on-targets and {} off-targets; both are needed",
            lm.layer, on_n, off_n
        )));
    }
    let g_diff = on_sum / on_n as f64 - off_sum / off_n as f64;
    if !(g_diff > 0.0) {
        return Err(Error::DegenerateCalibration(format!(
            "layer {} measured gap {g_diff} uS is not positive",
            lm.layer
        )));
    }
    Ok(g_diff)
}

/// Read the written blocks back and estimate the on/off conductance gap per
/// layer, using only rows the mapping trusts.
pub fn measure_g_diff(
    chip: &mut SimChip,
    mapping: &EnsembleMapping,
    solution: &TernarySolution,
) -> Result<Vec<f64>> {
    check_solution_fits(mapping, solution)?;
    mapping
        .layers
        .iter()
        .map(|lm| measure_layer_g_diff(chip, lm, &solution.ternary[lm.layer]))
        .collect()
}

pub const ENSEMBLE_FILE_VERSION: u32 = 1;

/// A ternary network living on a chip: the placement plan plus everything
/// the decoder needs. The chip itself is saved separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleNetwork {
    pub version: u32,
    pub mapping: EnsembleMapping,
    /// Per-layer weight scales from the ternary solution.
    pub scales: Vec<f64>,
    /// Per-layer measured conductance gaps, microsiemens.
    pub g_diff: Vec<f64>,
    pub g_norm: f64,
    /// Per-layer voltage scaling applied to the layer inputs.
    pub input_scales: Vec<f64>,
}

/// One hardware forward pass.
#[derive(Debug, Clone)]
pub struct HardwareForward {
    pub probs: Vec<f64>,
    /// Outputs across all layers that fell back below full redundancy.
    pub degraded_outputs: usize,
}

impl HardwareForward {
    pub fn predicted(&self) -> usize {
        crate::neuralnet::argmax(&self.probs)
    }
}

impl EnsembleNetwork {
    pub fn validate(&self) -> Result<()> {
        let n = self.mapping.layers.len();
        if self.scales.len() != n || self.g_diff.len() != n || self.input_scales.len() != n {
            return Err(Error::InvalidInput(
                "per-layer fields do not match the mapping".into(),
            ));
        }
        if !self.scales.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidInput("weight scales must be positive".into()));
        }
        if !self.g_diff.iter().all(|g| g.is_finite() && *g > 0.0) {
            return Err(Error::DegenerateCalibration(
                "stored conductance gaps must be positive".into(),
            ));
        }
        if !(self.g_norm > 0.0) || !self.g_norm.is_finite() {
            return Err(Error::InvalidInput("g_norm must be positive".into()));
        }
        if !self.input_scales.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidInput("input scales must be positive".into()));
        }
        Ok(())
    }

    fn first_incomplete_layer(&self) -> Option<usize> {
        self.mapping.layers.iter().find(|l| !l.success).map(|l| l.layer)
    }

    /// Run features through the chip-resident network. Hidden layers apply
    /// tanh after decoding; the last layer applies softmax. Refuses to run
    /// an incomplete mapping unless `force` is set.
    pub fn forward(&self, chip: &mut SimChip, features: &[f64], force: bool) -> Result<HardwareForward> {
        self.validate()?;
        if !force {
            if let Some(layer) = self.first_incomplete_layer() {
                return Err(Error::MappingUnsuccessful { layer });
            }
        }
        let v_read = chip.levels().v_read;
        let n_layers = self.mapping.layers.len();
        let mut x: Vec<f64> = features.to_vec();
        let mut degraded = 0;
        for (l, lm) in self.mapping.layers.iter().enumerate() {
            if x.len() != lm.cols {
                return Err(Error::InvalidInput(format!(
                    "layer {l} expects {} inputs, got {}",
                    lm.cols,
                    x.len()
                )));
            }
            let scale = self.input_scales[l];
            let volts: Vec<f64> = x.iter().map(|&a| a * v_read * scale).collect();
            let currents = ensemble_vmm(chip, lm, &volts)?;
            degraded += currents.degraded_outputs;
            let mut z = decode_currents(
                &currents.pos,
                &currents.neg,
                self.g_diff[l],
                self.g_norm,
                self.scales[l],
                scale,
                v_read,
            )?;
            if l + 1 < n_layers {
                for v in &mut z {
                    *v = v.tanh();
                }
            } else {
                softmax_in_place(&mut z);
            }
            x = z;
        }
        Ok(HardwareForward {
            probs: x,
            degraded_outputs: degraded,
        })
    }

    /// Classification accuracy over a split, run entirely on the chip.
    pub fn evaluate(&self, chip: &mut SimChip, split: &[Sample], force: bool) -> Result<f64> {
        if split.is_empty() {
            return Err(Error::InvalidInput("empty evaluation split".into()));
        }
        let mut correct = 0usize;
        for s in split {
            let out = self.forward(chip, &s.features, force)?;
            if out.predicted() == s.label.as_u8() as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / split.len() as f64)
    }
}

/// Plan, write, and calibrate a solution on a chip in one step.
pub fn deploy_solution(
    chip: &mut SimChip,
    solution: &TernarySolution,
    cfg: &DeployConfig,
) -> Result<(EnsembleNetwork, WriteReport)> {
    solution.validate()?;
    if !(cfg.g_norm > 0.0) || !cfg.g_norm.is_finite() {
        return Err(Error::InvalidInput("g_norm must be positive".into()));
    }
    let dims: Vec<(usize, usize)> = solution.ternary.iter().map(|t| (t.rows(), t.cols())).collect();
    let map = chip.fault_map();
    let mapping = find_network_ensemble(&map, &dims, cfg.beta, &cfg.options)?;
    if !mapping.success && !cfg.force {
        let layer = mapping
            .layers
            .iter()
            .find(|l| !l.success)
            .map(|l| l.layer)
            .unwrap_or(0);
        return Err(Error::MappingUnsuccessful { layer });
    }
    let report = write_ensemble(chip, &mapping, solution, cfg.margin, cfg.max_iters)?;
    if !report.mapping.success && !cfg.force {
        let layer = report
            .mapping
            .layers
            .iter()
            .find(|l| !l.success)
            .map(|l| l.layer)
            .unwrap_or(0);
        return Err(Error::MappingUnsuccessful { layer });
    }
    let nominal_gap = chip.levels().g_on - chip.levels().g_off;
    let mut g_diff = Vec::with_capacity(report.mapping.layers.len());
    for lm in &report.mapping.layers {
        match measure_layer_g_diff(chip, lm, &solution.ternary[lm.layer]) {
            Ok(g) => g_diff.push(g),
            // A forced run may have layers with no trusted rows left; fall
            // back to the nominal span so inference can still proceed.
            Err(Error::DegenerateCalibration(_)) if cfg.force => g_diff.push(nominal_gap),
            Err(e) => return Err(e),
        }
    }
    let n_layers = report.mapping.layers.len();
    let mut input_scales = vec![1.0; n_layers];
    if n_layers > 0 {
        input_scales[0] = FIRST_LAYER_INPUT_SCALE;
    }
    let net = EnsembleNetwork {
        version: ENSEMBLE_FILE_VERSION,
        mapping: report.mapping.clone(),
        scales: solution.scales.clone(),
        g_diff,
        g_norm: cfg.g_norm,
        input_scales,
    };
    net.validate()?;
    Ok((net, report))
}

/// Placement / redundancy accounting for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    pub alpha_pos: usize,
    pub alpha_neg: usize,
    pub devices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingStats {
    pub per_layer: Vec<LayerStats>,
    pub total_devices: usize,
}

pub fn ensemble_stats(mapping: &EnsembleMapping) -> MappingStats {
    let per_layer = mapping
        .layers
        .iter()
        .map(|lm| LayerStats {
            layer: lm.layer,
            alpha_pos: lm.alpha(Polarity::Pos),
            alpha_neg: lm.alpha(Polarity::Neg),
            devices: lm.devices(),
        })
        .collect();
    MappingStats {
        per_layer,
        total_devices: mapping.total_devices(),
    }
}

pub fn save_ensemble(path: &Path, net: &EnsembleNetwork) -> Result<()> {
    save_json(path, net)
}

pub fn load_ensemble(path: &Path) -> Result<EnsembleNetwork> {
    let net: EnsembleNetwork = load_json(path)?;
    check_version(ENSEMBLE_FILE_VERSION, net.version)?;
    net.validate()?;
    Ok(net)
}

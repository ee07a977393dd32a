//! Analog multiply-accumulate validation against closed-form currents.
//!
//! Writes random levels into one kernel, computes the exact currents every
//! input vector should produce from the true device states, then measures
//! the same products through the chip's readout path. The comparison yields
//! a slope/intercept/R^2 fit plus a tail check on how many averaged
//! measurements stay within the expected sampling error.

use serde::{Deserialize, Serialize};

use super::csvutil::{fmt_f64, provenance_line, write_csv};
use super::ExperimentConfig;
use crate::chipsim::{
    new_chip, random_levels_write, NoiseConfig, DEFAULT_MARGIN, DEFAULT_MAX_ITERS,
};
use crate::jsonio::save_json;
use crate::rngutil::{derive_seed, rng_from};
use crate::{Error, Result};

use rand::Rng;

pub(crate) const VMM_VECTORS: usize = 100;
pub(crate) const VMM_REPEATS: usize = 20;
pub(crate) const PAIRS_CSV_HEADER: &str = "vector,row,theory_uA,measured_mean_uA,measured_std_uA";
const MAP_CSV_HEADER: &str = "row,col,g_true_uS,g_read_uS";

/// One (input vector, output row) comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmmPoint {
    pub vector: usize,
    pub row: usize,
    /// Exact current from the true conductances, microamps.
    pub theory: f64,
    pub measured_mean: f64,
    pub measured_std: f64,
}

/// Fit statistics over all points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmmSummary {
    pub ideal: bool,
    pub n_vectors: usize,
    pub n_repeats: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Root mean square deviation of measured means from theory, microamps.
    pub rmse_ua: f64,
    pub max_abs_dev_ua: f64,
    /// Largest deviation relative to `max(|theory|, 1 uA)`.
    pub max_rel_dev: f64,
    /// Four standard errors of a repeat-averaged measurement.
    pub tail_bound_ua: f64,
    /// Fraction of points whose mean lies within the tail bound.
    pub frac_within_tail_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmmReport {
    pub summary: VmmSummary,
    pub points: Vec<VmmPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VmmValidateArtifacts {
    pub config_hash: String,
    pub ideal: VmmSummary,
    pub noisy: VmmReport,
}

/// Compare measured kernel products against exact currents.
///
/// With `ideal` set the chip draws no noise and the comparison must be exact
/// to floating-point accumulation error; otherwise the default noise preset
/// applies.
pub fn vmm_validation(seed: u64, ideal: bool) -> Result<VmmReport> {
    let noise = NoiseConfig::default_noisy(derive_seed(seed, "vmm/chip", 0));
    let mut chip = new_chip(noise, ideal)?;
    let kernel = 0;
    random_levels_write(
        &mut chip,
        kernel,
        derive_seed(seed, "vmm/write", 0),
        DEFAULT_MARGIN,
        DEFAULT_MAX_ITERS,
    )?;
    let truth = chip.true_conductance_map(kernel)?;
    let rows = truth.rows();
    let cols = truth.cols();
    let v_read = chip.levels().v_read;

    let mut rng = rng_from(derive_seed(seed, "vmm/vectors", 0));
    let mut points = Vec::with_capacity(VMM_VECTORS * rows);
    for vector in 0..VMM_VECTORS {
        let volts: Vec<f64> = (0..cols).map(|_| rng.gen_range(-v_read..v_read)).collect();
        let theory: Vec<f64> = (0..rows)
            .map(|r| truth.row(r).iter().zip(&volts).map(|(g, v)| g * v).sum())
            .collect();

        let mut sums = vec![0.0; rows];
        let mut sq_sums = vec![0.0; rows];
        for _ in 0..VMM_REPEATS {
            let currents = chip.kernel_vmm(kernel, &volts)?;
            for (r, &i) in currents.iter().enumerate() {
                sums[r] += i;
                sq_sums[r] += i * i;
            }
        }
        for r in 0..rows {
            let n = VMM_REPEATS as f64;
            let mean = sums[r] / n;
            let var = ((sq_sums[r] - n * mean * mean) / (n - 1.0)).max(0.0);
            points.push(VmmPoint {
                vector,
                row: r,
                theory: theory[r],
                measured_mean: mean,
                measured_std: var.sqrt(),
            });
        }
    }

    let sigma = chip.noise().read_current_sigma;
    let tail_bound = if sigma > 0.0 {
        4.0 * sigma / (VMM_REPEATS as f64).sqrt()
    } else {
        1e-9
    };
    let summary = fit_summary(&points, ideal, tail_bound)?;
    Ok(VmmReport { summary, points })
}

fn fit_summary(points: &[VmmPoint], ideal: bool, tail_bound: f64) -> Result<VmmSummary> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::InvalidInput("too few points to fit".into()));
    }
    let mx = points.iter().map(|p| p.theory).sum::<f64>() / n;
    let my = points.iter().map(|p| p.measured_mean).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.theory - mx).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.theory - mx) * (p.measured_mean - my))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("degenerate theory spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.measured_mean - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.measured_mean - (slope * p.theory + intercept)).powi(2))
        .sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let devs: Vec<f64> = points.iter().map(|p| p.measured_mean - p.theory).collect();
    let rmse = (devs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let max_abs_dev = devs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let max_rel_dev = points
        .iter()
        .map(|p| (p.measured_mean - p.theory).abs() / p.theory.abs().max(1.0))
        .fold(0.0f64, f64::max);
    let within = devs.iter().filter(|d| d.abs() <= tail_bound).count();
    Ok(VmmSummary {
        ideal,
        n_vectors: VMM_VECTORS,
        n_repeats: VMM_REPEATS,
        slope,
        intercept,
        r2,
        rmse_ua: rmse,
        max_abs_dev_ua: max_abs_dev,
        max_rel_dev,
        tail_bound_ua: tail_bound,
        frac_within_tail_bound: within as f64 / n,
    })
}

/// Run the validation in both ideal and noisy modes and write the artifacts:
/// the measured pairs, the extracted conductance map of the written kernel,
/// and a JSON report with both summaries.
pub fn cmd_vmm_validate(config: &ExperimentConfig) -> Result<VmmValidateArtifacts> {
    config.validate()?;
    let ideal = vmm_validation(config.seed, true)?;
    let noisy = vmm_validation(config.seed, false)?;

    let dir = config.vmm_dir();
    let hash = config.config_hash();
    let pair_rows: Vec<String> = noisy
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{}",
                p.vector,
                p.row,
                fmt_f64(p.theory),
                fmt_f64(p.measured_mean),
                fmt_f64(p.measured_std)
            )
        })
        .collect();
    write_csv(
        &dir.join("pairs.csv"),
        &[provenance_line(&hash)],
        PAIRS_CSV_HEADER,
        &pair_rows,
    )?;

    // Re-create the noisy chip to export what calibration would see next to
    // the true device states.
    let noise = NoiseConfig::default_noisy(derive_seed(config.seed, "vmm/chip", 0));
    let mut chip = new_chip(noise, false)?;
    random_levels_write(
        &mut chip,
        0,
        derive_seed(config.seed, "vmm/write", 0),
        DEFAULT_MARGIN,
        DEFAULT_MAX_ITERS,
    )?;
    let truth = chip.true_conductance_map(0)?;
    let read = chip.read_conductance_map(0)?;
    let map_rows: Vec<String> = (0..truth.rows())
        .flat_map(|r| {
            let truth = &truth;
            let read = &read;
            (0..truth.cols()).map(move |c| {
                format!("{r},{c},{},{}", fmt_f64(truth.at(r, c)), fmt_f64(read.at(r, c)))
            })
        })
        .collect();
    write_csv(
        &dir.join("extracted_map.csv"),
        &[provenance_line(&hash)],
        MAP_CSV_HEADER,
        &map_rows,
    )?;

    let artifacts = VmmValidateArtifacts {
        config_hash: hash,
        ideal: ideal.summary,
        noisy,
    };
    save_json(
        &dir.join("report.json"),
        &serde_json::json!({
            "config_hash": artifacts.config_hash,
            "ideal": artifacts.ideal,
            "noisy": artifacts.noisy.summary,
        }),
    )?;
    Ok(artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_products_match_theory_exactly() {
        let report = vmm_validation(3, true).unwrap();
        assert_eq!(report.points.len(), VMM_VECTORS * 25);
        let worst_rel = report
            .points
            .iter()
            .map(|p| (p.measured_mean - p.theory).abs() / p.theory.abs().max(1.0))
            .fold(0.0f64, f64::max);
        assert!(worst_rel < 1e-12, "worst relative deviation {worst_rel}");
        assert!((report.summary.slope - 1.0).abs() < 1e-12);
        assert!(report.summary.intercept.abs() < 1e-9);
    }

    #[test]
    fn noisy_products_stay_on_the_identity_line() {
        let report = vmm_validation(3, false).unwrap();
        let s = &report.summary;
        assert!(
            (s.slope - 1.0).abs() < 0.01,
            "slope {} strays from unity",
            s.slope
        );
        assert!(s.r2 > 0.999, "r2 {}", s.r2);
        assert!(s.frac_within_tail_bound > 0.99, "{}", s.frac_within_tail_bound);
        let expected_se = 0.5 / (VMM_REPEATS as f64).sqrt();
        assert!(s.rmse_ua < 3.0 * expected_se, "rmse {}", s.rmse_ua);
    }

    #[test]
    fn artifacts_land_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::default();
        config.out_dir = dir.path().to_path_buf();
        let arts = cmd_vmm_validate(&config).unwrap();
        assert!(arts.ideal.ideal);
        assert!(!arts.noisy.summary.ideal);
        assert!(dir.path().join("vmm/pairs.csv").exists());
        assert!(dir.path().join("vmm/extracted_map.csv").exists());
        assert!(dir.path().join("vmm/report.json").exists());
    }
}

//! Redundant readout: per-copy currents, masked averaging, and decoding.

use crate::chipsim::SimChip;
use crate::{Error, Result};

use super::planner::{LayerMapping, Placement, Polarity};

/// Averaged differential currents for one layer, microamps per output.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCurrents {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    /// Outputs that could not draw on `beta` clean copies in some polarity
    /// and fell back to whatever rows exist.
    pub degraded_outputs: usize,
}

/// Average each output over its `beta` lowest-index clean copies. Outputs
/// with fewer clean copies average what is there; outputs with none fall
/// back to the raw row of the first copy. Returns the averages and how many
/// outputs needed a fallback.
pub(crate) fn masked_average(
    clean: &[Vec<usize>],
    currents_by_copy: &[Vec<f64>],
    beta: usize,
) -> (Vec<f64>, usize) {
    let mut out = Vec::with_capacity(clean.len());
    let mut degraded = 0;
    for (j, list) in clean.iter().enumerate() {
        let value = if list.len() >= beta {
            list[..beta]
                .iter()
                .map(|&c| currents_by_copy[c][j])
                .sum::<f64>()
                / beta as f64
        } else if !list.is_empty() {
            degraded += 1;
            list.iter().map(|&c| currents_by_copy[c][j]).sum::<f64>() / list.len() as f64
        } else if !currents_by_copy.is_empty() {
            degraded += 1;
            currents_by_copy[0][j]
        } else {
            degraded += 1;
            0.0
        };
        out.push(value);
    }
    (out, degraded)
}

fn copies_sorted(lm: &LayerMapping, polarity: Polarity) -> Vec<&Placement> {
    let mut v: Vec<&Placement> = lm.placements_of(polarity).collect();
    v.sort_by_key(|p| p.copy_index);
    v
}

/// Drive one layer's placements with the given block-column voltages and
/// return the ensemble-averaged differential currents. Each copy is read in
/// its own kernel operation, so copies carry independent read noise.
pub fn ensemble_vmm(
    chip: &mut SimChip,
    lm: &LayerMapping,
    voltages: &[f64],
) -> Result<LayerCurrents> {
    if voltages.len() != lm.cols {
        return Err(Error::InvalidInput(format!(
            "expected {} block voltages, got {}",
            lm.cols,
            voltages.len()
        )));
    }
    let kernel_cols = chip.geometry().cols_per_kernel;
    let mut degraded = 0;
    let mut averaged: Vec<Vec<f64>> = Vec::with_capacity(2);
    for polarity in Polarity::BOTH {
        let copies = copies_sorted(lm, polarity);
        let mut by_copy: Vec<Vec<f64>> = Vec::with_capacity(copies.len());
        for p in &copies {
            let mut v = vec![0.0; kernel_cols];
            v[p.col0..p.col0 + p.cols].copy_from_slice(voltages);
            let rows = chip.kernel_vmm(p.kernel, &v)?;
            by_copy.push(rows[p.row0..p.row0 + p.rows].to_vec());
        }
        let clean = match polarity {
            Polarity::Pos => &lm.clean_pos,
            Polarity::Neg => &lm.clean_neg,
        };
        let (avg, deg) = masked_average(clean, &by_copy, lm.beta);
        degraded += deg;
        averaged.push(avg);
    }
    let neg = averaged.pop().expect("two polarities");
    let pos = averaged.pop().expect("two polarities");
    Ok(LayerCurrents {
        pos,
        neg,
        degraded_outputs: degraded,
    })
}

/// Turn averaged differential currents back into layer pre-activations:
/// scale the current difference by the calibrated conductance gap, the read
/// voltage, and the input scaling, then apply the layer's weight scale.
pub fn decode_currents(
    pos: &[f64],
    neg: &[f64],
    g_diff: f64,
    g_norm: f64,
    weight_scale: f64,
    input_scale: f64,
    v_read: f64,
) -> Result<Vec<f64>> {
    if pos.len() != neg.len() {
        return Err(Error::InvalidInput("polarity current lengths differ".into()));
    }
    if !(g_diff > 0.0) || !g_diff.is_finite() {
        return Err(Error::DegenerateCalibration(format!(
            "conductance gap {g_diff} uS is not usable"
        )));
    }
    if !(g_norm > 0.0) || !(input_scale > 0.0) || !(v_read > 0.0) {
        return Err(Error::InvalidInput(
            "g_norm, input_scale and v_read must be positive".into(),
        ));
    }
    let denom = g_norm * g_diff * v_read * input_scale;
    Ok(pos
        .iter()
        .zip(neg)
        .map(|(ip, in_)| (ip - in_) / denom * weight_scale)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipsim::{
        new_chip, program_block, BlockAddr, NoiseConfig, DEFAULT_MARGIN, DEFAULT_MAX_ITERS,
    };
    use crate::matrix::Mat;

    #[test]
    fn masked_average_uses_the_lowest_beta_clean_copies() {
        // Three copies of two outputs; the figure-style pattern where the
        // first copy of output 0 and the last copy of output 1 are dirty.
        let clean = vec![vec![1, 2], vec![0, 1]];
        let by_copy = vec![vec![10.0, 100.0], vec![20.0, 200.0], vec![40.0, 400.0]];
        let (avg, degraded) = masked_average(&clean, &by_copy, 2);
        assert_eq!(avg, vec![(20.0 + 40.0) / 2.0, (100.0 + 200.0) / 2.0]);
        assert_eq!(degraded, 0);
    }

    #[test]
    fn masked_average_ignores_extra_clean_copies() {
        let clean = vec![vec![0, 1, 2]];
        let by_copy = vec![vec![8.0], vec![16.0], vec![1000.0]];
        let (avg, degraded) = masked_average(&clean, &by_copy, 2);
        assert_eq!(avg, vec![12.0]);
        assert_eq!(degraded, 0);
    }

    #[test]
    fn masked_average_matches_brute_force() {
        // Deterministic pseudo-random clean sets and currents.
        let mut x = 12345u64;
        let mut next = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 33) as usize
        };
        for beta in 1..=4 {
            let n_copies = 6;
            let n_out = 9;
            let mut clean: Vec<Vec<usize>> = Vec::new();
            for _ in 0..n_out {
                let mut list: Vec<usize> =
                    (0..n_copies).filter(|_| next() % 3 != 0).collect();
                list.sort_unstable();
                clean.push(list);
            }
            let by_copy: Vec<Vec<f64>> = (0..n_copies)
                .map(|_| (0..n_out).map(|_| (next() % 1000) as f64 / 7.0).collect())
                .collect();
            let (avg, _) = masked_average(&clean, &by_copy, beta);
            for j in 0..n_out {
                let list = &clean[j];
                let want = if list.len() >= beta {
                    let mut s = 0.0;
                    for &c in list.iter().take(beta) {
                        s += by_copy[c][j];
                    }
                    s / beta as f64
                } else if !list.is_empty() {
                    list.iter().map(|&c| by_copy[c][j]).sum::<f64>() / list.len() as f64
                } else {
                    by_copy[0][j]
                };
                assert!((avg[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fallbacks_are_counted_and_used() {
        let clean = vec![vec![0], vec![]];
        let by_copy = vec![vec![10.0, 50.0], vec![20.0, 60.0]];
        let (avg, degraded) = masked_average(&clean, &by_copy, 2);
        // One clean copy averages itself; none falls back to copy 0 raw.
        assert_eq!(avg, vec![10.0, 50.0]);
        assert_eq!(degraded, 2);
    }

    #[test]
    fn hand_built_mapping_averages_the_right_rows() {
        // Two-output, two-input layer with three copies per polarity on an
        // ideal chip. Conductances are programmed to distinct values so each
        // copy's row current is distinguishable.
        let mut chip = new_chip(NoiseConfig::ideal(3), true).unwrap();
        let mut placements = Vec::new();
        let mut expected: Vec<Vec<[f64; 2]>> = Vec::new();
        for (pi, polarity) in Polarity::BOTH.into_iter().enumerate() {
            let mut rows_for_polarity = Vec::new();
            for copy in 0..3usize {
                let row0 = copy * 3;
                let col0 = pi * 10;
                let g = |r: usize, c: usize| {
                    133.0 + 10.0 * (pi as f64) + 20.0 * (copy as f64) + 7.0 * r as f64
                        + 3.0 * c as f64
                };
                let targets = Mat::from_fn(2, 2, |r, c| g(r, c));
                let block = BlockAddr {
                    kernel: 1,
                    row0,
                    col0,
                    rows: 2,
                    cols: 2,
                };
                let report =
                    program_block(&mut chip, block, &targets, DEFAULT_MARGIN, DEFAULT_MAX_ITERS)
                        .unwrap();
                assert_eq!(report.success_count(), 4);
                placements.push(Placement {
                    kernel: 1,
                    row0,
                    col0,
                    rows: 2,
                    cols: 2,
                    polarity,
                    copy_index: copy,
                });
                let v = [0.1, 0.25];
                rows_for_polarity.push([
                    g(0, 0) * v[0] + g(0, 1) * v[1],
                    g(1, 0) * v[0] + g(1, 1) * v[1],
                ]);
            }
            expected.push(rows_for_polarity);
        }
        // Output 0 clean only in copies 1 and 2, output 1 in copies 0 and 1.
        let lm = LayerMapping {
            layer: 0,
            rows: 2,
            cols: 2,
            beta: 2,
            success: true,
            placements,
            clean_pos: vec![vec![1, 2], vec![0, 1]],
            clean_neg: vec![vec![1, 2], vec![0, 1]],
        };
        let got = ensemble_vmm(&mut chip, &lm, &[0.1, 0.25]).unwrap();
        assert_eq!(got.degraded_outputs, 0);
        for (pi, avg) in [&got.pos, &got.neg].into_iter().enumerate() {
            let e = &expected[pi];
            let want0 = (e[1][0] + e[2][0]) / 2.0;
            let want1 = (e[0][1] + e[1][1]) / 2.0;
            assert!((avg[0] - want0).abs() < 1e-12, "pol {pi}: {} vs {want0}", avg[0]);
            assert!((avg[1] - want1).abs() < 1e-12, "pol {pi}: {} vs {want1}", avg[1]);
        }
    }

    #[test]
    fn decode_hand_case() {
        // One +1 weight at full input: 69.9 uA against 39.9 uA, a 30 uA gap,
        // over a 100 uS calibrated span at 0.3 V.
        let z = decode_currents(&[69.9], &[39.9], 100.0, 1.0, 1.0, 1.0, 0.3).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
        // Scaling by the weight scale and undoing input scaling both apply.
        let z = decode_currents(&[69.9], &[39.9], 100.0, 1.0, 0.7, 0.5, 0.3).unwrap();
        assert!((z[0] - 1.4).abs() < 1e-12);
        // g_norm above 1 shrinks the decoded value.
        let z = decode_currents(&[69.9], &[39.9], 100.0, 2.0, 1.0, 1.0, 0.3).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_rejects_degenerate_calibration() {
        assert!(matches!(
            decode_currents(&[1.0], &[0.0], 0.0, 1.0, 1.0, 1.0, 0.3),
            Err(Error::DegenerateCalibration(_))
        ));
        assert!(decode_currents(&[1.0], &[0.0], 100.0, 0.0, 1.0, 1.0, 0.3).is_err());
        assert!(decode_currents(&[1.0], &[0.0, 2.0], 100.0, 1.0, 1.0, 1.0, 0.3).is_err());
    }
}

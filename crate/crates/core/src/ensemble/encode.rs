//! Differential conductance encoding of ternary weights.

use crate::chipsim::ConductanceLevels;
use crate::matrix::{Mat, TernaryMat};
use crate::{Error, Result};

/// Conductance target blocks for one layer, one per polarity. Shapes are
/// transposed relative to the software weights: block row = output neuron,
/// block column = input.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialBlocks {
    pub pos: Mat,
    pub neg: Mat,
}

/// Encode a ternary weight matrix (inputs x outputs) as a positive and a
/// negative conductance block (outputs x inputs). A weight of +1 puts the
/// pair at (on, off), -1 at (off, on), and 0 at (on, on), so the pair
/// difference divided by the on/off gap recovers the weight.
pub fn encode_differential(t: &TernaryMat, levels: &ConductanceLevels) -> DifferentialBlocks {
    let (n_in, n_out) = (t.rows(), t.cols());
    let mut pos = Mat::zeros(n_out, n_in);
    let mut neg = Mat::zeros(n_out, n_in);
    for i in 0..n_in {
        for j in 0..n_out {
            let (gp, gn) = match t.at(i, j) {
                1 => (levels.g_on, levels.g_off),
                -1 => (levels.g_off, levels.g_on),
                _ => (levels.g_on, levels.g_on),
            };
            pos.set(j, i, gp);
            neg.set(j, i, gn);
        }
    }
    DifferentialBlocks { pos, neg }
}

/// Recover the ternary weights from a pair of conductance blocks. Used as a
/// soundness check over encodings and written chips; values off the exact
/// ternary grid are an error.
pub fn decode_differential(
    pos: &Mat,
    neg: &Mat,
    levels: &ConductanceLevels,
) -> Result<TernaryMat> {
    if pos.shape() != neg.shape() {
        return Err(Error::InvalidInput(format!(
            "polarity blocks differ in shape: {:?} vs {:?}",
            pos.shape(),
            neg.shape()
        )));
    }
    let (n_out, n_in) = pos.shape();
    let gap = levels.g_on - levels.g_off;
    let mut data = Vec::with_capacity(n_in * n_out);
    for i in 0..n_in {
        for j in 0..n_out {
            let w = (pos.at(j, i) - neg.at(j, i)) / gap;
            let snapped = w.round();
            if (w - snapped).abs() > 1e-9 || !(-1.0..=1.0).contains(&snapped) {
                return Err(Error::InvalidInput(format!(
                    "pair at output {j}, input {i} decodes to {w}, not a ternary weight"
                )));
            }
            data.push(snapped as i8);
        }
    }
    TernaryMat::new(n_in, n_out, data)
}

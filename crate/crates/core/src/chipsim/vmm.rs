//! Analog vector-matrix multiplication and conductance readout.

use rand_distr::{Distribution, Normal};

use super::program::BlockAddr;
use super::SimChip;
use crate::matrix::Mat;
use crate::{Error, Result};

/// Uniform midtread quantizer clamped at the rails.
fn quantize_midtread(x: f64, bits: u8, fullscale: f64) -> f64 {
    let step = 2.0 * fullscale / ((1u32 << bits) - 1) as f64;
    ((x / step).round() * step).clamp(-fullscale, fullscale)
}

impl SimChip {
    /// Apply column voltages to one kernel and measure all row currents.
    ///
    /// Voltages are in volts and must stay within the read voltage; currents
    /// come back in microamps. Inputs pass through the DAC and outputs
    /// through the ADC when those converters are enabled. Every row
    /// measurement carries its own additive current noise.
    pub fn kernel_vmm(&mut self, kernel: usize, col_voltages: &[f64]) -> Result<Vec<f64>> {
        let g = *self.geometry();
        if kernel >= g.n_kernels {
            return Err(Error::InvalidInput(format!(
                "kernel {kernel} outside 0..{}",
                g.n_kernels
            )));
        }
        if col_voltages.len() != g.cols_per_kernel {
            return Err(Error::InvalidInput(format!(
                "expected {} column voltages, got {}",
                g.cols_per_kernel,
                col_voltages.len()
            )));
        }
        let v_read = self.levels().v_read;
        let tol = 1e-12;
        for &v in col_voltages {
            if !v.is_finite() {
                return Err(Error::NonFinite("column voltage"));
            }
            if v.abs() > v_read + tol {
                return Err(Error::InvalidInput(format!(
                    "column voltage {v} V exceeds the read voltage {v_read} V"
                )));
            }
        }

        let (geometry, _, noise, _, conductance, rng) = self.parts_mut();
        let volts: Vec<f64> = match noise.dac_bits {
            Some(bits) => col_voltages
                .iter()
                .map(|&v| quantize_midtread(v, bits, v_read))
                .collect(),
            None => col_voltages.to_vec(),
        };
        let row_noise = if noise.read_current_sigma > 0.0 {
            Some(Normal::new(0.0, noise.read_current_sigma).expect("validated sigma"))
        } else {
            None
        };

        let cols = geometry.cols_per_kernel;
        let base = kernel * geometry.devices_per_kernel();
        let mut currents = Vec::with_capacity(geometry.rows_per_kernel);
        for r in 0..geometry.rows_per_kernel {
            let row = &conductance[base + r * cols..base + (r + 1) * cols];
            // uS times V gives uA directly.
            let mut i: f64 = row.iter().zip(&volts).map(|(g, v)| g * v).sum();
            if let Some(n) = &row_noise {
                i += n.sample(rng);
            }
            if let Some(bits) = noise.adc_bits {
                i = quantize_midtread(i, bits, noise.adc_fullscale);
            }
            currents.push(i);
        }
        Ok(currents)
    }

    /// Read every device of a block back through the current measurement,
    /// so each value carries read noise on the conductance axis.
    pub fn read_block(&mut self, block: BlockAddr) -> Result<Mat> {
        block.validate(self)?;
        let (geometry, levels, noise, _, conductance, rng) = self.parts_mut();
        let read_sigma = noise.read_current_sigma / levels.v_read;
        let dist = if read_sigma > 0.0 {
            Some(Normal::new(0.0, read_sigma).expect("validated sigma"))
        } else {
            None
        };
        let mut out = Mat::zeros(block.rows, block.cols);
        for r in 0..block.rows {
            for c in 0..block.cols {
                let idx = geometry.index(block.kernel, block.row0 + r, block.col0 + c);
                let g = conductance[idx] + dist.as_ref().map_or(0.0, |n| n.sample(rng));
                out.set(r, c, g);
            }
        }
        Ok(out)
    }

    /// Noisy conductance map of one full kernel.
    pub fn read_conductance_map(&mut self, kernel: usize) -> Result<Mat> {
        let block = BlockAddr::full_kernel(self, kernel);
        self.read_block(block)
    }

    /// Stored conductances of a block without measurement noise.
    pub fn true_block(&self, block: BlockAddr) -> Result<Mat> {
        block.validate(self)?;
        Ok(Mat::from_fn(block.rows, block.cols, |r, c| {
            self.true_conductance(block.kernel, block.row0 + r, block.col0 + c)
                .expect("validated block")
        }))
    }

    pub fn true_conductance_map(&self, kernel: usize) -> Result<Mat> {
        let block = BlockAddr::full_kernel(self, kernel);
        self.true_block(block)
    }
}

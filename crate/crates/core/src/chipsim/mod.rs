//! Simulated multi-kernel memristive crossbar chip.
//!
//! The chip holds 32 independent 25x25 kernels. Each device carries a fault
//! state and a conductance in microsiemens. Programming follows a margin
//! scheme: re-draw the conductance around the target, read back with noise,
//! accept once the read lands within the margin. Vector-matrix multiplication
//! applies column voltages and accumulates row currents in microamps, with
//! optional converter quantization on both sides.

mod faults;
mod io;
mod program;
mod vmm;

pub use faults::{inject_faults, load_fault_csv, write_fault_csv, FaultMap, FaultReport};
pub use io::{load_chip, save_chip, CHIP_FILE_VERSION};
pub use program::{
    program_block, program_device, random_levels_write, BlockAddr, BlockReport, ProgramOutcome,
    DEFAULT_MARGIN, DEFAULT_MAX_ITERS,
};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rngutil::rng_from;
use crate::{Error, Result};

/// Kernel grid layout. The default models the full 20,000-device chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipGeometry {
    pub n_kernels: usize,
    pub rows_per_kernel: usize,
    pub cols_per_kernel: usize,
}

impl Default for ChipGeometry {
    fn default() -> Self {
        ChipGeometry {
            n_kernels: 32,
            rows_per_kernel: 25,
            cols_per_kernel: 25,
        }
    }
}

impl ChipGeometry {
    pub fn devices_per_kernel(&self) -> usize {
        self.rows_per_kernel * self.cols_per_kernel
    }

    pub fn device_count(&self) -> usize {
        self.n_kernels * self.devices_per_kernel()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_kernels == 0 || self.rows_per_kernel == 0 || self.cols_per_kernel == 0 {
            return Err(Error::InvalidInput("geometry dimensions must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn index(&self, kernel: usize, row: usize, col: usize) -> usize {
        kernel * self.devices_per_kernel() + row * self.cols_per_kernel + col
    }

    pub fn check_addr(&self, kernel: usize, row: usize, col: usize) -> Result<()> {
        if kernel >= self.n_kernels || row >= self.rows_per_kernel || col >= self.cols_per_kernel {
            return Err(Error::InvalidInput(format!(
                "device address ({kernel}, {row}, {col}) outside {}x{}x{}",
                self.n_kernels, self.rows_per_kernel, self.cols_per_kernel
            )));
        }
        Ok(())
    }
}

/// The four programmable conductance states, the physical tuning window the
/// devices can actually reach, and the read voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceLevels {
    /// Strictly increasing, in microsiemens.
    pub levels: [f64; 4],
    pub g_off: f64,
    pub g_on: f64,
    /// Floor of the tuning window; stuck-low devices sit here.
    pub g_min: f64,
    /// Ceiling of the tuning window; stuck-high devices sit here. Wider than
    /// the level span so programming excursions are not truncated at the
    /// extreme levels.
    pub g_max: f64,
    /// Read voltage in volts.
    pub v_read: f64,
}

impl Default for ConductanceLevels {
    fn default() -> Self {
        ConductanceLevels {
            levels: [133.0, 167.0, 200.0, 233.0],
            g_off: 133.0,
            g_on: 233.0,
            g_min: 100.0,
            g_max: 300.0,
            v_read: 0.3,
        }
    }
}

impl ConductanceLevels {
    pub fn validate(&self) -> Result<()> {
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("levels must be strictly increasing".into()));
        }
        if self.g_off != self.levels[0] || self.g_on != self.levels[3] {
            return Err(Error::InvalidInput(
                "g_off and g_on must be the extreme levels".into(),
            ));
        }
        if !(self.g_min > 0.0 && self.g_min <= self.g_off && self.g_max >= self.g_on) {
            return Err(Error::InvalidInput(
                "tuning window [g_min, g_max] must contain the levels".into(),
            ));
        }
        if !(self.v_read > 0.0) {
            return Err(Error::InvalidInput("v_read must be positive".into()));
        }
        Ok(())
    }

    /// Conductance a shorted device presents, far above the tuning window.
    pub fn shorted_conductance(&self) -> f64 {
        10.0 * self.g_max
    }
}

/// Noise and converter model. Sigmas of zero draw nothing from the stream,
/// so an ideal chip's generator never advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-iteration programming error scale, microsiemens.
    pub prog_sigma: f64,
    /// Additive per-row read noise, microamps.
    pub read_current_sigma: f64,
    pub adc_bits: Option<u8>,
    /// Symmetric ADC range, microamps.
    pub adc_fullscale: f64,
    pub dac_bits: Option<u8>,
    pub seed: u64,
}

impl NoiseConfig {
    /// No noise, no converters.
    pub fn ideal(seed: u64) -> Self {
        NoiseConfig {
            prog_sigma: 0.0,
            read_current_sigma: 0.0,
            adc_bits: None,
            adc_fullscale: 0.0,
            dac_bits: None,
            seed,
        }
    }

    /// Analog noise only: programming spread plus row read noise.
    pub fn default_noisy(seed: u64) -> Self {
        NoiseConfig {
            prog_sigma: 8.0,
            read_current_sigma: 0.5,
            adc_bits: None,
            adc_fullscale: 0.0,
            dac_bits: None,
            seed,
        }
    }

    /// Analog noise plus a 12-bit ADC on the row currents.
    pub fn hardware_like(seed: u64) -> Self {
        NoiseConfig {
            adc_bits: Some(12),
            adc_fullscale: 850.0,
            ..NoiseConfig::default_noisy(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prog_sigma < 0.0 || self.read_current_sigma < 0.0 {
            return Err(Error::InvalidInput("noise sigmas must be nonnegative".into()));
        }
        for bits in [self.adc_bits, self.dac_bits].into_iter().flatten() {
            if !(4..=16).contains(&bits) {
                return Err(Error::InvalidInput(format!(
                    "converter resolution {bits} outside 4..=16 bits"
                )));
            }
        }
        if self.adc_bits.is_some() && !(self.adc_fullscale > 0.0) {
            return Err(Error::InvalidInput(
                "adc_fullscale must be positive when the ADC is enabled".into(),
            ));
        }
        Ok(())
    }
}

/// Per-device fault state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    Working,
    /// Pinned at the top programmable state.
    StuckHigh,
    /// Pinned at the bottom programmable state.
    StuckLow,
    /// Electrically shorted, far above the programmable span.
    Shorted,
}

impl FaultKind {
    pub fn is_faulted(self) -> bool {
        self != FaultKind::Working
    }

    pub fn as_u8(self) -> u8 {
        match self {
            FaultKind::Working => 0,
            FaultKind::StuckHigh => 1,
            FaultKind::StuckLow => 2,
            FaultKind::Shorted => 3,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(FaultKind::Working),
            1 => Ok(FaultKind::StuckHigh),
            2 => Ok(FaultKind::StuckLow),
            3 => Ok(FaultKind::Shorted),
            other => Err(Error::InvalidInput(format!("unknown fault code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultKind::Working => "Working",
            FaultKind::StuckHigh => "StuckHigh",
            FaultKind::StuckLow => "StuckLow",
            FaultKind::Shorted => "Shorted",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "Working" => Ok(FaultKind::Working),
            "StuckHigh" => Ok(FaultKind::StuckHigh),
            "StuckLow" => Ok(FaultKind::StuckLow),
            "Shorted" => Ok(FaultKind::Shorted),
            other => Err(Error::InvalidInput(format!("unknown fault kind {other:?}"))),
        }
    }

    /// Conductance a fault pins its device to.
    pub fn pinned_conductance(self, levels: &ConductanceLevels) -> Option<f64> {
        match self {
            FaultKind::Working => None,
            FaultKind::StuckHigh => Some(levels.g_max),
            FaultKind::StuckLow => Some(levels.g_min),
            FaultKind::Shorted => Some(levels.shorted_conductance()),
        }
    }
}

/// The simulated chip: device states plus the noise generator.
#[derive(Debug, Clone)]
pub struct SimChip {
    geometry: ChipGeometry,
    levels: ConductanceLevels,
    noise: NoiseConfig,
    faults: Vec<FaultKind>,
    conductance: Vec<f64>,
    rng: ChaCha8Rng,
}

/// All devices start Working at the bottom state. With `ideal` the noise
/// config is zeroed and converters are disabled, so programming is exact.
pub fn new_chip(noise: NoiseConfig, ideal: bool) -> Result<SimChip> {
    let noise = if ideal {
        NoiseConfig::ideal(noise.seed)
    } else {
        noise
    };
    SimChip::with_geometry(ChipGeometry::default(), ConductanceLevels::default(), noise)
}

impl SimChip {
    pub fn with_geometry(
        geometry: ChipGeometry,
        levels: ConductanceLevels,
        noise: NoiseConfig,
    ) -> Result<Self> {
        geometry.validate()?;
        levels.validate()?;
        noise.validate()?;
        let n = geometry.device_count();
        let rng = rng_from(noise.seed);
        let conductance = vec![levels.g_min; n];
        Ok(SimChip {
            geometry,
            levels,
            noise,
            faults: vec![FaultKind::Working; n],
            conductance,
            rng,
        })
    }

    pub fn geometry(&self) -> &ChipGeometry {
        &self.geometry
    }

    pub fn levels(&self) -> &ConductanceLevels {
        &self.levels
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn fault(&self, kernel: usize, row: usize, col: usize) -> Result<FaultKind> {
        self.geometry.check_addr(kernel, row, col)?;
        Ok(self.faults[self.geometry.index(kernel, row, col)])
    }

    /// Stored (true) conductance of one device, without read noise.
    pub fn true_conductance(&self, kernel: usize, row: usize, col: usize) -> Result<f64> {
        self.geometry.check_addr(kernel, row, col)?;
        Ok(self.conductance[self.geometry.index(kernel, row, col)])
    }

    /// Snapshot of the fault bitmap, the planner's input.
    pub fn fault_map(&self) -> FaultMap {
        FaultMap::from_kinds(self.geometry, self.faults.clone())
    }

    pub(crate) fn parts_mut(
        &mut self,
    ) -> (&ChipGeometry, &ConductanceLevels, &NoiseConfig, &mut Vec<FaultKind>, &mut Vec<f64>, &mut ChaCha8Rng)
    {
        (
            &self.geometry,
            &self.levels,
            &self.noise,
            &mut self.faults,
            &mut self.conductance,
            &mut self.rng,
        )
    }
}

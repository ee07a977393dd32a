//! Chip snapshots on disk, including the noise generator state.

use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{ChipGeometry, ConductanceLevels, FaultKind, NoiseConfig, SimChip};
use crate::jsonio::{check_version, load_json, save_json};
use crate::rngutil::ChaCha8Rng;
use crate::{Error, Result};

pub const CHIP_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ChipFile {
    version: u32,
    geometry: ChipGeometry,
    levels: ConductanceLevels,
    noise: NoiseConfig,
    /// Fault codes per device, kernel-major then row-major.
    faults: Vec<u8>,
    /// Microsiemens per device, same order.
    conductance: Vec<f64>,
    /// Hex-encoded 32-byte stream key.
    rng_seed: String,
    /// Stream position, decimal string since it can exceed 64 bits.
    rng_word_pos: String,
}

/// Write the full chip state. A reloaded chip continues the exact same
/// noise stream, so save followed by load is invisible to later calls.
pub fn save_chip(path: &Path, chip: &SimChip) -> Result<()> {
    let rng = chip.rng_ref();
    let seed_hex: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    let file = ChipFile {
        version: CHIP_FILE_VERSION,
        geometry: *chip.geometry(),
        levels: chip.levels().clone(),
        noise: chip.noise().clone(),
        faults: chip.faults_ref().iter().map(|k| k.as_u8()).collect(),
        conductance: chip.conductance_ref().to_vec(),
        rng_seed: seed_hex,
        rng_word_pos: rng.get_word_pos().to_string(),
    };
    save_json(path, &file)
}

pub fn load_chip(path: &Path) -> Result<SimChip> {
    let file: ChipFile = load_json(path)?;
    check_version(CHIP_FILE_VERSION, file.version)?;
    file.geometry.validate()?;
    file.levels.validate()?;
    file.noise.validate()?;
    let n = file.geometry.device_count();
    if file.faults.len() != n || file.conductance.len() != n {
        return Err(Error::InvalidInput(format!(
            "device arrays do not match the geometry ({} devices)",
            n
        )));
    }
    let faults = file
        .faults
        .iter()
        .map(|&b| FaultKind::from_u8(b))
        .collect::<Result<Vec<_>>>()?;
    if file.rng_seed.len() != 64 || !file.rng_seed.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::InvalidInput("malformed rng seed".into()));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in file.rng_seed.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk).expect("hex digits");
        key[i] = u8::from_str_radix(s, 16).expect("hex digits");
    }
    let word_pos: u128 = file
        .rng_word_pos
        .parse()
        .map_err(|_| Error::InvalidInput("malformed rng position".into()))?;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_word_pos(word_pos);
    Ok(SimChip::from_parts(
        file.geometry,
        file.levels,
        file.noise,
        faults,
        file.conductance,
        rng,
    ))
}

impl SimChip {
    pub(crate) fn rng_ref(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub(crate) fn faults_ref(&self) -> &[FaultKind] {
        &self.faults
    }

    pub(crate) fn conductance_ref(&self) -> &[f64] {
        &self.conductance
    }

    pub(crate) fn from_parts(
        geometry: ChipGeometry,
        levels: ConductanceLevels,
        noise: NoiseConfig,
        faults: Vec<FaultKind>,
        conductance: Vec<f64>,
        rng: ChaCha8Rng,
    ) -> Self {
        SimChip {
            geometry,
            levels,
            noise,
            faults,
            conductance,
            rng,
        }
    }
}

//! Fault bitmaps: injection, snapshots, and CSV export.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use super::{ChipGeometry, FaultKind, SimChip};
use crate::rngutil::rng_from;
use crate::{Error, Result};

/// Per-device fault kinds for one chip, independent of conductances.
/// The ensemble planner works from this alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultMap {
    geometry: ChipGeometry,
    kinds: Vec<FaultKind>,
}

impl FaultMap {
    pub fn new_clean(geometry: ChipGeometry) -> Self {
        let n = geometry.device_count();
        FaultMap {
            geometry,
            kinds: vec![FaultKind::Working; n],
        }
    }

    pub(crate) fn from_kinds(geometry: ChipGeometry, kinds: Vec<FaultKind>) -> Self {
        debug_assert_eq!(kinds.len(), geometry.device_count());
        FaultMap { geometry, kinds }
    }

    pub fn geometry(&self) -> &ChipGeometry {
        &self.geometry
    }

    pub fn kind(&self, kernel: usize, row: usize, col: usize) -> FaultKind {
        self.kinds[self.geometry.index(kernel, row, col)]
    }

    pub fn set_kind(&mut self, kernel: usize, row: usize, col: usize, kind: FaultKind) {
        let i = self.geometry.index(kernel, row, col);
        self.kinds[i] = kind;
    }

    pub fn is_faulted(&self, kernel: usize, row: usize, col: usize) -> bool {
        self.kind(kernel, row, col).is_faulted()
    }

    /// Number of faulted devices in one kernel.
    pub fn kernel_fault_count(&self, kernel: usize) -> usize {
        let per = self.geometry.devices_per_kernel();
        self.kinds[kernel * per..(kernel + 1) * per]
            .iter()
            .filter(|k| k.is_faulted())
            .count()
    }

    pub fn total_fault_count(&self) -> usize {
        self.kinds.iter().filter(|k| k.is_faulted()).count()
    }
}

/// What an injection run did, kernel by kernel.
#[derive(Debug, Clone)]
pub struct FaultReport {
    pub rate: f64,
    pub mode: FaultKind,
    pub per_kernel: Vec<usize>,
    pub map: FaultMap,
}

/// Set exactly `round(rate * devices_per_kernel)` devices per kernel to
/// `mode`, chosen uniformly without replacement. Positions come from their
/// own stream seeded by `seed`, not from the chip's noise generator.
pub fn inject_faults(chip: &mut SimChip, rate: f64, mode: FaultKind, seed: u64) -> Result<FaultReport> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("fault rate {rate} outside [0, 1]")));
    }
    if mode == FaultKind::Working {
        return Err(Error::InvalidInput("cannot inject Working as a fault mode".into()));
    }
    let per = chip.geometry().devices_per_kernel();
    let n_kernels = chip.geometry().n_kernels;
    let n_inject = (rate * per as f64).round() as usize;
    let mut rng = rng_from(seed);
    let mut per_kernel = Vec::with_capacity(n_kernels);

    let (geometry, levels, _, faults, conductance, _) = chip.parts_mut();
    let pinned = mode
        .pinned_conductance(levels)
        .expect("non-Working mode always pins");
    for kernel in 0..n_kernels {
        // Partial Fisher-Yates: the first n_inject slots end up a uniform
        // sample without replacement.
        let base = kernel * per;
        let mut slots: Vec<usize> = (0..per).collect();
        for i in 0..n_inject {
            let j = rng.gen_range(i..per);
            slots.swap(i, j);
            let idx = base + slots[i];
            faults[idx] = mode;
            conductance[idx] = pinned;
        }
        per_kernel.push(n_inject);
    }
    let map = FaultMap::from_kinds(*geometry, faults.clone());
    Ok(FaultReport {
        rate,
        mode,
        per_kernel,
        map,
    })
}

/// Write the faulted devices of a map as `kernel,row,col,fault` rows.
/// Working devices are implied and omitted.
pub fn write_fault_csv(path: &Path, map: &FaultMap) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let g = map.geometry();
    (|| -> std::io::Result<()> {
        writeln!(
            w,
            "# geometry: {} kernels x {} rows x {} cols",
            g.n_kernels, g.rows_per_kernel, g.cols_per_kernel
        )?;
        writeln!(w, "kernel,row,col,fault")?;
        for kernel in 0..g.n_kernels {
            for row in 0..g.rows_per_kernel {
                for col in 0..g.cols_per_kernel {
                    let kind = map.kind(kernel, row, col);
                    if kind.is_faulted() {
                        writeln!(w, "{kernel},{row},{col},{}", kind.name())?;
                    }
                }
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

pub fn load_fault_csv(path: &Path) -> Result<FaultMap> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut geometry: Option<ChipGeometry> = None;
    let mut map: Option<FaultMap> = None;
    let mut saw_header = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# geometry:") {
            geometry = Some(parse_geometry(path, lineno, rest)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "kernel,row,col,fault" {
                return Err(Error::parse(path, lineno, "expected header kernel,row,col,fault"));
            }
            saw_header = true;
            map = Some(FaultMap::new_clean(geometry.ok_or_else(|| {
                Error::parse(path, lineno, "missing geometry comment before header")
            })?));
            continue;
        }
        let map = map.as_mut().expect("created with header");
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, lineno, format!("expected 4 fields, got {}", fields.len())));
        }
        let kernel: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad kernel index"))?;
        let row: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad row index"))?;
        let col: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad col index"))?;
        map.geometry()
            .check_addr(kernel, row, col)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let kind = FaultKind::from_name(fields[3])
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        map.set_kind(kernel, row, col, kind);
    }
    map.ok_or_else(|| Error::parse(path, 0, "empty fault file"))
}

fn parse_geometry(path: &Path, lineno: usize, rest: &str) -> Result<ChipGeometry> {
    let nums: Vec<usize> = rest
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap_or(0))
        .collect();
    if nums.len() != 3 || nums.contains(&0) {
        return Err(Error::parse(path, lineno, "malformed geometry comment"));
    }
    Ok(ChipGeometry {
        n_kernels: nums[0],
        rows_per_kernel: nums[1],
        cols_per_kernel: nums[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipsim::{new_chip, NoiseConfig};

    #[test]
    fn zero_rate_injects_nothing() {
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let report = inject_faults(&mut chip, 0.0, FaultKind::StuckHigh, 5).unwrap();
        assert_eq!(report.map.total_fault_count(), 0);
        assert!(report.per_kernel.iter().all(|&n| n == 0));
    }

    #[test]
    fn full_rate_faults_every_device() {
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let report = inject_faults(&mut chip, 1.0, FaultKind::StuckLow, 5).unwrap();
        assert_eq!(report.map.total_fault_count(), 20_000);
    }

    #[test]
    fn twenty_percent_is_exactly_125_per_kernel() {
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let report = inject_faults(&mut chip, 0.2, FaultKind::StuckHigh, 9).unwrap();
        for kernel in 0..32 {
            assert_eq!(report.map.kernel_fault_count(kernel), 125);
            assert_eq!(report.per_kernel[kernel], 125);
        }
    }

    #[test]
    fn injection_pins_conductance() {
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        inject_faults(&mut chip, 0.1, FaultKind::Shorted, 3).unwrap();
        let map = chip.fault_map();
        let mut seen = 0;
        for k in 0..32 {
            for r in 0..25 {
                for c in 0..25 {
                    if map.is_faulted(k, r, c) {
                        assert_eq!(chip.true_conductance(k, r, c).unwrap(), 3000.0);
                        seen += 1;
                    } else {
                        assert_eq!(chip.true_conductance(k, r, c).unwrap(), 100.0);
                    }
                }
            }
        }
        assert_eq!(seen, 32 * 63);
    }

    #[test]
    fn same_seed_reproduces_positions() {
        let mut a = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let mut b = new_chip(NoiseConfig::ideal(2), true).unwrap();
        let ra = inject_faults(&mut a, 0.15, FaultKind::StuckHigh, 42).unwrap();
        let rb = inject_faults(&mut b, 0.15, FaultKind::StuckHigh, 42).unwrap();
        assert_eq!(ra.map, rb.map);
        let mut c = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let rc = inject_faults(&mut c, 0.15, FaultKind::StuckHigh, 43).unwrap();
        assert_ne!(ra.map, rc.map);
    }

    #[test]
    fn positions_spread_over_the_kernel() {
        // A uniform draw of 125 devices should not stack into few rows.
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        let report = inject_faults(&mut chip, 0.2, FaultKind::StuckHigh, 11).unwrap();
        let mut rows_hit = [false; 25];
        for r in 0..25 {
            for c in 0..25 {
                if report.map.is_faulted(0, r, c) {
                    rows_hit[r] = true;
                }
            }
        }
        let hit = rows_hit.iter().filter(|&&h| h).count();
        assert!(hit >= 20, "125 uniform draws touched only {hit} rows");
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        assert!(inject_faults(&mut chip, 1.5, FaultKind::StuckHigh, 0).is_err());
        assert!(inject_faults(&mut chip, -0.1, FaultKind::StuckHigh, 0).is_err());
        assert!(inject_faults(&mut chip, 0.1, FaultKind::Working, 0).is_err());
    }

    #[test]
    fn fault_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("faults.csv");
        let mut chip = new_chip(NoiseConfig::ideal(1), true).unwrap();
        inject_faults(&mut chip, 0.05, FaultKind::StuckHigh, 21).unwrap();
        inject_faults(&mut chip, 0.02, FaultKind::Shorted, 22).unwrap();
        let map = chip.fault_map();
        write_fault_csv(&path, &map).unwrap();
        let loaded = load_fault_csv(&path).unwrap();
        assert_eq!(loaded, map);
    }

    #[test]
    fn fault_csv_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "# geometry: 32 kernels x 25 rows x 25 cols\nkernel,row,col,fault\n1,2,3,Sideways\n",
        )
        .unwrap();
        assert!(load_fault_csv(&path).is_err());
        std::fs::write(
            &path,
            "# geometry: 32 kernels x 25 rows x 25 cols\nkernel,row,col,fault\n99,2,3,StuckHigh\n",
        )
        .unwrap();
        assert!(load_fault_csv(&path).is_err());
    }
}

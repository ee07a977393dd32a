//! Helpers shared by the integration test targets.

use rand::Rng;
use xbar_core::chipsim::{ChipGeometry, FaultKind, FaultMap};
use xbar_core::ensemble::{EnsembleMapping, MappingOptions, Placement, Polarity};

/// Build a fault map with exactly `round(rate * devices)` faulted devices
/// per kernel, positions drawn without replacement.
pub fn random_fault_map(rng: &mut impl Rng, rate: f64, mode: FaultKind) -> FaultMap {
    let geometry = ChipGeometry::default();
    let per = geometry.devices_per_kernel();
    let count = (rate * per as f64).round() as usize;
    let mut map = FaultMap::new_clean(geometry.clone());
    for kernel in 0..geometry.n_kernels {
        for idx in rand::seq::index::sample(rng, per, count) {
            let row = idx / geometry.cols_per_kernel;
            let col = idx % geometry.cols_per_kernel;
            map.set_kind(kernel, row, col, mode);
        }
    }
    map
}

/// Check every structural invariant a planned mapping must hold against the
/// fault map it was planned for. Returns the first violation found.
pub fn mapping_violations(
    map: &FaultMap,
    mapping: &EnsembleMapping,
    dims: &[(usize, usize)],
    beta: usize,
    options: &MappingOptions,
) -> Option<String> {
    let g = map.geometry();
    if mapping.beta != beta {
        return Some(format!("mapping beta {} != requested {beta}", mapping.beta));
    }
    if mapping.layers.len() != dims.len() {
        return Some(format!(
            "{} layers planned for {} requested",
            mapping.layers.len(),
            dims.len()
        ));
    }

    let all: Vec<&Placement> = mapping.all_placements().collect();
    for (i, a) in all.iter().enumerate() {
        if a.kernel >= g.n_kernels
            || a.row0 + a.rows > g.rows_per_kernel
            || a.col0 + a.cols > g.cols_per_kernel
        {
            return Some(format!("placement out of bounds: {a:?}"));
        }
        for b in &all[i + 1..] {
            if a.overlaps(b) {
                return Some(format!("overlapping placements: {a:?} vs {b:?}"));
            }
        }
    }

    for (lm, &(n_in, n_out)) in mapping.layers.iter().zip(dims) {
        if lm.rows != n_out || lm.cols != n_in || lm.beta != beta {
            return Some(format!(
                "layer {} block {}x{} beta {} does not match request {n_out}x{n_in} beta {beta}",
                lm.layer, lm.rows, lm.cols, lm.beta
            ));
        }
        for polarity in Polarity::BOTH {
            let copies: Vec<&Placement> = lm.placements_of(polarity).collect();
            let mut indices: Vec<usize> = copies.iter().map(|p| p.copy_index).collect();
            indices.sort_unstable();
            if indices != (0..copies.len()).collect::<Vec<_>>() {
                return Some(format!(
                    "layer {} {polarity:?} copy indices not contiguous: {indices:?}",
                    lm.layer
                ));
            }
            for p in &copies {
                if p.rows != n_out || p.cols != n_in {
                    return Some(format!("placement shape mismatch: {p:?}"));
                }
                if !options.free_columns && p.col0 % p.cols != 0 {
                    return Some(format!("unaligned column offset: {p:?}"));
                }
            }
            for output in 0..n_out {
                let listed = lm.clean_copies(polarity, output);
                if listed.windows(2).any(|w| w[0] >= w[1]) {
                    return Some(format!(
                        "layer {} {polarity:?} output {output} clean list not ascending: {listed:?}",
                        lm.layer
                    ));
                }
                for p in &copies {
                    let clean = (0..p.cols)
                        .all(|c| !map.is_faulted(p.kernel, p.row0 + output, p.col0 + c));
                    if clean != listed.contains(&p.copy_index) {
                        return Some(format!(
                            "layer {} {polarity:?} output {output} copy {} clean={clean} but list is {listed:?}",
                            lm.layer, p.copy_index
                        ));
                    }
                }
            }
        }
        let covered = (0..n_out).all(|j| {
            lm.clean_copies(Polarity::Pos, j).len() >= beta
                && lm.clean_copies(Polarity::Neg, j).len() >= beta
        });
        if lm.success != covered {
            return Some(format!(
                "layer {} success flag {} but coverage is {covered}",
                lm.layer, lm.success
            ));
        }
    }
    let network_covered = mapping.layers.iter().all(|l| l.success);
    if mapping.success != network_covered {
        return Some(format!(
            "network success flag {} but layers say {network_covered}",
            mapping.success
        ));
    }
    None
}

//! Greedy redundant placement of layer blocks over a faulted chip.
//!
//! Each layer block (outputs x inputs) is placed several times per polarity.
//! A block row is clean when none of its devices under the placement window
//! is faulted. The planner keeps placing blocks until every output owns at
//! least `beta` clean rows in both polarities, always picking the placement
//! that lifts the most still-uncovered outputs.

use serde::{Deserialize, Serialize};

use crate::chipsim::FaultMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];
}

/// One placed copy of a layer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub kernel: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub polarity: Polarity,
    /// Order of this copy within its polarity, starting at 0.
    pub copy_index: usize,
}

impl Placement {
    pub fn overlaps(&self, other: &Placement) -> bool {
        self.kernel == other.kernel
            && self.row0 < other.row0 + other.rows
            && other.row0 < self.row0 + self.rows
            && self.col0 < other.col0 + other.cols
            && other.col0 < self.col0 + self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingOptions {
    /// When true (the default) any column offset is considered, which keeps
    /// coverage alive at high fault rates. When false column offsets stay on
    /// multiples of the block width, so blocks tile the kernel columns.
    pub free_columns: bool,
}

impl Default for MappingOptions {
    fn default() -> Self {
        MappingOptions { free_columns: true }
    }
}

/// Placements and clean-copy bookkeeping for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub layer: usize,
    /// Block height: outputs of the layer.
    pub rows: usize,
    /// Block width: inputs of the layer.
    pub cols: usize,
    pub beta: usize,
    pub success: bool,
    pub placements: Vec<Placement>,
    /// For each output, the copy indices whose row is clean, ascending.
    pub clean_pos: Vec<Vec<usize>>,
    pub clean_neg: Vec<Vec<usize>>,
}

impl LayerMapping {
    pub fn clean_copies(&self, polarity: Polarity, output: usize) -> &[usize] {
        match polarity {
            Polarity::Pos => &self.clean_pos[output],
            Polarity::Neg => &self.clean_neg[output],
        }
    }

    pub fn placements_of(&self, polarity: Polarity) -> impl Iterator<Item = &Placement> {
        self.placements.iter().filter(move |p| p.polarity == polarity)
    }

    /// Copies placed for one polarity.
    pub fn alpha(&self, polarity: Polarity) -> usize {
        self.placements_of(polarity).count()
    }

    pub fn devices(&self) -> usize {
        self.placements.iter().map(|p| p.rows * p.cols).sum()
    }

    fn covered(&self) -> bool {
        (0..self.rows).all(|j| {
            self.clean_pos[j].len() >= self.beta && self.clean_neg[j].len() >= self.beta
        })
    }

    /// Drop one copy from an output's clean list, for rows that later failed
    /// programming. Updates the success flag.
    pub fn demote(&mut self, polarity: Polarity, output: usize, copy_index: usize) {
        let list = match polarity {
            Polarity::Pos => &mut self.clean_pos[output],
            Polarity::Neg => &mut self.clean_neg[output],
        };
        list.retain(|&c| c != copy_index);
        self.success = self.covered();
    }
}

/// Mappings for every layer of a network, placed on one chip without
/// overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMapping {
    pub beta: usize,
    pub success: bool,
    pub layers: Vec<LayerMapping>,
}

impl EnsembleMapping {
    pub fn refresh_success(&mut self) {
        for layer in &mut self.layers {
            layer.success = layer.covered();
        }
        self.success = self.layers.iter().all(|l| l.success);
    }

    pub fn total_devices(&self) -> usize {
        self.layers.iter().map(|l| l.devices()).sum()
    }

    pub fn all_placements(&self) -> impl Iterator<Item = &Placement> {
        self.layers.iter().flat_map(|l| l.placements.iter())
    }
}

/// Per-row fault prefix sums for O(1) clean-window checks.
struct FaultIndex {
    n_kernels: usize,
    rows: usize,
    cols: usize,
    /// prefix[k][r * (cols + 1) + c] = faults in row r at columns < c.
    prefix: Vec<Vec<u32>>,
}

impl FaultIndex {
    fn build(map: &FaultMap) -> Self {
        let g = map.geometry();
        let (rows, cols) = (g.rows_per_kernel, g.cols_per_kernel);
        let mut prefix = Vec::with_capacity(g.n_kernels);
        for k in 0..g.n_kernels {
            let mut p = vec![0u32; rows * (cols + 1)];
            for r in 0..rows {
                let base = r * (cols + 1);
                for c in 0..cols {
                    p[base + c + 1] = p[base + c] + map.is_faulted(k, r, c) as u32;
                }
            }
            prefix.push(p);
        }
        FaultIndex {
            n_kernels: g.n_kernels,
            rows,
            cols,
            prefix,
        }
    }

    #[inline]
    fn row_clean(&self, kernel: usize, row: usize, col0: usize, width: usize) -> bool {
        let p = &self.prefix[kernel];
        let base = row * (self.cols + 1);
        p[base + col0 + width] == p[base + col0]
    }
}

struct Candidate {
    kernel: usize,
    row0: usize,
    col0: usize,
}

/// Place one layer. Returns a partial mapping with `success: false` when
/// coverage cannot be completed; that is a data point, not an error.
pub fn find_layer_ensemble(
    map: &FaultMap,
    layer: usize,
    n_out: usize,
    n_in: usize,
    beta: usize,
    avoid: &[Placement],
    options: &MappingOptions,
) -> Result<LayerMapping> {
    let g = map.geometry();
    if n_out == 0 || n_in == 0 {
        return Err(Error::InvalidInput("layer dimensions must be positive".into()));
    }
    if beta == 0 {
        return Err(Error::InvalidInput("beta must be at least 1".into()));
    }
    if n_out > g.rows_per_kernel || n_in > g.cols_per_kernel {
        return Err(Error::LayerTooLarge {
            layer,
            rows: n_out,
            cols: n_in,
        });
    }

    let index = FaultIndex::build(map);
    let mut occupied: Vec<Placement> = avoid.to_vec();
    let mut mapping = LayerMapping {
        layer,
        rows: n_out,
        cols: n_in,
        beta,
        success: false,
        placements: Vec::new(),
        clean_pos: vec![Vec::new(); n_out],
        clean_neg: vec![Vec::new(); n_out],
    };

    let col_offsets: Vec<usize> = if options.free_columns {
        (0..=index.cols - n_in).collect()
    } else {
        (0..)
            .map(|i| i * n_in)
            .take_while(|c0| c0 + n_in <= index.cols)
            .collect()
    };
    let candidates: Vec<Candidate> = (0..index.n_kernels)
        .flat_map(|kernel| {
            let col_offsets = &col_offsets;
            (0..=index.rows - n_out).flat_map(move |row0| {
                col_offsets.iter().map(move |&col0| Candidate {
                    kernel,
                    row0,
                    col0,
                })
            })
        })
        .collect();

    while !mapping.covered() {
        let mut best: Option<(usize, &Candidate, Polarity)> = None;
        for cand in &candidates {
            let probe = Placement {
                kernel: cand.kernel,
                row0: cand.row0,
                col0: cand.col0,
                rows: n_out,
                cols: n_in,
                polarity: Polarity::Pos,
                copy_index: 0,
            };
            if occupied.iter().any(|p| p.overlaps(&probe)) {
                continue;
            }
            for polarity in Polarity::BOTH {
                let clean = match polarity {
                    Polarity::Pos => &mapping.clean_pos,
                    Polarity::Neg => &mapping.clean_neg,
                };
                let score = (0..n_out)
                    .filter(|&j| {
                        clean[j].len() < beta
                            && index.row_clean(cand.kernel, cand.row0 + j, cand.col0, n_in)
                    })
                    .count();
                if score == 0 {
                    continue;
                }
                // Highest score wins; ties go to the lowest kernel, then row
                // offset, then column offset, then Pos before Neg, which the
                // enumeration order already guarantees.
                if best.map_or(true, |(s, _, _)| score > s) {
                    best = Some((score, cand, polarity));
                }
            }
        }
        let Some((_, cand, polarity)) = best else {
            break;
        };
        let copy_index = mapping.alpha(polarity);
        let placement = Placement {
            kernel: cand.kernel,
            row0: cand.row0,
            col0: cand.col0,
            rows: n_out,
            cols: n_in,
            polarity,
            copy_index,
        };
        for j in 0..n_out {
            if index.row_clean(placement.kernel, placement.row0 + j, placement.col0, n_in) {
                match polarity {
                    Polarity::Pos => mapping.clean_pos[j].push(copy_index),
                    Polarity::Neg => mapping.clean_neg[j].push(copy_index),
                }
            }
        }
        occupied.push(placement);
        mapping.placements.push(placement);
    }
    mapping.success = mapping.covered();
    Ok(mapping)
}

/// Place every layer of a network on one chip. Layers are mapped in order
/// and never overlap each other. The result keeps partial layers so a
/// failure can still be inspected and force-run.
pub fn find_network_ensemble(
    map: &FaultMap,
    layer_dims: &[(usize, usize)],
    beta: usize,
    options: &MappingOptions,
) -> Result<EnsembleMapping> {
    let mut avoid: Vec<Placement> = Vec::new();
    let mut layers = Vec::with_capacity(layer_dims.len());
    for (layer, &(n_in, n_out)) in layer_dims.iter().enumerate() {
        let lm = find_layer_ensemble(map, layer, n_out, n_in, beta, &avoid, options)?;
        avoid.extend(lm.placements.iter().copied());
        layers.push(lm);
    }
    let success = layers.iter().all(|l| l.success);
    Ok(EnsembleMapping {
        beta,
        success,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chipsim::{ChipGeometry, FaultKind};
    use crate::neuralnet::LAYER_DIMS;

    fn clean_map() -> FaultMap {
        FaultMap::new_clean(ChipGeometry::default())
    }

    fn check_legal(mapping: &LayerMapping, map: &FaultMap, avoid: &[Placement]) {
        let g = map.geometry();
        for (i, p) in mapping.placements.iter().enumerate() {
            assert!(p.kernel < g.n_kernels);
            assert!(p.row0 + p.rows <= g.rows_per_kernel);
            assert!(p.col0 + p.cols <= g.cols_per_kernel);
            for q in &mapping.placements[i + 1..] {
                assert!(!p.overlaps(q), "{p:?} overlaps {q:?}");
            }
            for q in avoid {
                assert!(!p.overlaps(q), "{p:?} overlaps avoided {q:?}");
            }
        }
        // Copy indices are 0..alpha per polarity.
        for polarity in Polarity::BOTH {
            let mut idx: Vec<usize> = mapping
                .placements_of(polarity)
                .map(|p| p.copy_index)
                .collect();
            idx.sort_unstable();
            assert_eq!(idx, (0..idx.len()).collect::<Vec<_>>());
        }
    }

    fn check_masks(mapping: &LayerMapping, map: &FaultMap) {
        for polarity in Polarity::BOTH {
            let by_copy: Vec<&Placement> = {
                let mut v: Vec<&Placement> = mapping.placements_of(polarity).collect();
                v.sort_by_key(|p| p.copy_index);
                v
            };
            for j in 0..mapping.rows {
                let listed = mapping.clean_copies(polarity, j);
                for (ci, p) in by_copy.iter().enumerate() {
                    let actually_clean = (0..p.cols)
                        .all(|c| !map.is_faulted(p.kernel, p.row0 + j, p.col0 + c));
                    assert_eq!(
                        listed.contains(&ci),
                        actually_clean,
                        "mask wrong for output {j} copy {ci} {polarity:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn defect_free_single_copy_uses_minimal_area() {
        let map = clean_map();
        let dims: Vec<(usize, usize)> = LAYER_DIMS.to_vec();
        let m = find_network_ensemble(&map, &dims, 1, &MappingOptions::default()).unwrap();
        assert!(m.success);
        for (l, lm) in m.layers.iter().enumerate() {
            assert_eq!(lm.alpha(Polarity::Pos), 1, "layer {l}");
            assert_eq!(lm.alpha(Polarity::Neg), 1, "layer {l}");
            assert!(lm.success);
        }
        // 2 copies of 12x4 + 6x12 + 3x6.
        assert_eq!(m.total_devices(), 276);
    }

    #[test]
    fn beta_copies_on_a_clean_map() {
        let map = clean_map();
        for beta in 1..=4 {
            let lm =
                find_layer_ensemble(&map, 0, 12, 4, beta, &[], &MappingOptions::default()).unwrap();
            assert!(lm.success);
            assert_eq!(lm.alpha(Polarity::Pos), beta);
            assert_eq!(lm.alpha(Polarity::Neg), beta);
            for j in 0..12 {
                assert_eq!(lm.clean_copies(Polarity::Pos, j).len(), beta);
            }
            check_legal(&lm, &map, &[]);
            check_masks(&lm, &map);
        }
    }

    #[test]
    fn masks_match_the_fault_map() {
        let geom = ChipGeometry::default();
        for seed in 0..6u64 {
            let mut map = FaultMap::new_clean(geom);
            // Deterministic scattered faults.
            let mut x = seed * 2654435761 + 1;
            for _ in 0..1500 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let k = (x >> 33) as usize % 32;
                let r = (x >> 21) as usize % 25;
                let c = (x >> 9) as usize % 25;
                map.set_kind(k, r, c, FaultKind::StuckHigh);
            }
            let m = find_network_ensemble(&map, &LAYER_DIMS, 2, &MappingOptions::default())
                .unwrap();
            let mut avoid: Vec<Placement> = Vec::new();
            for lm in &m.layers {
                check_legal(lm, &map, &avoid);
                check_masks(lm, &map);
                avoid.extend(lm.placements.iter().copied());
            }
        }
    }

    #[test]
    fn success_means_full_coverage() {
        let geom = ChipGeometry::default();
        let mut map = FaultMap::new_clean(geom);
        let mut x = 99u64;
        for _ in 0..5000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = (x >> 33) as usize % 32;
            let r = (x >> 21) as usize % 25;
            let c = (x >> 9) as usize % 25;
            map.set_kind(k, r, c, FaultKind::StuckLow);
        }
        let lm = find_layer_ensemble(&map, 0, 12, 4, 3, &[], &MappingOptions::default()).unwrap();
        for j in 0..12 {
            let pos = lm.clean_copies(Polarity::Pos, j).len();
            let neg = lm.clean_copies(Polarity::Neg, j).len();
            if lm.success {
                assert!(pos >= 3 && neg >= 3);
            }
        }
        check_masks(&lm, &map);
    }

    #[test]
    fn fully_faulted_map_cannot_cover() {
        let geom = ChipGeometry::default();
        let mut map = FaultMap::new_clean(geom);
        for k in 0..32 {
            for r in 0..25 {
                for c in 0..25 {
                    map.set_kind(k, r, c, FaultKind::Shorted);
                }
            }
        }
        let lm = find_layer_ensemble(&map, 0, 12, 4, 1, &[], &MappingOptions::default()).unwrap();
        assert!(!lm.success);
        assert!(lm.placements.is_empty());
        assert!(lm.clean_pos.iter().all(|l| l.is_empty()));
    }

    #[test]
    fn avoid_set_is_respected() {
        let map = clean_map();
        let wall: Vec<Placement> = (0..32)
            .map(|kernel| Placement {
                kernel,
                row0: 0,
                col0: 0,
                rows: 25,
                cols: 13,
                polarity: Polarity::Pos,
                copy_index: 0,
            })
            .collect();
        let lm = find_layer_ensemble(&map, 0, 12, 4, 1, &wall, &MappingOptions::default())
            .unwrap();
        check_legal(&lm, &map, &wall);
        // Only columns 13..25 remain; aligned 4-wide offsets there are 16, 20.
        for p in &lm.placements {
            assert!(p.col0 >= 13);
        }
        assert!(lm.success);
    }

    #[test]
    fn alpha_never_decreases_with_beta() {
        let geom = ChipGeometry::default();
        let mut map = FaultMap::new_clean(geom);
        let mut x = 5u64;
        for _ in 0..3000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = (x >> 33) as usize % 32;
            let r = (x >> 21) as usize % 25;
            let c = (x >> 9) as usize % 25;
            map.set_kind(k, r, c, FaultKind::StuckHigh);
        }
        let mut last = 0;
        for beta in 1..=4 {
            let lm = find_layer_ensemble(&map, 0, 12, 4, beta, &[], &MappingOptions::default())
                .unwrap();
            let total = lm.placements.len();
            assert!(total >= last, "alpha dropped from {last} to {total} at beta {beta}");
            last = total;
        }
    }

    #[test]
    fn oversize_layer_is_a_structural_error() {
        let map = clean_map();
        match find_layer_ensemble(&map, 2, 26, 4, 1, &[], &MappingOptions::default()) {
            Err(Error::LayerTooLarge { layer, rows, cols }) => {
                assert_eq!((layer, rows, cols), (2, 26, 4));
            }
            other => panic!("expected LayerTooLarge, got {other:?}"),
        }
        assert!(find_layer_ensemble(&map, 0, 12, 26, 1, &[], &MappingOptions::default()).is_err());
        assert!(find_layer_ensemble(&map, 0, 12, 4, 0, &[], &MappingOptions::default()).is_err());
    }

    #[test]
    fn free_columns_open_more_offsets() {
        let map = clean_map();
        let opts = MappingOptions { free_columns: true };
        // Block a wall that leaves only an unaligned window.
        let wall = Placement {
            kernel: 0,
            row0: 0,
            col0: 0,
            rows: 25,
            cols: 2,
            polarity: Polarity::Pos,
            copy_index: 0,
        };
        let walls: Vec<Placement> = (0..32)
            .map(|kernel| Placement { kernel, ..wall })
            .collect();
        let aligned = find_layer_ensemble(
            &map,
            0,
            12,
            4,
            1,
            &walls,
            &MappingOptions { free_columns: false },
        )
        .unwrap();
        let free = find_layer_ensemble(&map, 0, 12, 4, 1, &walls, &opts).unwrap();
        // Aligned offsets skip column 2; free placement may start right at it.
        assert!(aligned.placements.iter().all(|p| p.col0 % 4 == 0));
        assert!(free.placements.iter().any(|p| p.col0 == 2));
    }

    #[test]
    fn planner_is_deterministic() {
        let geom = ChipGeometry::default();
        let mut map = FaultMap::new_clean(geom);
        let mut x = 31u64;
        for _ in 0..4000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = (x >> 33) as usize % 32;
            let r = (x >> 21) as usize % 25;
            let c = (x >> 9) as usize % 25;
            map.set_kind(k, r, c, FaultKind::StuckHigh);
        }
        let a = find_network_ensemble(&map, &LAYER_DIMS, 3, &MappingOptions::default()).unwrap();
        let b = find_network_ensemble(&map, &LAYER_DIMS, 3, &MappingOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn demotion_updates_coverage() {
        let map = clean_map();
        let mut lm =
            find_layer_ensemble(&map, 0, 12, 4, 1, &[], &MappingOptions::default()).unwrap();
        assert!(lm.success);
        lm.demote(Polarity::Pos, 5, 0);
        assert!(!lm.success);
        assert!(lm.clean_copies(Polarity::Pos, 5).is_empty());
        assert_eq!(lm.clean_copies(Polarity::Pos, 4), &[0]);
    }
}

//! Mapping ternary layers onto a faulted chip with redundant row copies.
//!
//! The pipeline: encode each layer differentially, let the planner place
//! `beta` redundant copies per polarity while dodging faulted rows, program
//! the placements, calibrate the conductance gap from read-back, and decode
//! averaged currents back into activations at inference time.

mod deploy;
mod encode;
mod infer;
mod planner;

pub use deploy::{
    deploy_solution, ensemble_stats, load_ensemble, measure_g_diff, save_ensemble, write_ensemble,
    DeployConfig, EnsembleNetwork, HardwareForward, LayerStats, MappingStats, WriteReport,
    ENSEMBLE_FILE_VERSION, FIRST_LAYER_INPUT_SCALE,
};
pub use encode::{decode_differential, encode_differential, DifferentialBlocks};
pub use infer::{decode_currents, ensemble_vmm, LayerCurrents};
pub use planner::{
    find_layer_ensemble, find_network_ensemble, EnsembleMapping, LayerMapping, MappingOptions,
    Placement, Polarity,
};

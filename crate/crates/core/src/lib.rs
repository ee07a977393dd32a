//! Simulation toolkit for running ternary-quantized multilayer perceptrons on
//! defective analog crossbar hardware.
//!
//! The crate is organised around a pipeline:
//!
//! 1. [`taskgen`] generates a two-task classification dataset (the yin-yang
//!    symbol, plus a shifted variant) for continual-learning experiments.
//! 2. [`neuralnet`] trains a small bias-free MLP with plain SGD or elastic
//!    weight consolidation, quantizes it to ternary weights, and provides a
//!    linear reference classifier.
//! 3. [`chipsim`] models a multi-kernel memristive crossbar chip: conductance
//!    levels, stuck devices, iterative programming, read noise, and analog
//!    vector-matrix multiplication.
//! 4. [`ensemble`] maps each ternary layer onto the chip several times,
//!    masks out rows touched by stuck devices, averages the redundant row
//!    currents, and decodes calibrated activations.
//! 5. [`experiments`] drives the sweep/validation commands and writes the
//!    CSV/JSON artifacts consumed by the report generator.
//!
//! Everything is deterministic given the experiment seed. With the default
//! `parallel` feature, sweep repeats run on a rayon pool; disabling the
//! feature yields a bit-identical sequential fallback.

pub mod chipsim;
pub mod ensemble;
mod error;
pub mod experiments;
mod jsonio;
pub mod matrix;
pub mod neuralnet;
pub mod rngutil;
pub mod taskgen;

pub use error::{Error, Result};

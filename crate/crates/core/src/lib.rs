//! Emulator for memristor-based neuromorphic hardware.
//!
//! The crate models memristive synapses with an empirical switching law,
//! arranges them in a crossbar with selector-based or selectorless (half
//! voltage) write semantics, and trains winner-take-all spiking networks on
//! top of it. Weight updates reach the devices through a predict-write-verify
//! programmer talking to a [`bridge::DeviceArrayPort`], which can be the
//! in-process virtual array or a remote instrument speaking a line protocol.

pub mod bridge;
pub mod crossbar;
pub mod data_io;
pub mod device;
pub mod engine;
pub mod matrix;
pub mod neuron;
pub mod plasticity;
pub mod programmer;
pub mod rng;

use std::path::PathBuf;

pub use bridge::{DeviceArrayPort, PortError};
pub use crossbar::{BiasScheme, Crossbar};
pub use data_io::DataError;
pub use device::{DeviceParams, MemristorState, Pulse, ReadNoise};
pub use matrix::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index ({row}, {col}) is outside the {rows}x{cols} array")]
    OutOfBounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Port(#[from] PortError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

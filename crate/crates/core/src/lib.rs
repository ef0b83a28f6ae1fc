//! Exact dense simulation of multitime quantum processes.
//!
//! Processes are represented by the pure Choi state of the dilated dynamics,
//! with per-time input/output legs (the butterfly space) followed by the final
//! system and environment sites. Index convention throughout: little-endian,
//! the first subsystem of a register is the fastest-varying index. All
//! entropies are in nats.

pub mod bff;
pub mod diagnostics;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod instruments;
pub mod models;
pub mod process;
pub mod qcore;
pub mod randomness;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use qcore::{CMat, DensityOperator, PureState, Register, Role, Subsystem};

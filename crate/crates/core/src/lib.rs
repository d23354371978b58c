//! Quantum-state synthesis in a hybrid superconducting-qubit / spin-ensemble memory.

pub mod ops;
pub mod model;
pub mod dynamics;
pub mod synthesis;
pub mod protocols;
pub mod cli;

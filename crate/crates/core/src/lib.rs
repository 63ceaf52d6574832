//! Exact-diagonalization toolkit for the one-dimensional tilted Bose-Hubbard
//! chain: Fock basis, Hamiltonian, spectral statistics, eigenstate indicators
//! and quench dynamics, plus the sweep driver behind the `tbh` binary.

// LAPACK/BLAS symbols come from the system OpenBLAS.
extern crate openblas_src;

pub mod basis;
pub mod cache;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod hamiltonian;
pub mod initial_states;
pub mod linalg;
pub mod quench;
pub mod random_matrix;
pub mod spectrum;
pub mod sweep;

pub use basis::{dimension, BasisSpec, FockBasis, FockState};
pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianMatrix, ModelParams};
pub use spectrum::{GapRatioStats, SpectralData};

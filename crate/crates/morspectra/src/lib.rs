//! Adaptive, interpolation-based model order reduction for absorption
//! spectra of structured linear-response pencils.
//!
//! The library approximates sigma(omega) over an energy window by solving a
//! small number of shifted linear systems at adaptively selected interpolation
//! frequencies, projecting the half-dimension operator M K onto the resulting
//! rational Krylov subspace, and evaluating the reduced model on a dense
//! output grid. Dense sum-over-states and per-frequency factorization oracles
//! provide ground truth for validation.

extern crate blas_src;
extern crate lapack_src;

pub mod adaptive;
pub mod error;
pub mod grid;
pub mod model_io;
pub mod mtx;
pub mod oracle;
pub mod output;
pub mod pencil;
pub mod rom;
pub mod solver;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use grid::{Diagnostics, FrequencyGrid, LevelDiagnostics, SpectrumResult};
pub use pencil::{ComplexShift, DipoleBlock, ResponsePencil};
pub use solver::{Preconditioner, SolveReport, SolverConfig};

//! Output frequency grid and sampled spectrum containers.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pencil::ComplexShift;

/// Uniform output grid over the energy window, with the damping used for
/// evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
    pub eta: f64,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize, eta: f64) -> Result<Self> {
        if !(omega_min < omega_max) {
            return Err(Error::InvalidConfig(format!(
                "window [{omega_min}, {omega_max}] is empty"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidConfig("grid needs at least 2 points".into()));
        }
        if eta < 0.0 {
            return Err(Error::InvalidConfig("damping must be nonnegative".into()));
        }
        Ok(Self {
            omega_min,
            omega_max,
            n_points,
            eta,
        })
    }

    /// Evenly spaced sample frequencies, endpoints included.
    pub fn points(&self) -> Vec<f64> {
        let step = (self.omega_max - self.omega_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.omega_min + step * i as f64)
            .collect()
    }

    /// The evaluation shift omega + i*eta at a grid frequency.
    pub fn shift_at(&self, omega: f64) -> ComplexShift {
        ComplexShift::new(omega, self.eta)
    }
}

/// Shifts added per refinement level and the interval errors observed after
/// evaluating that level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub shifts: Vec<f64>,
    pub interval_errors: Vec<f64>,
}

/// Run diagnostics carried alongside a sampled spectrum.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Number of interpolation frequencies in the final model.
    pub k: usize,
    /// Effective basis order after real/imaginary splitting and deflation.
    pub r: usize,
    pub levels: Vec<LevelDiagnostics>,
    pub gemms: u64,
    pub wall_seconds: f64,
    pub converged: bool,
    /// Eigenvalue count inside the window, when an eigendecomposition was run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_in_window: Option<usize>,
}

/// Sampled sigma(omega) plus optional per-frequency polarizability tensors.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub omegas: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tensors: Option<Vec<Array2<C64>>>,
    pub diagnostics: Diagnostics,
}

impl SpectrumResult {
    pub fn new(omegas: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(omegas.len(), sigma.len());
        Self {
            omegas,
            sigma,
            tensors: None,
            diagnostics: Diagnostics::default(),
        }
    }
}

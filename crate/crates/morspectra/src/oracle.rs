//! Dense reference routes: per-frequency factorization of the shifted
//! half-dimension system, the structured eigendecomposition of M K, and the
//! sum-over-states Lorentzian spectrum.
//!
//! These are O(n^3) ground-truth computations used for validation; none of
//! them touch the counted operator applications on the pencil.

use ndarray::prelude::*;
use ndarray_linalg::{Eigh, Factorize, Solve, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, SpectrumResult};
use crate::pencil::{ComplexShift, DipoleBlock, ResponsePencil};

/// 3x3 polarizability tensor at one shift by a dense complex factorization of
/// (M K - z I), z = (omega + i eta)^2: alpha = 2 (K d)^T X, X solving the
/// shifted system for the three dipole columns.
pub fn dense_tensor(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    shift: ComplexShift,
) -> Result<Array2<C64>> {
    let n = pencil.n();
    if dipoles.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "dipole block has {} rows, pencil dimension is {n}",
            dipoles.nrows()
        )));
    }
    let mk = pencil.m().dot(pencil.k());
    let kd = pencil.k().dot(dipoles.matrix());
    tensor_from_parts(&mk, dipoles.matrix(), &kd, shift)
}

/// alpha = 2 d^T K (M K - z I)^{-1} d: solve against the d columns, contract
/// with the precomputed K d columns.
fn tensor_from_parts(
    mk: &Array2<f64>,
    d: &Array2<f64>,
    kd: &Array2<f64>,
    shift: ComplexShift,
) -> Result<Array2<C64>> {
    let n = mk.nrows();
    let z = shift.squared();
    let mut sys = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sys[[i, j]] = C64::new(mk[[i, j]], 0.0);
        }
        sys[[i, i]] -= z;
    }
    let lu = sys.factorize().map_err(|_| Error::SingularShift {
        shift: format!("{:?}", shift.value()),
    })?;
    let mut alpha = Array2::<C64>::zeros((3, 3));
    for col in 0..3 {
        let b = Array1::from_shape_fn(n, |i| C64::new(d[[i, col]], 0.0));
        let x = lu.solve(&b).map_err(|_| Error::SingularShift {
            shift: format!("{:?}", shift.value()),
        })?;
        for row in 0..3 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                acc += C64::new(kd[[i, row]], 0.0) * x[i];
            }
            alpha[[row, col]] = 2.0 * acc;
        }
    }
    Ok(alpha)
}

/// Reference spectrum by one dense complex factorization per output grid
/// point.
pub fn dense_cpp_spectrum(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    grid: &FrequencyGrid,
) -> Result<SpectrumResult> {
    let start = std::time::Instant::now();
    let mk = pencil.m().dot(pencil.k());
    let kd = pencil.k().dot(dipoles.matrix());
    let omegas = grid.points();
    let mut sigma = Vec::with_capacity(omegas.len());
    let mut tensors = Vec::with_capacity(omegas.len());
    for &omega in &omegas {
        let alpha = tensor_from_parts(&mk, dipoles.matrix(), &kd, grid.shift_at(omega))?;
        let trace = alpha[[0, 0]] + alpha[[1, 1]] + alpha[[2, 2]];
        sigma.push(omega * trace.im);
        tensors.push(alpha);
    }
    let mut result = SpectrumResult::new(omegas, sigma);
    result.tensors = Some(tensors);
    result.diagnostics.converged = true;
    result.diagnostics.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Eigenpairs of the structured problem: excitation energies lambda > 0 and
/// the transition vectors (x+y), (x-y) in the half dimension.
#[derive(Debug, Clone)]
pub struct StructuredEigen {
    /// Ascending excitation energies, lambda_nu = +sqrt of the eigenvalues of
    /// L^T M L.
    pub lambda: Array1<f64>,
    /// Columns (x+y)_nu.
    pub xpy: Array2<f64>,
    /// Columns (x-y)_nu.
    pub xmy: Array2<f64>,
}

/// Solve the structured eigenproblem via the symmetric reduction
/// K = Qk Lk Qk^T, L = Qk Lk^{1/2}, L^T M L = Q Lambda^2 Q^T, then
/// back-transform: (x+y) = L Q Lambda^{-1/2}, (x-y) = Qk Lk^{-1/2} Q Lambda^{1/2}.
///
/// Requires M and K positive definite; fails with the offending matrix
/// otherwise.
pub fn dense_structured_eig(pencil: &ResponsePencil) -> Result<StructuredEigen> {
    let n = pencil.n();
    let (lk, qk) = pencil.k().eigh(UPLO::Lower)?;
    let min_k = lk.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_k <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            name: "K",
            min_eig: min_k,
        });
    }
    // L = Qk diag(sqrt(lk)): scale columns
    let mut l = qk.clone();
    for (j, mut col) in l.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v * lk[j].sqrt());
    }
    let w = l.t().dot(&pencil.m().dot(&l));
    let (lam2, q) = w.eigh(UPLO::Lower)?;
    let min_w = lam2.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_w <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            name: "M",
            min_eig: min_w,
        });
    }
    let lambda = lam2.mapv(f64::sqrt);

    let lq = l.dot(&q);
    let mut xpy = lq.clone();
    for (j, mut col) in xpy.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v / lambda[j].sqrt());
    }
    // Qk Lk^{-1/2} Q, columns scaled by sqrt(lambda)
    let mut qs = qk;
    for (j, mut col) in qs.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v / lk[j].sqrt());
    }
    let mut xmy = qs.dot(&q);
    for (j, mut col) in xmy.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v * lambda[j].sqrt());
    }
    debug_assert_eq!(xpy.nrows(), n);
    Ok(StructuredEigen { lambda, xpy, xmy })
}

/// Excitation energies with their dipole oscillator weights
/// w_nu = 2 lambda_nu |d^T (x+y)_nu|^2 (squared 3-vector norm).
#[derive(Debug, Clone)]
pub struct OscillatorTable {
    pub lambda: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OscillatorTable {
    pub fn new(eig: &StructuredEigen, dipoles: &DipoleBlock) -> Result<Self> {
        if dipoles.nrows() != eig.xpy.nrows() {
            return Err(Error::DimensionMismatch(
                "dipole block inconsistent with eigenvectors".into(),
            ));
        }
        // 3 x n_states matrix of transition dipoles d^T (x+y)
        let td = dipoles.matrix().t().dot(&eig.xpy);
        let weights = eig
            .lambda
            .iter()
            .enumerate()
            .map(|(nu, &lam)| {
                let s: f64 = td.column(nu).iter().map(|v| v * v).sum();
                2.0 * lam * s
            })
            .collect();
        Ok(Self {
            lambda: eig.lambda.to_vec(),
            weights,
        })
    }

    /// Number of excitation energies inside [omega_min, omega_max].
    pub fn count_in_window(&self, omega_min: f64, omega_max: f64) -> usize {
        self.lambda
            .iter()
            .filter(|&&l| l >= omega_min && l <= omega_max)
            .count()
    }
}

/// Sum-over-states spectrum sigma(omega) = omega * Im sum_nu
/// w_nu / (lambda_nu^2 - (omega + i eta)^2).
pub fn lorentzian_spectrum(table: &OscillatorTable, grid: &FrequencyGrid) -> SpectrumResult {
    let omegas = grid.points();
    let sigma = omegas
        .iter()
        .map(|&omega| {
            let z = grid.shift_at(omega).squared();
            let mut acc = C64::new(0.0, 0.0);
            for (&lam, &w) in table.lambda.iter().zip(table.weights.iter()) {
                acc += C64::new(w, 0.0) / (C64::new(lam * lam, 0.0) - z);
            }
            omega * acc.im
        })
        .collect();
    let mut result = SpectrumResult::new(omegas, sigma);
    result.diagnostics.converged = true;
    result.diagnostics.lambda_in_window =
        Some(table.count_in_window(grid.omega_min, grid.omega_max));
    result
}

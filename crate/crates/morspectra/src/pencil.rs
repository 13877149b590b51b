//! Structured response pencil (A, B) with derived M = A + B, K = A - B and
//! the exact operator applications used by the solvers and oracles.
//!
//! All matrices are dense and real symmetric. Operator applications are pure
//! and thread-safe; the GEMM tally is an atomic counter where one counted GEMM
//! is one application of an n x n matrix to a block of columns.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on A and B.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A complex interpolation or evaluation frequency omega + i*eta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexShift {
    pub omega: f64,
    pub eta: f64,
}

impl ComplexShift {
    pub fn new(omega: f64, eta: f64) -> Self {
        assert!(eta >= 0.0, "damping must be nonnegative");
        Self { omega, eta }
    }

    pub fn real(omega: f64) -> Self {
        Self { omega, eta: 0.0 }
    }

    pub fn value(&self) -> C64 {
        C64::new(self.omega, self.eta)
    }

    /// Squared shift value, the spectral parameter of the half-dimension system.
    pub fn squared(&self) -> C64 {
        let v = self.value();
        v * v
    }

    pub fn is_real(&self) -> bool {
        self.eta == 0.0
    }
}

/// The n x 3 right-hand-side block of dipole vectors (columns x, y, z).
#[derive(Debug, Clone)]
pub struct DipoleBlock {
    d: Array2<f64>,
}

impl DipoleBlock {
    pub fn new(d: Array2<f64>) -> Result<Self> {
        if d.ncols() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "dipole block must have 3 columns, got {}",
                d.ncols()
            )));
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dipole block".into()));
        }
        Ok(Self { d })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn nrows(&self) -> usize {
        self.d.nrows()
    }

    /// The stacked 2n x 3 right-hand side [d; d] of the full-size pencil.
    pub fn stacked(&self) -> Array2<f64> {
        let n = self.d.nrows();
        let mut out = Array2::zeros((2 * n, 3));
        out.slice_mut(s![..n, ..]).assign(&self.d);
        out.slice_mut(s![n.., ..]).assign(&self.d);
        out
    }
}

/// Scalars to which a real n x n matrix can be applied by BLAS GEMM.
///
/// For complex blocks the product is computed as two real GEMMs on the real
/// and imaginary parts, which costs the same flops as one complex GEMM.
pub trait RealApply: Clone + Copy + num_traits::Zero + 'static {
    fn gemm(mat: &Array2<f64>, x: &ArrayView2<'_, Self>) -> Array2<Self>;
}

impl RealApply for f64 {
    fn gemm(mat: &Array2<f64>, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = Array2::zeros((mat.nrows(), x.ncols()));
        general_mat_mul(1.0, mat, x, 0.0, &mut y);
        y
    }
}

impl RealApply for C64 {
    fn gemm(mat: &Array2<f64>, x: &ArrayView2<'_, C64>) -> Array2<C64> {
        let xr = x.mapv(|v| v.re);
        let xi = x.mapv(|v| v.im);
        let yr = f64::gemm(mat, &xr.view());
        let yi = f64::gemm(mat, &xi.view());
        let mut y = Array2::zeros((mat.nrows(), x.ncols()));
        azip!((y in &mut y, &r in &yr, &i in &yi) *y = C64::new(r, i));
        y
    }
}

/// The matrices A, B and derived M = A + B, K = A - B defining the propagator.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug)]
pub struct ResponsePencil {
    n: usize,
    a: Array2<f64>,
    b: Array2<f64>,
    m: Array2<f64>,
    k: Array2<f64>,
    spd_checked: bool,
    gemms: AtomicU64,
}

fn check_symmetric(mat: &Array2<f64>, name: &'static str) -> Result<()> {
    let scale = mat.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(());
    }
    let mut max_asym = 0.0f64;
    for i in 0..mat.nrows() {
        for j in (i + 1)..mat.ncols() {
            max_asym = max_asym.max((mat[[i, j]] - mat[[j, i]]).abs());
        }
    }
    if max_asym / scale > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            name,
            max_asym: max_asym / scale,
            tol: SYMMETRY_TOL,
        });
    }
    Ok(())
}

/// Smallest eigenvalue of a real symmetric matrix (dense, O(n^3)).
pub fn min_eigenvalue(mat: &Array2<f64>) -> Result<f64> {
    let (w, _) = mat.eigh(UPLO::Lower)?;
    Ok(w.iter().cloned().fold(f64::INFINITY, f64::min))
}

impl ResponsePencil {
    /// Build the pencil from A and B, forming M = A + B and K = A - B.
    ///
    /// Rejects non-square, mismatched, or asymmetric inputs. With `check_spd`
    /// the positive definiteness of M and K is verified by a dense
    /// eigendecomposition (O(n^3), off by default at scale).
    pub fn build(a: Array2<f64>, b: Array2<f64>, check_spd: bool) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}; both must be square",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        check_symmetric(&a, "A")?;
        check_symmetric(&b, "B")?;
        let m = &a + &b;
        let k = &a - &b;
        if check_spd {
            let min_m = min_eigenvalue(&m)?;
            if min_m <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    name: "M",
                    min_eig: min_m,
                });
            }
            let min_k = min_eigenvalue(&k)?;
            if min_k <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    name: "K",
                    min_eig: min_k,
                });
            }
        }
        Ok(Self {
            n: a.nrows(),
            a,
            b,
            m,
            k,
            spd_checked: check_spd,
            gemms: AtomicU64::new(0),
        })
    }

    /// Build the pencil directly from M and K, recovering A = (M + K)/2 and
    /// B = (M - K)/2.
    pub fn from_mk(m: Array2<f64>, k: Array2<f64>, check_spd: bool) -> Result<Self> {
        if m.nrows() != m.ncols() || k.nrows() != k.ncols() || m.nrows() != k.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "M is {}x{}, K is {}x{}",
                m.nrows(),
                m.ncols(),
                k.nrows(),
                k.ncols()
            )));
        }
        let a = (&m + &k) * 0.5;
        let b = (&m - &k) * 0.5;
        Self::build(a, b, check_spd)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn m(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn k(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn spd_checked(&self) -> bool {
        self.spd_checked
    }

    /// Total counted GEMMs since construction (or the last reset).
    pub fn gemm_count(&self) -> u64 {
        self.gemms.load(Ordering::Relaxed)
    }

    pub fn reset_gemm_count(&self) {
        self.gemms.store(0, Ordering::Relaxed);
    }

    fn tally(&self, count: u64) {
        self.gemms.fetch_add(count, Ordering::Relaxed);
    }

    fn require_rows<T>(&self, x: &ArrayView2<'_, T>, rows: usize, what: &str) -> Result<()> {
        if x.nrows() != rows {
            return Err(Error::DimensionMismatch(format!(
                "{what}: block has {} rows, expected {rows}",
                x.nrows()
            )));
        }
        Ok(())
    }

    /// M (K X), two counted GEMMs.
    pub fn apply_mk<T: RealApply>(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.require_rows(x, self.n, "apply_mk")?;
        let kx = T::gemm(&self.k, x);
        let y = T::gemm(&self.m, &kx.view());
        self.tally(2);
        Ok(y)
    }

    /// K X, one counted GEMM.
    pub fn apply_k<T: RealApply>(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.require_rows(x, self.n, "apply_k")?;
        let y = T::gemm(&self.k, x);
        self.tally(1);
        Ok(y)
    }

    /// M X, one counted GEMM.
    pub fn apply_m<T: RealApply>(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.require_rows(x, self.n, "apply_m")?;
        let y = T::gemm(&self.m, x);
        self.tally(1);
        Ok(y)
    }

    /// H X for the full pencil H = [[A, B], [B, A]] acting on 2n-row blocks,
    /// never materializing H. Four counted GEMMs.
    pub fn apply_h<T: RealApply>(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.require_rows(x, 2 * self.n, "apply_h")?;
        let x1 = x.slice(s![..self.n, ..]);
        let x2 = x.slice(s![self.n.., ..]);
        let a_x1 = T::gemm(&self.a, &x1);
        let b_x2 = T::gemm(&self.b, &x2);
        let b_x1 = T::gemm(&self.b, &x1);
        let a_x2 = T::gemm(&self.a, &x2);
        self.tally(4);
        let mut y = Array2::zeros((2 * self.n, x.ncols()));
        azip!((y in y.slice_mut(s![..self.n, ..]), &p in &a_x1, &q in &b_x2) *y = p + q);
        azip!((y in y.slice_mut(s![self.n.., ..]), &p in &b_x1, &q in &a_x2) *y = p + q);
        Ok(y)
    }

    /// (H - tau S) X using only the A, B blocks:
    /// top = A X1 + B X2 - tau X1, bottom = B X1 + A X2 + tau X2.
    pub fn apply_full_shifted(&self, tau: C64, x: &ArrayView2<'_, C64>) -> Result<Array2<C64>> {
        let mut y = self.apply_h(x)?;
        let n = self.n;
        azip!((y in y.slice_mut(s![..n, ..]), &x in &x.slice(s![..n, ..])) *y -= tau * x);
        azip!((y in y.slice_mut(s![n.., ..]), &x in &x.slice(s![n.., ..])) *y += tau * x);
        Ok(y)
    }

    /// The K-inner product u^H K v (conjugate-linear in the first argument).
    pub fn k_inner(&self, u: &ArrayView1<'_, C64>, v: &ArrayView1<'_, C64>) -> Result<C64> {
        if u.len() != self.n || v.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "k_inner: vector lengths {} and {}, expected {}",
                u.len(),
                v.len(),
                self.n
            )));
        }
        let kv = C64::gemm(&self.k, &v.insert_axis(Axis(1)));
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in u.iter().zip(kv.column(0).iter()) {
            acc += a.conj() * b;
        }
        Ok(acc)
    }

    /// Real K-inner product u^T K v for real vectors.
    pub fn k_inner_real(&self, u: &ArrayView1<'_, f64>, v: &ArrayView1<'_, f64>) -> Result<f64> {
        if u.len() != self.n || v.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "k_inner: vector lengths {} and {}, expected {}",
                u.len(),
                v.len(),
                self.n
            )));
        }
        let kv = f64::gemm(&self.k, &v.insert_axis(Axis(1)));
        Ok(u.dot(&kv.column(0)))
    }
}

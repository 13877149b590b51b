//! Batched, synchronized GMRES for blocks of shifted linear systems.
//!
//! Each system (one shift, one right-hand-side column) keeps its own
//! unrestarted Arnoldi recurrence; only the operator applications are fused
//! into blocks of up to `batch_size` columns per GEMM pair. Purely real shift
//! sets are solved in real arithmetic.

use std::time::Instant;

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pencil::{ComplexShift, DipoleBlock, RealApply, ResponsePencil};

/// Residual improvement threshold and lookback window for the stagnation
/// (singular-shift) detector.
const STAGNATION_IMPROVEMENT: f64 = 1e-3;
const STAGNATION_WINDOW: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    #[default]
    None,
    JacobiDiagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative residual target.
    pub tol: f64,
    /// Iteration cap; the recurrence is unrestarted.
    pub max_iterations: usize,
    /// Number of simultaneous right-hand-side columns per fused GEMM pair.
    pub batch_size: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 200,
            batch_size: 12,
            preconditioner: Preconditioner::None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "solver tol must be in (0, 1), got {}",
                self.tol
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-column diagnostics of one batched solve call.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// The shift of each solved column (3 dipole columns per shift).
    pub shifts: Vec<ComplexShift>,
    pub iterations: Vec<usize>,
    /// Explicitly evaluated relative residuals after the solve.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    /// Columns that hit the residual-stagnation (singular shift) detector.
    pub stagnated: Vec<bool>,
    pub gemms: u64,
    pub wall_seconds: f64,
}

impl SolveReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Columns belonging to shift `j` (the 3 dipole components).
    pub fn shift_converged(&self, j: usize) -> bool {
        self.converged[3 * j..3 * j + 3].iter().all(|&c| c)
    }
}

/// Scalar abstraction letting the one GMRES engine run in real or complex
/// arithmetic.
pub trait GmresScalar:
    RealApply
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::fmt::Debug
    + PartialEq
{
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn conj(self) -> Self;
    fn abs(self) -> f64;
    fn scale(self, v: f64) -> Self;
    fn to_c64(self) -> C64;
}

impl GmresScalar for f64 {
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn conj(self) -> Self {
        self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn scale(self, v: f64) -> Self {
        self * v
    }
    fn to_c64(self) -> C64 {
        C64::new(self, 0.0)
    }
}

impl GmresScalar for C64 {
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        C64::new(v, 0.0)
    }
    fn conj(self) -> Self {
        num_complex::Complex::conj(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn scale(self, v: f64) -> Self {
        self * v
    }
    fn to_c64(self) -> C64 {
        self
    }
}

/// A family of shifted operators sharing fused matrix applications.
pub(crate) trait ShiftedFamily<T: GmresScalar> {
    fn dim(&self) -> usize;
    /// Apply the operator of system `sys[c]` to column `c` of the block.
    fn apply(&self, block: &Array2<T>, sys: &[usize]) -> Result<Array2<T>>;
    /// Diagonal surrogate of system `s` for Jacobi preconditioning.
    fn diagonal(&self, s: usize) -> Array1<T>;
}

/// (MK - tau^2 I) X at half dimension.
pub(crate) struct MkFamily<'a, T> {
    pub pencil: &'a ResponsePencil,
    pub tau2: Vec<T>,
}

impl<T: GmresScalar> ShiftedFamily<T> for MkFamily<'_, T> {
    fn dim(&self) -> usize {
        self.pencil.n()
    }

    fn apply(&self, block: &Array2<T>, sys: &[usize]) -> Result<Array2<T>> {
        let mut y = self.pencil.apply_mk(&block.view())?;
        for (c, &s) in sys.iter().enumerate() {
            let t2 = self.tau2[s];
            azip!((y in y.column_mut(c), &x in &block.column(c)) *y -= t2 * x);
        }
        Ok(y)
    }

    fn diagonal(&self, s: usize) -> Array1<T> {
        let m = self.pencil.m();
        let k = self.pencil.k();
        Array1::from_shape_fn(self.pencil.n(), |i| {
            T::from_f64(m[[i, i]] * k[[i, i]]) - self.tau2[s]
        })
    }
}

/// (H - tau S) X at full dimension.
pub(crate) struct FullFamily<'a, T> {
    pub pencil: &'a ResponsePencil,
    pub tau: Vec<T>,
}

impl<T: GmresScalar> ShiftedFamily<T> for FullFamily<'_, T> {
    fn dim(&self) -> usize {
        2 * self.pencil.n()
    }

    fn apply(&self, block: &Array2<T>, sys: &[usize]) -> Result<Array2<T>> {
        let n = self.pencil.n();
        let mut y = self.pencil.apply_h(&block.view())?;
        for (c, &s) in sys.iter().enumerate() {
            let t = self.tau[s];
            azip!((y in y.slice_mut(s![..n, c]), &x in &block.slice(s![..n, c])) *y -= t * x);
            azip!((y in y.slice_mut(s![n.., c]), &x in &block.slice(s![n.., c])) *y += t * x);
        }
        Ok(y)
    }

    fn diagonal(&self, s: usize) -> Array1<T> {
        let n = self.pencil.n();
        let a = self.pencil.a();
        let t = self.tau[s];
        Array1::from_shape_fn(2 * n, |i| {
            if i < n {
                T::from_f64(a[[i, i]]) - t
            } else {
                T::from_f64(a[[i - n, i - n]]) + t
            }
        })
    }
}

struct SysState<T> {
    rhs_norm: f64,
    basis: Vec<Array1<T>>,
    hess: Vec<Vec<T>>,
    givens_c: Vec<f64>,
    givens_s: Vec<T>,
    g: Vec<T>,
    res: f64,
    res_history: Vec<f64>,
    iters: usize,
    done: bool,
    converged: bool,
    stagnated: bool,
}

fn vec_norm<T: GmresScalar>(v: &Array1<T>) -> f64 {
    v.iter().map(|x| x.abs() * x.abs()).sum::<f64>().sqrt()
}

fn conj_dot<T: GmresScalar>(u: &Array1<T>, v: &ArrayView1<'_, T>) -> T {
    let mut acc = T::zero();
    for (a, b) in u.iter().zip(v.iter()) {
        acc += a.conj() * *b;
    }
    acc
}

/// Givens rotation zeroing `b` against `a`: returns (c, s, r) with c real.
fn make_givens<T: GmresScalar>(a: T, b: T) -> (f64, T, T) {
    let aa = a.abs();
    let bb = b.abs();
    if bb == 0.0 {
        return (1.0, T::zero(), a);
    }
    if aa == 0.0 {
        return (0.0, T::one(), b);
    }
    let t = (aa * aa + bb * bb).sqrt();
    let c = aa / t;
    let phase = a.scale(1.0 / aa);
    let s = phase * b.conj().scale(1.0 / t);
    let r = phase.scale(t);
    (c, s, r)
}

struct EngineOutcome {
    iterations: Vec<usize>,
    residuals: Vec<f64>,
    converged: Vec<bool>,
    stagnated: Vec<bool>,
}

/// Run synchronized GMRES for all systems, fusing operator applications within
/// groups of `batch_size` systems. Converged columns are frozen and removed
/// from subsequent fused blocks.
fn gmres_batched<T, F>(
    family: &F,
    rhs: &Array2<T>,
    cfg: &SolverConfig,
) -> Result<(Array2<T>, EngineOutcome)>
where
    T: GmresScalar,
    F: ShiftedFamily<T>,
{
    let dim = family.dim();
    let nsys = rhs.ncols();
    let mut solutions = Array2::<T>::from_elem((dim, nsys), T::zero());
    let mut out = EngineOutcome {
        iterations: vec![0; nsys],
        residuals: vec![0.0; nsys],
        converged: vec![false; nsys],
        stagnated: vec![false; nsys],
    };

    let precond: Vec<Option<Array1<T>>> = (0..nsys)
        .map(|s| match cfg.preconditioner {
            Preconditioner::None => None,
            Preconditioner::JacobiDiagonal => {
                let d = family.diagonal(s);
                if d.iter().any(|v| v.abs() == 0.0) {
                    None
                } else {
                    Some(d)
                }
            }
        })
        .collect();

    for group in (0..nsys).collect::<Vec<_>>().chunks(cfg.batch_size) {
        let mut states: Vec<SysState<T>> = Vec::with_capacity(group.len());
        for &s in group {
            let b = rhs.column(s).to_owned();
            let rhs_norm = vec_norm(&b);
            let mut st = SysState {
                rhs_norm,
                basis: Vec::new(),
                hess: Vec::new(),
                givens_c: Vec::new(),
                givens_s: Vec::new(),
                g: Vec::new(),
                res: 1.0,
                res_history: Vec::new(),
                iters: 0,
                done: false,
                converged: false,
                stagnated: false,
            };
            if rhs_norm == 0.0 {
                st.done = true;
                st.converged = true;
                st.res = 0.0;
            } else {
                st.basis.push(b.mapv(|v| v.scale(1.0 / rhs_norm)));
                st.g.push(T::from_f64(rhs_norm));
            }
            states.push(st);
        }

        loop {
            let active: Vec<usize> = (0..states.len()).filter(|&i| !states[i].done).collect();
            if active.is_empty() {
                break;
            }
            // gather the current Arnoldi vectors; with Jacobi, apply the
            // right preconditioner before the fused operator application
            let mut block = Array2::<T>::from_elem((dim, active.len()), T::zero());
            for (c, &i) in active.iter().enumerate() {
                let st = &states[i];
                let v = st.basis.last().unwrap();
                match &precond[group[i]] {
                    Some(diag) => {
                        azip!((b in block.column_mut(c), &v in v, &d in diag) *b = v / d)
                    }
                    None => block.column_mut(c).assign(v),
                }
            }
            let sys_ids: Vec<usize> = active.iter().map(|&i| group[i]).collect();
            let w_block = family.apply(&block, &sys_ids)?;

            for (c, &i) in active.iter().enumerate() {
                let st = &mut states[i];
                let j = st.iters;
                let mut w = w_block.column(c).to_owned();
                // modified Gram-Schmidt against this system's own basis
                let mut hcol = Vec::with_capacity(j + 2);
                for v in &st.basis {
                    let h = conj_dot(v, &w.view());
                    azip!((w in &mut w, &v in v) *w -= h * v);
                    hcol.push(h);
                }
                let hnext = vec_norm(&w);
                hcol.push(T::from_f64(hnext));

                // previously accumulated rotations
                for (idx, (&c_rot, &s_rot)) in
                    st.givens_c.iter().zip(st.givens_s.iter()).enumerate()
                {
                    let h0 = hcol[idx];
                    let h1 = hcol[idx + 1];
                    hcol[idx] = h0.scale(c_rot) + s_rot * h1;
                    hcol[idx + 1] = -(s_rot.conj()) * h0 + h1.scale(c_rot);
                }
                let (c_new, s_new, r) = make_givens(hcol[j], hcol[j + 1]);
                hcol[j] = r;
                hcol[j + 1] = T::zero();
                st.givens_c.push(c_new);
                st.givens_s.push(s_new);
                let gj = st.g[j];
                st.g[j] = gj.scale(c_new);
                st.g.push(-(s_new.conj()) * gj);

                st.hess.push(hcol);
                st.iters = j + 1;
                st.res = st.g[j + 1].abs() / st.rhs_norm;
                st.res_history.push(st.res);

                let breakdown = hnext <= f64::EPSILON * st.rhs_norm;
                if !breakdown {
                    st.basis.push(w.mapv(|v| v.scale(1.0 / hnext)));
                }

                if st.res <= cfg.tol {
                    st.done = true;
                    st.converged = true;
                } else if breakdown {
                    // exact Krylov invariance without convergence: singular
                    st.done = true;
                    st.stagnated = true;
                } else if st.iters >= cfg.max_iterations {
                    st.done = true;
                } else if st.iters > STAGNATION_WINDOW {
                    let prev = st.res_history[st.iters - 1 - STAGNATION_WINDOW];
                    if prev > 0.0 && (prev - st.res) / prev < STAGNATION_IMPROVEMENT {
                        st.done = true;
                        st.stagnated = true;
                    }
                }
            }
        }

        // back substitution and solution assembly per system
        for (i, st) in states.iter().enumerate() {
            let s = group[i];
            let m = st.iters;
            out.iterations[s] = m;
            out.residuals[s] = st.res;
            out.converged[s] = st.converged;
            out.stagnated[s] = st.stagnated;
            if m == 0 {
                continue;
            }
            let mut y = vec![T::zero(); m];
            for row in (0..m).rev() {
                let mut acc = st.g[row];
                for col in (row + 1)..m {
                    acc -= st.hess[col][row] * y[col];
                }
                y[row] = acc / st.hess[row][row];
            }
            let mut x = Array1::<T>::from_elem(dim, T::zero());
            for (coeff, v) in y.iter().zip(st.basis.iter()) {
                azip!((x in &mut x, &v in v) *x += *coeff * v);
            }
            if let Some(diag) = &precond[s] {
                azip!((x in &mut x, &d in diag) *x = *x / d);
            }
            solutions.column_mut(s).assign(&x);
        }
    }

    // one explicit residual evaluation per column; convergence flags are
    // downgraded if the true residual misses the target
    let all: Vec<usize> = (0..nsys).collect();
    for group in all.chunks(cfg.batch_size) {
        let mut block = Array2::<T>::from_elem((dim, group.len()), T::zero());
        for (c, &s) in group.iter().enumerate() {
            block.column_mut(c).assign(&solutions.column(s));
        }
        let ax = family.apply(&block, group)?;
        for (c, &s) in group.iter().enumerate() {
            let mut r = rhs.column(s).to_owned();
            azip!((r in &mut r, &a in &ax.column(c)) *r -= a);
            let rhs_norm = vec_norm(&rhs.column(s).to_owned());
            let rel = if rhs_norm == 0.0 {
                0.0
            } else {
                vec_norm(&r) / rhs_norm
            };
            out.residuals[s] = rel;
            if out.converged[s] && rel > cfg.tol {
                out.converged[s] = false;
            }
        }
    }

    Ok((solutions, out))
}

fn expand_shifts(shifts: &[ComplexShift]) -> Vec<ComplexShift> {
    shifts
        .iter()
        .flat_map(|&s| std::iter::repeat(s).take(3))
        .collect()
}

fn to_complex(x: Array2<f64>) -> Array2<C64> {
    x.mapv(|v| C64::new(v, 0.0))
}

/// Solve (MK - tau_j^2 I) x = d_i for every shift and dipole column.
///
/// Columns are ordered shift-major (3 dipole columns per shift). Shift sets
/// with eta = 0 throughout are solved in real arithmetic.
pub fn solve_shifted_mk(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    shifts: &[ComplexShift],
    cfg: &SolverConfig,
) -> Result<(Array2<C64>, SolveReport)> {
    cfg.validate()?;
    if shifts.is_empty() {
        return Err(Error::InvalidConfig("shift list is empty".into()));
    }
    if dipoles.nrows() != pencil.n() {
        return Err(Error::DimensionMismatch(format!(
            "dipole block has {} rows, pencil dimension is {}",
            dipoles.nrows(),
            pencil.n()
        )));
    }
    let start = Instant::now();
    let gemms_before = pencil.gemm_count();
    let col_shifts = expand_shifts(shifts);
    let nsys = col_shifts.len();
    let all_real = shifts.iter().all(|s| s.is_real());

    let (solutions, outcome) = if all_real {
        let rhs = {
            let mut rhs = Array2::<f64>::zeros((pencil.n(), nsys));
            for (c, _) in col_shifts.iter().enumerate() {
                rhs.column_mut(c).assign(&dipoles.matrix().column(c % 3));
            }
            rhs
        };
        let family = MkFamily {
            pencil,
            tau2: col_shifts.iter().map(|s| s.omega * s.omega).collect(),
        };
        let (x, o) = gmres_batched(&family, &rhs, cfg)?;
        (to_complex(x), o)
    } else {
        let rhs = {
            let mut rhs = Array2::<C64>::zeros((pencil.n(), nsys));
            for c in 0..nsys {
                azip!((r in rhs.column_mut(c), &d in &dipoles.matrix().column(c % 3))
                    *r = C64::new(d, 0.0));
            }
            rhs
        };
        let family = MkFamily {
            pencil,
            tau2: col_shifts.iter().map(|s| s.squared()).collect(),
        };
        gmres_batched(&family, &rhs, cfg)?
    };

    let report = SolveReport {
        shifts: col_shifts,
        iterations: outcome.iterations,
        residuals: outcome.residuals,
        converged: outcome.converged,
        stagnated: outcome.stagnated,
        gemms: pencil.gemm_count() - gemms_before,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((solutions, report))
}

/// Solve (H - tau_j S) x = [d; d] for every shift and dipole column at full
/// dimension 2n.
pub fn solve_shifted_full(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    shifts: &[ComplexShift],
    cfg: &SolverConfig,
) -> Result<(Array2<C64>, SolveReport)> {
    cfg.validate()?;
    if shifts.is_empty() {
        return Err(Error::InvalidConfig("shift list is empty".into()));
    }
    if dipoles.nrows() != pencil.n() {
        return Err(Error::DimensionMismatch(format!(
            "dipole block has {} rows, pencil dimension is {}",
            dipoles.nrows(),
            pencil.n()
        )));
    }
    let start = Instant::now();
    let gemms_before = pencil.gemm_count();
    let col_shifts = expand_shifts(shifts);
    let nsys = col_shifts.len();
    let stacked = dipoles.stacked();
    let all_real = shifts.iter().all(|s| s.is_real());

    let (solutions, outcome) = if all_real {
        let mut rhs = Array2::<f64>::zeros((2 * pencil.n(), nsys));
        for c in 0..nsys {
            rhs.column_mut(c).assign(&stacked.column(c % 3));
        }
        let family = FullFamily {
            pencil,
            tau: col_shifts.iter().map(|s| s.omega).collect(),
        };
        let (x, o) = gmres_batched(&family, &rhs, cfg)?;
        (to_complex(x), o)
    } else {
        let mut rhs = Array2::<C64>::zeros((2 * pencil.n(), nsys));
        for c in 0..nsys {
            azip!((r in rhs.column_mut(c), &d in &stacked.column(c % 3)) *r = C64::new(d, 0.0));
        }
        let family = FullFamily {
            pencil,
            tau: col_shifts.iter().map(|s| s.value()).collect(),
        };
        gmres_batched(&family, &rhs, cfg)?
    };

    let report = SolveReport {
        shifts: col_shifts,
        iterations: outcome.iterations,
        residuals: outcome.residuals,
        converged: outcome.converged,
        stagnated: outcome.stagnated,
        gemms: pencil.gemm_count() - gemms_before,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((solutions, report))
}

//! Adaptive selection of interpolation frequencies by interval bisection on
//! the self-normalized spectrum change between refinement levels.

use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, LevelDiagnostics, SpectrumResult};
use crate::output::normalize;
use crate::pencil::{ComplexShift, DipoleBlock, ResponsePencil};
use crate::rom::{
    self, FullBasisBuilder, MkBasisBuilder, ReducedModel, RomVariant,
};
use crate::solver::{solve_shifted_full, solve_shifted_mk, SolverConfig};

/// Whether interpolation shifts carry the evaluation damping or sit on the
/// real axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    #[default]
    Complex,
    Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    /// Uniform shifts (including both endpoints) at the first level.
    pub level1_count: usize,
    /// Interval convergence threshold on the max change of the self-normalized
    /// spectrum between consecutive levels.
    pub tol: f64,
    /// Refinement stops once the reduced order reaches this cap.
    pub max_order: usize,
    pub shift_mode: ShiftMode,
    pub variant: RomVariant,
    pub solver: SolverConfig,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            level1_count: 5,
            tol: 0.01,
            max_order: 256,
            shift_mode: ShiftMode::Complex,
            variant: RomVariant::MkStructured,
            solver: SolverConfig::default(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level1_count < 2 {
            return Err(Error::InvalidConfig(
                "first level needs at least 2 shifts".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(
                "refinement tolerance must be positive".into(),
            ));
        }
        if self.max_order == 0 {
            return Err(Error::InvalidConfig("order cap must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Half-open refinement interval over the energy window.
#[derive(Debug, Clone)]
struct Interval {
    a: f64,
    b: f64,
    converged: bool,
    /// Cleared when the interval is too narrow to bisect in floating point.
    refinable: bool,
}

/// One basis-plus-projection pipeline, independent of the variant.
enum Pipeline<'a> {
    Mk(MkBasisBuilder<'a>),
    Full(FullBasisBuilder),
}

impl<'a> Pipeline<'a> {
    fn new(pencil: &'a ResponsePencil, variant: RomVariant) -> Self {
        match variant {
            RomVariant::MkStructured => Pipeline::Mk(MkBasisBuilder::new(pencil)),
            RomVariant::FullPencil => Pipeline::Full(FullBasisBuilder::new(pencil)),
        }
    }

    fn order(&self) -> usize {
        match self {
            Pipeline::Mk(b) => b.order(),
            Pipeline::Full(b) => b.order(),
        }
    }

    /// Solve the shifted systems at `shifts`, fold converged solutions into
    /// the basis, and return the per-shift success flags.
    fn solve_and_extend(
        &mut self,
        pencil: &ResponsePencil,
        dipoles: &DipoleBlock,
        shifts: &[ComplexShift],
        solver: &SolverConfig,
    ) -> Result<Vec<bool>> {
        let (solutions, report) = match self {
            Pipeline::Mk(_) => solve_shifted_mk(pencil, dipoles, shifts, solver)?,
            Pipeline::Full(_) => solve_shifted_full(pencil, dipoles, shifts, solver)?,
        };
        let mut ok = Vec::with_capacity(shifts.len());
        for (j, _) in shifts.iter().enumerate() {
            let success = report.shift_converged(j);
            if success {
                let cols = solutions.slice(ndarray::s![.., 3 * j..3 * j + 3]);
                let owned = cols.to_owned();
                match self {
                    Pipeline::Mk(b) => b.extend(&owned.view())?,
                    Pipeline::Full(b) => b.extend(&owned.view())?,
                }
            }
            ok.push(success);
        }
        Ok(ok)
    }

    fn project(
        &self,
        pencil: &ResponsePencil,
        dipoles: &DipoleBlock,
        shifts: Vec<ComplexShift>,
    ) -> Result<ReducedModel> {
        match self {
            Pipeline::Mk(b) => {
                let basis = b.basis()?;
                rom::project_mk(pencil, dipoles, basis, shifts, b.deflation_log().to_vec())
            }
            Pipeline::Full(b) => {
                let basis = b.basis()?;
                rom::project_full(pencil, dipoles, basis, shifts, b.deflation_log().to_vec())
            }
        }
    }
}

fn shift_at(omega: f64, grid: &FrequencyGrid, mode: ShiftMode) -> ComplexShift {
    match mode {
        ShiftMode::Complex => ComplexShift::new(omega, grid.eta),
        ShiftMode::Real => ComplexShift::real(omega),
    }
}

/// Max change of the normalized spectrum over the grid points belonging to
/// the interval. A grid point on an interior breakpoint belongs to the
/// interval on its left; the window minimum belongs to the first interval.
fn interval_error(
    iv: &Interval,
    omega_min: f64,
    omegas: &[f64],
    new: &[f64],
    old: &[f64],
) -> f64 {
    let mut e = 0.0f64;
    for (i, &omega) in omegas.iter().enumerate() {
        let inside = (omega > iv.a && omega <= iv.b) || (omega == omega_min && iv.a == omega_min);
        if inside {
            e = e.max((new[i] - old[i]).abs());
        }
    }
    e
}

/// Run the adaptive loop: level 1 places `level1_count` uniform shifts over
/// the window; each later level bisects every unconverged interval, marks
/// intervals converged when their normalized-spectrum change falls below the
/// tolerance, and stops when all intervals converge, the order cap is
/// reached, or nothing refinable remains.
pub fn adaptive_spectrum(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    grid: &FrequencyGrid,
    cfg: &AdaptiveConfig,
) -> Result<(SpectrumResult, ReducedModel)> {
    cfg.validate()?;
    let start = Instant::now();
    let gemms0 = pencil.gemm_count();

    let mut pipeline = Pipeline::new(pencil, cfg.variant);
    let mut kept_shifts: Vec<ComplexShift> = Vec::new();
    let mut levels: Vec<LevelDiagnostics> = Vec::new();

    // level-1 shift positions and the intervals between them
    let step = (grid.omega_max - grid.omega_min) / (cfg.level1_count - 1) as f64;
    let mut pending: Vec<f64> = (0..cfg.level1_count)
        .map(|i| grid.omega_min + step * i as f64)
        .collect();
    let mut intervals: Vec<Interval> = pending
        .windows(2)
        .map(|w| Interval {
            a: w[0],
            b: w[1],
            converged: false,
            refinable: true,
        })
        .collect();

    let omegas = grid.points();
    let mut sigma_prev: Option<Vec<f64>> = None;
    let mut model;
    let mut spectrum;
    let converged_flag;

    loop {
        // solve the new shifts and fold successes into the basis
        let shifts: Vec<ComplexShift> = pending
            .iter()
            .map(|&omega| shift_at(omega, grid, cfg.shift_mode))
            .collect();
        let ok = pipeline.solve_and_extend(pencil, dipoles, &shifts, &cfg.solver)?;
        // a failed shift contributes nothing and its exact position is never
        // retried; the surrounding region is still refined at fresh positions
        // on later levels
        for (&success, &shift) in ok.iter().zip(shifts.iter()) {
            if success {
                kept_shifts.push(shift);
            }
        }
        let any_success = ok.iter().any(|&s| s);

        model = pipeline.project(pencil, dipoles, kept_shifts.clone())?;
        spectrum = rom::eval_spectrum(&model, grid)?;
        let sigma_new = normalize(&spectrum.sigma);

        let mut errors = vec![f64::INFINITY; intervals.len()];
        if let Some(prev) = &sigma_prev {
            for (iv, e) in intervals.iter_mut().zip(errors.iter_mut()) {
                *e = interval_error(iv, grid.omega_min, &omegas, &sigma_new, prev);
                // a level where every solve failed leaves the model unchanged;
                // its zero errors are not evidence of convergence
                if *e <= cfg.tol && any_success {
                    iv.converged = true;
                }
            }
        }
        levels.push(LevelDiagnostics {
            shifts: pending.clone(),
            interval_errors: errors,
        });

        let all_converged = intervals.iter().all(|iv| iv.converged);
        if all_converged {
            converged_flag = true;
            break;
        }
        if pipeline.order() >= cfg.max_order {
            converged_flag = false;
            break;
        }
        if !any_success {
            // further bisection of the same regions cannot do better
            converged_flag = false;
            break;
        }

        // bisect every unconverged refinable interval
        pending.clear();
        let mut next_intervals = Vec::with_capacity(intervals.len());
        for iv in intervals.drain(..) {
            if iv.converged || !iv.refinable {
                next_intervals.push(iv);
                continue;
            }
            let mid = 0.5 * (iv.a + iv.b);
            if mid <= iv.a || mid >= iv.b {
                let mut iv = iv;
                iv.refinable = false;
                next_intervals.push(iv);
                continue;
            }
            pending.push(mid);
            next_intervals.push(Interval {
                a: iv.a,
                b: mid,
                converged: false,
                refinable: true,
            });
            next_intervals.push(Interval {
                a: mid,
                b: iv.b,
                converged: false,
                refinable: true,
            });
        }
        intervals = next_intervals;
        if pending.is_empty() {
            converged_flag = false;
            break;
        }
        sigma_prev = Some(sigma_new);
    }

    spectrum.diagnostics.levels = levels;
    spectrum.diagnostics.k = kept_shifts.len();
    spectrum.diagnostics.r = model.order();
    spectrum.diagnostics.gemms = pencil.gemm_count() - gemms0;
    spectrum.diagnostics.wall_seconds = start.elapsed().as_secs_f64();
    spectrum.diagnostics.converged = converged_flag;
    Ok((spectrum, model))
}

/// Non-adaptive baseline: `k` uniform shifts over the window (endpoints
/// included), one solve, one projection.
pub fn uniform_spectrum(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    grid: &FrequencyGrid,
    k: usize,
    cfg: &AdaptiveConfig,
) -> Result<(SpectrumResult, ReducedModel)> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::InvalidConfig(
            "uniform placement needs at least 2 shifts".into(),
        ));
    }
    let start = Instant::now();
    let gemms0 = pencil.gemm_count();
    let step = (grid.omega_max - grid.omega_min) / (k - 1) as f64;
    let positions: Vec<f64> = (0..k).map(|i| grid.omega_min + step * i as f64).collect();
    let shifts: Vec<ComplexShift> = positions
        .iter()
        .map(|&omega| shift_at(omega, grid, cfg.shift_mode))
        .collect();

    let mut pipeline = Pipeline::new(pencil, cfg.variant);
    let ok = pipeline.solve_and_extend(pencil, dipoles, &shifts, &cfg.solver)?;
    let kept: Vec<ComplexShift> = shifts
        .iter()
        .zip(ok.iter())
        .filter(|(_, &s)| s)
        .map(|(&sh, _)| sh)
        .collect();
    let all_ok = ok.iter().all(|&s| s);
    let model = pipeline.project(pencil, dipoles, kept.clone())?;
    let mut spectrum = rom::eval_spectrum(&model, grid)?;
    spectrum.diagnostics.levels = vec![LevelDiagnostics {
        shifts: positions,
        interval_errors: vec![],
    }];
    spectrum.diagnostics.k = kept.len();
    spectrum.diagnostics.r = model.order();
    spectrum.diagnostics.gemms = pencil.gemm_count() - gemms0;
    spectrum.diagnostics.wall_seconds = start.elapsed().as_secs_f64();
    spectrum.diagnostics.converged = all_ok;
    Ok((spectrum, model))
}

/// Evaluate a spectrum without reduction by solving the shifted systems at
/// every grid point directly (iterative reference route).
pub fn direct_spectrum(
    pencil: &ResponsePencil,
    dipoles: &DipoleBlock,
    grid: &FrequencyGrid,
    solver: &SolverConfig,
) -> Result<SpectrumResult> {
    let start = Instant::now();
    let gemms0 = pencil.gemm_count();
    let omegas = grid.points();
    let mut sigma = Vec::with_capacity(omegas.len());
    let mut tensors = Vec::with_capacity(omegas.len());
    let mut all_ok = true;
    for &omega in &omegas {
        let shift = grid.shift_at(omega);
        let (sol, report) = solve_shifted_mk(pencil, dipoles, &[shift], solver)?;
        all_ok &= report.all_converged();
        let kd = pencil.k().dot(dipoles.matrix());
        let mut alpha = ndarray::Array2::<C64>::zeros((3, 3));
        for row in 0..3 {
            for col in 0..3 {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..pencil.n() {
                    acc += C64::new(kd[[i, row]], 0.0) * sol[[i, col]];
                }
                alpha[[row, col]] = 2.0 * acc;
            }
        }
        let trace = alpha[[0, 0]] + alpha[[1, 1]] + alpha[[2, 2]];
        sigma.push(omega * trace.im);
        tensors.push(alpha);
    }
    let mut result = SpectrumResult::new(omegas, sigma);
    result.tensors = Some(tensors);
    result.diagnostics.gemms = pencil.gemm_count() - gemms0;
    result.diagnostics.wall_seconds = start.elapsed().as_secs_f64();
    result.diagnostics.converged = all_ok;
    Ok(result)
}

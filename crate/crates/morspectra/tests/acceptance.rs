//! End-to-end validation gate. Each test covers one numbered criterion and
//! prints a single pass/fail line; run with `--nocapture` to see them all.

use morspectra::adaptive::{adaptive_spectrum, uniform_spectrum, AdaptiveConfig, ShiftMode};
use morspectra::grid::FrequencyGrid;
use morspectra::oracle::{self, OscillatorTable};
use morspectra::output::compare_normalized;
use morspectra::rom::{self, RomVariant};
use morspectra::solver::solve_shifted_mk;
use morspectra::synth::{self, SynthSpec};
use morspectra::{ComplexShift, DipoleBlock, ResponsePencil, SolverConfig};
use ndarray::array;

fn verdict(number: u32, passed: bool, detail: &str) {
    println!(
        "criterion {number}: {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {number} failed: {detail}");
}

fn scalar_problem() -> (ResponsePencil, DipoleBlock) {
    let p = ResponsePencil::build(array![[2.0]], array![[1.0]], true).unwrap();
    let d = DipoleBlock::new(array![[1.0, 0.0, 0.0]]).unwrap();
    (p, d)
}

fn synth_problem(n_occ: usize, n_virt: usize, fraction: f64, seed: u64) -> synth::SynthProblem {
    let spec = SynthSpec {
        n_occ,
        n_virt,
        fraction,
        seed,
        ..Default::default()
    };
    synth::generate(&spec).unwrap()
}

/// Criterion 1: the scalar problem has the closed form
/// sigma(omega) = omega * Im 2 / (3 - (omega + i eta)^2); the reduced-model,
/// dense per-frequency, and sum-over-states routes must all reproduce it.
#[test]
fn criterion_01_scalar_analytic_case() {
    let start = std::time::Instant::now();
    let (p, d) = scalar_problem();
    let grid = FrequencyGrid::new(0.5, 3.0, 101, 0.3).unwrap();
    let analytic: Vec<f64> = grid
        .points()
        .iter()
        .map(|&omega| {
            let z = num_complex::Complex64::new(omega, 0.3);
            omega * (2.0 / (3.0 - z * z)).im
        })
        .collect();

    let cfg = AdaptiveConfig {
        solver: SolverConfig {
            tol: 1e-14,
            ..Default::default()
        },
        ..Default::default()
    };
    let (mor, _) = adaptive_spectrum(&p, &d, &grid, &cfg).unwrap();
    let cpp = oracle::dense_cpp_spectrum(&p, &d, &grid).unwrap();
    let eig = oracle::dense_structured_eig(&p).unwrap();
    let sos = oracle::lorentzian_spectrum(&OscillatorTable::new(&eig, &d).unwrap(), &grid);

    let scale = analytic.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_err = |s: &[f64]| -> f64 {
        s.iter()
            .zip(analytic.iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    };
    let worst = max_err(&mor.sigma).max(max_err(&cpp.sigma)).max(max_err(&sos.sigma));
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        worst <= 1e-12 * scale.max(1.0) && elapsed < 1.0,
        &format!("three routes vs closed form: max abs error {worst:.2e}, {elapsed:.2}s"),
    );
}

/// Criterion 2: sum-over-states and per-frequency dense routes agree to
/// 1e-10 relative max-abs on ten seeded problems, n = 50..200, 1000 points.
#[test]
fn criterion_02_oracle_identity() {
    let mut worst = 0.0f64;
    for (i, n_virt) in [10, 13, 16, 19, 22, 25, 28, 31, 34, 40].iter().enumerate() {
        let problem = synth_problem(5, *n_virt, 0.3, 100 + i as u64);
        let grid = FrequencyGrid::new(20.0, 30.0, 1000, 1.0).unwrap();
        let eig = oracle::dense_structured_eig(&problem.pencil).unwrap();
        let table = OscillatorTable::new(&eig, &problem.dipoles).unwrap();
        let sos = oracle::lorentzian_spectrum(&table, &grid);
        let cpp = oracle::dense_cpp_spectrum(&problem.pencil, &problem.dipoles, &grid).unwrap();
        let scale = cpp.sigma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = sos
            .sigma
            .iter()
            .zip(cpp.sigma.iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst = worst.max(diff / scale);
    }
    verdict(
        2,
        worst <= 1e-10,
        &format!("10 problems, worst relative max-abs disagreement {worst:.2e}"),
    );
}

/// Criterion 3: the reduced trace interpolates the dense trace at every
/// interpolation shift to within 10x the linear-solver tolerance.
#[test]
fn criterion_03_interpolation_exactness() {
    let problem = synth_problem(5, 20, 0.3, 7);
    let grid = FrequencyGrid::new(20.0, 30.0, 201, 1.0).unwrap();
    let cfg = AdaptiveConfig::default();
    let (_, model) = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &cfg).unwrap();
    assert!(!model.shifts.is_empty());
    let mut worst = 0.0f64;
    for &shift in &model.shifts {
        let red = rom::eval_reduced_tensor(&model, shift).unwrap();
        let full = oracle::dense_tensor(&problem.pencil, &problem.dipoles, shift).unwrap();
        let tr_red = red[[0, 0]] + red[[1, 1]] + red[[2, 2]];
        let tr_full = full[[0, 0]] + full[[1, 1]] + full[[2, 2]];
        worst = worst.max((tr_red - tr_full).norm() / tr_full.norm());
    }
    let bound = 10.0 * cfg.solver.tol;
    verdict(
        3,
        worst <= bound,
        &format!(
            "{} shifts, worst relative trace error {worst:.2e} (bound {bound:.0e})",
            model.shifts.len()
        ),
    );
}

/// Criterion 4: first derivatives of the reduced and dense traces agree at
/// the interpolation shifts (Hermite property), solver tolerance 1e-10.
#[test]
fn criterion_04_hermite_moment_property() {
    let problem = synth_problem(5, 30, 0.3, 11);
    let grid = FrequencyGrid::new(20.0, 30.0, 201, 1.0).unwrap();
    let cfg = AdaptiveConfig {
        solver: SolverConfig {
            tol: 1e-10,
            max_iterations: 400,
            ..Default::default()
        },
        ..Default::default()
    };
    let (_, model) = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &cfg).unwrap();
    let h = 1e-4 * (grid.omega_max - grid.omega_min);
    let mut worst_val = 0.0f64;
    let mut worst_der = 0.0f64;
    for &shift in &model.shifts {
        let (ve, de) =
            rom::moment_match_check(&problem.pencil, &problem.dipoles, &model, shift, h).unwrap();
        worst_val = worst_val.max(ve);
        worst_der = worst_der.max(de);
    }
    verdict(
        4,
        worst_der <= 1e-4,
        &format!(
            "{} shifts, worst derivative error {worst_der:.2e}, worst value error {worst_val:.2e}",
            model.shifts.len()
        ),
    );
}

/// Criterion 5: full-pencil and half-dimension projections built from the
/// same shifts produce the same spectrum to 1e-8 relative max-abs.
#[test]
fn criterion_05_algorithm_equivalence() {
    let problem = synth_problem(5, 30, 0.3, 13);
    let grid = FrequencyGrid::new(20.0, 30.0, 301, 1.0).unwrap();
    let base = AdaptiveConfig {
        solver: SolverConfig {
            tol: 1e-12,
            max_iterations: 400,
            ..Default::default()
        },
        ..Default::default()
    };
    let full = AdaptiveConfig {
        variant: RomVariant::FullPencil,
        ..base.clone()
    };
    // identical shift sets by construction: uniform placement, both converge
    let (s_mk, _) = uniform_spectrum(&problem.pencil, &problem.dipoles, &grid, 8, &base).unwrap();
    let (s_full, _) = uniform_spectrum(&problem.pencil, &problem.dipoles, &grid, 8, &full).unwrap();
    assert_eq!(s_mk.diagnostics.k, 8);
    assert_eq!(s_full.diagnostics.k, 8);
    let scale = s_mk.sigma.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = s_mk
        .sigma
        .iter()
        .zip(s_full.sigma.iter())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    verdict(
        5,
        diff / scale <= 1e-8,
        &format!("relative max-abs disagreement {:.2e}", diff / scale),
    );
}

/// Criterion 6: adaptive run on a dense-in-window n = 500 problem matches the
/// normalized dense reference within the 0.01 tolerance, with fewer shifts
/// than eigenvalues in the window.
#[test]
fn criterion_06_adaptive_convergence() {
    let problem = synth_problem(5, 100, 0.3, 17);
    let grid = FrequencyGrid::new(20.0, 30.0, 1000, 1.0).unwrap();
    let eig = oracle::dense_structured_eig(&problem.pencil).unwrap();
    let table = OscillatorTable::new(&eig, &problem.dipoles).unwrap();
    let in_window = table.count_in_window(20.0, 30.0);
    assert!(in_window >= 50, "{in_window} eigenvalues in window");

    let cfg = AdaptiveConfig {
        solver: SolverConfig {
            max_iterations: 400,
            ..Default::default()
        },
        ..Default::default()
    };
    let (spec, _) = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &cfg).unwrap();
    let dense = oracle::dense_cpp_spectrum(&problem.pencil, &problem.dipoles, &grid).unwrap();
    let (diff, at) =
        compare_normalized(&spec.omegas, &spec.sigma, &dense.omegas, &dense.sigma).unwrap();
    let k = spec.diagnostics.k;
    verdict(
        6,
        spec.diagnostics.converged && diff <= 0.01 && k < in_window,
        &format!(
            "normalized error {diff:.4} at omega {at:.2}, k = {k} vs {in_window} eigenvalues"
        ),
    );
}

/// Criterion 7: real interpolation shifts either fail outright or need at
/// least 1.5x the shifts of the complex run; complex-shift iteration counts
/// stay below the cap.
#[test]
fn criterion_07_complex_vs_real_shifts() {
    let problem = synth_problem(5, 60, 0.4, 19);
    let grid = FrequencyGrid::new(20.0, 30.0, 500, 1.0).unwrap();
    let complex_cfg = AdaptiveConfig::default();
    let (s_complex, model) =
        adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &complex_cfg).unwrap();
    assert!(s_complex.diagnostics.converged);

    // iteration boundedness: re-solve the accepted complex shifts and check
    // every column stayed below the iteration cap
    let (_, report) = solve_shifted_mk(
        &problem.pencil,
        &problem.dipoles,
        &model.shifts,
        &complex_cfg.solver,
    )
    .unwrap();
    let bounded = report.all_converged()
        && report
            .iterations
            .iter()
            .all(|&it| it < complex_cfg.solver.max_iterations);

    let real_cfg = AdaptiveConfig {
        shift_mode: ShiftMode::Real,
        ..Default::default()
    };
    let real_run = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &real_cfg);
    let (real_failed, real_k) = match &real_run {
        Err(_) => (true, 0),
        Ok((s, _)) => (!s.diagnostics.converged, s.diagnostics.k),
    };
    let k_complex = s_complex.diagnostics.k;
    let passed = bounded && (real_failed || real_k as f64 >= 1.5 * k_complex as f64);
    verdict(
        7,
        passed,
        &format!(
            "complex k = {k_complex} (iterations bounded: {bounded}); real shifts: failed = {real_failed}, k = {real_k}"
        ),
    );
}

/// Criterion 8: the adaptive shift count does not decrease as the damping
/// shrinks through 1.0, 0.5, 0.3, 0.1.
#[test]
fn criterion_08_damping_trend() {
    let problem = synth_problem(5, 40, 0.4, 23);
    let mut ks = Vec::new();
    for eta in [1.0, 0.5, 0.3, 0.1] {
        let grid = FrequencyGrid::new(20.0, 30.0, 500, eta).unwrap();
        let cfg = AdaptiveConfig {
            solver: SolverConfig {
                max_iterations: 400,
                ..Default::default()
            },
            ..Default::default()
        };
        let (spec, _) = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &cfg).unwrap();
        assert!(spec.diagnostics.converged, "eta = {eta} did not converge");
        ks.push(spec.diagnostics.k);
    }
    let monotone = ks.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        8,
        monotone,
        &format!("k over eta in {{1.0, 0.5, 0.3, 0.1}}: {ks:?}"),
    );
}

/// Criterion 9: across a size family n = 250..2000 with in-window eigenvalue
/// count growing with n, the adaptive shift count grows by less than 3x.
#[test]
fn criterion_09_order_growth_trend() {
    let grid = FrequencyGrid::new(20.0, 30.0, 500, 1.0).unwrap();
    let mut ks = Vec::new();
    let mut counts = Vec::new();
    for n_virt in [50, 100, 200, 400] {
        let problem = synth_problem(5, n_virt, 0.3, 29);
        let eig = oracle::dense_structured_eig(&problem.pencil).unwrap();
        let table = OscillatorTable::new(&eig, &problem.dipoles).unwrap();
        counts.push(table.count_in_window(20.0, 30.0));
        let cfg = AdaptiveConfig {
            solver: SolverConfig {
                max_iterations: 400,
                ..Default::default()
            },
            ..Default::default()
        };
        let (spec, _) = adaptive_spectrum(&problem.pencil, &problem.dipoles, &grid, &cfg).unwrap();
        assert!(spec.diagnostics.converged, "n = {} did not converge", 5 * n_virt);
        ks.push(spec.diagnostics.k);
    }
    let count_growth = counts[3] as f64 / counts[0] as f64;
    let k_growth = ks[3] as f64 / ks[0] as f64;
    verdict(
        9,
        k_growth < 3.0 && count_growth > 6.0,
        &format!("k: {ks:?} (growth {k_growth:.2}x), eigenvalues in window: {counts:?} (growth {count_growth:.1}x)"),
    );
}

/// Criterion 10: solutions are invariant to the batching width within 10x the
/// solver tolerance, and the GEMM tally is deterministic across reruns.
#[test]
fn criterion_10_batching_invariance() {
    let problem = synth_problem(5, 20, 0.3, 31);
    let shifts: Vec<ComplexShift> = [21.0, 24.0, 27.0, 29.5]
        .iter()
        .map(|&omega| ComplexShift::new(omega, 1.0))
        .collect();
    let tol = 1e-8;
    let narrow = SolverConfig {
        tol,
        batch_size: 1,
        ..Default::default()
    };
    let wide = SolverConfig {
        tol,
        batch_size: 12,
        ..Default::default()
    };
    let (x1, r1) = solve_shifted_mk(&problem.pencil, &problem.dipoles, &shifts, &narrow).unwrap();
    let (x12, r12) = solve_shifted_mk(&problem.pencil, &problem.dipoles, &shifts, &wide).unwrap();
    assert!(r1.all_converged() && r12.all_converged());
    let scale = x12.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let diff = x1
        .iter()
        .zip(x12.iter())
        .fold(0.0f64, |a, (p, q)| a.max((p - q).norm()));

    let (_, r12b) = solve_shifted_mk(&problem.pencil, &problem.dipoles, &shifts, &wide).unwrap();
    let deterministic = r12.gemms == r12b.gemms;
    verdict(
        10,
        diff / scale <= 10.0 * tol && deterministic,
        &format!(
            "batch 1 vs 12 relative difference {:.2e}; gemms {} == {} rerun: {deterministic}",
            diff / scale,
            r12.gemms,
            r12b.gemms
        ),
    );
}

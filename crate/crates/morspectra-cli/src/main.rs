//! Command-line surface: spectrum runs, dense references, synthetic problem
//! generation, and normalized spectrum comparison.
//!
//! Exit codes: 0 success; 1 comparison above threshold; 2 numerical
//! non-convergence (partial outputs are kept); 3 bad input or configuration;
//! 4 I/O failure.

extern crate blas_src;
extern crate lapack_src;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use morspectra::adaptive::{adaptive_spectrum, uniform_spectrum, AdaptiveConfig, ShiftMode};
use morspectra::grid::FrequencyGrid;
use morspectra::oracle;
use morspectra::output;
use morspectra::rom::RomVariant;
use morspectra::synth::{self, SynthSpec};
use morspectra::{mtx, DipoleBlock, Error, Preconditioner, ResponsePencil, SolverConfig};

const EXIT_ABOVE_THRESHOLD: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_BAD_INPUT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "morspectra",
    about = "Absorption spectra of response pencils via adaptive model order reduction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate the spectrum with a reduced interpolation model
    Spectrum(SpectrumArgs),
    /// Dense reference spectrum (sum over states or per-frequency solves)
    Reference(ReferenceArgs),
    /// Generate a seeded synthetic problem as Matrix Market files
    Generate(GenerateArgs),
    /// Compare two spectrum CSVs after self-normalization
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Matrix Market file with A (with --b-mtx)
    #[arg(long, value_name = "FILE")]
    a_mtx: Option<PathBuf>,
    /// Matrix Market file with B (with --a-mtx)
    #[arg(long, value_name = "FILE")]
    b_mtx: Option<PathBuf>,
    /// Matrix Market file with M = A+B (with --k-mtx)
    #[arg(long, value_name = "FILE")]
    m_mtx: Option<PathBuf>,
    /// Matrix Market file with K = A-B (with --m-mtx)
    #[arg(long, value_name = "FILE")]
    k_mtx: Option<PathBuf>,
    /// Matrix Market file with the n x 3 dipole block
    #[arg(long, value_name = "FILE")]
    d_mtx: Option<PathBuf>,
    /// JSON spec of a synthetic problem to generate in memory
    #[arg(long, value_name = "FILE")]
    synth: Option<PathBuf>,
    /// Verify positive definiteness of M and K on load (dense, O(n^3))
    #[arg(long)]
    check_spd: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    /// Half-dimension projection of M K in the K inner product
    Mk,
    /// Projection of the full 2n pencil (H, S)
    Full,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ShiftModeArg {
    /// Interpolation shifts at omega + i*eta
    Complex,
    /// Interpolation shifts on the real axis
    Real,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Bisection refinement until the normalized spectrum settles
    Adaptive,
    /// Fixed count of uniformly spaced shifts (--fixed-k)
    Uniform,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PreconditionerArg {
    None,
    JacobiDiagonal,
}

/// Optional JSON config; command-line flags win over file values.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    points: Option<usize>,
    eta: Option<f64>,
    tol: Option<f64>,
    algorithm: Option<String>,
    shift_mode: Option<String>,
    strategy: Option<String>,
    fixed_k: Option<usize>,
    level1_count: Option<usize>,
    max_order: Option<usize>,
    solver_tol: Option<f64>,
    max_iterations: Option<usize>,
    batch_size: Option<usize>,
    preconditioner: Option<String>,
    unit_label: Option<String>,
}

#[derive(Args, Clone)]
struct WindowArgs {
    /// JSON config file; explicit flags take precedence
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Lower edge of the energy window
    #[arg(long)]
    omega_min: Option<f64>,
    /// Upper edge of the energy window
    #[arg(long)]
    omega_max: Option<f64>,
    /// Output grid points
    #[arg(long)]
    points: Option<usize>,
    /// Damping (linewidth) used for evaluation
    #[arg(long)]
    eta: Option<f64>,
    /// Axis label for the energy unit (cosmetic only)
    #[arg(long)]
    unit_label: Option<String>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
    /// Refinement tolerance on the normalized spectrum change
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long, value_enum)]
    shift_mode: Option<ShiftModeArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Shift count for --strategy uniform
    #[arg(long)]
    fixed_k: Option<usize>,
    /// Shifts at the first adaptive level
    #[arg(long)]
    level1_count: Option<usize>,
    /// Cap on the reduced order
    #[arg(long)]
    max_order: Option<usize>,
    /// GMRES relative residual target
    #[arg(long)]
    solver_tol: Option<f64>,
    /// GMRES iteration cap
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Right-hand-side columns per fused operator application
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    preconditioner: Option<PreconditionerArg>,
    /// Also write the reduced model as model.json
    #[arg(long)]
    save_model: bool,
    /// Output directory
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ReferenceMethod {
    /// Sum over states from the dense structured eigendecomposition
    Lorentzian,
    /// One dense complex factorization per grid point
    Cpp,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, value_enum, default_value = "lorentzian")]
    method: ReferenceMethod,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON file with the full generator spec; flags below override it
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_occ: Option<usize>,
    #[arg(long)]
    n_virt: Option<usize>,
    /// Lower edge of the out-of-window gap range
    #[arg(long)]
    gap_lo: Option<f64>,
    /// Upper edge of the out-of-window gap range
    #[arg(long)]
    gap_hi: Option<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    /// Off-diagonal coupling strength
    #[arg(long)]
    coupling: Option<f64>,
    /// Fraction of gaps placed inside the window
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Max allowed difference of the self-normalized spectra
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Also write the comparison report as JSON
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::SolverNotConverged { .. }
        | Error::SingularShift { .. }
        | Error::SingularReducedSystem { .. }
        | Error::EmptyBasis
        | Error::Lapack(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_BAD_INPUT,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn load_problem(input: &InputArgs) -> morspectra::Result<(ResponsePencil, DipoleBlock)> {
    let modes = [
        input.a_mtx.is_some() || input.b_mtx.is_some(),
        input.m_mtx.is_some() || input.k_mtx.is_some(),
        input.synth.is_some(),
    ];
    if modes.iter().filter(|&&m| m).count() != 1 {
        return Err(Error::InvalidConfig(
            "choose exactly one input mode: --a-mtx/--b-mtx, --m-mtx/--k-mtx, or --synth".into(),
        ));
    }
    if let Some(path) = &input.synth {
        let text = std::fs::read_to_string(path)?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        let problem = synth::generate(&spec)?;
        return Ok((problem.pencil, problem.dipoles));
    }
    let d_path = input.d_mtx.as_ref().ok_or_else(|| {
        Error::InvalidConfig("matrix inputs also need the dipole block (--d-mtx)".into())
    })?;
    let d = DipoleBlock::new(mtx::read_matrix(d_path)?)?;
    let pencil = if input.a_mtx.is_some() {
        let (a_path, b_path) = match (&input.a_mtx, &input.b_mtx) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidConfig(
                    "--a-mtx and --b-mtx must be given together".into(),
                ))
            }
        };
        ResponsePencil::build(
            mtx::read_matrix(a_path)?,
            mtx::read_matrix(b_path)?,
            input.check_spd,
        )?
    } else {
        let (m_path, k_path) = match (&input.m_mtx, &input.k_mtx) {
            (Some(m), Some(k)) => (m, k),
            _ => {
                return Err(Error::InvalidConfig(
                    "--m-mtx and --k-mtx must be given together".into(),
                ))
            }
        };
        ResponsePencil::from_mk(
            mtx::read_matrix(m_path)?,
            mtx::read_matrix(k_path)?,
            input.check_spd,
        )?
    };
    Ok((pencil, d))
}

fn load_config_file(path: &Option<PathBuf>) -> morspectra::Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn parse_enum<T: ValueEnum>(value: &str, what: &str) -> morspectra::Result<T> {
    T::from_str(value, true).map_err(|_| Error::InvalidConfig(format!("bad {what}: {value}")))
}

struct ResolvedWindow {
    grid: FrequencyGrid,
    unit_label: String,
}

fn resolve_window(args: &WindowArgs, file: &ConfigFile) -> morspectra::Result<ResolvedWindow> {
    let omega_min = args
        .omega_min
        .or(file.omega_min)
        .ok_or_else(|| Error::InvalidConfig("missing --omega-min".into()))?;
    let omega_max = args
        .omega_max
        .or(file.omega_max)
        .ok_or_else(|| Error::InvalidConfig("missing --omega-max".into()))?;
    let points = args.points.or(file.points).unwrap_or(1000);
    let eta = args.eta.or(file.eta).unwrap_or(1.0);
    let unit_label = args
        .unit_label
        .clone()
        .or_else(|| file.unit_label.clone())
        .unwrap_or_else(|| "eV".into());
    Ok(ResolvedWindow {
        grid: FrequencyGrid::new(omega_min, omega_max, points, eta)?,
        unit_label,
    })
}

#[derive(Serialize)]
struct RunRecord<'a> {
    window: [f64; 2],
    points: usize,
    eta: f64,
    unit_label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    algorithm: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shift_mode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    diagnostics: &'a morspectra::Diagnostics,
}

fn write_diagnostics(path: &Path, record: &RunRecord<'_>) -> morspectra::Result<()> {
    output::atomic_write(path, |file| {
        serde_json::to_writer_pretty(&mut *file, record)?;
        use std::io::Write;
        writeln!(file)?;
        Ok(())
    })
}

fn run_spectrum(args: SpectrumArgs) -> morspectra::Result<u8> {
    let file = load_config_file(&args.window.config)?;
    let window = resolve_window(&args.window, &file)?;
    let (pencil, dipoles) = load_problem(&args.input)?;

    let algorithm = match args.algorithm {
        Some(a) => a,
        None => match &file.algorithm {
            Some(s) => parse_enum(s, "algorithm")?,
            None => AlgorithmArg::Mk,
        },
    };
    let shift_mode = match args.shift_mode {
        Some(s) => s,
        None => match &file.shift_mode {
            Some(s) => parse_enum(s, "shift mode")?,
            None => ShiftModeArg::Complex,
        },
    };
    let strategy = match args.strategy {
        Some(s) => s,
        None => match &file.strategy {
            Some(s) => parse_enum(s, "strategy")?,
            None => StrategyArg::Adaptive,
        },
    };
    let preconditioner = match args.preconditioner {
        Some(p) => p,
        None => match &file.preconditioner {
            Some(s) => parse_enum(s, "preconditioner")?,
            None => PreconditionerArg::None,
        },
    };
    let tol = args.tol.or(file.tol).unwrap_or(0.01);

    let solver = SolverConfig {
        tol: args.solver_tol.or(file.solver_tol).unwrap_or(1e-6),
        max_iterations: args.max_iterations.or(file.max_iterations).unwrap_or(200),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(12),
        preconditioner: match preconditioner {
            PreconditionerArg::None => Preconditioner::None,
            PreconditionerArg::JacobiDiagonal => Preconditioner::JacobiDiagonal,
        },
    };
    let cfg = AdaptiveConfig {
        level1_count: args.level1_count.or(file.level1_count).unwrap_or(5),
        tol,
        max_order: args.max_order.or(file.max_order).unwrap_or(256),
        shift_mode: match shift_mode {
            ShiftModeArg::Complex => ShiftMode::Complex,
            ShiftModeArg::Real => ShiftMode::Real,
        },
        variant: match algorithm {
            AlgorithmArg::Mk => RomVariant::MkStructured,
            AlgorithmArg::Full => RomVariant::FullPencil,
        },
        solver,
    };

    let (spectrum, model) = match strategy {
        StrategyArg::Adaptive => adaptive_spectrum(&pencil, &dipoles, &window.grid, &cfg)?,
        StrategyArg::Uniform => {
            let k = args.fixed_k.or(file.fixed_k).ok_or_else(|| {
                Error::InvalidConfig("--strategy uniform needs --fixed-k".into())
            })?;
            uniform_spectrum(&pencil, &dipoles, &window.grid, k, &cfg)?
        }
    };

    std::fs::create_dir_all(&args.out_dir)?;
    output::write_spectrum_csv(
        &args.out_dir.join("spectrum.csv"),
        &spectrum.omegas,
        &spectrum.sigma,
    )?;
    write_diagnostics(
        &args.out_dir.join("diagnostics.json"),
        &RunRecord {
            window: [window.grid.omega_min, window.grid.omega_max],
            points: window.grid.n_points,
            eta: window.grid.eta,
            unit_label: &window.unit_label,
            algorithm: Some(match algorithm {
                AlgorithmArg::Mk => "mk",
                AlgorithmArg::Full => "full",
            }),
            shift_mode: Some(match shift_mode {
                ShiftModeArg::Complex => "complex",
                ShiftModeArg::Real => "real",
            }),
            strategy: Some(match strategy {
                StrategyArg::Adaptive => "adaptive",
                StrategyArg::Uniform => "uniform",
            }),
            tol: Some(tol),
            diagnostics: &spectrum.diagnostics,
        },
    )?;
    if args.save_model {
        morspectra::model_io::save_model(&args.out_dir.join("model.json"), &model)?;
    }

    eprintln!(
        "shifts k = {}, reduced order r = {}, gemms = {}, converged = {}",
        spectrum.diagnostics.k,
        spectrum.diagnostics.r,
        spectrum.diagnostics.gemms,
        spectrum.diagnostics.converged
    );
    Ok(if spectrum.diagnostics.converged {
        0
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn run_reference(args: ReferenceArgs) -> morspectra::Result<u8> {
    let file = load_config_file(&args.window.config)?;
    let window = resolve_window(&args.window, &file)?;
    let (pencil, dipoles) = load_problem(&args.input)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let spectrum = match args.method {
        ReferenceMethod::Cpp => oracle::dense_cpp_spectrum(&pencil, &dipoles, &window.grid)?,
        ReferenceMethod::Lorentzian => {
            let eig = oracle::dense_structured_eig(&pencil)?;
            let table = oracle::OscillatorTable::new(&eig, &dipoles)?;
            output::atomic_write(&args.out_dir.join("oscillators.csv"), |out| {
                use std::io::Write;
                writeln!(out, "lambda,weight")?;
                for (l, w) in table.lambda.iter().zip(table.weights.iter()) {
                    writeln!(out, "{l:.16e},{w:.16e}")?;
                }
                Ok(())
            })?;
            output::atomic_write(&args.out_dir.join("eigs.csv"), |out| {
                use std::io::Write;
                writeln!(out, "lambda")?;
                for l in &table.lambda {
                    writeln!(out, "{l:.16e}")?;
                }
                Ok(())
            })?;
            oracle::lorentzian_spectrum(&table, &window.grid)
        }
    };

    output::write_spectrum_csv(
        &args.out_dir.join("reference.csv"),
        &spectrum.omegas,
        &spectrum.sigma,
    )?;
    write_diagnostics(
        &args.out_dir.join("diagnostics.json"),
        &RunRecord {
            window: [window.grid.omega_min, window.grid.omega_max],
            points: window.grid.n_points,
            eta: window.grid.eta,
            unit_label: &window.unit_label,
            algorithm: None,
            shift_mode: None,
            strategy: None,
            tol: None,
            diagnostics: &spectrum.diagnostics,
        },
    )?;
    if let Some(count) = spectrum.diagnostics.lambda_in_window {
        eprintln!("{count} excitation energies in window");
    }
    Ok(0)
}

fn run_generate(args: GenerateArgs) -> morspectra::Result<u8> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
        None => SynthSpec::default(),
    };
    if let Some(v) = args.n_occ {
        spec.n_occ = v;
    }
    if let Some(v) = args.n_virt {
        spec.n_virt = v;
    }
    if let Some(v) = args.gap_lo {
        spec.gap_range[0] = v;
    }
    if let Some(v) = args.gap_hi {
        spec.gap_range[1] = v;
    }
    if let Some(v) = args.omega_min {
        spec.window[0] = v;
    }
    if let Some(v) = args.omega_max {
        spec.window[1] = v;
    }
    if let Some(v) = args.coupling {
        spec.coupling = v;
    }
    if let Some(v) = args.fraction {
        spec.fraction = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let problem = synth::generate_to_dir(&spec, &args.out_dir)?;
    eprintln!(
        "wrote n = {} problem to {} (boost = {:.3e})",
        spec.n(),
        args.out_dir.display(),
        problem.boost
    );
    Ok(0)
}

#[derive(Serialize)]
struct CompareReport {
    max_diff: f64,
    at_omega: f64,
    threshold: f64,
    within_threshold: bool,
}

fn run_compare(args: CompareArgs) -> morspectra::Result<u8> {
    let (oa, sa) = output::read_spectrum_csv(&args.a)?;
    let (ob, sb) = output::read_spectrum_csv(&args.b)?;
    let (max_diff, at_omega) = output::compare_normalized(&oa, &sa, &ob, &sb)?;
    let within = max_diff <= args.threshold;
    println!("max normalized difference {max_diff:.6e} at omega {at_omega:.6}");
    if let Some(path) = &args.report {
        let report = CompareReport {
            max_diff,
            at_omega,
            threshold: args.threshold,
            within_threshold: within,
        };
        output::atomic_write(path, |out| {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            use std::io::Write;
            writeln!(out)?;
            Ok(())
        })?;
    }
    Ok(if within { 0 } else { EXIT_ABOVE_THRESHOLD })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // keep usage errors distinct from numerical non-convergence
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(EXIT_BAD_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Spectrum(args) => run_spectrum(args),
        Command::Reference(args) => run_reference(args),
        Command::Generate(args) => run_generate(args),
        Command::Compare(args) => run_compare(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => fail(err),
    }
}

//! Black-box tests of the command-line interface: verbs, file outputs, exit
//! codes, and config-file precedence.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morspectra"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_scalar_problem(dir: &Path) {
    // A = [[2]], B = [[1]]: single pole at sqrt(3)
    std::fs::write(
        dir.join("A.mtx"),
        "%%MatrixMarket matrix array real general\n1 1\n2.0\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("B.mtx"),
        "%%MatrixMarket matrix array real general\n1 1\n1.0\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("d.mtx"),
        "%%MatrixMarket matrix array real general\n1 3\n1.0\n0.0\n0.0\n",
    )
    .unwrap();
}

fn read_csv(path: &Path) -> (Vec<f64>, Vec<f64>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut omegas = Vec::new();
    let mut sigma = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        omegas.push(parts.next().unwrap().parse().unwrap());
        sigma.push(parts.next().unwrap().parse().unwrap());
    }
    (omegas, sigma)
}

fn diagnostics(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("diagnostics.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn scalar_spectrum_converges_with_few_shifts() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0",
            "--points", "101", "--eta", "0.3",
            "--out-dir", "out",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let diag = diagnostics(&tmp.path().join("out"));
    assert_eq!(diag["diagnostics"]["converged"], true);
    let k = diag["diagnostics"]["k"].as_u64().unwrap();
    assert!(k <= 9, "k = {k}");
    assert!(tmp.path().join("out/spectrum.csv").exists());
}

#[test]
fn spectrum_matches_analytic_scalar_form() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0",
            "--points", "51", "--eta", "0.3",
            "--out-dir", ".",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let (omegas, sigma) = read_csv(&tmp.path().join("spectrum.csv"));
    for (&omega, &s) in omegas.iter().zip(sigma.iter()) {
        let z = num_complex::Complex64::new(omega, 0.3);
        let expect = omega * (2.0 / (3.0 - z * z)).im;
        assert!((s - expect).abs() < 1e-10, "omega {omega}: {s} vs {expect}");
    }
}

#[test]
fn full_and_mk_algorithms_agree() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run(
        &["generate", "--n-occ", "4", "--n-virt", "15", "--seed", "3", "--out-dir", "prob"],
        tmp.path(),
    ));
    for alg in ["mk", "full"] {
        let out = run(
            &[
                "spectrum",
                "--a-mtx", "prob/A.mtx", "--b-mtx", "prob/B.mtx", "--d-mtx", "prob/d.mtx",
                "--omega-min", "20", "--omega-max", "30", "--points", "200",
                "--strategy", "uniform", "--fixed-k", "6",
                "--solver-tol", "1e-12",
                "--algorithm", alg,
                "--out-dir", alg,
            ],
            tmp.path(),
        );
        assert_ok(&out);
    }
    let (_, s_mk) = read_csv(&tmp.path().join("mk/spectrum.csv"));
    let (_, s_full) = read_csv(&tmp.path().join("full/spectrum.csv"));
    let scale = s_mk.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in s_mk.iter().zip(s_full.iter()) {
        assert!((a - b).abs() <= 1e-8 * scale);
    }
}

#[test]
fn under_resolved_model_misses_dense_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run(
        &[
            "generate", "--n-occ", "5", "--n-virt", "30", "--fraction", "0.5",
            "--seed", "9", "--out-dir", "prob",
        ],
        tmp.path(),
    ));
    assert_ok(&run(
        &[
            "reference",
            "--a-mtx", "prob/A.mtx", "--b-mtx", "prob/B.mtx", "--d-mtx", "prob/d.mtx",
            "--omega-min", "20", "--omega-max", "30", "--points", "300",
            "--out-dir", "ref",
        ],
        tmp.path(),
    ));
    // three shifts cannot resolve ~75 poles in the window; the spectrum is
    // produced but the comparison against the dense reference must fail
    assert_ok(&run(
        &[
            "spectrum",
            "--a-mtx", "prob/A.mtx", "--b-mtx", "prob/B.mtx", "--d-mtx", "prob/d.mtx",
            "--omega-min", "20", "--omega-max", "30", "--points", "300",
            "--strategy", "uniform", "--fixed-k", "3",
            "--out-dir", "mor",
        ],
        tmp.path(),
    ));
    assert!(tmp.path().join("mor/spectrum.csv").exists());
    let cmp = run(
        &["compare", "mor/spectrum.csv", "ref/reference.csv", "--threshold", "0.01"],
        tmp.path(),
    );
    assert_eq!(cmp.status.code(), Some(1), "comparison unexpectedly passed");
}

#[test]
fn reference_single_pole_and_zero_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    let out = run(
        &[
            "reference",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0", "--points", "51", "--eta", "0.3",
            "--out-dir", ".",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let eigs = std::fs::read_to_string(tmp.path().join("eigs.csv")).unwrap();
    let lambdas: Vec<f64> = eigs.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 1);
    assert!((lambdas[0] - 3f64.sqrt()).abs() < 1e-12);

    // zero coupling: poles sit exactly on the diagonal gaps
    assert_ok(&run(
        &[
            "generate", "--n-occ", "2", "--n-virt", "5", "--coupling", "0",
            "--seed", "4", "--out-dir", "diag",
        ],
        tmp.path(),
    ));
    assert_ok(&run(
        &[
            "reference",
            "--a-mtx", "diag/A.mtx", "--b-mtx", "diag/B.mtx", "--d-mtx", "diag/d.mtx",
            "--omega-min", "20", "--omega-max", "30", "--points", "51",
            "--out-dir", "diag",
        ],
        tmp.path(),
    ));
    let a_text = std::fs::read_to_string(tmp.path().join("diag/A.mtx")).unwrap();
    let eig_text = std::fs::read_to_string(tmp.path().join("diag/eigs.csv")).unwrap();
    let packed: Vec<f64> = a_text
        .lines()
        .skip(2)
        .map(|l| l.parse().unwrap())
        .collect();
    // diagonal of the packed lower triangle (column-major) of the 10x10 A
    let n = 10;
    let mut gaps = Vec::new();
    let mut pos = 0;
    for j in 0..n {
        gaps.push(packed[pos]);
        pos += n - j;
    }
    gaps.sort_by(f64::total_cmp);
    let mut lambdas: Vec<f64> = eig_text
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    lambdas.sort_by(f64::total_cmp);
    for (l, g) in lambdas.iter().zip(gaps.iter()) {
        assert!((l - g).abs() < 1e-10 * g, "{l} vs {g}");
    }
}

#[test]
fn reference_methods_cross_check() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run(
        &["generate", "--n-occ", "5", "--n-virt", "40", "--seed", "21", "--out-dir", "prob"],
        tmp.path(),
    ));
    for (method, dir) in [("lorentzian", "sos"), ("cpp", "cpp")] {
        assert_ok(&run(
            &[
                "reference",
                "--a-mtx", "prob/A.mtx", "--b-mtx", "prob/B.mtx", "--d-mtx", "prob/d.mtx",
                "--omega-min", "20", "--omega-max", "30", "--points", "200",
                "--method", method,
                "--out-dir", dir,
            ],
            tmp.path(),
        ));
    }
    let cmp = run(
        &[
            "compare", "sos/reference.csv", "cpp/reference.csv",
            "--threshold", "1e-9",
        ],
        tmp.path(),
    );
    assert_eq!(cmp.status.code(), Some(0));
}

#[test]
fn compare_is_reflexive_and_scale_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    assert_ok(&run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0", "--points", "51", "--eta", "0.3",
            "--out-dir", ".",
        ],
        tmp.path(),
    ));
    let out = run(
        &["compare", "spectrum.csv", "spectrum.csv", "--threshold", "0", "--report", "r.json"],
        tmp.path(),
    );
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["max_diff"], 0.0);

    // scale one copy by 7: normalized comparison is unaffected
    let (omegas, sigma) = read_csv(&tmp.path().join("spectrum.csv"));
    let mut scaled = String::from("omega,sigma\n");
    for (o, s) in omegas.iter().zip(sigma.iter()) {
        scaled.push_str(&format!("{o:.16e},{:.16e}\n", s * 7.0));
    }
    std::fs::write(tmp.path().join("scaled.csv"), scaled).unwrap();
    let out = run(
        &["compare", "spectrum.csv", "scaled.csv", "--threshold", "1e-12"],
        tmp.path(),
    );
    assert_ok(&out);
}

#[test]
fn m_k_inputs_match_a_b_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run(
        &["generate", "--n-occ", "3", "--n-virt", "10", "--seed", "6", "--out-dir", "p"],
        tmp.path(),
    ));
    // assemble M = A+B, K = A-B out of band and feed them back in
    let parse = |name: &str| -> Vec<f64> {
        std::fs::read_to_string(tmp.path().join(name))
            .unwrap()
            .lines()
            .skip(2)
            .map(|l| l.parse().unwrap())
            .collect()
    };
    let a = parse("p/A.mtx");
    let b = parse("p/B.mtx");
    let write_packed = |name: &str, vals: &[f64]| {
        let mut text = String::from("%%MatrixMarket matrix array real symmetric\n30 30\n");
        for v in vals {
            text.push_str(&format!("{v:.16e}\n"));
        }
        std::fs::write(tmp.path().join(name), text).unwrap();
    };
    write_packed("M.mtx", &a.iter().zip(b.iter()).map(|(x, y)| x + y).collect::<Vec<_>>());
    write_packed("K.mtx", &a.iter().zip(b.iter()).map(|(x, y)| x - y).collect::<Vec<_>>());

    for (args, dir) in [
        (vec!["--a-mtx", "p/A.mtx", "--b-mtx", "p/B.mtx"], "ab"),
        (vec!["--m-mtx", "M.mtx", "--k-mtx", "K.mtx"], "mk"),
    ] {
        let mut full = vec!["spectrum"];
        full.extend(args);
        full.extend([
            "--d-mtx", "p/d.mtx",
            "--omega-min", "20", "--omega-max", "30", "--points", "100",
            "--out-dir", dir,
        ]);
        assert_ok(&run(&full, tmp.path()));
    }
    let cmp = run(
        &["compare", "ab/spectrum.csv", "mk/spectrum.csv", "--threshold", "1e-10"],
        tmp.path(),
    );
    assert_eq!(cmp.status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    std::fs::write(
        tmp.path().join("run.json"),
        r#"{"omega_min": 0.5, "omega_max": 9.0, "points": 41, "eta": 0.3}"#,
    )
    .unwrap();
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--config", "run.json",
            "--omega-max", "3.0",
            "--out-dir", "out",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let diag = diagnostics(&tmp.path().join("out"));
    assert_eq!(diag["window"][0], 0.5); // from the file
    assert_eq!(diag["window"][1], 3.0); // flag overrides the file
    assert_eq!(diag["points"], 41);
}

#[test]
fn exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());

    // missing file -> I/O failure
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "missing.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));

    // contradictory input modes -> bad input
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--m-mtx", "A.mtx",
            "--k-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));

    // unknown flag -> bad input
    let out = run(&["spectrum", "--no-such-flag"], tmp.path());
    assert_eq!(out.status.code(), Some(3));

    // empty window -> bad input
    let out = run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "3.0", "--omega-max", "0.5",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn saved_model_file_is_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    write_scalar_problem(tmp.path());
    assert_ok(&run(
        &[
            "spectrum",
            "--a-mtx", "A.mtx", "--b-mtx", "B.mtx", "--d-mtx", "d.mtx",
            "--omega-min", "0.5", "--omega-max", "3.0", "--points", "51", "--eta", "0.3",
            "--save-model", "--out-dir", "out",
        ],
        tmp.path(),
    ));
    let model: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("out/model.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(model["format"], "reduced-model");
    assert_eq!(model["version"], 1);
}

#[test]
fn generated_spec_json_regenerates_identical_problem() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&run(
        &["generate", "--n-occ", "3", "--n-virt", "8", "--seed", "12", "--out-dir", "g1"],
        tmp.path(),
    ));
    // run straight from the emitted spec.json via --synth
    assert_ok(&run(
        &[
            "spectrum",
            "--synth", "g1/spec.json",
            "--omega-min", "20", "--omega-max", "30", "--points", "100",
            "--out-dir", "synth-run",
        ],
        tmp.path(),
    ));
    assert_ok(&run(
        &[
            "spectrum",
            "--a-mtx", "g1/A.mtx", "--b-mtx", "g1/B.mtx", "--d-mtx", "g1/d.mtx",
            "--omega-min", "20", "--omega-max", "30", "--points", "100",
            "--out-dir", "file-run",
        ],
        tmp.path(),
    ));
    let cmp = run(
        &["compare", "synth-run/spectrum.csv", "file-run/spectrum.csv", "--threshold", "1e-12"],
        tmp.path(),
    );
    assert_eq!(cmp.status.code(), Some(0));
}

//! Seeded synthetic response pencils with controllable size and spectral
//! density inside a target window.
//!
//! Reproducibility contract: the generator is ChaCha8 seeded with the spec's
//! 64-bit seed, and draws in this fixed order: (1) the n diagonal gaps — the
//! first round(f*n) uniform over the window, the rest uniform over gap_range;
//! (2) the upper triangle of R_A row by row, entries uniform[-1,1]/n;
//! (3) the upper triangle of R_B the same way; (4) the n x 3 dipole block
//! row-major, standard normal. Identical specs give bitwise-identical output.

use std::path::Path;

use ndarray::prelude::*;
use ndarray_linalg::{Cholesky, UPLO};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtx;
use crate::output::atomic_write;
use crate::pencil::{min_eigenvalue, DipoleBlock, ResponsePencil};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_occ: usize,
    pub n_virt: usize,
    /// Range [lo, hi] for the orbital-energy differences placed outside the
    /// window.
    pub gap_range: [f64; 2],
    /// Target energy window [omega_min, omega_max].
    pub window: [f64; 2],
    /// Off-diagonal coupling strength g.
    pub coupling: f64,
    /// Fraction f of diagonal gaps placed uniformly inside the window.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_occ: 5,
            n_virt: 40,
            gap_range: [35.0, 80.0],
            window: [20.0, 30.0],
            coupling: 0.05,
            fraction: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn n(&self) -> usize {
        self.n_occ * self.n_virt
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() < 1 {
            return Err(Error::InvalidConfig("problem size must be at least 1".into()));
        }
        if self.coupling < 0.0 {
            return Err(Error::InvalidConfig("coupling must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidConfig("fraction must lie in [0, 1]".into()));
        }
        if !(self.gap_range[0] <= self.gap_range[1]) || self.gap_range[0] <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gap range [{}, {}] is invalid",
                self.gap_range[0], self.gap_range[1]
            )));
        }
        if !(self.window[0] < self.window[1]) || self.window[0] <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "window [{}, {}] is invalid",
                self.window[0], self.window[1]
            )));
        }
        Ok(())
    }
}

/// A generated problem together with the diagonal boost (0 when none was
/// needed) applied to make M and K positive definite.
#[derive(Debug)]
pub struct SynthProblem {
    pub pencil: ResponsePencil,
    pub dipoles: DipoleBlock,
    pub boost: f64,
}

fn symmetric_noise(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let scale = 1.0 / n as f64;
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = dist.sample(rng) * scale;
            r[[i, j]] = v;
            r[[j, i]] = v;
        }
    }
    r
}

pub fn generate(spec: &SynthSpec) -> Result<SynthProblem> {
    spec.validate()?;
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_in = (spec.fraction * n as f64).round() as usize;
    let in_window = Uniform::new_inclusive(spec.window[0], spec.window[1]);
    let outside = Uniform::new_inclusive(spec.gap_range[0], spec.gap_range[1]);
    let gaps: Vec<f64> = (0..n)
        .map(|i| {
            if i < n_in {
                in_window.sample(&mut rng)
            } else {
                outside.sample(&mut rng)
            }
        })
        .collect();

    let mut a = spec.coupling * symmetric_noise(&mut rng, n);
    for i in 0..n {
        a[[i, i]] += gaps[i];
    }
    let b = spec.coupling * symmetric_noise(&mut rng, n);

    let mut d = Array2::zeros((n, 3));
    for i in 0..n {
        for j in 0..3 {
            d[[i, j]] = StandardNormal.sample(&mut rng);
        }
    }

    // repair indefiniteness with a diagonal boost on A; Cholesky is the cheap
    // positive-definiteness probe, the eigenvalue solve only runs on failure
    let m = &a + &b;
    let k = &a - &b;
    let mut boost = 0.0;
    if m.cholesky(UPLO::Lower).is_err() || k.cholesky(UPLO::Lower).is_err() {
        let min_eig = min_eigenvalue(&m)?.min(min_eigenvalue(&k)?);
        if min_eig <= 0.0 {
            let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            boost = min_eig.abs() + 0.01 * (hi - lo);
            for i in 0..n {
                a[[i, i]] += boost;
            }
        }
    }

    let pencil = ResponsePencil::build(a, b, false)?;
    let dipoles = DipoleBlock::new(d)?;
    Ok(SynthProblem {
        pencil,
        dipoles,
        boost,
    })
}

/// Everything needed to reproduce or re-ingest a generated problem.
#[derive(Debug, Serialize, Deserialize)]
pub struct SynthRecord {
    #[serde(flatten)]
    pub spec: SynthSpec,
    pub n: usize,
    pub boost: f64,
    /// RNG algorithm identifier for cross-language reproduction.
    pub rng: String,
}

/// Generate and write `A.mtx`, `B.mtx`, `d.mtx`, and `spec.json` into `dir`.
pub fn generate_to_dir(spec: &SynthSpec, dir: &Path) -> Result<SynthProblem> {
    let problem = generate(spec)?;
    std::fs::create_dir_all(dir)?;
    mtx::write_matrix(&dir.join("A.mtx"), &problem.pencil.a().view(), true)?;
    mtx::write_matrix(&dir.join("B.mtx"), &problem.pencil.b().view(), true)?;
    mtx::write_matrix(&dir.join("d.mtx"), &problem.dipoles.matrix().view(), false)?;
    let record = SynthRecord {
        spec: spec.clone(),
        n: spec.n(),
        boost: problem.boost,
        rng: "chacha8".into(),
    };
    atomic_write(&dir.join("spec.json"), |file| {
        serde_json::to_writer_pretty(&mut *file, &record)?;
        use std::io::Write;
        writeln!(file)?;
        Ok(())
    })?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_structured_eig, OscillatorTable};

    #[test]
    fn deterministic_across_calls() {
        let spec = SynthSpec {
            n_occ: 4,
            n_virt: 6,
            seed: 7,
            ..Default::default()
        };
        let p1 = generate(&spec).unwrap();
        let p2 = generate(&spec).unwrap();
        assert_eq!(p1.pencil.a(), p2.pencil.a());
        assert_eq!(p1.pencil.b(), p2.pencil.b());
        assert_eq!(p1.dipoles.matrix(), p2.dipoles.matrix());
        assert_eq!(p1.boost, p2.boost);
    }

    #[test]
    fn zero_coupling_gives_diagonal_poles() {
        let spec = SynthSpec {
            n_occ: 3,
            n_virt: 5,
            coupling: 0.0,
            seed: 11,
            ..Default::default()
        };
        let p = generate(&spec).unwrap();
        assert_eq!(p.boost, 0.0);
        let eig = dense_structured_eig(&p.pencil).unwrap();
        // excitation energies equal the diagonal gaps exactly
        let mut gaps: Vec<f64> = (0..15).map(|i| p.pencil.a()[[i, i]]).collect();
        gaps.sort_by(f64::total_cmp);
        for (lam, gap) in eig.lambda.iter().zip(gaps.iter()) {
            assert!((lam - gap).abs() <= 1e-12 * gap);
        }
    }

    #[test]
    fn zero_fraction_zero_coupling_empties_window() {
        let spec = SynthSpec {
            n_occ: 3,
            n_virt: 5,
            coupling: 0.0,
            fraction: 0.0,
            gap_range: [40.0, 60.0],
            window: [20.0, 30.0],
            seed: 13,
            ..Default::default()
        };
        let p = generate(&spec).unwrap();
        let eig = dense_structured_eig(&p.pencil).unwrap();
        let t = OscillatorTable::new(&eig, &p.dipoles).unwrap();
        assert_eq!(t.count_in_window(20.0, 30.0), 0);
    }

    #[test]
    fn seeded_density_check() {
        let spec = SynthSpec {
            n_occ: 5,
            n_virt: 40,
            fraction: 0.3,
            coupling: 0.05,
            seed: 42,
            ..Default::default()
        };
        let p = generate(&spec).unwrap();
        assert!(min_eigenvalue(p.pencil.m()).unwrap() > 0.0);
        assert!(min_eigenvalue(p.pencil.k()).unwrap() > 0.0);
        let eig = dense_structured_eig(&p.pencil).unwrap();
        let t = OscillatorTable::new(&eig, &p.dipoles).unwrap();
        let count = t.count_in_window(spec.window[0], spec.window[1]);
        let target = 0.3 * 200.0;
        assert!(
            (count as f64 - target).abs() <= 0.2 * target,
            "{count} eigenvalues in window, expected ~{target}"
        );
    }

    #[test]
    fn boost_repairs_indefinite_assembly() {
        let spec = SynthSpec {
            n_occ: 2,
            n_virt: 4,
            gap_range: [0.01, 0.02],
            window: [0.01, 0.02],
            coupling: 5.0,
            fraction: 0.0,
            seed: 3,
        };
        let p = generate(&spec).unwrap();
        assert!(p.boost > 0.0);
        assert!(min_eigenvalue(p.pencil.m()).unwrap() > 0.0);
        assert!(min_eigenvalue(p.pencil.k()).unwrap() > 0.0);
    }

    #[test]
    fn emitted_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_occ: 2,
            n_virt: 3,
            seed: 5,
            ..Default::default()
        };
        let p = generate_to_dir(&spec, dir.path()).unwrap();
        let a = mtx::read_matrix(&dir.path().join("A.mtx")).unwrap();
        let b = mtx::read_matrix(&dir.path().join("B.mtx")).unwrap();
        let d = mtx::read_matrix(&dir.path().join("d.mtx")).unwrap();
        assert_eq!(&a, p.pencil.a());
        assert_eq!(&b, p.pencil.b());
        assert_eq!(&d, p.dipoles.matrix());
        let text = std::fs::read_to_string(dir.path().join("spec.json")).unwrap();
        let record: SynthRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(record.n, 6);
        assert_eq!(record.spec.seed, 5);
        assert_eq!(record.rng, "chacha8");
    }
}

//! Small seeded problems shared by the unit tests.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pencil::{DipoleBlock, ResponsePencil};

pub type C = num_complex::Complex64;

/// Seeded SPD pencil with eigenvalues spread over roughly [1, 1 + n/2].
pub fn random_pencil(n: usize, seed: u64) -> (ResponsePencil, DipoleBlock) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::<f64>::zeros((n, n));
    let mut b = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        a[[i, i]] = 1.0 + 0.5 * i as f64 + rng.gen_range(0.0..0.1);
        for j in (i + 1)..n {
            let va = rng.gen_range(-0.05..0.05);
            let vb = rng.gen_range(-0.02..0.02);
            a[[i, j]] = va;
            a[[j, i]] = va;
            b[[i, j]] = vb;
            b[[j, i]] = vb;
        }
        b[[i, i]] = rng.gen_range(-0.02..0.02);
    }
    let d = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
    let p = ResponsePencil::build(a, b, true).expect("test pencil must be SPD");
    (p, DipoleBlock::new(d).unwrap())
}

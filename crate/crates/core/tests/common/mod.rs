#![allow(dead_code)]

use hqc_core::gates::normalize_to_su;
use hqc_core::linalg::{CMatrix, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre(rng: &mut impl Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)))
}

/// Haar-random unitary: Q from the QR factorization of a Ginibre matrix, with the phases of
/// diag(R) moved into Q.
pub fn haar_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let qr = ginibre(rng, n).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let phase = r[(k, k)] / r[(k, k)].norm();
        let col = q.column(k) * phase;
        q.set_column(k, &col);
    }
    q
}

pub fn haar_su(rng: &mut impl Rng, n: usize) -> CMatrix {
    normalize_to_su(&haar_unitary(rng, n)).expect("unitary")
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let g = ginibre(rng, n);
    (&g + g.adjoint()).scale(0.5)
}

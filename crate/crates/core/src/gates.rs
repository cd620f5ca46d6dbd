//! Dense unitaries for the gates used in experiments and tests.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn hadamard() -> DMatrix<Complex64> {
    let h = 1.0 / 2f64.sqrt();
    DMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)])
}

pub fn phase_s() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), Complex64::new(0.0, 1.0)])
}

/// CNOT with qubit 0 as control.
pub fn cnot() -> DMatrix<Complex64> {
    permutation(4, |j| if j >= 2 { j ^ 1 } else { j })
}

/// Toffoli with qubits 0 and 1 as controls and qubit 2 as target.
pub fn toffoli() -> DMatrix<Complex64> {
    permutation(8, |j| if j >= 6 { j ^ 1 } else { j })
}

fn permutation(d: usize, f: impl Fn(usize) -> usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        m[(f(j), j)] = c(1.0);
    }
    m
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ e^{iδX}` with qubit 0 as control.
pub fn controlled_x_rotation(delta: f64) -> DMatrix<Complex64> {
    let (s, co) = delta.sin_cos();
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0);
    m[(1, 1)] = c(1.0);
    // e^{iδX} = cos δ I + i sin δ X
    m[(2, 2)] = c(co);
    m[(3, 3)] = c(co);
    m[(2, 3)] = Complex64::new(0.0, s);
    m[(3, 2)] = Complex64::new(0.0, s);
    m
}

/// Place a two-qubit unitary (local qubit 0 first) on `(first, second)` of an
/// `n`-qubit register.
pub fn embed_two_qubit(
    u: &DMatrix<Complex64>,
    first: usize,
    second: usize,
    n: usize,
) -> DMatrix<Complex64> {
    assert!(first != second && first < n && second < n);
    let d = 1usize << n;
    let bit = |j: usize, k: usize| (j >> (n - 1 - k)) & 1;
    let mut out = DMatrix::zeros(d, d);
    for col in 0..d {
        let local_col = (bit(col, first) << 1) | bit(col, second);
        let rest = col & !((1 << (n - 1 - first)) | (1 << (n - 1 - second)));
        for local_row in 0..4 {
            let v = u[(local_row, local_col)];
            if v == c(0.0) {
                continue;
            }
            let row = rest
                | ((local_row >> 1) << (n - 1 - first))
                | ((local_row & 1) << (n - 1 - second));
            out[(row, col)] = v;
        }
    }
    out
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix,
/// with the phases of R's diagonal absorbed.
pub fn random_unitary(d: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let phase = r[(j, j)] / r[(j, j)].norm();
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

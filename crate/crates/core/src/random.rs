//! Deterministic generators for random matrices.
//!
//! Used by the self-test suite and synthetic benchmarks. All draws come from
//! a caller-provided [`SplitMix64`], so fixtures are reproducible.

use nalgebra::{DMatrix, DVector};

use crate::rng::SplitMix64;
use crate::spd::{SpdMatrix, SymMatrix};

/// Random orthogonal matrix: Q factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut SplitMix64, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.next_normal());
    g.qr().q()
}

fn with_spectrum(rng: &mut SplitMix64, n: usize, eig_range: (f64, f64)) -> DMatrix<f64> {
    let (lo, hi) = eig_range;
    assert!(lo <= hi, "empty eigenvalue range");
    let q = random_orthogonal(rng, n);
    let values = DVector::from_fn(n, |_, _| lo + (hi - lo) * rng.next_f64());
    // Accumulate entrywise so the result is exactly symmetric.
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sum = 0.0;
            for k in 0..n {
                sum += values[k] * q[(i, k)] * q[(j, k)];
            }
            out[(i, j)] = sum;
            out[(j, i)] = sum;
        }
    }
    out
}

/// Random SPD matrix with eigenvalues uniform in `eig_range` (both ends
/// must be positive); the condition number is bounded by `hi / lo`.
pub fn random_spd(rng: &mut SplitMix64, n: usize, eig_range: (f64, f64)) -> SpdMatrix {
    assert!(eig_range.0 > 0.0, "SPD spectrum must be positive");
    SpdMatrix::new(with_spectrum(rng, n, eig_range)).expect("constructed SPD matrix is valid")
}

/// Random symmetric matrix with eigenvalues uniform in `eig_range`.
pub fn random_sym(rng: &mut SplitMix64, n: usize, eig_range: (f64, f64)) -> SymMatrix {
    SymMatrix::new(with_spectrum(rng, n, eig_range)).expect("constructed matrix is symmetric")
}

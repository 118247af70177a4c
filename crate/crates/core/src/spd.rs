//! Validated SPD matrices and eigendecomposition-backed matrix functions.
//!
//! An n x n real symmetric positive definite matrix is a point of the SPD
//! manifold; symmetric matrices with unrestricted spectrum form the tangent
//! space at the identity. The matrix logarithm maps the manifold onto that
//! flat space and the matrix exponential maps back:
//!
//! ```text
//! log(P) = V diag(ln l_i) V^T      exp(S) = V diag(e^{l_i}) V^T
//! ```
//!
//! where `P = V diag(l_i) V^T` is a symmetric eigendecomposition. All matrix
//! functions in this crate go through [`EigenPair`], which keeps eigenvalues
//! sorted descending and fixes eigenvector signs so results are reproducible
//! across runs.
//!
//! Covariance matrices estimated from few samples are often rank deficient;
//! [`make_spd`] is the explicit repair path. It symmetrizes its input and
//! adds a trace-scaled ridge `eps * tr(A)/n * I` (plain `eps * I` when the
//! trace is not positive), which keeps `eps` unit-free.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative symmetry tolerance: inputs are rejected, never silently
/// symmetrized, when `max |a_ij - a_ji| > SYMMETRY_TOL * max(1, ||A||_F)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Iteration cap for the symmetric eigensolver.
const EIGEN_MAX_ITER: usize = 10_000;

/// A validated symmetric positive definite matrix.
///
/// Construction checks symmetry (to [`SYMMETRY_TOL`], relative) and strict
/// positive definiteness. Instances are immutable; every operation on them
/// is a pure function, so they are safe to share across threads. The matrix
/// logarithm is computed once on first use and cached.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    data: DMatrix<f64>,
    log: OnceLock<SymMatrix>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

/// A validated symmetric matrix (tangent-space element); eigenvalues are
/// unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted descending. Each eigenvector column is normalized
/// and its sign is fixed by making the entry of largest magnitude positive
/// (lowest index wins ties), so decompositions are deterministic.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

fn max_asymmetry(data: &DMatrix<f64>) -> f64 {
    let n = data.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((data[(i, j)] - data[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            got: data.ncols(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("matrix dimension must be positive"));
    }
    let tol = SYMMETRY_TOL * data.norm().max(1.0);
    let asym = max_asymmetry(data);
    if asym > tol {
        return Err(Error::NotSymmetric {
            dim: data.nrows(),
            max_asym: asym,
            tol,
        });
    }
    Ok(())
}

/// `V diag(values) V^T`, accumulated entrywise so the result is symmetric
/// to the last bit.
fn reconstruct(vectors: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    let n = vectors.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sum = 0.0;
            for k in 0..values.len() {
                sum += values[k] * vectors[(i, k)] * vectors[(j, k)];
            }
            out[(i, j)] = sum;
            out[(j, i)] = sum;
        }
    }
    out
}

fn eigen_of(data: &DMatrix<f64>) -> Result<EigenPair> {
    let eig = data
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::EigenNonConvergence {
            dim: data.nrows(),
            frob: data.norm(),
            max_abs: data.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        })?;

    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Sign convention: largest-magnitude entry positive.
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenPair { values, vectors })
}

/// Symmetric eigendecomposition with descending eigenvalues.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenPair> {
    eigen_of(&m.data)
}

impl EigenPair {
    /// Smallest eigenvalue (last, since values are descending).
    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Largest eigenvalue.
    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// Build `V diag(f(l)) V^T`: the spectral calculus behind log, exp and
    /// inverse square roots. The result is symmetric to the last bit.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mapped = self.values.map(f);
        reconstruct(&self.vectors, &mapped)
    }
}

impl SymMatrix {
    /// Wrap a symmetric matrix, rejecting asymmetric input.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&data)?;
        Ok(SymMatrix { data })
    }

    pub(crate) fn trusted(data: DMatrix<f64>) -> Self {
        debug_assert!(check_symmetric(&data).is_ok());
        SymMatrix { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Matrix exponential `exp(S) = V diag(e^l) V^T`; SPD by construction.
    ///
    /// Eigenvalues outside `[-700, 700]` would overflow or underflow f64 and
    /// are rejected.
    pub fn exp(&self) -> Result<SpdMatrix> {
        let eig = sym_eig(self)?;
        for &l in eig.values.iter() {
            if l.abs() > 700.0 {
                return Err(Error::ExpOverflow(l));
            }
        }
        let exp_values = eig.values.map(f64::exp);
        Ok(SpdMatrix::trusted(reconstruct(&eig.vectors, &exp_values)))
    }

    pub fn eigen(&self) -> Result<EigenPair> {
        sym_eig(self)
    }
}

impl SpdMatrix {
    /// Validate and wrap: `data` must be symmetric to [`SYMMETRY_TOL`] and
    /// strictly positive definite.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&data)?;
        if Cholesky::new(data.clone()).is_none() {
            let lmin = data
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |m, &v| m.min(v));
            return Err(Error::NotPositiveDefinite(format!(
                " (lambda_min = {lmin:.3e})"
            )));
        }
        Ok(SpdMatrix {
            data,
            log: OnceLock::new(),
        })
    }

    pub(crate) fn trusted(data: DMatrix<f64>) -> Self {
        SpdMatrix {
            data,
            log: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix::trusted(DMatrix::identity(n, n))
    }

    /// Matrix logarithm `log(P) = V diag(ln l) V^T`, the map onto the
    /// tangent space at the identity. Computed once, then cached.
    pub fn log(&self) -> &SymMatrix {
        self.log.get_or_init(|| {
            // A constructed SpdMatrix has strictly positive eigenvalues, so
            // the decomposition and the logs are well defined.
            let eig =
                eigen_of(&self.data).expect("eigensolver failed on a validated SPD matrix");
            let log_values = eig.values.map(f64::ln);
            SymMatrix {
                data: reconstruct(&eig.vectors, &log_values),
            }
        })
    }

    pub fn eigen(&self) -> Result<EigenPair> {
        eigen_of(&self.data)
    }
}

/// Symmetrize `data` as `(A + A^T)/2`, then add the trace-scaled ridge
/// `eps * tr/n * I` (or `eps * I` when the trace is not positive) and
/// validate the result.
pub fn make_spd(data: &DMatrix<f64>, eps: f64) -> Result<SpdMatrix> {
    if data.nrows() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            got: data.ncols(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("matrix dimension must be positive"));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "regularization eps must be nonnegative, got {eps}"
        )));
    }

    let n = data.nrows();
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (data[(i, j)] + data[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }

    let trace = sym.trace();
    let ridge = if trace > 0.0 { eps * trace / n as f64 } else { eps };
    if ridge > 0.0 {
        for i in 0..n {
            sym[(i, i)] += ridge;
        }
    }

    SpdMatrix::new(sym).map_err(|e| match e {
        Error::NotPositiveDefinite(detail) => Error::NotPositiveDefinite(format!(
            "{detail}; increase the regularization eps (got {eps})"
        )),
        other => other,
    })
}

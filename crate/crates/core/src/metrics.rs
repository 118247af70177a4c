//! Riemannian metrics and Log-Euclidean kernels on the SPD manifold.
//!
//! Two distances are provided. The affine invariant metric measures geodesic
//! length on the curved manifold,
//!
//! ```text
//! d_airm(A, B) = || log(A^{-1/2} B A^{-1/2}) ||_F ,
//! ```
//!
//! and is unchanged by congruence with any invertible matrix. The
//! Log-Euclidean metric flattens the manifold through the matrix logarithm,
//!
//! ```text
//! d_loge(A, B) = || log(A) - log(B) ||_F ,
//! ```
//!
//! whose associated inner product `<A, B> = tr(log A log B)` is a valid
//! reproducing kernel: any quadratic form over it collapses to
//! `|| sum_i a_i log(A_i) ||_F^2 >= 0`, so Gram matrices are positive
//! semidefinite. Composing the inner product with positive-coefficient
//! polynomials, their exponentials, or a Gaussian of the distance preserves
//! that property; [`KernelSpec`] describes this kernel family.
//!
//! Gram assembly caches every matrix logarithm once, after which a kernel
//! evaluation is a single elementwise product sum, never a matrix multiply.
//! The pairwise loop is safely parallelizable; it runs sequentially here
//! because log caching dominates the cost.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{SpdMatrix, SymMatrix};

/// A kernel from the Log-Euclidean family.
///
/// For `x = tr(log A log B)` and a polynomial `p` with positive
/// coefficients:
///
/// * `Linear`: `k = x`
/// * `Poly`:   `k = p(x)`
/// * `Exp`:    `k = exp(p(x))`
/// * `Gauss`:  `k = exp(-bandwidth * d_loge(A, B)^2)`
///
/// `coeffs[j]` multiplies `x^(degree - j)`, so `coeffs` lists at most
/// `degree` terms in descending powers and the constant term is always
/// absent. The printed Gaussian form has unit bandwidth; `bandwidth` is
/// exposed because a fixed scale is useless across feature magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum KernelSpec {
    #[serde(rename = "LOGE_LINEAR")]
    Linear,
    #[serde(rename = "LOGE_POLY")]
    Poly { degree: u32, coeffs: Vec<f64> },
    #[serde(rename = "LOGE_EXP")]
    Exp { degree: u32, coeffs: Vec<f64> },
    #[serde(rename = "LOGE_GAUSS")]
    Gauss { bandwidth: f64 },
}

impl KernelSpec {
    /// Default polynomial kernel `p(x) = x^2`.
    pub fn default_poly() -> Self {
        KernelSpec::Poly {
            degree: 2,
            coeffs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Poly { degree, coeffs } | KernelSpec::Exp { degree, coeffs } => {
                if *degree < 1 {
                    return Err(Error::InvalidSpec("kernel degree must be >= 1".into()));
                }
                if coeffs.is_empty() || coeffs.len() > *degree as usize {
                    return Err(Error::InvalidSpec(format!(
                        "kernel needs 1..={} coefficients, got {}",
                        degree,
                        coeffs.len()
                    )));
                }
                if coeffs.iter().any(|&c| !(c > 0.0)) {
                    return Err(Error::InvalidSpec(
                        "kernel coefficients must all be positive".into(),
                    ));
                }
                Ok(())
            }
            KernelSpec::Gauss { bandwidth } => {
                if !(*bandwidth > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "gaussian bandwidth must be positive, got {bandwidth}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn poly_eval(degree: u32, coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c * x.powi(degree as i32 - j as i32))
        .sum()
}

/// `tr(A B)` for symmetric matrices: the elementwise product sum.
pub(crate) fn sym_trace_product(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn log_dist_sq(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Kernel evaluation over precomputed matrix logarithms.
pub(crate) fn eval_from_logs(spec: &KernelSpec, la: &SymMatrix, lb: &SymMatrix) -> f64 {
    match spec {
        KernelSpec::Linear => sym_trace_product(la, lb),
        KernelSpec::Poly { degree, coeffs } => poly_eval(*degree, coeffs, sym_trace_product(la, lb)),
        KernelSpec::Exp { degree, coeffs } => {
            poly_eval(*degree, coeffs, sym_trace_product(la, lb)).exp()
        }
        KernelSpec::Gauss { bandwidth } => (-bandwidth * log_dist_sq(la, lb)).exp(),
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Geodesic distance under the affine invariant metric.
///
/// `A^{-1/2}` comes from A's eigendecomposition; the same decomposition
/// would flag ill conditioning, so no second factorization is needed.
pub fn airm_dist(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let isqrt = a.eigen()?.compose(|l| 1.0 / l.sqrt());
    airm_dist_from_isqrt(&isqrt, b)
}

/// AIRM distance with the first argument's inverse square root already
/// computed (nearest-neighbor search reuses it across a whole training set).
pub(crate) fn airm_dist_from_isqrt(isqrt_a: &DMatrix<f64>, b: &SpdMatrix) -> Result<f64> {
    let m = isqrt_a * b.data() * isqrt_a;
    // Symmetrize away the roundoff from the two multiplications.
    let n = m.nrows();
    let mut sym = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    let mut sum = 0.0;
    for l in sym.symmetric_eigenvalues().iter() {
        if *l <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                " (whitened product has eigenvalue {l:.3e}; inputs are too ill-conditioned)"
            )));
        }
        let ll = l.ln();
        sum += ll * ll;
    }
    Ok(sum.sqrt())
}

/// Log-Euclidean distance `||log A - log B||_F`.
pub fn lem_dist(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(log_dist_sq(a.log(), b.log()).sqrt())
}

/// Log-Euclidean inner product `tr(log A log B)`.
pub fn loge_inner(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(sym_trace_product(a.log(), b.log()))
}

/// Evaluate the kernel described by `spec` on a pair of SPD matrices.
pub fn kernel_eval(spec: &KernelSpec, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    spec.validate()?;
    check_same_dim(a, b)?;
    Ok(eval_from_logs(spec, a.log(), b.log()))
}

/// Symmetric matrix of pairwise kernel values.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    data: DMatrix<f64>,
    spec: KernelSpec,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// Assemble the Gram matrix `K[i][j] = k(set[i], set[j])`.
///
/// Each matrix logarithm is computed exactly once; pairwise evaluation then
/// costs one elementwise product sum per entry.
pub fn gram(spec: &KernelSpec, set: &[SpdMatrix]) -> Result<GramMatrix> {
    spec.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyInput("gram over an empty set"));
    }
    let dim = set[0].dim();
    for m in set {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
    }
    let logs: Vec<SymMatrix> = set.iter().map(|m| m.log().clone()).collect();
    Ok(gram_from_logs(spec, &logs))
}

/// Gram assembly when the logarithms are already cached.
pub(crate) fn gram_from_logs(spec: &KernelSpec, logs: &[SymMatrix]) -> GramMatrix {
    let m = logs.len();
    let mut data = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = eval_from_logs(spec, &logs[i], &logs[j]);
            data[(i, j)] = v;
            data[(j, i)] = v;
        }
    }
    GramMatrix {
        data,
        spec: spec.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_orthogonal, random_spd};
    use crate::rng::SplitMix64;
    use nalgebra::DVector;

    fn diag_spd(values: &[f64]) -> SpdMatrix {
        SpdMatrix::new(DMatrix::from_diagonal(&DVector::from_row_slice(values))).unwrap()
    }

    #[test]
    fn airm_identity_pair_is_zero() {
        let i = SpdMatrix::identity(3);
        assert!(airm_dist(&i, &i).unwrap() < 1e-12);
    }

    #[test]
    fn airm_scaled_identity() {
        let d = airm_dist(&diag_spd(&[2.0, 2.0]), &SpdMatrix::identity(2)).unwrap();
        let want = std::f64::consts::SQRT_2 * 2f64.ln();
        assert!((d - want).abs() < 1e-12, "got {d}, want {want}");
    }

    #[test]
    fn airm_commuting_diagonals() {
        let d = airm_dist(&diag_spd(&[1.0, 2.0]), &diag_spd(&[3.0, 4.0])).unwrap();
        let want = (3f64.ln().powi(2) + 2f64.ln().powi(2)).sqrt();
        assert!((d - want).abs() < 1e-12);
    }

    #[test]
    fn airm_rejects_dimension_mismatch() {
        let e = airm_dist(&SpdMatrix::identity(2), &SpdMatrix::identity(3));
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn lem_self_distance_is_zero() {
        let mut rng = SplitMix64::new(1);
        let a = random_spd(&mut rng, 4, (0.1, 10.0));
        assert!(lem_dist(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn lem_diagonal_example() {
        let e2 = std::f64::consts::E.powi(2);
        let d = lem_dist(&diag_spd(&[e2, 1.0]), &SpdMatrix::identity(2)).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loge_inner_examples() {
        let mut rng = SplitMix64::new(2);
        let b = random_spd(&mut rng, 3, (0.5, 5.0));
        assert!(loge_inner(&SpdMatrix::identity(3), &b).unwrap().abs() < 1e-10);

        let e = std::f64::consts::E;
        let ei = diag_spd(&[e, e, e]);
        assert!((loge_inner(&ei, &ei).unwrap() - 3.0).abs() < 1e-10);

        let a = diag_spd(&[e, 1.0]);
        let c = diag_spd(&[e * e, e * e * e]);
        assert!((loge_inner(&a, &c).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_eval_examples() {
        let mut rng = SplitMix64::new(3);
        let a = random_spd(&mut rng, 3, (0.5, 5.0));
        let gauss = KernelSpec::Gauss { bandwidth: 1.0 };
        assert!((kernel_eval(&gauss, &a, &a).unwrap() - 1.0).abs() < 1e-12);

        let e = std::f64::consts::E;
        let ei = diag_spd(&[e, e]);
        let sq = KernelSpec::default_poly();
        assert!((kernel_eval(&sq, &ei, &ei).unwrap() - 4.0).abs() < 1e-10);

        let b = random_spd(&mut rng, 3, (0.5, 5.0));
        let exp_x = KernelSpec::Exp {
            degree: 1,
            coeffs: vec![1.0],
        };
        let v = kernel_eval(&exp_x, &SpdMatrix::identity(3), &b).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "exp(p(0)) should be 1, got {v}");
    }

    #[test]
    fn kernel_spec_validation() {
        assert!(KernelSpec::Linear.validate().is_ok());
        assert!(KernelSpec::Poly {
            degree: 0,
            coeffs: vec![1.0]
        }
        .validate()
        .is_err());
        assert!(KernelSpec::Poly {
            degree: 2,
            coeffs: vec![1.0, -1.0]
        }
        .validate()
        .is_err());
        assert!(KernelSpec::Poly {
            degree: 1,
            coeffs: vec![1.0, 1.0]
        }
        .validate()
        .is_err());
        assert!(KernelSpec::Gauss { bandwidth: 0.0 }.validate().is_err());
    }

    #[test]
    fn kernel_spec_json_keys() {
        let spec = KernelSpec::Poly {
            degree: 2,
            coeffs: vec![1.0],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"LOGE_POLY","degree":2,"coeffs":[1.0]}"#);
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);

        let gauss: KernelSpec =
            serde_json::from_str(r#"{"kind":"LOGE_GAUSS","bandwidth":0.5}"#).unwrap();
        assert_eq!(gauss, KernelSpec::Gauss { bandwidth: 0.5 });
    }

    #[test]
    fn gram_of_identical_identities_is_zero() {
        let set = vec![SpdMatrix::identity(2), SpdMatrix::identity(2)];
        let k = gram(&KernelSpec::Linear, &set).unwrap();
        assert!(k.data().norm() < 1e-12);
        assert_eq!(k.size(), 2);
    }

    #[test]
    fn gram_singleton_is_log_norm_squared() {
        let mut rng = SplitMix64::new(4);
        let a = random_spd(&mut rng, 3, (0.5, 5.0));
        let k = gram(&KernelSpec::Linear, std::slice::from_ref(&a)).unwrap();
        let want = a.log().data().norm_squared();
        assert!((k.data()[(0, 0)] - want).abs() < 1e-10);
    }

    #[test]
    fn gram_rejects_empty_and_mixed_dims() {
        assert!(gram(&KernelSpec::Linear, &[]).is_err());
        let set = vec![SpdMatrix::identity(2), SpdMatrix::identity(3)];
        assert!(matches!(
            gram(&KernelSpec::Linear, &set),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn all_kernel_kinds() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Linear,
            KernelSpec::default_poly(),
            KernelSpec::Exp {
                degree: 1,
                coeffs: vec![0.3],
            },
            KernelSpec::Gauss { bandwidth: 0.7 },
        ]
    }

    #[test]
    fn gram_is_numerically_psd_for_all_kinds() {
        let mut rng = SplitMix64::new(5);
        for spec in all_kernel_kinds() {
            for &m in &[3usize, 10, 30] {
                let set: Vec<SpdMatrix> =
                    (0..m).map(|_| random_spd(&mut rng, 4, (0.2, 5.0))).collect();
                let k = gram(&spec, &set).unwrap();
                let eigs = k.data().clone().symmetric_eigenvalues();
                let lmax = eigs.iter().fold(f64::MIN, |a, &v| a.max(v));
                let lmin = eigs.iter().fold(f64::MAX, |a, &v| a.min(v));
                assert!(
                    lmin >= -1e-8 * lmax.abs(),
                    "{spec:?} M={m}: lambda_min {lmin} vs lambda_max {lmax}"
                );
            }
        }
    }

    #[test]
    fn airm_metric_axioms_on_random_triples() {
        let mut rng = SplitMix64::new(6);
        for _ in 0..60 {
            let dim = 2 + rng.below(7);
            let a = random_spd(&mut rng, dim, (0.1, 10.0));
            let b = random_spd(&mut rng, dim, (0.1, 10.0));
            let c = random_spd(&mut rng, dim, (0.1, 10.0));
            let ab = airm_dist(&a, &b).unwrap();
            let ba = airm_dist(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-8, "symmetry violated: {ab} vs {ba}");
            assert!(airm_dist(&a, &a).unwrap() < 1e-8);
            let ac = airm_dist(&a, &c).unwrap();
            let bc = airm_dist(&b, &c).unwrap();
            assert!(ac <= ab + bc + 1e-8, "triangle violated");
        }
    }

    #[test]
    fn airm_affine_invariance() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..25 {
            let dim = 2 + rng.below(4);
            let a = random_spd(&mut rng, dim, (0.1, 10.0));
            let b = random_spd(&mut rng, dim, (0.1, 10.0));
            // Well-conditioned invertible W = Q1 diag(0.5..2) Q2.
            let q1 = random_orthogonal(&mut rng, dim);
            let q2 = random_orthogonal(&mut rng, dim);
            let d = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| {
                0.5 + 1.5 * rng.next_f64()
            }));
            let w = q1 * d * q2;
            let wa = crate::spd::make_spd(&(&w * a.data() * w.transpose()), 0.0).unwrap();
            let wb = crate::spd::make_spd(&(&w * b.data() * w.transpose()), 0.0).unwrap();
            let base = airm_dist(&a, &b).unwrap();
            let cong = airm_dist(&wa, &wb).unwrap();
            assert!(
                (base - cong).abs() <= 1e-6 * base.max(1.0),
                "affine invariance broke: {base} vs {cong}"
            );
        }
    }

    #[test]
    fn lem_inversion_invariance() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..20 {
            let dim = 2 + rng.below(5);
            let a = random_spd(&mut rng, dim, (0.1, 10.0));
            let b = random_spd(&mut rng, dim, (0.1, 10.0));
            let inv = |m: &SpdMatrix| SpdMatrix::new(m.eigen().unwrap().compose(|l| 1.0 / l)).unwrap();
            let d = lem_dist(&a, &b).unwrap();
            let di = lem_dist(&inv(&a), &inv(&b)).unwrap();
            assert!((d - di).abs() < 1e-8, "{d} vs {di}");
        }
    }

    #[test]
    fn polarization_identity_links_lem_and_linear_kernel() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..20 {
            let dim = 2 + rng.below(5);
            let a = random_spd(&mut rng, dim, (0.1, 10.0));
            let b = random_spd(&mut rng, dim, (0.1, 10.0));
            let k = |x: &SpdMatrix, y: &SpdMatrix| kernel_eval(&KernelSpec::Linear, x, y).unwrap();
            let lhs = lem_dist(&a, &b).unwrap().powi(2);
            let rhs = k(&a, &a) + k(&b, &b) - 2.0 * k(&a, &b);
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gauss_kernel_range_and_identity_of_indiscernibles() {
        let mut rng = SplitMix64::new(10);
        let spec = KernelSpec::Gauss { bandwidth: 1.3 };
        for _ in 0..20 {
            let a = random_spd(&mut rng, 3, (0.1, 10.0));
            let b = random_spd(&mut rng, 3, (0.1, 10.0));
            let v = kernel_eval(&spec, &a, &b).unwrap();
            assert!(v > 0.0 && v <= 1.0 + 1e-12);
            // Distinct random draws should not reach the supremum.
            assert!(v < 1.0 - 1e-9, "distinct matrices gave k = {v}");
            assert!((kernel_eval(&spec, &a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

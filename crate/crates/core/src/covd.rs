//! Covariance descriptors from feature matrices and image sets.
//!
//! For p feature columns `f_1..f_p` with mean `fbar`, the descriptor is
//!
//! ```text
//! C = F J_p J_p^T F^T = (1/p) sum_i (f_i - fbar)(f_i - fbar)^T
//! ```
//!
//! where `J_p = p^{-3/2} (p I - 1 1^T)` is the centering matrix. The two
//! forms are algebraically identical because `F J_p = p^{-1/2}(F - fbar 1^T)`;
//! the centered product form is what gets computed, since materializing
//! `J_p` for thousands of pixels would be wasteful. Small-sample covariances
//! are usually rank deficient, so every descriptor passes through
//! [`make_spd`](crate::spd::make_spd).
//!
//! The traditional baseline descriptor for an image set resizes every image
//! (bilinear, corner-aligned), vectorizes column-major, and applies the same
//! covariance over the resulting set of vectors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::image::ImageSet;
use crate::spd::{make_spd, SpdMatrix};

/// The centering matrix `J_p = p^{-3/2} (p I - 1 1^T)`.
///
/// `J J^T = (1/p)(I - 1 1^T / p)` subtracts the mean and applies the `1/p`
/// normalizer in one symmetric factor.
pub fn centering_matrix(p: usize) -> DMatrix<f64> {
    assert!(p >= 1, "centering matrix needs p >= 1");
    let scale = (p as f64).powf(-1.5);
    DMatrix::from_fn(p, p, |i, j| {
        let v = if i == j { p as f64 - 1.0 } else { -1.0 };
        scale * v
    })
}

/// The raw covariance `(1/p) sum (f_i - fbar)(f_i - fbar)^T`, before any
/// regularization. Positive semidefinite but often singular.
pub fn feature_covariance(f: &FeatureMatrix) -> DMatrix<f64> {
    column_covariance(f.data())
}

pub(crate) fn column_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let d = data.nrows();
    let p = data.ncols();
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = DMatrix::zeros(d, d);
    // Accumulate the upper triangle and mirror, keeping exact symmetry.
    for i in 0..d {
        for j in i..d {
            let mut sum = 0.0;
            for k in 0..p {
                sum += centered[(i, k)] * centered[(j, k)];
            }
            let v = sum / p as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Regularized covariance descriptor of a feature matrix.
pub fn covd_of_features(f: &FeatureMatrix, eps: f64) -> Result<SpdMatrix> {
    make_spd(&feature_covariance(f), eps)
}

/// Traditional set-level descriptor: resize each image to `resize`,
/// vectorize column-major, and take the covariance over the set.
///
/// The descriptor dimension is `resize.0 * resize.1` regardless of the
/// original image resolution.
pub fn traditional_set_covd(set: &ImageSet, resize: (usize, usize), eps: f64) -> Result<SpdMatrix> {
    if set.images.is_empty() {
        return Err(Error::EmptyInput("traditional descriptor of an empty set"));
    }
    let (h, w) = resize;
    if h < 1 || w < 1 {
        return Err(Error::InvalidSpec("resize target must be positive".into()));
    }
    let dim = h * w;
    let n = set.images.len();
    let mut vectors = DMatrix::zeros(dim, n);
    for (i, img) in set.images.iter().enumerate() {
        vectors.set_column(i, &img.resize_vectorized(h, w));
    }
    make_spd(&column_covariance(&vectors), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::rng::SplitMix64;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn fm(data: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix::new(data).unwrap()
    }

    #[test]
    fn centering_matrix_p1_is_zero() {
        let j = centering_matrix(1);
        assert_eq!(j, DMatrix::zeros(1, 1));
    }

    #[test]
    fn centering_matrix_p2_closed_form() {
        let j = centering_matrix(2);
        let s = 2f64.powf(-1.5);
        assert!((j[(0, 0)] - s).abs() < 1e-15);
        assert!((j[(0, 1)] + s).abs() < 1e-15);
        assert!((j[(1, 0)] + s).abs() < 1e-15);
        assert!((j[(1, 1)] - s).abs() < 1e-15);
    }

    #[test]
    fn centering_annihilates_constants() {
        for p in 1..=20 {
            let j = centering_matrix(p);
            let ones = DVector::from_element(p, 1.0);
            let out = &j * j.transpose() * ones;
            assert!(out.norm() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn scaled_centering_product_is_projection() {
        for p in [1usize, 2, 5, 11] {
            let j = centering_matrix(p);
            let x = (&j * j.transpose()) * p as f64;
            let diff = (&x * &x) - &x;
            assert!(diff.norm() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn covariance_of_two_points_on_axis() {
        let f = fm(DMatrix::from_columns(&[
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
        ]));
        let c = feature_covariance(&f);
        // Mean (1, 0); deviations (-1, 0) and (1, 0); variance 1 on axis 1.
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(c[(0, 1)].abs() < 1e-15);
        assert!(c[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn identical_columns_collapse_to_ridge() {
        let col = DVector::from_vec(vec![0.3, 0.7, 0.1]);
        let f = fm(DMatrix::from_columns(&[col.clone(), col.clone(), col]));
        assert!(feature_covariance(&f).norm() < 1e-15);
        let c = covd_of_features(&f, 1e-3).unwrap();
        // Zero trace falls back to a plain eps ridge.
        assert!((c.data() - DMatrix::identity(3, 3) * 1e-3).norm() < 1e-15);
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = SplitMix64::new(17);
        let data = DMatrix::from_fn(4, 50, |_, _| rng.next_normal());
        let got = feature_covariance(&fm(data.clone()));

        // Independent two-pass oracle: explicit mean, then accumulate the
        // full outer product per column.
        let p = data.ncols();
        let mut mean = DVector::zeros(4);
        for k in 0..p {
            mean += data.column(k);
        }
        mean /= p as f64;
        let mut want = DMatrix::zeros(4, 4);
        for k in 0..p {
            let d = data.column(k) - &mean;
            want += &d * d.transpose();
        }
        want /= p as f64;

        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn covariance_route_matches_literal_centering_matrix() {
        // The implementation reduces F J J^T F^T algebraically; check the
        // reduction against the literal matrix product.
        let mut rng = SplitMix64::new(18);
        let data = DMatrix::from_fn(3, 12, |_, _| rng.next_f64());
        let j = centering_matrix(12);
        let literal = data.clone() * &j * j.transpose() * data.transpose();
        let got = feature_covariance(&fm(data));
        assert!((literal - got).norm() < 1e-12);
    }

    #[test]
    fn traditional_descriptor_dimension_follows_resize() {
        let images = vec![
            GrayImage::from_fn(10, 10, |r, c| ((r + c) % 3) as f64 / 2.0).unwrap(),
            GrayImage::from_fn(10, 10, |r, c| ((r * c) % 5) as f64 / 4.0).unwrap(),
        ];
        let set = ImageSet::new("x", images).unwrap();
        let d = traditional_set_covd(&set, (8, 8), 1e-3).unwrap();
        assert_eq!(d.dim(), 64);
    }

    #[test]
    fn traditional_descriptor_of_identical_images_is_ridge_only() {
        let img = GrayImage::from_fn(12, 12, |r, _| r as f64 / 11.0).unwrap();
        let set = ImageSet::new("x", vec![img.clone(), img.clone(), img]).unwrap();
        let d = traditional_set_covd(&set, (6, 6), 1e-3).unwrap();
        assert!((d.data() - DMatrix::identity(36, 36) * 1e-3).norm() < 1e-12);
    }

    #[test]
    fn traditional_descriptor_two_constant_images() {
        // Constants 0 and 1: every resized coordinate takes values {0, 1},
        // so the covariance is (1/4) 1 1^T.
        let a = GrayImage::from_fn(10, 10, |_, _| 0.0).unwrap();
        let b = GrayImage::from_fn(10, 10, |_, _| 1.0).unwrap();
        let set = ImageSet::new("x", vec![a, b]).unwrap();
        let d = traditional_set_covd(&set, (5, 5), 0.0);
        // Rank-one covariance is singular; eps = 0 must be rejected.
        assert!(d.is_err());
        let d = traditional_set_covd(&set, (5, 5), 1e-6).unwrap();
        let n = 25;
        let ridge = 1e-6 * (0.25 * n as f64) / n as f64;
        for i in 0..n {
            for j in 0..n {
                let want = 0.25 + if i == j { ridge } else { 0.0 };
                assert!((d.data()[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn covariance_is_column_order_free(seed in 0u64..500) {
            let mut rng = SplitMix64::new(seed);
            let data = DMatrix::from_fn(3, 8, |_, _| rng.next_normal());
            let base = feature_covariance(&fm(data.clone()));
            let mut perm: Vec<usize> = (0..8).collect();
            rng.shuffle(&mut perm);
            let shuffled = DMatrix::from_columns(
                &perm.iter().map(|&k| data.column(k).clone_owned()).collect::<Vec<_>>(),
            );
            let permuted = feature_covariance(&fm(shuffled));
            prop_assert!((base - permuted).norm() < 1e-12);
        }

        #[test]
        fn covariance_is_translation_invariant(seed in 0u64..500) {
            let mut rng = SplitMix64::new(seed.wrapping_add(77));
            let data = DMatrix::from_fn(4, 10, |_, _| rng.next_normal());
            let shift = DVector::from_fn(4, |_, _| 10.0 * rng.next_f64());
            let mut shifted = data.clone();
            for mut col in shifted.column_iter_mut() {
                col += &shift;
            }
            let a = feature_covariance(&fm(data));
            let b = feature_covariance(&fm(shifted));
            prop_assert!((a - b).norm() < 1e-10);
        }
    }
}

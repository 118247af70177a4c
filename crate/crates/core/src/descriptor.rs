//! Set-level descriptors: the embedded-covariance pipeline and the
//! traditional baseline.
//!
//! For an image set with N images, the pipeline models each image by the
//! covariance of its per-pixel features (an SPD matrix), embeds those N
//! matrices into D-vectors with a fitted [`NystromModel`], collects the
//! embeddings as columns of `Z(Sp)`, and forms
//!
//! ```text
//! C_Z = Z(Sp) J_N J_N^T Z(Sp)^T
//! ```
//!
//! with `J_N` the centering matrix -- the covariance of the embedded set.
//! `C_Z` is `D x D` no matter how large the images or the set are, which is
//! the point: the traditional baseline (resize + vectorize + one covariance,
//! [`traditional_set_covd`]) ties the descriptor size to the resize target.
//!
//! `rank(C_Z) <= min(D, N - 1)` before regularization, so descriptors pass
//! through [`make_spd`](crate::spd::make_spd) like every other covariance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covd::{centering_matrix, covd_of_features, traditional_set_covd};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureSpec};
use crate::image::ImageSet;
use crate::nystrom::NystromModel;
use crate::spd::{make_spd, SpdMatrix};

/// How a set descriptor was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorMethod {
    /// Covariance of Nystrom-embedded per-image descriptors.
    #[serde(rename = "AID")]
    Aid,
    /// Resize-vectorize covariance baseline.
    #[serde(rename = "TRADITIONAL")]
    Traditional,
}

/// A labeled SPD descriptor for one image set.
#[derive(Debug, Clone)]
pub struct SetDescriptor {
    pub label: String,
    pub matrix: SpdMatrix,
    pub method: DescriptorMethod,
}

/// Per-image covariance descriptors for every image of a set, in order.
///
/// Feature extraction is parallelized across the images.
pub fn image_covds(set: &ImageSet, fspec: &FeatureSpec, eps: f64) -> Result<Vec<SpdMatrix>> {
    let extractor = FeatureExtractor::new(fspec)?;
    image_covds_with(&extractor, set, eps)
}

/// [`image_covds`] with a prebuilt extractor (reuse it across a dataset:
/// building the Gabor bank is not free).
pub fn image_covds_with(
    extractor: &FeatureExtractor,
    set: &ImageSet,
    eps: f64,
) -> Result<Vec<SpdMatrix>> {
    if set.images.is_empty() {
        return Err(Error::EmptyInput("image set must contain images"));
    }
    set.images
        .par_iter()
        .map(|img| covd_of_features(&extractor.extract(img)?, eps))
        .collect()
}

/// Covariance of embedding columns through the centering matrix, then
/// regularization: the final `D x D` set descriptor.
pub fn aid_covd_from_embeddings(
    label: impl Into<String>,
    embeddings: &DMatrix<f64>,
    eps: f64,
) -> Result<SetDescriptor> {
    let n = embeddings.ncols();
    if n == 0 {
        return Err(Error::EmptyInput("no embeddings to aggregate"));
    }
    let j = centering_matrix(n);
    let cz = embeddings * &j * j.transpose() * embeddings.transpose();
    Ok(SetDescriptor {
        label: label.into(),
        matrix: make_spd(&cz, eps)?,
        method: DescriptorMethod::Aid,
    })
}

/// End-to-end embedded-covariance descriptor for one image set.
pub fn aid_covd(
    set: &ImageSet,
    model: &NystromModel,
    fspec: &FeatureSpec,
    eps: f64,
) -> Result<SetDescriptor> {
    let covds = image_covds(set, fspec, eps)?;
    if covds[0].dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: covds[0].dim(),
        });
    }
    let z = model.batch_embed(&covds)?;
    aid_covd_from_embeddings(set.label.clone(), &z, eps)
}

/// Traditional baseline descriptor for one image set.
pub fn traditional_covd(set: &ImageSet, resize: (usize, usize), eps: f64) -> Result<SetDescriptor> {
    Ok(SetDescriptor {
        label: set.label.clone(),
        matrix: traditional_set_covd(set, resize, eps)?,
        method: DescriptorMethod::Traditional,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::image::GrayImage;
    use crate::metrics::KernelSpec;
    use crate::nystrom::nystrom_fit;
    use crate::random::random_spd;
    use crate::rng::SplitMix64;

    fn gradient_spec() -> FeatureSpec {
        FeatureSpec {
            kind: FeatureKind::Gradient,
            ..FeatureSpec::default()
        }
    }

    fn noisy_image(rng: &mut SplitMix64, side: usize) -> GrayImage {
        GrayImage::from_fn(side, side, |_, _| rng.next_f64()).unwrap()
    }

    fn noisy_set(rng: &mut SplitMix64, label: &str, n: usize, side: usize) -> ImageSet {
        ImageSet::new(label, (0..n).map(|_| noisy_image(rng, side)).collect()).unwrap()
    }

    fn fitted_model(rng: &mut SplitMix64, d: usize, m: usize) -> NystromModel {
        // Landmarks drawn from per-image descriptors of random images, so
        // their dimension matches the gradient feature quintuple.
        let spec = gradient_spec();
        let pool: Vec<SpdMatrix> = (0..m)
            .map(|_| {
                let set = ImageSet::new("p", vec![noisy_image(rng, 10)]).unwrap();
                image_covds(&set, &spec, 1e-3).unwrap().pop().unwrap()
            })
            .collect();
        nystrom_fit(&pool, &KernelSpec::Gauss { bandwidth: 0.5 }, d).unwrap()
    }

    #[test]
    fn image_covds_one_descriptor_per_image() {
        let mut rng = SplitMix64::new(1);
        let set = noisy_set(&mut rng, "a", 7, 10);
        let covds = image_covds(&set, &gradient_spec(), 1e-3).unwrap();
        assert_eq!(covds.len(), 7);
        for c in &covds {
            assert_eq!(c.dim(), 5);
        }
    }

    #[test]
    fn identical_images_give_identical_covds() {
        let mut rng = SplitMix64::new(2);
        let img = noisy_image(&mut rng, 10);
        let set = ImageSet::new("a", vec![img.clone(), img.clone(), img]).unwrap();
        let covds = image_covds(&set, &gradient_spec(), 1e-3).unwrap();
        assert_eq!(covds[0].data(), covds[1].data());
        assert_eq!(covds[0].data(), covds[2].data());
    }

    #[test]
    fn singleton_set_descriptor_is_pure_ridge() {
        let mut rng = SplitMix64::new(3);
        let model = fitted_model(&mut rng, 3, 8);
        let set = noisy_set(&mut rng, "a", 1, 10);
        let d = aid_covd(&set, &model, &gradient_spec(), 1e-3).unwrap();
        // J_1 = 0, so the covariance vanishes and only the eps ridge is left.
        assert_eq!(d.method, DescriptorMethod::Aid);
        let want = DMatrix::identity(3, 3) * 1e-3;
        assert!((d.matrix.data() - want).norm() < 1e-15);
    }

    #[test]
    fn identical_images_give_ridge_only_descriptor() {
        let mut rng = SplitMix64::new(4);
        let model = fitted_model(&mut rng, 4, 10);
        let img = noisy_image(&mut rng, 10);
        let set = ImageSet::new("a", vec![img.clone(), img.clone(), img]).unwrap();
        let d = aid_covd(&set, &model, &gradient_spec(), 1e-3).unwrap();
        let off_trace = d.matrix.data() - DMatrix::identity(4, 4) * 1e-3;
        assert!(off_trace.norm() < 1e-12, "residual {}", off_trace.norm());
    }

    #[test]
    fn descriptor_dimension_is_the_embedding_dimension() {
        let mut rng = SplitMix64::new(5);
        let model = fitted_model(&mut rng, 6, 12);
        let set = noisy_set(&mut rng, "a", 5, 12);
        let d = aid_covd(&set, &model, &gradient_spec(), 1e-3).unwrap();
        assert_eq!(d.matrix.dim(), 6);
    }

    #[test]
    fn aid_matches_direct_covariance_oracle() {
        let mut rng = SplitMix64::new(6);
        let model = fitted_model(&mut rng, 5, 12);
        let set = noisy_set(&mut rng, "a", 10, 10);
        let covds = image_covds(&set, &gradient_spec(), 1e-3).unwrap();
        let z = model.batch_embed(&covds).unwrap();
        // eps = 0 so the comparison is against the raw covariance; N = 10
        // embeddings of dimension 5 are full rank for random data.
        let d = aid_covd_from_embeddings("a", &z, 0.0).unwrap();

        let n = z.ncols();
        let mut mean = nalgebra::DVector::zeros(5);
        for k in 0..n {
            mean += z.column(k);
        }
        mean /= n as f64;
        let mut want = DMatrix::zeros(5, 5);
        for k in 0..n {
            let dev = z.column(k) - &mean;
            want += &dev * dev.transpose();
        }
        want /= n as f64;

        let rel = (d.matrix.data() - &want).norm() / want.norm();
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn aid_is_invariant_to_image_order() {
        let mut rng = SplitMix64::new(7);
        let model = fitted_model(&mut rng, 4, 10);
        let set = noisy_set(&mut rng, "a", 6, 10);
        let fwd = aid_covd(&set, &model, &gradient_spec(), 1e-3).unwrap();
        let mut reversed_images = set.images.clone();
        reversed_images.reverse();
        let rev_set = ImageSet::new("a", reversed_images).unwrap();
        let rev = aid_covd(&rev_set, &model, &gradient_spec(), 1e-3).unwrap();
        assert!((fwd.matrix.data() - rev.matrix.data()).norm() < 1e-10);
    }

    #[test]
    fn embedded_covariance_rank_is_bounded() {
        let mut rng = SplitMix64::new(8);
        let model = fitted_model(&mut rng, 6, 12);
        for n in [2usize, 4, 9] {
            let set = noisy_set(&mut rng, "a", n, 10);
            let covds = image_covds(&set, &gradient_spec(), 1e-3).unwrap();
            let z = model.batch_embed(&covds).unwrap();
            let j = centering_matrix(n);
            let cz = &z * &j * j.transpose() * z.transpose();
            let eigs = cz.symmetric_eigenvalues();
            let lmax = eigs.iter().fold(0.0f64, |a, &v| a.max(v));
            let rank = eigs.iter().filter(|&&v| v > 1e-10 * lmax).count();
            assert!(
                rank <= 6.min(n - 1),
                "rank {rank} exceeds min(D, N-1) for N={n}"
            );
        }
    }

    #[test]
    fn aid_rejects_model_with_wrong_input_dim() {
        let mut rng = SplitMix64::new(9);
        // A model over 3x3 landmarks cannot embed 5x5 gradient covds.
        let pool: Vec<SpdMatrix> = (0..6).map(|_| random_spd(&mut rng, 3, (0.5, 2.0))).collect();
        let model = nystrom_fit(&pool, &KernelSpec::Linear, 3).unwrap();
        let set = noisy_set(&mut rng, "a", 3, 10);
        assert!(matches!(
            aid_covd(&set, &model, &gradient_spec(), 1e-3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn traditional_covd_delegates() {
        let mut rng = SplitMix64::new(10);
        let set = noisy_set(&mut rng, "lbl", 4, 10);
        let d = traditional_covd(&set, (6, 6), 1e-3).unwrap();
        assert_eq!(d.method, DescriptorMethod::Traditional);
        assert_eq!(d.label, "lbl");
        let direct = traditional_set_covd(&set, (6, 6), 1e-3).unwrap();
        assert_eq!(d.matrix.data(), direct.data());
    }
}

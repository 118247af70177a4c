//! Covariance descriptors for image sets on the SPD manifold.
//!
//! Image sets are represented by second-order statistics. The traditional
//! route resizes and vectorizes every image and takes one covariance over
//! the set; the route this crate is built around models each image by the
//! covariance of its local features, maps those SPD matrices into a kernel
//! feature space with a Log-Euclidean kernel, compresses the feature map to
//! `D` dimensions with a Nystrom model fitted on training descriptors, and
//! takes the covariance of the embedded set. The result is a `D x D` SPD
//! descriptor whose size is decoupled from both image resolution and set
//! size.
//!
//! Four manifold classifiers consume the descriptors: nearest neighbor
//! under the affine invariant and Log-Euclidean metrics, discriminant
//! learning on log-mapped vectors, and kernel sparse representation.
//! [`eval`] runs the repeated random-split benchmark protocol over all of
//! them, and the `covds` binary drives everything from a JSON config.
//!
//! The mdbook under `book/` walks through the geometry and each pipeline
//! stage with runnable examples.

pub mod cache;
pub mod classifiers;
pub mod cli;
pub mod config;
pub mod covd;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod metrics;
pub mod nystrom;
pub mod random;
pub mod rng;
pub mod selftest;
pub mod spd;

pub use classifiers::{cdl_fit, cdl_predict, logvec, nn_classify, src_fit, src_predict, CdlModel, LabeledDescriptors, NnMetric, SrcModel};
pub use covd::{centering_matrix, covd_of_features, traditional_set_covd};
pub use dataset::{load_dataset, synth_dataset, SyntheticSpec};
pub use descriptor::{aid_covd, image_covds, traditional_covd, DescriptorMethod, SetDescriptor};
pub use error::{Error, Result};
pub use eval::{emit_report, run_protocol, EvalConfig, EvalReport, Method, Protocol, ReportFormat};
pub use features::{FeatureExtractor, FeatureKind, FeatureMatrix, FeatureSpec};
pub use image::{GrayImage, ImageSet};
pub use metrics::{airm_dist, gram, kernel_eval, lem_dist, loge_inner, GramMatrix, KernelSpec};
pub use nystrom::{nystrom_fit, NystromModel};
pub use spd::{make_spd, sym_eig, EigenPair, SpdMatrix, SymMatrix};

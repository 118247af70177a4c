//! Nystrom approximation of kernel feature maps on the SPD manifold.
//!
//! A training set of M SPD matrices induces the Gram matrix
//! `K[i][j] = k(Sp_i, Sp_j)` under a Log-Euclidean kernel. With
//! `E` the diagonal of the top D eigenvalues of K and `V` the matrix of
//! corresponding eigenvectors, `Z = E^{1/2} V^T` reconstructs `K ~= Z^T Z`,
//! and any SPD matrix Y embeds as the D-vector
//!
//! ```text
//! Z(Y) = E^{-1/2} V^T (k(Y, Sp_1), ..., k(Y, Sp_M))^T .
//! ```
//!
//! Inner products of embeddings approximate kernel values, so the embedding
//! is an explicit, finite-dimensional stand-in for the implicit kernel
//! feature map. At D = M on a full-rank Gram the reconstruction is exact;
//! truncating to D < M discards exactly the eigenvalue tail.
//!
//! Eigenvalues at or below `1e-10 * lambda_max` are treated as numerical
//! zeros and dropped (their `E^{-1/2}` would amplify noise unboundedly);
//! the model records a warning when that shrinks the requested dimension.
//!
//! A fitted model is immutable; embedding calls are pure and can run in
//! parallel. Only the landmark logarithms are stored -- they are sufficient
//! for every kernel in the Log-Euclidean family.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{eval_from_logs, gram, KernelSpec};
use crate::spd::{sym_eig, SpdMatrix, SymMatrix};

/// Relative eigenvalue floor below which Gram eigenvalues count as zero.
pub const PSD_FLOOR_REL: f64 = 1e-10;

const PERSIST_MAGIC: &str = "covds-nystrom";
const PERSIST_VERSION: u32 = 1;

/// A fitted Nystrom model: spectral data of the training Gram plus the
/// cached landmark logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromModel {
    spec: KernelSpec,
    landmark_logs: Vec<SymMatrix>,
    /// Top eigenvalues of the Gram, descending, all above the floor.
    eigenvalues: DVector<f64>,
    /// Corresponding eigenvectors, M x D.
    eigenvectors: DMatrix<f64>,
    warnings: Vec<String>,
}

impl NystromModel {
    /// Dimension of the SPD matrices this model embeds.
    pub fn input_dim(&self) -> usize {
        self.landmark_logs[0].dim()
    }

    /// Dimension D of the embedding vectors.
    pub fn embedding_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of landmarks M.
    pub fn landmark_count(&self) -> usize {
        self.landmark_logs.len()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Warnings recorded during fitting (e.g. rank collapse).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Embed one SPD matrix as a D-vector.
    pub fn embed(&self, y: &SpdMatrix) -> Result<DVector<f64>> {
        if y.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: y.dim(),
            });
        }
        Ok(self.embed_log(y.log()))
    }

    /// Embed from a precomputed matrix logarithm. Callers that embed the
    /// same matrices repeatedly should cache the logs and use this.
    pub fn embed_log(&self, log_y: &SymMatrix) -> DVector<f64> {
        assert_eq!(
            log_y.dim(),
            self.input_dim(),
            "log dimension must match the landmarks"
        );
        let m = self.landmark_count();
        let d = self.embedding_dim();
        let kernel_col = DVector::from_fn(m, |i, _| {
            eval_from_logs(&self.spec, log_y, &self.landmark_logs[i])
        });
        let mut z = DVector::zeros(d);
        for j in 0..d {
            let mut dot = 0.0;
            for i in 0..m {
                dot += self.eigenvectors[(i, j)] * kernel_col[i];
            }
            z[j] = dot / self.eigenvalues[j].sqrt();
        }
        z
    }

    /// Embed a list of SPD matrices into the columns of a `D x N` matrix.
    pub fn batch_embed(&self, ys: &[SpdMatrix]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.embedding_dim(), ys.len());
        for (i, y) in ys.iter().enumerate() {
            out.set_column(i, &self.embed(y)?);
        }
        Ok(out)
    }

    /// `Z = E^{1/2} V^T`, the `D x M` spectral factor with `Z^T Z ~= K`.
    pub fn training_factor(&self) -> DMatrix<f64> {
        let d = self.embedding_dim();
        let m = self.landmark_count();
        DMatrix::from_fn(d, m, |j, i| {
            self.eigenvalues[j].sqrt() * self.eigenvectors[(i, j)]
        })
    }

    /// Persist as versioned JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.input_dim();
        let file = PersistedModel {
            magic: PERSIST_MAGIC.to_string(),
            version: PERSIST_VERSION,
            spec: self.spec.clone(),
            input_dim: n,
            landmark_count: self.landmark_count(),
            embedding_dim: self.embedding_dim(),
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            eigenvectors: self.eigenvectors.iter().copied().collect(),
            landmark_logs: self
                .landmark_logs
                .iter()
                .flat_map(|l| l.data().iter().copied())
                .collect(),
            warnings: self.warnings.clone(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Load a model persisted by [`NystromModel::save`].
    pub fn load(path: &Path) -> Result<NystromModel> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: PersistedModel = serde_json::from_slice(&bytes)?;
        if file.magic != PERSIST_MAGIC {
            return Err(Error::InvalidSpec(format!(
                "not a nystrom model file (magic {:?})",
                file.magic
            )));
        }
        if file.version != PERSIST_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported nystrom model version {}",
                file.version
            )));
        }
        let n = file.input_dim;
        let m = file.landmark_count;
        let d = file.embedding_dim;
        if file.eigenvalues.len() != d
            || file.eigenvectors.len() != m * d
            || file.landmark_logs.len() != m * n * n
            || m == 0
            || d == 0
        {
            return Err(Error::InvalidSpec("corrupt nystrom model file".into()));
        }
        let landmark_logs = (0..m)
            .map(|i| {
                SymMatrix::new(DMatrix::from_column_slice(
                    n,
                    n,
                    &file.landmark_logs[i * n * n..(i + 1) * n * n],
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NystromModel {
            spec: file.spec,
            landmark_logs,
            eigenvalues: DVector::from_vec(file.eigenvalues),
            eigenvectors: DMatrix::from_column_slice(m, d, &file.eigenvectors),
            warnings: file.warnings,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedModel {
    magic: String,
    version: u32,
    spec: KernelSpec,
    input_dim: usize,
    landmark_count: usize,
    embedding_dim: usize,
    eigenvalues: Vec<f64>,
    /// Column-major M x D.
    eigenvectors: Vec<f64>,
    /// Concatenated column-major n x n landmark logarithms.
    landmark_logs: Vec<f64>,
    warnings: Vec<String>,
}

/// Fit a Nystrom model on a training set of SPD matrices.
///
/// Builds the Gram under `spec`, keeps the top `d` eigenpairs above the
/// floor, and caches the landmark logarithms for embedding.
pub fn nystrom_fit(train: &[SpdMatrix], spec: &KernelSpec, d: usize) -> Result<NystromModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("nystrom training set"));
    }
    if d < 1 || d > train.len() {
        return Err(Error::InvalidSpec(format!(
            "target dimension must satisfy 1 <= D <= M ({} landmarks), got {d}",
            train.len()
        )));
    }
    let k = gram(spec, train)?;
    let logs: Vec<SymMatrix> = train.iter().map(|m| m.log().clone()).collect();
    fit_from_gram(spec, logs, k.data(), d)
}

pub(crate) fn fit_from_gram(
    spec: &KernelSpec,
    landmark_logs: Vec<SymMatrix>,
    gram_data: &DMatrix<f64>,
    d: usize,
) -> Result<NystromModel> {
    let eig = sym_eig(&SymMatrix::new(gram_data.clone())?)?;
    let lmax = eig.max_value();
    let floor = PSD_FLOOR_REL * lmax;
    let usable = eig.values.iter().take_while(|&&l| l > floor && l > 0.0).count();
    if usable == 0 {
        return Err(Error::DegenerateKernel(format!(
            "no Gram eigenvalue above the floor {floor:.3e} (lambda_max = {lmax:.3e}); \
             the landmarks are kernel-indistinguishable"
        )));
    }

    let mut warnings = Vec::new();
    let d_eff = if usable < d {
        warnings.push(format!(
            "requested dimension {d} exceeds the numerical rank {usable} of the \
             kernel matrix; reduced to {usable}"
        ));
        usable
    } else {
        d
    };

    let eigenvalues = DVector::from_fn(d_eff, |j, _| eig.values[j]);
    let eigenvectors = eig.vectors.columns(0, d_eff).clone_owned();
    Ok(NystromModel {
        spec: spec.clone(),
        landmark_logs,
        eigenvalues,
        eigenvectors,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_spd;
    use crate::rng::SplitMix64;

    fn haystack(rng: &mut SplitMix64, m: usize, dim: usize) -> Vec<SpdMatrix> {
        (0..m).map(|_| random_spd(rng, dim, (0.2, 5.0))).collect()
    }

    fn gauss() -> KernelSpec {
        KernelSpec::Gauss { bandwidth: 0.2 }
    }

    #[test]
    fn identical_landmarks_collapse_to_rank_one() {
        let a = random_spd(&mut SplitMix64::new(1), 3, (0.5, 2.0));
        let train = vec![a.clone(), a.clone(), a.clone(), a];
        let model = nystrom_fit(&train, &KernelSpec::Linear, 3).unwrap();
        assert_eq!(model.embedding_dim(), 1);
        assert!(!model.warnings().is_empty());
    }

    #[test]
    fn identity_landmarks_are_degenerate_under_linear_kernel() {
        // log(I) = 0 makes the Gram identically zero.
        let train = vec![SpdMatrix::identity(3); 4];
        assert!(matches!(
            nystrom_fit(&train, &KernelSpec::Linear, 2),
            Err(Error::DegenerateKernel(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_dimension() {
        let mut rng = SplitMix64::new(2);
        let train = haystack(&mut rng, 5, 3);
        assert!(nystrom_fit(&train, &gauss(), 0).is_err());
        assert!(nystrom_fit(&train, &gauss(), 6).is_err());
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = SplitMix64::new(3);
        let train = haystack(&mut rng, 12, 4);
        let k = gram(&gauss(), &train).unwrap();
        let model = nystrom_fit(&train, &gauss(), 12).unwrap();
        assert_eq!(model.embedding_dim(), 12);
        let z = model.training_factor();
        let rel = (z.transpose() * &z - k.data()).norm() / k.data().norm();
        assert!(rel <= 1e-8, "reconstruction error {rel}");
    }

    #[test]
    fn truncation_error_is_the_discarded_tail() {
        let mut rng = SplitMix64::new(4);
        let train = haystack(&mut rng, 20, 4);
        let k = gram(&gauss(), &train).unwrap();
        let all = sym_eig(&SymMatrix::new(k.data().clone()).unwrap()).unwrap();
        let mut prev_err = f64::INFINITY;
        for d in 1..=20usize {
            let model = nystrom_fit(&train, &gauss(), d).unwrap();
            let z = model.training_factor();
            let err = (z.transpose() * &z - k.data()).norm();
            let tail: f64 = all.values.iter().skip(d).map(|l| l * l).sum::<f64>().sqrt();
            assert!(
                (err - tail).abs() <= 1e-8 * tail.max(1.0),
                "D={d}: err {err} vs tail {tail}"
            );
            assert!(err <= prev_err + 1e-10, "error increased at D={d}");
            prev_err = err;
        }
    }

    #[test]
    fn embedding_a_landmark_recovers_its_training_column() {
        let mut rng = SplitMix64::new(5);
        let train = haystack(&mut rng, 10, 4);
        let model = nystrom_fit(&train, &gauss(), 10).unwrap();
        let z = model.training_factor();
        for (i, sp) in train.iter().enumerate() {
            let zi = model.embed(sp).unwrap();
            let want = z.column(i);
            assert!((zi - want).norm() < 1e-8, "landmark {i}");
        }
    }

    #[test]
    fn embedding_inner_products_match_gram_at_full_rank() {
        let mut rng = SplitMix64::new(6);
        let train = haystack(&mut rng, 8, 3);
        let k = gram(&gauss(), &train).unwrap();
        let model = nystrom_fit(&train, &gauss(), 8).unwrap();
        let embedded: Vec<_> = train.iter().map(|sp| model.embed(sp).unwrap()).collect();
        for i in 0..8 {
            for j in 0..8 {
                let dot = embedded[i].dot(&embedded[j]);
                assert!(
                    (dot - k.data()[(i, j)]).abs() < 1e-8,
                    "({i},{j}): {dot} vs {}",
                    k.data()[(i, j)]
                );
            }
        }
    }

    #[test]
    fn gaussian_embedding_norm_is_bounded_by_one() {
        let mut rng = SplitMix64::new(7);
        let train = haystack(&mut rng, 15, 4);
        for d in [3usize, 8, 15] {
            let model = nystrom_fit(&train, &gauss(), d).unwrap();
            for _ in 0..10 {
                let y = random_spd(&mut rng, 4, (0.2, 5.0));
                let z = model.embed(&y).unwrap();
                // k(y, y) = 1 for the gaussian kernel; the projection can
                // only shrink the RKHS norm.
                assert!(z.norm_squared() <= 1.0 + 1e-6, "norm {}", z.norm_squared());
            }
        }
    }

    #[test]
    fn batch_embed_equals_loop() {
        let mut rng = SplitMix64::new(8);
        let train = haystack(&mut rng, 9, 3);
        let model = nystrom_fit(&train, &gauss(), 5).unwrap();
        let probes = haystack(&mut rng, 6, 3);
        let batch = model.batch_embed(&probes).unwrap();
        assert_eq!(batch.ncols(), 6);
        for (i, p) in probes.iter().enumerate() {
            let single = model.embed(p).unwrap();
            assert!((batch.column(i) - single).norm() < 1e-12);
        }
        let empty = model.batch_embed(&[]).unwrap();
        assert_eq!(empty.ncols(), 0);
        assert_eq!(empty.nrows(), 5);
        let one = model.batch_embed(&probes[..1]).unwrap();
        assert_eq!(one.ncols(), 1);
    }

    #[test]
    fn kernel_fidelity_improves_with_dimension_on_average() {
        let mut rng = SplitMix64::new(3);
        let train = haystack(&mut rng, 20, 4);
        let probes = haystack(&mut rng, 10, 4);
        let spec = gauss();
        let mut errs = Vec::new();
        for d in 1..=20usize {
            let model = nystrom_fit(&train, &spec, d).unwrap();
            let zs: Vec<_> = probes.iter().map(|p| model.embed(p).unwrap()).collect();
            let mut total = 0.0;
            let mut count = 0;
            for i in 0..probes.len() {
                for j in (i + 1)..probes.len() {
                    let k = crate::metrics::kernel_eval(&spec, &probes[i], &probes[j]).unwrap();
                    total += (zs[i].dot(&zs[j]) - k).abs();
                    count += 1;
                }
            }
            errs.push(total / count as f64);
        }
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "fidelity regressed: {errs:?}");
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = SplitMix64::new(10);
        let train = haystack(&mut rng, 7, 3);
        let a = nystrom_fit(&train, &gauss(), 4).unwrap();
        let b = nystrom_fit(&train, &gauss(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn persistence_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = SplitMix64::new(11);
        let train = haystack(&mut rng, 8, 3);
        let model = nystrom_fit(&train, &KernelSpec::default_poly(), 5).unwrap();
        model.save(&path).unwrap();
        let back = NystromModel::load(&path).unwrap();
        assert_eq!(model, back);
        let y = random_spd(&mut rng, 3, (0.2, 5.0));
        assert_eq!(model.embed(&y).unwrap(), back.embed(&y).unwrap());
    }

    #[test]
    fn load_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"magic":"nope","version":1,"spec":{"kind":"LOGE_LINEAR"},"input_dim":1,"landmark_count":0,"embedding_dim":0,"eigenvalues":[],"eigenvectors":[],"landmark_logs":[],"warnings":[]}"#).unwrap();
        assert!(NystromModel::load(&path).is_err());
    }

    #[test]
    fn embed_rejects_dimension_mismatch() {
        let mut rng = SplitMix64::new(12);
        let train = haystack(&mut rng, 5, 3);
        let model = nystrom_fit(&train, &gauss(), 3).unwrap();
        let wrong = random_spd(&mut rng, 4, (0.5, 2.0));
        assert!(matches!(
            model.embed(&wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

//! Manifold classifiers: nearest neighbor, log-domain discriminant
//! learning, and kernel sparse representation.
//!
//! All four classifiers used by the benchmark live here.
//!
//! * **Nearest neighbor** under either the affine invariant or the
//!   Log-Euclidean distance; ties go to the lowest training index.
//! * **Discriminant learning** ([`cdl_fit`]): SPD descriptors are mapped to
//!   `n(n+1)/2`-vectors with [`logvec`] (an isometry onto the tangent
//!   space), then regularized Fisher discriminant analysis projects onto at
//!   most `#classes - 1` directions and test points take the label of the
//!   nearest class centroid. The generalized eigenproblem is solved in the
//!   span of the centered training vectors, which makes the huge ambient
//!   dimension of log-vectorized descriptors harmless.
//! * **Kernel sparse representation** ([`src_fit`]): each query is sparsely
//!   coded over the training atoms in the RKHS of a Log-Euclidean kernel by
//!   minimizing `x^T K x - 2 k_y^T x + lambda ||x||_1` with cyclic
//!   coordinate descent, and the query takes the class whose atoms
//!   reconstruct it with the smallest residual.
//!
//! Everything is deterministic: fixed tie-breaking, no randomness.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{airm_dist_from_isqrt, eval_from_logs, gram_from_logs, KernelSpec};
use crate::spd::{sym_eig, SpdMatrix, SymMatrix};

/// Training descriptors with parallel class labels.
#[derive(Debug, Clone)]
pub struct LabeledDescriptors {
    descriptors: Vec<SpdMatrix>,
    labels: Vec<String>,
}

impl LabeledDescriptors {
    pub fn new(descriptors: Vec<SpdMatrix>, labels: Vec<String>) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(Error::EmptyInput("labeled descriptor set"));
        }
        if descriptors.len() != labels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} descriptors but {} labels",
                descriptors.len(),
                labels.len()
            )));
        }
        let dim = descriptors[0].dim();
        if descriptors.iter().any(|d| d.dim() != dim) {
            return Err(Error::InvalidSpec(
                "descriptors must share one dimension".into(),
            ));
        }
        Ok(LabeledDescriptors { descriptors, labels })
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[SpdMatrix] {
        &self.descriptors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Distinct labels, sorted, with the member indices of each class.
    pub fn classes(&self) -> Vec<(String, Vec<usize>)> {
        let mut classes: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, label) in self.labels.iter().enumerate() {
            match classes.binary_search_by(|(l, _)| l.as_str().cmp(label)) {
                Ok(pos) => classes[pos].1.push(i),
                Err(pos) => classes.insert(pos, (label.clone(), vec![i])),
            }
        }
        classes
    }
}

/// Half-vectorization of the matrix logarithm, upper triangle row-major,
/// off-diagonal entries scaled by sqrt(2) so that
/// `<logvec(A), logvec(B)> = tr(log A log B)`.
pub fn logvec(m: &SpdMatrix) -> DVector<f64> {
    logvec_of_log(m.log())
}

pub(crate) fn logvec_of_log(log: &SymMatrix) -> DVector<f64> {
    let n = log.dim();
    let mut out = DVector::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            out[idx] = if i == j {
                log.data()[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * log.data()[(i, j)]
            };
            idx += 1;
        }
    }
    out
}

/// Distance used by nearest-neighbor classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NnMetric {
    #[serde(rename = "AIRM")]
    Airm,
    #[serde(rename = "LOGED")]
    LogEuclidean,
}

/// Assign each test descriptor the label of its nearest training
/// descriptor; ties break to the lowest training index.
pub fn nn_classify(
    train: &LabeledDescriptors,
    test: &[SpdMatrix],
    metric: NnMetric,
) -> Result<Vec<String>> {
    let dim = train.descriptors[0].dim();
    for t in test {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.dim(),
            });
        }
    }
    match metric {
        NnMetric::LogEuclidean => {
            let train_logs: Vec<&SymMatrix> = train.descriptors.iter().map(|d| d.log()).collect();
            test.par_iter()
                .map(|t| {
                    let lt = t.log();
                    let mut best = (f64::INFINITY, 0usize);
                    for (i, lg) in train_logs.iter().enumerate() {
                        let d2 = crate::metrics::log_dist_sq(lt, lg);
                        if d2 < best.0 {
                            best = (d2, i);
                        }
                    }
                    Ok(train.labels[best.1].clone())
                })
                .collect()
        }
        NnMetric::Airm => test
            .par_iter()
            .map(|t| {
                let isqrt = t.eigen()?.compose(|l| 1.0 / l.sqrt());
                let mut best = (f64::INFINITY, 0usize);
                for (i, tr) in train.descriptors.iter().enumerate() {
                    let d = airm_dist_from_isqrt(&isqrt, tr)?;
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                Ok(train.labels[best.1].clone())
            })
            .collect(),
    }
}

/// Fitted discriminant model over log-vectorized descriptors.
#[derive(Debug, Clone)]
pub struct CdlModel {
    /// Global mean of the training log-vectors.
    mean: DVector<f64>,
    /// Ambient-dim x r map onto the discriminant subspace, r <= classes - 1.
    projection: DMatrix<f64>,
    class_labels: Vec<String>,
    /// r x #classes matrix of projected class centroids.
    class_centroids: DMatrix<f64>,
    ridge: f64,
}

impl CdlModel {
    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Fit regularized Fisher discriminant analysis on [`logvec`] coordinates.
///
/// The within-class scatter is regularized as `S_w + ridge tr(S_w)/dim I`
/// (plain `ridge I` when the trace vanishes, e.g. point-mass classes).
pub fn cdl_fit(train: &LabeledDescriptors, ridge: f64) -> Result<CdlModel> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::InvalidSpec(
            "discriminant learning needs at least 2 classes".into(),
        ));
    }

    let n = train.len();
    let vectors: Vec<DVector<f64>> = train.descriptors.iter().map(logvec).collect();
    let ambient = vectors[0].len();

    let mut mean = DVector::zeros(ambient);
    for v in &vectors {
        mean += v;
    }
    mean /= n as f64;

    // All scatter lives in the span of the centered data; solve there.
    let mut centered = DMatrix::zeros(ambient, n);
    for (i, v) in vectors.iter().enumerate() {
        centered.set_column(i, &(v - &mean));
    }
    let q = centered.clone().qr().q();
    let r_sub = q.ncols();
    let projected = q.transpose() * &centered; // r_sub x n

    let mut sw = DMatrix::zeros(r_sub, r_sub);
    let mut sb = DMatrix::zeros(r_sub, r_sub);
    let mut class_means = DMatrix::zeros(r_sub, classes.len());
    for (c, (_, members)) in classes.iter().enumerate() {
        let mut mu = DVector::zeros(r_sub);
        for &i in members {
            mu += projected.column(i);
        }
        mu /= members.len() as f64;
        for &i in members {
            let d = projected.column(i) - &mu;
            sw += &d * d.transpose();
        }
        // The projected global mean is zero by centering.
        sb += (&mu * mu.transpose()) * members.len() as f64;
        class_means.set_column(c, &mu);
    }

    let trace = sw.trace();
    let alpha = if trace > 0.0 {
        ridge * trace / ambient as f64
    } else {
        ridge
    };
    for i in 0..r_sub {
        sw[(i, i)] += alpha;
    }

    let chol = Cholesky::new(sw).ok_or_else(|| {
        Error::NotPositiveDefinite(
            " (regularized within-class scatter is singular; increase the ridge)".into(),
        )
    })?;
    // Whiten: eigenvectors of L^-1 S_b L^-T give the discriminant
    // directions v = L^-T u with v^T (S_w + alpha I) v = 1.
    let l_inv_sb = chol.l().solve_lower_triangular(&sb).ok_or_else(|| {
        Error::NotPositiveDefinite(" (scatter whitening failed; increase the ridge)".into())
    })?;
    let whitened = chol
        .l()
        .solve_lower_triangular(&l_inv_sb.transpose())
        .ok_or_else(|| {
            Error::NotPositiveDefinite(" (scatter whitening failed; increase the ridge)".into())
        })?;
    // Symmetrize roundoff before decomposing.
    let mut w = DMatrix::zeros(r_sub, r_sub);
    for i in 0..r_sub {
        for j in i..r_sub {
            let v = 0.5 * (whitened[(i, j)] + whitened[(j, i)]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let eig = sym_eig(&SymMatrix::new(w)?)?;

    let keep = (classes.len() - 1).min(r_sub);
    let mut directions = DMatrix::zeros(r_sub, keep);
    for k in 0..keep {
        let u = eig.vectors.column(k).clone_owned();
        let v = chol.l().transpose().solve_upper_triangular(&u).ok_or_else(|| {
            Error::NotPositiveDefinite(" (scatter back-substitution failed)".into())
        })?;
        directions.set_column(k, &v);
    }

    let projection = &q * &directions;
    let class_centroids = directions.transpose() * class_means;

    Ok(CdlModel {
        mean,
        projection,
        class_labels: classes.into_iter().map(|(l, _)| l).collect(),
        class_centroids,
        ridge,
    })
}

/// Project test descriptors and assign the nearest class centroid;
/// ties break to the lowest class label.
pub fn cdl_predict(model: &CdlModel, test: &[SpdMatrix]) -> Result<Vec<String>> {
    test.par_iter()
        .map(|t| {
            let v = logvec(t);
            if v.len() != model.mean.len() {
                return Err(Error::DimensionMismatch {
                    expected: model.mean.len(),
                    got: v.len(),
                });
            }
            let y = model.projection.transpose() * (v - &model.mean);
            let mut best = (f64::INFINITY, 0usize);
            for (c, centroid) in model.class_centroids.column_iter().enumerate() {
                let d2 = (&y - centroid).norm_squared();
                if d2 < best.0 {
                    best = (d2, c);
                }
            }
            Ok(model.class_labels[best.1].clone())
        })
        .collect()
}

/// Fitted kernel sparse-representation model: training atoms (as cached
/// logarithms), their Gram matrix, and the sparsity weight.
#[derive(Debug, Clone)]
pub struct SrcModel {
    spec: KernelSpec,
    dict_logs: Vec<SymMatrix>,
    gram: DMatrix<f64>,
    labels: Vec<String>,
    class_labels: Vec<String>,
    lambda: f64,
}

impl SrcModel {
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Cache the dictionary logs and Gram matrix for sparse-representation
/// classification.
///
/// `lambda` scales per query: the effective l1 weight for a query `y` is
/// `lambda * max_i |k(y, atom_i)|`, which adapts the shrinkage to the
/// kernel magnitude.
pub fn src_fit(train: &LabeledDescriptors, spec: &KernelSpec, lambda: f64) -> Result<SrcModel> {
    spec.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "sparsity weight must be nonnegative, got {lambda}"
        )));
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::InvalidSpec(
            "sparse-representation classification needs at least 2 classes".into(),
        ));
    }
    let dict_logs: Vec<SymMatrix> = train.descriptors.iter().map(|d| d.log().clone()).collect();
    let gram = gram_from_logs(spec, &dict_logs).into_inner();
    Ok(SrcModel {
        spec: spec.clone(),
        dict_logs,
        gram,
        labels: train.labels.to_vec(),
        class_labels: classes.into_iter().map(|(l, _)| l).collect(),
        lambda,
    })
}

/// Default per-query sparsity multiplier.
pub const DEFAULT_SRC_LAMBDA: f64 = 1e-3;

/// Convergence tolerance on the largest coefficient change per sweep.
const CD_TOL: f64 = 1e-8;
/// Sweep cap before reporting non-convergence.
const CD_MAX_SWEEPS: usize = 10_000;

/// Solve `min_x x^T K x - 2 k_y^T x + lambda ||x||_1` by cyclic coordinate
/// descent. `k_yy = k(y, y)` anchors the duality-gap estimate reported on
/// non-convergence.
pub fn kernel_lasso(
    k: &DMatrix<f64>,
    k_y: &DVector<f64>,
    k_yy: f64,
    lambda: f64,
) -> Result<DVector<f64>> {
    let m = k.nrows();
    assert_eq!(k.ncols(), m, "gram matrix must be square");
    assert_eq!(k_y.len(), m, "kernel column length mismatch");

    let mut x: DVector<f64> = DVector::zeros(m);
    let mut kx: DVector<f64> = DVector::zeros(m);
    let mut prev_obj = f64::INFINITY;
    for _sweep in 0..CD_MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..m {
            let kjj = k[(j, j)];
            if kjj <= f64::EPSILON {
                // A kernel-null atom cannot reduce the residual.
                continue;
            }
            let rho = k_y[j] - (kx[j] - kjj * x[j]);
            let shrunk = rho.abs() - 0.5 * lambda;
            let new_x = if shrunk > 0.0 {
                rho.signum() * shrunk / kjj
            } else {
                0.0
            };
            let delta = new_x - x[j];
            if delta != 0.0 {
                for i in 0..m {
                    kx[i] += delta * k[(i, j)];
                }
                x[j] = new_x;
                max_delta = max_delta.max(delta.abs());
            }
        }

        let obj = x.dot(&kx) - 2.0 * x.dot(k_y) + lambda * x.iter().map(|v| v.abs()).sum::<f64>();
        debug_assert!(
            obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
            "coordinate descent objective increased: {prev_obj} -> {obj}"
        );
        prev_obj = obj;

        if max_delta < CD_TOL {
            return Ok(x);
        }
    }
    Err(Error::SparseCodingNonConvergence {
        sweeps: CD_MAX_SWEEPS,
        gap: duality_gap(k, k_y, k_yy, lambda, &x),
    })
}

/// Duality gap of the l1-penalized reconstruction at `x` (zero at the
/// optimum).
fn duality_gap(
    k: &DMatrix<f64>,
    k_y: &DVector<f64>,
    k_yy: f64,
    lambda: f64,
    x: &DVector<f64>,
) -> f64 {
    // In half-scaled form: P(w) = 0.5 ||phi_y - Phi w||^2 + alpha ||w||_1
    // with alpha = lambda / 2; a feasible dual point is the residual scaled
    // into the constraint set. Our objective is exactly 2 P - k_yy.
    let alpha = 0.5 * lambda;
    let kx = k * x;
    let res_sq = (k_yy - 2.0 * x.dot(k_y) + x.dot(&kx)).max(0.0);
    let corr = k_y - kx;
    let corr_inf = corr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let t = if alpha > 0.0 && corr_inf > alpha {
        alpha / corr_inf
    } else {
        1.0
    };
    let primal = 0.5 * res_sq + alpha * x.iter().map(|v| v.abs()).sum::<f64>();
    let inner_y_res = k_yy - x.dot(k_y);
    let dual = t * inner_y_res - 0.5 * t * t * res_sq;
    2.0 * (primal - dual)
}

/// Sparse-code each query over the dictionary and assign the class with
/// the smallest reconstruction residual; ties break to the lowest class
/// label.
pub fn src_predict(model: &SrcModel, test: &[SpdMatrix]) -> Result<Vec<String>> {
    let dim = model.dict_logs[0].dim();
    for t in test {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.dim(),
            });
        }
    }
    let class_members: Vec<(String, Vec<usize>)> = {
        let mut classes: Vec<(String, Vec<usize>)> = model
            .class_labels
            .iter()
            .map(|l| (l.clone(), Vec::new()))
            .collect();
        for (i, label) in model.labels.iter().enumerate() {
            let pos = classes
                .binary_search_by(|(l, _)| l.as_str().cmp(label))
                .expect("label seen at fit time");
            classes[pos].1.push(i);
        }
        classes
    };

    test.par_iter()
        .map(|t| {
            let log_t = t.log();
            let m = model.dict_logs.len();
            let k_y = DVector::from_fn(m, |i, _| {
                eval_from_logs(&model.spec, log_t, &model.dict_logs[i])
            });
            let k_yy = eval_from_logs(&model.spec, log_t, log_t);
            let scale = k_y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let lambda = model.lambda * scale;
            let x = kernel_lasso(&model.gram, &k_y, k_yy, lambda)?;

            let mut best: Option<(f64, usize)> = None;
            for (c, (_, members)) in class_members.iter().enumerate() {
                let mut cross = 0.0;
                let mut quad = 0.0;
                for (a, &i) in members.iter().enumerate() {
                    cross += k_y[i] * x[i];
                    for &j in &members[a..] {
                        let v = model.gram[(i, j)] * x[i] * x[j];
                        quad += if i == j { v } else { 2.0 * v };
                    }
                }
                let residual = k_yy - 2.0 * cross + quad;
                if best.map_or(true, |(r, _)| residual < r) {
                    best = Some((residual, c));
                }
            }
            Ok(class_members[best.expect("at least one class").1].0.clone())
        })
        .collect()
}

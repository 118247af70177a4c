//! The repeated random-split benchmark protocol.
//!
//! Eight method variants are compared: four classifiers (nearest neighbor
//! under AIRM and under the Log-Euclidean metric, discriminant learning,
//! kernel sparse representation), each run once on traditional descriptors
//! and once on the embedded-covariance descriptors (the `_pro` variants).
//!
//! Every trial draws `train_sets_per_class` sets per class at random, fits
//! everything trainable on the training side only -- including the Nystrom
//! landmark pool, which is sampled exclusively from training-set images --
//! and classifies the remaining sets. Accuracies aggregate to mean and
//! standard deviation over trials (population convention by default).
//!
//! All randomness flows from `Protocol::seed` through the splittable
//! generator in [`crate::rng`], so a seed pins splits, landmark draws, and
//! therefore every reported number, bit for bit. A structural leak guard
//! tags each descriptor with the set it came from and refuses to fit on
//! anything test-tagged.
//!
//! Trials are independent and could run in parallel; they run sequentially
//! here because the heavy per-set work (feature extraction, descriptor
//! logs) is shared across trials and already parallelized.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    cdl_fit, cdl_predict, nn_classify, src_fit, src_predict, LabeledDescriptors, NnMetric,
};
use crate::covd::traditional_set_covd;
use crate::descriptor::{aid_covd_from_embeddings, image_covds_with};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureSpec};
use crate::image::ImageSet;
use crate::metrics::KernelSpec;
use crate::nystrom::nystrom_fit;
use crate::rng::SplitMix64;
use crate::spd::SpdMatrix;

/// RNG stream tags (see [`SplitMix64::child`]).
const TAG_SPLIT: u64 = 0x5350_4C49_54;
const TAG_LANDMARKS: u64 = 0x4C41_4E44;

/// The eight benchmark method variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
pub enum Method {
    #[serde(rename = "NN-AIRM")]
    NnAirm,
    #[serde(rename = "NN-AIRM_pro")]
    NnAirmPro,
    #[serde(rename = "NN-LogED")]
    NnLoged,
    #[serde(rename = "NN-LogED_pro")]
    NnLogedPro,
    #[serde(rename = "CDL")]
    Cdl,
    #[serde(rename = "CDL_pro")]
    CdlPro,
    #[serde(rename = "LogEKSR")]
    Logeksr,
    #[serde(rename = "LogEKSR_pro")]
    LogeksrPro,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::NnAirm,
        Method::NnAirmPro,
        Method::NnLoged,
        Method::NnLogedPro,
        Method::Cdl,
        Method::CdlPro,
        Method::Logeksr,
        Method::LogeksrPro,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::NnAirm => "NN-AIRM",
            Method::NnAirmPro => "NN-AIRM_pro",
            Method::NnLoged => "NN-LogED",
            Method::NnLogedPro => "NN-LogED_pro",
            Method::Cdl => "CDL",
            Method::CdlPro => "CDL_pro",
            Method::Logeksr => "LogEKSR",
            Method::LogeksrPro => "LogEKSR_pro",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected one of: {}",
                    Method::ALL.map(|m| m.name()).join(", ")
                ))
            })
    }

    /// True for the variants running on embedded-covariance descriptors.
    pub fn uses_embedding(&self) -> bool {
        matches!(
            self,
            Method::NnAirmPro | Method::NnLogedPro | Method::CdlPro | Method::LogeksrPro
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Standard deviation convention for the aggregate report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StdConvention {
    /// Divide by the number of trials.
    #[default]
    #[serde(rename = "population")]
    Population,
    /// Divide by trials - 1.
    #[serde(rename = "sample")]
    Sample,
}

fn default_trials() -> usize {
    10
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Cross-validation protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub train_sets_per_class: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub std_convention: StdConvention,
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("protocol needs at least one trial".into()));
        }
        if self.train_sets_per_class == 0 {
            return Err(Error::Config(
                "protocol needs at least one training set per class".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("protocol lists no methods".into()));
        }
        Ok(())
    }
}

/// Everything beyond the protocol that the runner needs: descriptor and
/// model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub feature: FeatureSpec,
    /// Kernel for the Nystrom embedding.
    pub kernel: KernelSpec,
    /// Kernel for sparse-representation classification.
    pub src_kernel: KernelSpec,
    /// Embedding dimension D.
    pub nystrom_dim: usize,
    /// Landmark count M.
    pub nystrom_landmarks: usize,
    /// Extra seed mixed into the landmark draw stream.
    pub nystrom_seed: u64,
    /// Covariance regularization.
    pub eps: f64,
    /// Resize target (height, width) of the traditional baseline.
    pub resize: (usize, usize),
    pub cdl_ridge: f64,
    pub src_lambda: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            feature: FeatureSpec::default(),
            kernel: KernelSpec::Linear,
            src_kernel: KernelSpec::default_poly(),
            nystrom_dim: 40,
            nystrom_landmarks: 60,
            nystrom_seed: 7,
            eps: 1e-3,
            resize: (20, 20),
            cdl_ridge: 1e-3,
            src_lambda: crate::classifiers::DEFAULT_SRC_LAMBDA,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.kernel.validate()?;
        self.src_kernel.validate()?;
        if self.nystrom_dim == 0 || self.nystrom_landmarks < self.nystrom_dim {
            return Err(Error::Config(format!(
                "nystrom needs landmarks >= dim >= 1, got dim {} landmarks {}",
                self.nystrom_dim, self.nystrom_landmarks
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config("eps must be nonnegative".into()));
        }
        if self.resize.0 == 0 || self.resize.1 == 0 {
            return Err(Error::Config("resize target must be positive".into()));
        }
        if !(self.cdl_ridge >= 0.0) || !(self.src_lambda >= 0.0) {
            return Err(Error::Config(
                "classifier regularization weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregate results of one method across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub per_trial_accuracy_pct: Vec<f64>,
    pub mean_pct: f64,
    pub std_pct: f64,
}

/// Full benchmark report. Wall-clock timings are informational and live
/// outside the canonical serialized form so reports stay byte-identical
/// across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub seed: u64,
    pub config_hash: String,
    pub std_convention: StdConvention,
    pub trials: usize,
    pub per_trial_test_counts: Vec<usize>,
    pub methods: Vec<MethodResult>,
    #[serde(skip)]
    pub wall_clock_secs: BTreeMap<String, f64>,
}

impl PartialEq for EvalReport {
    /// Equality of the canonical (serialized) content; timings are not
    /// part of it.
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.seed == other.seed
            && self.config_hash == other.config_hash
            && self.std_convention == other.std_convention
            && self.trials == other.trials
            && self.per_trial_test_counts == other.per_trial_test_counts
            && self.methods == other.methods
    }
}

pub const REPORT_SCHEMA: &str = "covds-report/1";

impl EvalReport {
    /// Re-derive mean/std from the stored per-trial accuracies and check
    /// they match the stored aggregates.
    pub fn check_arithmetic(&self) -> Result<()> {
        for m in &self.methods {
            let (mean, std) = aggregate(&m.per_trial_accuracy_pct, self.std_convention);
            if (mean - m.mean_pct).abs() > 1e-9 || (std - m.std_pct).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "report arithmetic mismatch for {}: stored {} +/- {}, recomputed {} +/- {}",
                    m.method, m.mean_pct, m.std_pct, mean, std
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean_pct,std_pct");
        for t in 0..self.trials {
            out.push_str(&format!(",trial_{t}"));
        }
        out.push('\n');
        for m in &self.methods {
            out.push_str(&format!("{},{},{}", m.method, m.mean_pct, m.std_pct));
            for v in &m.per_trial_accuracy_pct {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned text table, one `mean +/- std` row per method.
    pub fn to_text_table(&self) -> String {
        let name_width = self
            .methods
            .iter()
            .map(|m| m.method.name().len())
            .max()
            .unwrap_or(6)
            .max("Method".len());
        let mut out = format!(
            "{:<name_width$}  Accuracy (%)\n{:-<name_width$}  ------------\n",
            "Method", ""
        );
        for m in &self.methods {
            out.push_str(&format!(
                "{:<name_width$}  {:.2} \u{00B1} {:.2}\n",
                m.method.name(),
                m.mean_pct,
                m.std_pct
            ));
        }
        out
    }
}

/// Serialized report formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    TextTable,
}

/// Write the report to `path` in the requested format.
pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::TextTable => report.to_text_table(),
    };
    fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn aggregate(values: &[f64], convention: StdConvention) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match convention {
        StdConvention::Population => n,
        StdConvention::Sample => (n - 1.0).max(1.0),
    };
    (mean, (ss / denom).sqrt())
}

/// Structural no-leakage check: descriptors are tagged with their origin
/// set; anything reaching a fit operation must come from a training set.
pub(crate) struct LeakGuard {
    train_sets: BTreeSet<usize>,
}

impl LeakGuard {
    pub(crate) fn new(train_sets: BTreeSet<usize>) -> Self {
        LeakGuard { train_sets }
    }

    pub(crate) fn check_fit_input(
        &self,
        origins: impl IntoIterator<Item = usize>,
        what: &str,
    ) -> Result<()> {
        for origin in origins {
            if !self.train_sets.contains(&origin) {
                return Err(Error::Leakage(format!(
                    "{what} received a descriptor from test set {origin}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-image covariance descriptors for every set, parallelized across
/// sets. This is the split-independent half of the embedded-covariance
/// pipeline, shared by all trials.
pub fn compute_image_covds(
    data: &[ImageSet],
    config: &EvalConfig,
) -> Result<Vec<Vec<SpdMatrix>>> {
    let extractor = FeatureExtractor::new(&config.feature)?;
    data.par_iter()
        .map(|set| image_covds_with(&extractor, set, config.eps))
        .collect()
}

/// Traditional baseline descriptors for every set, parallelized.
pub fn compute_traditional(data: &[ImageSet], config: &EvalConfig) -> Result<Vec<SpdMatrix>> {
    data.par_iter()
        .map(|set| traditional_set_covd(set, config.resize, config.eps))
        .collect()
}

/// Run the full protocol over `data` and aggregate a report.
///
/// `config_hash` is stamped into the report for provenance (pass an empty
/// string when not driving this from a config file).
pub fn run_protocol(
    data: &[ImageSet],
    protocol: &Protocol,
    config: &EvalConfig,
    config_hash: &str,
) -> Result<EvalReport> {
    protocol.validate()?;
    config.validate()?;
    let needs_embedding = protocol.methods.iter().any(Method::uses_embedding);
    let needs_traditional = protocol.methods.iter().any(|m| !m.uses_embedding());
    let per_image_covds = if needs_embedding {
        Some(compute_image_covds(data, config)?)
    } else {
        None
    };
    let traditional = if needs_traditional {
        Some(compute_traditional(data, config)?)
    } else {
        None
    };
    let labels: Vec<String> = data.iter().map(|s| s.label.clone()).collect();
    run_protocol_with_descriptors(
        &labels,
        per_image_covds.as_deref(),
        traditional.as_deref(),
        protocol,
        config,
        config_hash,
    )
}

/// [`run_protocol`] over descriptors that were computed (or loaded from a
/// cache) up front. `labels[i]` is the class of set `i`; the descriptor
/// slices are indexed the same way and must be present for the method
/// families that consume them.
pub fn run_protocol_with_descriptors(
    labels: &[String],
    per_image_covds: Option<&[Vec<SpdMatrix>]>,
    traditional: Option<&[SpdMatrix]>,
    protocol: &Protocol,
    config: &EvalConfig,
    config_hash: &str,
) -> Result<EvalReport> {
    protocol.validate()?;
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("dataset has no sets"));
    }

    // Classes sorted by label; sets listed in dataset order.
    let mut classes: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match classes.binary_search_by(|(l, _)| l.as_str().cmp(label)) {
            Ok(pos) => classes[pos].1.push(i),
            Err(pos) => classes.insert(pos, (label.clone(), vec![i])),
        }
    }
    for (label, sets) in &classes {
        if sets.len() <= protocol.train_sets_per_class {
            return Err(Error::Config(format!(
                "class {label:?} has {} sets; needs more than train_sets_per_class = {}",
                sets.len(),
                protocol.train_sets_per_class
            )));
        }
    }

    let needs_embedding = protocol.methods.iter().any(Method::uses_embedding);
    let needs_traditional = protocol.methods.iter().any(|m| !m.uses_embedding());

    let per_image_covds: &[Vec<SpdMatrix>] = if needs_embedding {
        let covds = per_image_covds.ok_or_else(|| {
            Error::InvalidSpec("embedded-covariance methods need per-image descriptors".into())
        })?;
        if covds.len() != labels.len() {
            return Err(Error::InvalidSpec(
                "per-image descriptor list does not match the set count".into(),
            ));
        }
        // Warm the log caches now; landmark clones inherit them and every
        // trial reuses them.
        covds.par_iter().for_each(|set_covds| {
            for c in set_covds {
                c.log();
            }
        });
        covds
    } else {
        &[]
    };
    let traditional: &[SpdMatrix] = if needs_traditional {
        let descs = traditional.ok_or_else(|| {
            Error::InvalidSpec("traditional methods need baseline descriptors".into())
        })?;
        if descs.len() != labels.len() {
            return Err(Error::InvalidSpec(
                "baseline descriptor list does not match the set count".into(),
            ));
        }
        let needs_logs = protocol
            .methods
            .iter()
            .any(|m| matches!(m, Method::NnLoged | Method::Cdl | Method::Logeksr));
        if needs_logs {
            descs.par_iter().for_each(|d| {
                d.log();
            });
        }
        descs
    } else {
        &[]
    };

    let data = labels;
    let root_rng = SplitMix64::new(protocol.seed);
    let mut per_method_acc: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut wall_clock: BTreeMap<String, f64> = BTreeMap::new();
    let mut per_trial_test_counts = Vec::with_capacity(protocol.trials);

    for trial in 0..protocol.trials {
        let mut split_rng = root_rng.child(TAG_SPLIT).child(trial as u64);
        let mut train_ids: BTreeSet<usize> = BTreeSet::new();
        for (_, sets) in &classes {
            for pick in split_rng.choose(sets.len(), protocol.train_sets_per_class) {
                train_ids.insert(sets[pick]);
            }
        }
        let test_ids: Vec<usize> =
            (0..data.len()).filter(|i| !train_ids.contains(i)).collect();
        let guard = LeakGuard::new(train_ids.clone());

        // Embedded-covariance descriptors for this trial's model.
        let aid_descriptors: Vec<SpdMatrix> = if needs_embedding {
            let pool: Vec<(usize, &SpdMatrix)> = train_ids
                .iter()
                .flat_map(|&sid| per_image_covds[sid].iter().map(move |c| (sid, c)))
                .collect();
            guard.check_fit_input(pool.iter().map(|(sid, _)| *sid), "nystrom landmark pool")?;
            if pool.len() < config.nystrom_landmarks {
                return Err(Error::Config(format!(
                    "trial {trial}: training pool has {} per-image descriptors, fewer than \
                     the {} requested landmarks",
                    pool.len(),
                    config.nystrom_landmarks
                )));
            }
            let mut landmark_rng = root_rng
                .child(TAG_LANDMARKS)
                .child(config.nystrom_seed)
                .child(trial as u64);
            let landmarks: Vec<SpdMatrix> = landmark_rng
                .choose(pool.len(), config.nystrom_landmarks)
                .into_iter()
                .map(|i| pool[i].1.clone())
                .collect();
            let model = nystrom_fit(&landmarks, &config.kernel, config.nystrom_dim)
                .map_err(|e| trial_error(trial, protocol.seed, "nystrom fit", e))?;

            data.par_iter()
                .enumerate()
                .map(|(sid, label)| {
                    let covds = &per_image_covds[sid];
                    let mut z = DMatrix::zeros(model.embedding_dim(), covds.len());
                    for (i, c) in covds.iter().enumerate() {
                        z.set_column(i, &model.embed_log(c.log()));
                    }
                    Ok(aid_covd_from_embeddings(label.clone(), &z, config.eps)?.matrix)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };

        per_trial_test_counts.push(test_ids.len());

        for &method in &protocol.methods {
            let started = Instant::now();
            let source: &[SpdMatrix] = if method.uses_embedding() {
                &aid_descriptors
            } else {
                &traditional
            };

            guard.check_fit_input(train_ids.iter().copied(), method.name())?;
            let train = LabeledDescriptors::new(
                train_ids.iter().map(|&i| source[i].clone()).collect(),
                train_ids.iter().map(|&i| data[i].clone()).collect(),
            )
            .map_err(|e| trial_error(trial, protocol.seed, method.name(), e))?;
            let test: Vec<SpdMatrix> = test_ids.iter().map(|&i| source[i].clone()).collect();
            let truth: Vec<&str> = test_ids.iter().map(|&i| data[i].as_str()).collect();

            let predicted = run_method(method, &train, &test, config)
                .map_err(|e| trial_error(trial, protocol.seed, method.name(), e))?;

            let correct = predicted
                .iter()
                .zip(&truth)
                .filter(|(p, t)| p.as_str() == **t)
                .count();
            let accuracy = 100.0 * correct as f64 / test.len() as f64;
            per_method_acc.entry(method).or_default().push(accuracy);
            *wall_clock.entry(method.name().to_string()).or_insert(0.0) +=
                started.elapsed().as_secs_f64();
        }
    }

    let methods = protocol
        .methods
        .iter()
        .map(|m| {
            let per_trial = per_method_acc.remove(m).unwrap_or_default();
            let (mean_pct, std_pct) = aggregate(&per_trial, protocol.std_convention);
            MethodResult {
                method: *m,
                per_trial_accuracy_pct: per_trial,
                mean_pct,
                std_pct,
            }
        })
        .collect();

    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        seed: protocol.seed,
        config_hash: config_hash.to_string(),
        std_convention: protocol.std_convention,
        trials: protocol.trials,
        per_trial_test_counts,
        methods,
        wall_clock_secs: wall_clock,
    })
}

fn trial_error(trial: usize, seed: u64, method: &str, source: Error) -> Error {
    Error::Trial {
        trial,
        seed,
        method: method.to_string(),
        source: Box::new(source),
    }
}

fn run_method(
    method: Method,
    train: &LabeledDescriptors,
    test: &[SpdMatrix],
    config: &EvalConfig,
) -> Result<Vec<String>> {
    match method {
        Method::NnAirm | Method::NnAirmPro => nn_classify(train, test, NnMetric::Airm),
        Method::NnLoged | Method::NnLogedPro => nn_classify(train, test, NnMetric::LogEuclidean),
        Method::Cdl | Method::CdlPro => {
            let model = cdl_fit(train, config.cdl_ridge)?;
            cdl_predict(&model, test)
        }
        Method::Logeksr | Method::LogeksrPro => {
            let model = src_fit(train, &config.src_kernel, config.src_lambda)?;
            src_predict(&model, test)
        }
    }
}

//! Command implementations behind the `covds` binary.
//!
//! Commands: `init` (write a default config), `synth` (emit a synthetic
//! dataset), `extract` (populate the descriptor cache), `eval` (run the
//! benchmark protocol and write reports), `selftest` (run the embedded
//! invariant suite). Every command takes the JSON config as the single
//! source of truth; flags override individual keys.
//!
//! Exit codes: 0 success, 1 computation failure, 2 configuration or I/O
//! failure.

use std::path::{Path, PathBuf};

use clap::Args;

use crate::cache::{DescriptorCache, Provenance};
use crate::config::Config;
use crate::dataset::{load_dataset_entries, synth_dataset, write_image_sets, DatasetEntry};
use crate::descriptor::image_covds_with;
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, run_protocol_with_descriptors, EvalReport, Method, ReportFormat, StdConvention,
};
use crate::features::{FeatureExtractor, FeatureKind};
use crate::metrics::KernelSpec;
use crate::rng::RngAlgorithm;
use crate::selftest::{run_selftest, PropertyResult};
use crate::spd::SpdMatrix;

/// Per-key config overrides, one flag per config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Protocol seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of cross-validation trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Training sets drawn per class and trial.
    #[arg(long)]
    pub train_sets_per_class: Option<usize>,
    /// Comma-separated method names (e.g. NN-LogED,CDL_pro).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Standard deviation convention: population or sample.
    #[arg(long)]
    pub std_convention: Option<String>,
    /// Worker thread cap.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Covariance regularization.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Nystrom embedding dimension D.
    #[arg(long)]
    pub nystrom_dim: Option<usize>,
    /// Nystrom landmark count M.
    #[arg(long)]
    pub nystrom_landmarks: Option<usize>,
    /// Nystrom landmark draw seed.
    #[arg(long)]
    pub nystrom_seed: Option<u64>,
    /// Traditional resize target, e.g. 20x20.
    #[arg(long)]
    pub resize: Option<String>,
    /// Dataset root directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Descriptor cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Report output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Feature kind: GABOR, GRADIENT or GABOR_PLUS_GRADIENT.
    #[arg(long)]
    pub feature_kind: Option<String>,
    /// Gabor scales.
    #[arg(long)]
    pub scales: Option<usize>,
    /// Gabor orientations.
    #[arg(long)]
    pub orientations: Option<usize>,
    /// Pixel sampling stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Embedding kernel kind: LOGE_LINEAR, LOGE_POLY, LOGE_EXP, LOGE_GAUSS.
    #[arg(long)]
    pub kernel_kind: Option<String>,
    /// Gaussian kernel bandwidth.
    #[arg(long)]
    pub kernel_bandwidth: Option<f64>,
    /// Polynomial kernel degree.
    #[arg(long)]
    pub kernel_degree: Option<u32>,
    /// Discriminant-learning ridge.
    #[arg(long)]
    pub cdl_ridge: Option<f64>,
    /// Sparse-representation lambda multiplier.
    #[arg(long)]
    pub src_lambda: Option<f64>,
    /// Generator algorithm name.
    #[arg(long)]
    pub rng: Option<String>,
}

fn parse_resize(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let parse = |p: &str| {
        p.parse::<usize>()
            .map_err(|_| Error::Config(format!("invalid resize {s:?}; expected HxW")))
    };
    match parts.as_slice() {
        [h, w] => Ok((parse(h)?, parse(w)?)),
        _ => Err(Error::Config(format!("invalid resize {s:?}; expected HxW"))),
    }
}

fn parse_kernel_kind(name: &str, current: &KernelSpec) -> Result<KernelSpec> {
    let (degree, coeffs, bandwidth) = match current {
        KernelSpec::Poly { degree, coeffs } | KernelSpec::Exp { degree, coeffs } => {
            (*degree, coeffs.clone(), 1.0)
        }
        KernelSpec::Gauss { bandwidth } => (2, vec![1.0], *bandwidth),
        KernelSpec::Linear => (2, vec![1.0], 1.0),
    };
    match name {
        "LOGE_LINEAR" => Ok(KernelSpec::Linear),
        "LOGE_POLY" => Ok(KernelSpec::Poly { degree, coeffs }),
        "LOGE_EXP" => Ok(KernelSpec::Exp { degree, coeffs }),
        "LOGE_GAUSS" => Ok(KernelSpec::Gauss { bandwidth }),
        other => Err(Error::Config(format!("unknown kernel kind {other:?}"))),
    }
}

impl Overrides {
    /// Apply each present flag onto its config key.
    pub fn apply(&self, config: &mut Config) -> Result<()> {
        if let Some(v) = self.seed {
            config.protocol.seed = v;
        }
        if let Some(v) = self.trials {
            config.protocol.trials = v;
        }
        if let Some(v) = self.train_sets_per_class {
            config.protocol.train_sets_per_class = v;
        }
        if let Some(names) = &self.methods {
            config.protocol.methods = names
                .iter()
                .map(|n| Method::parse(n))
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(v) = &self.std_convention {
            config.protocol.std_convention = match v.as_str() {
                "population" => StdConvention::Population,
                "sample" => StdConvention::Sample,
                other => {
                    return Err(Error::Config(format!(
                        "unknown std convention {other:?}; expected population or sample"
                    )))
                }
            };
        }
        if let Some(v) = self.jobs {
            config.jobs = Some(v);
        }
        if let Some(v) = self.eps {
            config.eps = v;
        }
        if let Some(v) = self.nystrom_dim {
            config.nystrom.dim = v;
        }
        if let Some(v) = self.nystrom_landmarks {
            config.nystrom.landmarks = v;
        }
        if let Some(v) = self.nystrom_seed {
            config.nystrom.seed = v;
        }
        if let Some(v) = &self.resize {
            config.resize = parse_resize(v)?;
        }
        if let Some(v) = &self.dataset {
            config.paths.dataset = v.clone();
        }
        if let Some(v) = &self.cache_dir {
            config.paths.cache = v.clone();
        }
        if let Some(v) = &self.out_dir {
            config.paths.out = v.clone();
        }
        if let Some(v) = &self.feature_kind {
            config.feature.kind = match v.as_str() {
                "GABOR" => FeatureKind::Gabor,
                "GRADIENT" => FeatureKind::Gradient,
                "GABOR_PLUS_GRADIENT" => FeatureKind::GaborPlusGradient,
                other => return Err(Error::Config(format!("unknown feature kind {other:?}"))),
            };
        }
        if let Some(v) = self.scales {
            config.feature.scales = v;
        }
        if let Some(v) = self.orientations {
            config.feature.orientations = v;
        }
        if let Some(v) = self.stride {
            config.feature.stride = Some(v);
        }
        if let Some(v) = &self.kernel_kind {
            config.kernel = parse_kernel_kind(v, &config.kernel)?;
        }
        if let Some(v) = self.kernel_bandwidth {
            if let KernelSpec::Gauss { bandwidth } = &mut config.kernel {
                *bandwidth = v;
            } else {
                return Err(Error::Config(
                    "kernel bandwidth applies to LOGE_GAUSS only".into(),
                ));
            }
        }
        if let Some(v) = self.kernel_degree {
            match &mut config.kernel {
                KernelSpec::Poly { degree, .. } | KernelSpec::Exp { degree, .. } => *degree = v,
                _ => {
                    return Err(Error::Config(
                        "kernel degree applies to LOGE_POLY and LOGE_EXP only".into(),
                    ))
                }
            }
        }
        if let Some(v) = self.cdl_ridge {
            config.cdl_ridge = v;
        }
        if let Some(v) = self.src_lambda {
            config.src_lambda = v;
        }
        if let Some(v) = &self.rng {
            config.rng = RngAlgorithm::parse(v)?;
        }
        Ok(())
    }
}

/// Configure the global worker pool. Safe to call more than once; later
/// calls are ignored by rayon.
pub fn init_worker_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Write the default config file.
pub fn cmd_init(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists (use --force to overwrite)",
            path.display()
        )));
    }
    Config::default().save(path)
}

/// Summary of a `synth` run.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub classes: usize,
    pub sets: usize,
    pub images: usize,
}

/// Generate the configured synthetic dataset and write it to disk.
pub fn cmd_synth(config: &Config, out: Option<&Path>) -> Result<SynthSummary> {
    config.validate()?;
    let sets = synth_dataset(&config.synth)?;
    let root = out.unwrap_or(&config.paths.dataset);
    write_image_sets(root, &sets)?;
    Ok(SynthSummary {
        root: root.to_path_buf(),
        classes: config.synth.classes,
        sets: sets.len(),
        images: sets.iter().map(|s| s.len()).sum(),
    })
}

/// Summary of an `extract` run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub sets: usize,
    pub computed: usize,
    pub cache_hits: usize,
}

fn provenance_for(config: &Config, entry: &DatasetEntry) -> Provenance {
    Provenance {
        dataset_root: config.paths.dataset.display().to_string(),
        class: entry.class.clone(),
        set_name: entry.set_name.clone(),
        descriptor_hash: config.descriptor_hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Populate the descriptor cache: per-image descriptors and the
/// traditional baseline descriptor for every set.
pub fn cmd_extract(config: &Config) -> Result<ExtractSummary> {
    config.validate()?;
    let entries = load_dataset_entries(&config.paths.dataset)?;
    let cache = DescriptorCache::open(&config.paths.cache, &config.descriptor_hash())?;
    let extractor = FeatureExtractor::new(&config.feature)?;

    let mut computed = 0;
    let mut cache_hits = 0;
    for entry in &entries {
        let provenance = provenance_for(config, entry);
        if cache
            .load_image_covds(&entry.class, entry.index_in_class)?
            .is_some()
        {
            cache_hits += 1;
        } else {
            let covds = image_covds_with(&extractor, &entry.set, config.eps)?;
            cache.store_image_covds(&entry.class, entry.index_in_class, &covds, &provenance)?;
            computed += 1;
        }
        if cache
            .load_traditional(&entry.class, entry.index_in_class)?
            .is_some()
        {
            cache_hits += 1;
        } else {
            let desc =
                crate::covd::traditional_set_covd(&entry.set, config.resize, config.eps)?;
            cache.store_traditional(&entry.class, entry.index_in_class, &desc, &provenance)?;
            computed += 1;
        }
    }
    Ok(ExtractSummary {
        sets: entries.len(),
        computed,
        cache_hits,
    })
}

/// Files written by `eval`.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub json_path: PathBuf,
    pub table_path: PathBuf,
    pub csv_path: PathBuf,
    pub timing_path: PathBuf,
}

/// Run the configured protocol, using the descriptor cache, and write the
/// report files (JSON, CSV, text table, plus a timing sidecar).
pub fn cmd_eval(config: &Config) -> Result<EvalOutput> {
    config.validate()?;
    let entries = load_dataset_entries(&config.paths.dataset)?;
    let cache = DescriptorCache::open(&config.paths.cache, &config.descriptor_hash())?;
    let extractor = FeatureExtractor::new(&config.feature)?;

    let needs_embedding = config.protocol.methods.iter().any(Method::uses_embedding);
    let needs_traditional = config.protocol.methods.iter().any(|m| !m.uses_embedding());

    let labels: Vec<String> = entries.iter().map(|e| e.class.clone()).collect();
    let per_image_covds: Option<Vec<Vec<SpdMatrix>>> = if needs_embedding {
        let mut all = Vec::with_capacity(entries.len());
        for entry in &entries {
            let covds = match cache.load_image_covds(&entry.class, entry.index_in_class)? {
                Some(covds) => covds,
                None => {
                    let covds = image_covds_with(&extractor, &entry.set, config.eps)?;
                    cache.store_image_covds(
                        &entry.class,
                        entry.index_in_class,
                        &covds,
                        &provenance_for(config, entry),
                    )?;
                    covds
                }
            };
            all.push(covds);
        }
        Some(all)
    } else {
        None
    };
    let traditional: Option<Vec<SpdMatrix>> = if needs_traditional {
        let mut all = Vec::with_capacity(entries.len());
        for entry in &entries {
            let desc = match cache.load_traditional(&entry.class, entry.index_in_class)? {
                Some(desc) => desc,
                None => {
                    let desc = crate::covd::traditional_set_covd(
                        &entry.set,
                        config.resize,
                        config.eps,
                    )?;
                    cache.store_traditional(
                        &entry.class,
                        entry.index_in_class,
                        &desc,
                        &provenance_for(config, entry),
                    )?;
                    desc
                }
            };
            all.push(desc);
        }
        Some(all)
    } else {
        None
    };

    let report = run_protocol_with_descriptors(
        &labels,
        per_image_covds.as_deref(),
        traditional.as_deref(),
        &config.protocol,
        &config.eval_config(),
        &config.hash(),
    )?;

    let out_dir = &config.paths.out;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let json_path = out_dir.join("report.json");
    let table_path = out_dir.join("report.txt");
    let csv_path = out_dir.join("report.csv");
    let timing_path = out_dir.join("report.timing.json");
    emit_report(&report, ReportFormat::Json, &json_path)?;
    emit_report(&report, ReportFormat::TextTable, &table_path)?;
    emit_report(&report, ReportFormat::Csv, &csv_path)?;
    let timing = serde_json::to_string_pretty(&report.wall_clock_secs)?;
    std::fs::write(&timing_path, timing)
        .map_err(|e| Error::io(timing_path.display().to_string(), e))?;

    Ok(EvalOutput {
        report,
        json_path,
        table_path,
        csv_path,
        timing_path,
    })
}

/// Run the embedded invariant suite.
pub fn cmd_selftest(seed: u64) -> (Vec<PropertyResult>, bool) {
    let results = run_selftest(seed);
    let all_passed = results.iter().all(|r| r.passed);
    (results, all_passed)
}

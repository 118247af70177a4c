//! The JSON configuration file driving the CLI.
//!
//! One file holds every knob: feature extraction, kernels, Nystrom
//! dimensions, the evaluation protocol, the synthetic-data generator, and
//! paths. `covds init` writes the full defaults; command-line flags
//! override individual keys one-to-one. Reproducibility then rests on a
//! single artifact: the same config file always produces the same report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, Protocol};
use crate::features::FeatureSpec;
use crate::metrics::KernelSpec;
use crate::rng::RngAlgorithm;

/// Nystrom model sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromConfig {
    /// Target embedding dimension D.
    pub dim: usize,
    /// Landmark count M (drawn from the training pool).
    pub landmarks: usize,
    /// Extra seed mixed into the landmark draw stream.
    #[serde(default = "default_nystrom_seed")]
    pub seed: u64,
}

fn default_nystrom_seed() -> u64 {
    7
}

impl Default for NystromConfig {
    fn default() -> Self {
        NystromConfig {
            dim: 40,
            landmarks: 60,
            seed: default_nystrom_seed(),
        }
    }
}

/// Input/output locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub dataset: PathBuf,
    pub cache: PathBuf,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: PathBuf::from("dataset"),
            cache: PathBuf::from("cache"),
            out: PathBuf::from("out"),
        }
    }
}

fn default_eps() -> f64 {
    1e-3
}
fn default_resize() -> (usize, usize) {
    (20, 20)
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_src_lambda() -> f64 {
    crate::classifiers::DEFAULT_SRC_LAMBDA
}
fn default_kernel() -> KernelSpec {
    KernelSpec::Linear
}
fn default_src_kernel() -> KernelSpec {
    KernelSpec::default_poly()
}
fn default_protocol() -> Protocol {
    Protocol {
        trials: 10,
        train_sets_per_class: 2,
        seed: 42,
        methods: crate::eval::Method::ALL.to_vec(),
        std_convention: Default::default(),
    }
}

/// Default synthetic benchmark: 4 classes x 10 sets x 15 images of 32x32
/// pixels with moderate noise.
fn default_synth() -> SyntheticSpec {
    SyntheticSpec {
        classes: 4,
        sets_per_class: 10,
        images_per_set: 15,
        image_size: 32,
        texture_frequency_separation: 1.0,
        noise_level: 0.12,
        seed: 2024,
    }
}

/// Full CLI configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub feature: FeatureSpec,
    /// Kernel of the Nystrom embedding.
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    /// Kernel of the sparse-representation classifier.
    #[serde(default = "default_src_kernel")]
    pub src_kernel: KernelSpec,
    #[serde(default)]
    pub nystrom: NystromConfig,
    /// Covariance regularization.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Traditional-baseline resize target (height, width).
    #[serde(default = "default_resize")]
    pub resize: (usize, usize),
    #[serde(default = "default_ridge")]
    pub cdl_ridge: f64,
    #[serde(default = "default_src_lambda")]
    pub src_lambda: f64,
    /// Named generator algorithm.
    #[serde(default)]
    pub rng: RngAlgorithm,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// Parameters for `covds synth`.
    #[serde(default = "default_synth")]
    pub synth: SyntheticSpec,
    #[serde(default)]
    pub paths: Paths,
    /// Worker thread cap; `null` uses the available parallelism.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            feature: FeatureSpec::default(),
            kernel: default_kernel(),
            src_kernel: default_src_kernel(),
            nystrom: NystromConfig::default(),
            eps: default_eps(),
            resize: default_resize(),
            cdl_ridge: default_ridge(),
            src_lambda: default_src_lambda(),
            rng: RngAlgorithm::default(),
            protocol: default_protocol(),
            synth: default_synth(),
            paths: Paths::default(),
            jobs: None,
        }
    }
}

impl Config {
    /// Validate every module precondition reachable from the config before
    /// any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.eval_config().validate()?;
        self.protocol.validate()?;
        self.synth.validate()?;
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// The subset the protocol runner consumes.
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            feature: self.feature.clone(),
            kernel: self.kernel.clone(),
            src_kernel: self.src_kernel.clone(),
            nystrom_dim: self.nystrom.dim,
            nystrom_landmarks: self.nystrom.landmarks,
            nystrom_seed: self.nystrom.seed,
            eps: self.eps,
            resize: self.resize,
            cdl_ridge: self.cdl_ridge,
            src_lambda: self.src_lambda,
        }
    }

    pub fn load(path: &Path) -> Result<Config> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: Config = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Hash of the full canonical config (report provenance).
    pub fn hash(&self) -> String {
        hash_of(self)
    }

    /// Hash of just the descriptor-relevant settings (cache key): feature
    /// spec, regularization, resize, plus the dataset identity (path and
    /// the synthetic-generator parameters). Editing dataset files in place
    /// without changing the config requires clearing the cache directory.
    pub fn descriptor_hash(&self) -> String {
        #[derive(Serialize)]
        struct DescriptorKey<'a> {
            feature: &'a FeatureSpec,
            eps: f64,
            resize: (usize, usize),
            dataset: String,
            synth: &'a SyntheticSpec,
        }
        hash_of(&DescriptorKey {
            feature: &self.feature,
            eps: self.eps,
            resize: self.resize,
            dataset: self.paths.dataset.display().to_string(),
            synth: &self.synth,
        })
    }
}

fn hash_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_roundtrips() {
        let config = Config::default();
        config.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("covds.json");
        config.save(&path).unwrap();
        let back = Config::load(&path).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn hash_changes_with_descriptor_settings_only() {
        let base = Config::default();
        let mut eps_changed = base.clone();
        eps_changed.eps = 2e-3;
        assert_ne!(base.descriptor_hash(), eps_changed.descriptor_hash());

        let mut seed_changed = base.clone();
        seed_changed.protocol.seed = 99;
        // Protocol settings do not invalidate cached descriptors.
        assert_eq!(base.descriptor_hash(), seed_changed.descriptor_hash());
        assert_ne!(base.hash(), seed_changed.hash());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut config = Config::default();
        config.eps = -1.0;
        assert!(config.validate().is_err());

        let mut config = Config::default();
        config.nystrom.dim = 0;
        assert!(config.validate().is_err());

        let mut config = Config::default();
        config.jobs = Some(0);
        assert!(config.validate().is_err());
    }

    #[test]
    fn partial_config_files_fill_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.json");
        std::fs::write(
            &path,
            r#"{"protocol": {"train_sets_per_class": 3, "seed": 5}}"#,
        )
        .unwrap();
        let config = Config::load(&path).unwrap();
        assert_eq!(config.protocol.trials, 10);
        assert_eq!(config.protocol.train_sets_per_class, 3);
        assert_eq!(config.nystrom.dim, 40);
        assert_eq!(config.resize, (20, 20));
    }

    #[test]
    fn unknown_rng_name_is_rejected_in_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"rng": "xorshift", "protocol": {"train_sets_per_class": 1, "seed": 1}}"#,
        )
        .unwrap();
        assert!(Config::load(&path).is_err());
    }
}

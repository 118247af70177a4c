//! Descriptor cache with provenance sidecars.
//!
//! Feature extraction dominates repeated evaluations, so per-set artifacts
//! are cached on disk, keyed by `(dataset, class, set index, artifact kind,
//! config hash)`. The hash covers exactly the settings a descriptor depends
//! on (feature spec, regularization, resize target); changing any of them
//! switches to a fresh cache directory. Every data file gets a `.meta.json`
//! sidecar recording where it came from.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

const IMAGE_COVDS_SCHEMA: &str = "covds-image-covds/1";
const TRADITIONAL_SCHEMA: &str = "covds-traditional/1";

/// Provenance recorded next to each cached artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_root: String,
    pub class: String,
    pub set_name: String,
    pub descriptor_hash: String,
    pub tool_version: String,
}

/// A cache directory bound to one descriptor-config hash.
#[derive(Debug, Clone)]
pub struct DescriptorCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct StoredCovds {
    schema: String,
    dim: usize,
    count: usize,
    /// Concatenated column-major matrices.
    matrices: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredTraditional {
    schema: String,
    dim: usize,
    matrix: Vec<f64>,
}

impl DescriptorCache {
    /// Open (creating if needed) the cache directory for `descriptor_hash`
    /// under `cache_root`.
    pub fn open(cache_root: &Path, descriptor_hash: &str) -> Result<Self> {
        let dir = cache_root.join(format!("desc-{descriptor_hash}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(DescriptorCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn stem(&self, class: &str, set_idx: usize, kind: &str) -> PathBuf {
        self.dir.join(format!("{class}__{set_idx:04}.{kind}.json"))
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let body = serde_json::to_string(value)?;
        fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<Option<T>> {
        match fs::read(path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path.display().to_string(), e)),
        }
    }

    /// Cached per-image descriptors for one set, if present.
    pub fn load_image_covds(&self, class: &str, set_idx: usize) -> Result<Option<Vec<SpdMatrix>>> {
        let path = self.stem(class, set_idx, "covds");
        let Some(stored): Option<StoredCovds> = self.read_json(&path)? else {
            return Ok(None);
        };
        if stored.schema != IMAGE_COVDS_SCHEMA
            || stored.matrices.len() != stored.count * stored.dim * stored.dim
        {
            return Err(Error::InvalidSpec(format!(
                "corrupt cache file {}",
                path.display()
            )));
        }
        let n = stored.dim;
        (0..stored.count)
            .map(|i| {
                SpdMatrix::new(DMatrix::from_column_slice(
                    n,
                    n,
                    &stored.matrices[i * n * n..(i + 1) * n * n],
                ))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Store per-image descriptors for one set, with provenance.
    pub fn store_image_covds(
        &self,
        class: &str,
        set_idx: usize,
        covds: &[SpdMatrix],
        provenance: &Provenance,
    ) -> Result<()> {
        let dim = covds.first().map_or(0, |c| c.dim());
        let stored = StoredCovds {
            schema: IMAGE_COVDS_SCHEMA.to_string(),
            dim,
            count: covds.len(),
            matrices: covds
                .iter()
                .flat_map(|c| c.data().iter().copied())
                .collect(),
        };
        let path = self.stem(class, set_idx, "covds");
        self.write_json(&path, &stored)?;
        self.write_json(&path.with_extension("meta.json"), provenance)
    }

    /// Cached traditional descriptor for one set, if present.
    pub fn load_traditional(&self, class: &str, set_idx: usize) -> Result<Option<SpdMatrix>> {
        let path = self.stem(class, set_idx, "trad");
        let Some(stored): Option<StoredTraditional> = self.read_json(&path)? else {
            return Ok(None);
        };
        if stored.schema != TRADITIONAL_SCHEMA || stored.matrix.len() != stored.dim * stored.dim {
            return Err(Error::InvalidSpec(format!(
                "corrupt cache file {}",
                path.display()
            )));
        }
        let n = stored.dim;
        SpdMatrix::new(DMatrix::from_column_slice(n, n, &stored.matrix)).map(Some)
    }

    /// Store one traditional descriptor, with provenance.
    pub fn store_traditional(
        &self,
        class: &str,
        set_idx: usize,
        descriptor: &SpdMatrix,
        provenance: &Provenance,
    ) -> Result<()> {
        let stored = StoredTraditional {
            schema: TRADITIONAL_SCHEMA.to_string(),
            dim: descriptor.dim(),
            matrix: descriptor.data().iter().copied().collect(),
        };
        let path = self.stem(class, set_idx, "trad");
        self.write_json(&path, &stored)?;
        self.write_json(&path.with_extension("meta.json"), provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_spd;
    use crate::rng::SplitMix64;

    fn provenance() -> Provenance {
        Provenance {
            dataset_root: "ds".into(),
            class: "a".into(),
            set_name: "set_000".into(),
            descriptor_hash: "cafebabe".into(),
            tool_version: "test".into(),
        }
    }

    #[test]
    fn image_covds_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptorCache::open(dir.path(), "cafebabe").unwrap();
        let mut rng = SplitMix64::new(1);
        let covds: Vec<SpdMatrix> = (0..3).map(|_| random_spd(&mut rng, 4, (0.2, 5.0))).collect();
        assert!(cache.load_image_covds("a", 0).unwrap().is_none());
        cache.store_image_covds("a", 0, &covds, &provenance()).unwrap();
        let loaded = cache.load_image_covds("a", 0).unwrap().unwrap();
        assert_eq!(loaded.len(), 3);
        for (x, y) in loaded.iter().zip(&covds) {
            assert_eq!(x.data(), y.data());
        }
        // Sidecar exists and parses.
        let meta: Provenance = serde_json::from_slice(
            &std::fs::read(cache.dir().join("a__0000.covds.meta.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta, provenance());
    }

    #[test]
    fn traditional_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptorCache::open(dir.path(), "deadbeef").unwrap();
        let mut rng = SplitMix64::new(2);
        let d = random_spd(&mut rng, 6, (0.2, 5.0));
        cache.store_traditional("b", 3, &d, &provenance()).unwrap();
        let loaded = cache.load_traditional("b", 3).unwrap().unwrap();
        assert_eq!(loaded.data(), d.data());
        assert!(cache.load_traditional("b", 4).unwrap().is_none());
    }

    #[test]
    fn distinct_hashes_use_distinct_directories() {
        let dir = tempfile::tempdir().unwrap();
        let a = DescriptorCache::open(dir.path(), "aaaa").unwrap();
        let b = DescriptorCache::open(dir.path(), "bbbb").unwrap();
        assert_ne!(a.dir(), b.dir());
    }

    #[test]
    fn corrupt_cache_is_an_error_not_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DescriptorCache::open(dir.path(), "cc").unwrap();
        std::fs::write(
            cache.dir().join("a__0000.trad.json"),
            r#"{"schema":"covds-traditional/1","dim":2,"matrix":[1.0]}"#,
        )
        .unwrap();
        assert!(cache.load_traditional("a", 0).is_err());
    }
}

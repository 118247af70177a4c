//! Dataset ingestion and synthetic dataset generation.
//!
//! On-disk datasets follow the `dataset/class/set/image` layout described
//! in [`crate::image`]; traversal is lexicographic at every level, so load
//! order (and therefore every seeded split) is stable across runs and
//! platforms.
//!
//! The synthetic generator is a desk-scale stand-in for real benchmarks:
//! class `c` renders oriented sinusoidal textures at a class-specific
//! frequency and orientation, each set perturbs phase and orientation (a
//! crude stand-in for viewpoint change), images within a set sweep the
//! phase, and Gaussian pixel noise is added on top. Everything derives from
//! one seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, write_pgm, GrayImage, ImageSet};
use crate::rng::SplitMix64;

/// One set loaded from disk, with enough naming to key caches.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    /// Class directory name (= label).
    pub class: String,
    /// Set directory name.
    pub set_name: String,
    /// Position of this set within its class (load order).
    pub index_in_class: usize,
    pub set: ImageSet,
}

fn sorted_dirs(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs = Vec::new();
    let entries =
        fs::read_dir(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Load a `dataset/class/set/image` tree, one [`DatasetEntry`] per set
/// directory, in lexicographic order.
pub fn load_dataset_entries(root: &Path) -> Result<Vec<DatasetEntry>> {
    let class_dirs = sorted_dirs(root)?;
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    let mut entries = Vec::new();
    for class_dir in class_dirs {
        let class = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let set_dirs = sorted_dirs(&class_dir)?;
        if set_dirs.is_empty() {
            return Err(Error::Dataset(format!(
                "class {:?} has no set directories",
                class
            )));
        }
        for (index_in_class, set_dir) in set_dirs.into_iter().enumerate() {
            let set_name = set_dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let mut files = Vec::new();
            let dir_entries =
                fs::read_dir(&set_dir).map_err(|e| Error::io(set_dir.display().to_string(), e))?;
            for entry in dir_entries {
                let entry = entry.map_err(|e| Error::io(set_dir.display().to_string(), e))?;
                let path = entry.path();
                let ext = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(|e| e.to_ascii_lowercase());
                if path.is_file() && matches!(ext.as_deref(), Some("pgm") | Some("png")) {
                    files.push(path);
                }
            }
            files.sort();
            if files.is_empty() {
                return Err(Error::Dataset(format!(
                    "set {:?} of class {:?} contains no images",
                    set_name, class
                )));
            }
            let mut images = Vec::with_capacity(files.len());
            for file in files {
                let img = load_image(&file)?;
                if let Some(first) = images.first() {
                    let first: &GrayImage = first;
                    if img.height() != first.height() || img.width() != first.width() {
                        return Err(Error::Dataset(format!(
                            "mixed image sizes within set {:?} of class {:?} ({})",
                            set_name,
                            class,
                            file.display()
                        )));
                    }
                }
                images.push(img);
            }
            entries.push(DatasetEntry {
                class: class.clone(),
                set_name,
                index_in_class,
                set: ImageSet::new(class.clone(), images)?,
            });
        }
    }
    Ok(entries)
}

/// Load a dataset as plain image sets (labels come from the class
/// directory names).
pub fn load_dataset(root: &Path) -> Result<Vec<ImageSet>> {
    Ok(load_dataset_entries(root)?
        .into_iter()
        .map(|e| e.set)
        .collect())
}

/// Parameters of the synthetic texture benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub sets_per_class: usize,
    pub images_per_set: usize,
    /// Images are square, `image_size` pixels per side.
    pub image_size: usize,
    /// Spacing between class frequencies, as a fraction of the base
    /// frequency; larger separates classes further.
    pub texture_frequency_separation: f64,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0
            || self.sets_per_class == 0
            || self.images_per_set == 0
            || self.image_size == 0
        {
            return Err(Error::InvalidSpec(
                "synthetic dataset counts must be positive".into(),
            ));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::InvalidSpec(
                "noise level must be nonnegative".into(),
            ));
        }
        if !(self.texture_frequency_separation >= 0.0) {
            return Err(Error::InvalidSpec(
                "frequency separation must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Base spatial frequency of class 0, cycles per pixel.
const SYNTH_BASE_FREQ: f64 = 0.06;
/// Frequency ceiling; higher frequencies alias badly under the resize of
/// the traditional baseline.
const SYNTH_MAX_FREQ: f64 = 0.30;
/// Per-set orientation jitter bound, radians.
const SYNTH_ORIENTATION_JITTER: f64 = 0.06;
/// Orientation sweep across the images of one set, radians.
const SYNTH_VIEW_SWEEP: f64 = 0.5;
/// Texture contrast (standard deviation of the clean texture).
const SYNTH_CONTRAST: f64 = 0.16;

/// Oriented band-limited texture: a white-noise field correlated with a
/// unit-energy Gabor kernel (circular convolution). The field plays the
/// role of the object identity; the kernel orientation plays the view.
fn oriented_filter(
    field: &nalgebra::DMatrix<f64>,
    freq: f64,
    theta: f64,
) -> nalgebra::DMatrix<f64> {
    let size = field.nrows();
    let wavelength = 1.0 / freq;
    let sigma = 0.56 * wavelength;
    let radius = ((2.5 * sigma).ceil() as usize).min(size / 2 - 1) as isize;
    let (sin_t, cos_t) = theta.sin_cos();
    let ksize = (2 * radius + 1) as usize;
    let mut kernel = nalgebra::DMatrix::zeros(ksize, ksize);
    let mut energy = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let env = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let phase = std::f64::consts::TAU * freq * (dx as f64 * cos_t + dy as f64 * sin_t);
            let v = env * phase.cos();
            kernel[((dy + radius) as usize, (dx + radius) as usize)] = v;
            energy += v * v;
        }
    }
    let scale = 1.0 / energy.sqrt();
    nalgebra::DMatrix::from_fn(size, size, |r, c| {
        let mut acc = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let rr = (r as isize + dy).rem_euclid(size as isize) as usize;
                let cc = (c as isize + dx).rem_euclid(size as isize) as usize;
                acc += field[(rr, cc)] * kernel[((dy + radius) as usize, (dx + radius) as usize)];
            }
        }
        acc * scale
    })
}

/// Generate the synthetic dataset described by `spec`; the same seed
/// always produces identical pixels.
///
/// Class `c` renders band-limited noise textures at a class-specific
/// frequency and orientation. Each set jitters the orientation and gain
/// (viewpoint-like), the images of a set sweep the orientation through a
/// small arc (views), and `noise_level` adds white measurement noise.
pub fn synth_dataset(spec: &SyntheticSpec) -> Result<Vec<ImageSet>> {
    spec.validate()?;
    let root = SplitMix64::new(spec.seed);
    let size = spec.image_size;
    let mut sets = Vec::with_capacity(spec.classes * spec.sets_per_class);
    for c in 0..spec.classes {
        let label = format!("class_{c:02}");
        let freq = (SYNTH_BASE_FREQ
            * (1.0 + spec.texture_frequency_separation * c as f64))
            .min(SYNTH_MAX_FREQ);
        let base_theta = std::f64::consts::PI * c as f64 / spec.classes as f64;
        for s in 0..spec.sets_per_class {
            let mut rng = root.child((c * spec.sets_per_class + s) as u64 + 1);
            let set_theta =
                base_theta + SYNTH_ORIENTATION_JITTER * (2.0 * rng.next_f64() - 1.0);
            let set_gain = 0.85 + 0.3 * rng.next_f64();
            // One noise field per set: the images of a set are views of a
            // single underlying object, not independent draws.
            let field = nalgebra::DMatrix::from_fn(size, size, |_, _| rng.next_normal());
            let mut images = Vec::with_capacity(spec.images_per_set);
            for i in 0..spec.images_per_set {
                let view = if spec.images_per_set > 1 {
                    i as f64 / (spec.images_per_set - 1) as f64 - 0.5
                } else {
                    0.0
                };
                let theta = set_theta + SYNTH_VIEW_SWEEP * view;
                let texture = oriented_filter(&field, freq, theta);
                let img = GrayImage::from_fn(size, size, |r, col| {
                    let clean = 0.5 + SYNTH_CONTRAST * set_gain * texture[(r, col)];
                    (clean + spec.noise_level * rng.next_normal()).clamp(0.0, 1.0)
                })?;
                images.push(img);
            }
            sets.push(ImageSet::new(label.clone(), images)?);
        }
    }
    Ok(sets)
}

/// Write image sets to disk in the `class/set/image` layout (binary PGM).
/// Set directories are numbered per class in input order.
pub fn write_image_sets(root: &Path, sets: &[ImageSet]) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    let mut per_class_counter: std::collections::BTreeMap<&str, usize> =
        std::collections::BTreeMap::new();
    for set in sets {
        let idx = per_class_counter.entry(set.label.as_str()).or_insert(0);
        let dir = root.join(&set.label).join(format!("set_{:03}", *idx));
        *idx += 1;
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for (i, img) in set.images.iter().enumerate() {
            write_pgm(&dir.join(format!("img_{i:03}.pgm")), img)?;
        }
    }
    Ok(())
}

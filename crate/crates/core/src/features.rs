//! Per-pixel feature extraction: Gabor magnitude bank and gradient features.
//!
//! A feature matrix holds one column of descriptors per sampled pixel. The
//! Gabor bank uses complex kernels
//!
//! ```text
//! g(dx, dy) = exp(-(dx^2 + dy^2) / (2 sigma^2))), exp(i 2 pi x' / lambda)
//! ```
//!
//! with `x' = dx cos(theta) + dy sin(theta)`, wavelengths in geometric
//! progression (default base 4 px, ratio sqrt 2), `sigma = 0.56 lambda`, and
//! orientations uniform in `[0, pi)`. The real part is shifted to zero mean
//! and both parts are scaled by the envelope sum, then the per-pixel
//! response is the complex magnitude of a replicated-border correlation.
//! Zero-mean kernels make the magnitudes invariant to intensity negation.
//!
//! Gradient features are the classic region-covariance quintuple
//! `(x/width, y/height, I, |dI/dx|, |dI/dy|)` with central differences and
//! replicated borders.
//!
//! A stride subsamples the pixel grid to bound the column count; by default
//! it is 1, or 2 when a full-resolution scan would exceed 10,000 pixels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Number of gradient feature rows.
pub const GRADIENT_ROWS: usize = 5;

/// Pixel-count threshold above which the automatic stride switches to 2.
pub const AUTO_STRIDE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "GABOR")]
    Gabor,
    #[serde(rename = "GRADIENT")]
    Gradient,
    #[serde(rename = "GABOR_PLUS_GRADIENT")]
    GaborPlusGradient,
}

/// Configuration of the per-pixel feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    #[serde(default = "default_scales")]
    pub scales: usize,
    #[serde(default = "default_orientations")]
    pub orientations: usize,
    /// Wavelength of the finest scale, in pixels.
    #[serde(default = "default_base_wavelength")]
    pub base_wavelength: f64,
    /// Geometric ratio between consecutive wavelengths.
    #[serde(default = "default_wavelength_ratio")]
    pub wavelength_ratio: f64,
    /// Gaussian envelope width as a fraction of the wavelength.
    #[serde(default = "default_sigma_ratio")]
    pub sigma_ratio: f64,
    /// Pixel sampling stride; `None` selects automatically.
    #[serde(default)]
    pub stride: Option<usize>,
}

fn default_scales() -> usize {
    5
}
fn default_orientations() -> usize {
    8
}
fn default_base_wavelength() -> f64 {
    4.0
}
fn default_wavelength_ratio() -> f64 {
    std::f64::consts::SQRT_2
}
fn default_sigma_ratio() -> f64 {
    0.56
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            kind: FeatureKind::GaborPlusGradient,
            scales: default_scales(),
            orientations: default_orientations(),
            base_wavelength: default_base_wavelength(),
            wavelength_ratio: default_wavelength_ratio(),
            sigma_ratio: default_sigma_ratio(),
            stride: None,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind != FeatureKind::Gradient && self.scales * self.orientations < 1 {
            return Err(Error::InvalidSpec(
                "gabor bank needs scales * orientations >= 1".into(),
            ));
        }
        if !(self.base_wavelength > 0.0) || !(self.wavelength_ratio >= 1.0) {
            return Err(Error::InvalidSpec(
                "wavelengths must be positive and nondecreasing across scales".into(),
            ));
        }
        if !(self.sigma_ratio > 0.0) {
            return Err(Error::InvalidSpec("sigma ratio must be positive".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::InvalidSpec("stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Feature rows produced per pixel.
    pub fn feature_dim(&self) -> usize {
        match self.kind {
            FeatureKind::Gabor => self.scales * self.orientations,
            FeatureKind::Gradient => GRADIENT_ROWS,
            FeatureKind::GaborPlusGradient => self.scales * self.orientations + GRADIENT_ROWS,
        }
    }

    /// Largest wavelength in the bank; images narrower than this cannot
    /// support the coarsest filter.
    pub fn max_wavelength(&self) -> f64 {
        self.base_wavelength * self.wavelength_ratio.powi(self.scales as i32 - 1)
    }

    fn stride_for(&self, height: usize, width: usize) -> usize {
        self.stride
            .unwrap_or(if height * width > AUTO_STRIDE_LIMIT { 2 } else { 1 })
    }
}

/// d x p matrix of per-pixel feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::EmptyInput("feature matrix must have columns"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(
                "feature matrix entries must be finite".into(),
            ));
        }
        Ok(FeatureMatrix { data })
    }

    /// Feature dimension (rows).
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Sample count (columns).
    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// One complex Gabor kernel, zero-mean and envelope-normalized.
pub(crate) struct GaborKernel {
    radius: isize,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl GaborKernel {
    pub(crate) fn new(wavelength: f64, sigma: f64, theta: f64) -> Self {
        let radius = (3.0 * sigma).ceil() as isize;
        let size = (2 * radius + 1) as usize;
        let (sin_t, cos_t) = theta.sin_cos();
        let mut re = DMatrix::zeros(size, size);
        let mut im = DMatrix::zeros(size, size);
        let mut env_sum = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let env = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                let phase = std::f64::consts::TAU * (dx as f64 * cos_t + dy as f64 * sin_t)
                    / wavelength;
                let (r, c) = ((dy + radius) as usize, (dx + radius) as usize);
                re[(r, c)] = env * phase.cos();
                im[(r, c)] = env * phase.sin();
                env_sum += env;
            }
        }
        // Zero mean (the imaginary part is odd-symmetric already, the mean
        // subtraction only mops up roundoff) and envelope normalization.
        let n = (size * size) as f64;
        let re_mean = re.sum() / n;
        let im_mean = im.sum() / n;
        re.apply(|v| *v = (*v - re_mean) / env_sum);
        im.apply(|v| *v = (*v - im_mean) / env_sum);
        GaborKernel { radius, re, im }
    }

    /// Magnitude of the replicated-border correlation at one pixel.
    pub(crate) fn magnitude_at(&self, img: &GrayImage, row: usize, col: usize) -> f64 {
        let mut acc_re = 0.0;
        let mut acc_im = 0.0;
        for dy in -self.radius..=self.radius {
            for dx in -self.radius..=self.radius {
                let v = img.at_clamped(row as isize + dy, col as isize + dx);
                let (r, c) = ((dy + self.radius) as usize, (dx + self.radius) as usize);
                acc_re += v * self.re[(r, c)];
                acc_im += v * self.im[(r, c)];
            }
        }
        (acc_re * acc_re + acc_im * acc_im).sqrt()
    }
}

/// A validated feature extractor with its Gabor bank prebuilt, reusable
/// across all images of a dataset.
pub struct FeatureExtractor {
    spec: FeatureSpec,
    bank: Vec<GaborKernel>,
}

impl FeatureExtractor {
    pub fn new(spec: &FeatureSpec) -> Result<Self> {
        spec.validate()?;
        let mut bank = Vec::new();
        if spec.kind != FeatureKind::Gradient {
            for s in 0..spec.scales {
                let wavelength = spec.base_wavelength * spec.wavelength_ratio.powi(s as i32);
                let sigma = spec.sigma_ratio * wavelength;
                for o in 0..spec.orientations {
                    let theta = std::f64::consts::PI * o as f64 / spec.orientations as f64;
                    bank.push(GaborKernel::new(wavelength, sigma, theta));
                }
            }
        }
        Ok(FeatureExtractor {
            spec: spec.clone(),
            bank,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim()
    }

    /// Extract the feature matrix for one image.
    pub fn extract(&self, img: &GrayImage) -> Result<FeatureMatrix> {
        let (h, w) = (img.height(), img.width());
        if self.spec.kind != FeatureKind::Gradient {
            let support = self.spec.max_wavelength();
            if (h.min(w) as f64) < support {
                return Err(Error::InvalidSpec(format!(
                    "image {h}x{w} is smaller than the largest filter support \
                     ({support:.1} px); reduce scales or enlarge the image"
                )));
            }
        }

        let stride = self.spec.stride_for(h, w);
        let rows: Vec<usize> = (0..h).step_by(stride).collect();
        let cols: Vec<usize> = (0..w).step_by(stride).collect();
        let p = rows.len() * cols.len();
        let d = self.feature_dim();
        let mut data = DMatrix::zeros(d, p);

        let grad = self.spec.kind != FeatureKind::Gabor;
        let gabor_rows = self.bank.len();
        let mut col_idx = 0;
        for &r in &rows {
            for &c in &cols {
                for (k, kernel) in self.bank.iter().enumerate() {
                    data[(k, col_idx)] = kernel.magnitude_at(img, r, c);
                }
                if grad {
                    let base = gabor_rows;
                    let dx = 0.5
                        * (img.at_clamped(r as isize, c as isize + 1)
                            - img.at_clamped(r as isize, c as isize - 1));
                    let dy = 0.5
                        * (img.at_clamped(r as isize + 1, c as isize)
                            - img.at_clamped(r as isize - 1, c as isize));
                    data[(base, col_idx)] = c as f64 / w as f64;
                    data[(base + 1, col_idx)] = r as f64 / h as f64;
                    data[(base + 2, col_idx)] = img.pixels()[(r, c)];
                    data[(base + 3, col_idx)] = dx.abs();
                    data[(base + 4, col_idx)] = dy.abs();
                }
                col_idx += 1;
            }
        }
        FeatureMatrix::new(data)
    }
}

/// Gabor magnitude features (plus gradient rows when the spec asks for
/// them); one column per sampled pixel.
pub fn gabor_features(img: &GrayImage, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if spec.kind == FeatureKind::Gradient {
        return Err(Error::InvalidSpec(
            "gabor_features requires a spec whose kind involves GABOR".into(),
        ));
    }
    FeatureExtractor::new(spec)?.extract(img)
}

/// The gradient feature quintuple for every sampled pixel.
pub fn gradient_features(img: &GrayImage) -> Result<FeatureMatrix> {
    let spec = FeatureSpec {
        kind: FeatureKind::Gradient,
        ..FeatureSpec::default()
    };
    FeatureExtractor::new(&spec)?.extract(img)
}

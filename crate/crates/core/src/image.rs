//! Grayscale images, image sets, and file ingestion.
//!
//! Pixels are stored as f64 in `[0, 1]`. Supported file formats are binary
//! and ASCII PGM (P5/P2) and 8-bit grayscale PNG. A dataset on disk is a
//! directory of class directories of set directories:
//!
//! ```text
//! dataset/
//!   cars/            class (label = directory name)
//!     set_00/        one image set
//!       000.pgm
//!       001.pgm
//!     set_01/
//!   cups/
//!     ...
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum image side length; smaller images cannot support the feature
/// filters.
pub const MIN_IMAGE_SIDE: usize = 8;

/// A grayscale image with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: DMatrix<f64>,
}

impl GrayImage {
    /// Wrap a pixel matrix (rows = height, columns = width).
    pub fn new(pixels: DMatrix<f64>) -> Result<Self> {
        let (h, w) = (pixels.nrows(), pixels.ncols());
        if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
            return Err(Error::InvalidSpec(format!(
                "image {h}x{w} is smaller than the minimum {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidSpec(
                "pixel values must be finite and in [0, 1]".into(),
            ));
        }
        Ok(GrayImage { pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        GrayImage::new(DMatrix::from_fn(height, width, f))
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }

    /// Pixel with the row index clamped to the image (replicated border).
    pub(crate) fn at_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height() as isize - 1) as usize;
        let c = col.clamp(0, self.width() as isize - 1) as usize;
        self.pixels[(r, c)]
    }

    /// Bilinear resize with corner-aligned sampling: output corner pixels
    /// sample input corner pixels exactly.
    pub fn resize(&self, height: usize, width: usize) -> DMatrix<f64> {
        assert!(height >= 1 && width >= 1, "resize target must be positive");
        let (h, w) = (self.height(), self.width());
        let row_scale = if height > 1 {
            (h - 1) as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let col_scale = if width > 1 {
            (w - 1) as f64 / (width - 1) as f64
        } else {
            0.0
        };
        DMatrix::from_fn(height, width, |r, c| {
            let y = r as f64 * row_scale;
            let x = c as f64 * col_scale;
            let y0 = y.floor() as usize;
            let x0 = x.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fy = y - y0 as f64;
            let fx = x - x0 as f64;
            let top = self.pixels[(y0, x0)] * (1.0 - fx) + self.pixels[(y0, x1)] * fx;
            let bottom = self.pixels[(y1, x0)] * (1.0 - fx) + self.pixels[(y1, x1)] * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }

    /// Resize and flatten column-major into a vector of length
    /// `height * width`.
    pub fn resize_vectorized(&self, height: usize, width: usize) -> DVector<f64> {
        let resized = self.resize(height, width);
        DVector::from_column_slice(resized.as_slice())
    }
}

/// An ordered collection of images sharing one label.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub label: String,
    pub images: Vec<GrayImage>,
}

impl ImageSet {
    pub fn new(label: impl Into<String>, images: Vec<GrayImage>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("image set must contain images"));
        }
        Ok(ImageSet {
            label: label.into(),
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn image_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Load one image file (PGM P2/P5 or 8-bit grayscale PNG).
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => load_pgm(path),
        "png" => load_png(path),
        other => Err(image_err(
            path,
            format!("unsupported image extension {other:?} (expected pgm or png)"),
        )),
    }
}

fn load_png(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| image_err(path, e.to_string()))?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(image_err(
                path,
                format!("expected 8-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = gray.dimensions();
    let pixels = DMatrix::from_fn(h as usize, w as usize, |r, c| {
        gray.get_pixel(c as u32, r as u32)[0] as f64 / 255.0
    });
    GrayImage::new(pixels).map_err(|e| image_err(path, e.to_string()))
}

fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_pgm(&bytes).map_err(|reason| image_err(path, reason))
}

/// Read the next whitespace-delimited token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(bytes[start..*pos].to_vec())
}

fn parse_usize(token: Option<Vec<u8>>, what: &str) -> std::result::Result<usize, String> {
    let t = token.ok_or_else(|| format!("missing {what}"))?;
    std::str::from_utf8(&t)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("invalid {what}"))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or("empty file")?;
    let binary = match magic.as_slice() {
        b"P5" => true,
        b"P2" => false,
        _ => return Err("not a PGM file (expected P2 or P5 magic)".into()),
    };
    let width = parse_usize(next_token(bytes, &mut pos), "width")?;
    let height = parse_usize(next_token(bytes, &mut pos), "height")?;
    let maxval = parse_usize(next_token(bytes, &mut pos), "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let scale = 1.0 / maxval as f64;
    let count = width * height;
    let mut pixels = DMatrix::zeros(height, width);

    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        if bytes.len() < pos + needed {
            return Err("truncated raster".into());
        }
        for i in 0..count {
            let v = if wide {
                u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as f64
            } else {
                bytes[pos + i] as f64
            };
            pixels[(i / width, i % width)] = v * scale;
        }
    } else {
        for i in 0..count {
            let v = parse_usize(next_token(bytes, &mut pos), "pixel")?;
            if v > maxval {
                return Err(format!("pixel {v} exceeds maxval {maxval}"));
            }
            pixels[(i / width, i % width)] = v as f64 * scale;
        }
    }
    GrayImage::new(pixels).map_err(|e| e.to_string())
}

/// Write a binary (P5) 8-bit PGM.
pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for r in 0..h {
        for c in 0..w {
            out.push((image.pixels()[(r, c)] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

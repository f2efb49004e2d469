//! Raster and annotation types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel floating-point raster, row-major.
///
/// Decoded and normalized images hold intensities in `[0, 1]`. Mean-subtracted
/// residuals (neural path only) are allowed to go negative, so the constructor
/// only enforces finiteness; use [`GrayImage::is_unit_range`] where the
/// stronger contract matters.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {pos}")));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite pixel at ({x}, {y})");
                data.push(v);
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel access with coordinates clamped to the border (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_dims(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }
}

/// Interleaved multi-channel raster as handed over by a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

impl std::str::FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Eye::Left),
            "right" | "r" => Ok(Eye::Right),
            other => Err(Error::invalid(format!("unknown eye {other:?}"))),
        }
    }
}

impl std::fmt::Display for Eye {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Eye::Left => "left",
            Eye::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Circle {
    pub fn new(x: f64, y: f64, radius: f64) -> Self {
        Circle { x, y, radius }
    }
}

/// Manual ground truth for one periocular image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeAnnotation {
    pub subject_id: String,
    pub eye: Eye,
    pub session: u32,
    pub distance_m: f64,
    pub sclera: Circle,
    pub iris: Circle,
}

impl EyeAnnotation {
    /// Checks the annotation invariants, optionally against image bounds.
    pub fn validate(&self, bounds: Option<(usize, usize)>) -> Result<()> {
        if self.session < 1 {
            return Err(Error::invalid("session must be >= 1"));
        }
        for (name, c) in [("sclera", &self.sclera), ("iris", &self.iris)] {
            if !(c.x.is_finite() && c.y.is_finite() && c.radius.is_finite()) {
                return Err(Error::invalid(format!("{name} circle is not finite")));
            }
            if c.radius <= 0.0 {
                return Err(Error::invalid(format!("{name} radius must be positive")));
            }
        }
        if self.sclera.radius <= self.iris.radius {
            return Err(Error::invalid(format!(
                "sclera radius {} must exceed iris radius {}",
                self.sclera.radius, self.iris.radius
            )));
        }
        if let Some((w, h)) = bounds {
            for (name, c) in [("sclera", &self.sclera), ("iris", &self.iris)] {
                if c.x < 0.0 || c.y < 0.0 || c.x > (w - 1) as f64 || c.y > (h - 1) as f64 {
                    return Err(Error::invalid(format!(
                        "{name} center ({}, {}) outside {w}x{h} image",
                        c.x, c.y
                    )));
                }
            }
        }
        Ok(())
    }
}

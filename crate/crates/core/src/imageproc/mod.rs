//! Geometric and photometric normalization of annotated periocular images.
//!
//! The classical pipeline is `to_grayscale -> normalize_and_crop -> clahe ->
//! mask_iris`. The neural path additionally resizes to the network input and
//! subtracts the dataset mean image.

mod clahe;
mod resize;

pub use clahe::{clahe, ClaheParams};
pub use resize::{resize_bicubic, source_coordinate};

use crate::error::{Error, Result};
use crate::image::{EyeAnnotation, GrayImage, Raster};

/// Side of the square ROI, in units of the (normalized) sclera radius.
pub const ROI_SCLERA_FACTOR: f64 = 7.6;

/// ITU-R BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(rgb: &Raster) -> Result<GrayImage> {
    if rgb.channels != 3 {
        return Err(Error::invalid(format!(
            "expected 3 channels, got {}",
            rgb.channels
        )));
    }
    if rgb.data.len() != rgb.width * rgb.height * 3 {
        return Err(Error::invalid(
            "raster data length does not match dimensions",
        ));
    }
    let data = rgb
        .data
        .chunks_exact(3)
        .map(|px| (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(rgb.width, rgb.height, data)
}

/// Maps original image coordinates into ROI pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiTransform {
    /// Actual per-axis resize ratios (rounded output size / input size).
    pub scale_x: f64,
    pub scale_y: f64,
    /// Top-left corner of the crop in the rescaled image.
    pub origin_x: isize,
    pub origin_y: isize,
}

impl RoiTransform {
    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x + 0.5) * self.scale_x - 0.5 - self.origin_x as f64,
            (y + 0.5) * self.scale_y - 0.5 - self.origin_y as f64,
        )
    }
}

/// Square, sclera-normalized region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiImage {
    image: GrayImage,
    scale_factor: f64,
    transform: RoiTransform,
}

impl RoiImage {
    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn into_image(self) -> GrayImage {
        self.image
    }

    pub fn side(&self) -> usize {
        self.image.width()
    }

    /// Ratio `target_radius / sclera_radius` used for the rescale.
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn transform(&self) -> &RoiTransform {
        &self.transform
    }

    /// Replaces the pixels, keeping the geometry. The new image must have the
    /// same square dimensions.
    pub fn with_image(&self, image: GrayImage) -> Result<RoiImage> {
        if !image.same_dims(&self.image) {
            return Err(Error::invalid("replacement image changes ROI dimensions"));
        }
        Ok(RoiImage {
            image,
            scale_factor: self.scale_factor,
            transform: self.transform,
        })
    }
}

pub fn roi_side(target_radius: f64) -> usize {
    ((ROI_SCLERA_FACTOR * target_radius).round() as usize).max(1)
}

/// Rescales `img` so that the annotated sclera radius becomes
/// `target_radius`, then cuts the `round(7.6 * target_radius)` square centered
/// on the rescaled sclera center. Pixels outside the image replicate the
/// nearest edge.
pub fn normalize_and_crop(
    img: &GrayImage,
    ann: &EyeAnnotation,
    target_radius: f64,
) -> Result<RoiImage> {
    if !(target_radius.is_finite() && target_radius > 0.0) {
        return Err(Error::invalid(format!(
            "target radius must be positive, got {target_radius}"
        )));
    }
    ann.validate(Some((img.width(), img.height())))?;

    let scale_factor = target_radius / ann.sclera.radius;
    let new_w = ((img.width() as f64 * scale_factor).round() as usize).max(1);
    let new_h = ((img.height() as f64 * scale_factor).round() as usize).max(1);
    let scale_x = new_w as f64 / img.width() as f64;
    let scale_y = new_h as f64 / img.height() as f64;

    let side = roi_side(target_radius);
    let cx = (ann.sclera.x + 0.5) * scale_x - 0.5;
    let cy = (ann.sclera.y + 0.5) * scale_y - 0.5;
    let half = (side as f64 - 1.0) / 2.0;
    let origin_x = (cx - half).round() as isize;
    let origin_y = (cy - half).round() as isize;

    // Rows/columns of the rescaled image covered by the crop, clamped for
    // edge replication.
    let cols: Vec<usize> = (0..side)
        .map(|i| (origin_x + i as isize).clamp(0, new_w as isize - 1) as usize)
        .collect();
    let rows: Vec<usize> = (0..side)
        .map(|j| (origin_y + j as isize).clamp(0, new_h as isize - 1) as usize)
        .collect();

    let image = if new_w == img.width() && new_h == img.height() {
        GrayImage::from_fn(side, side, |i, j| img.get(cols[i], rows[j]))
    } else {
        let xs: Vec<f64> = cols
            .iter()
            .map(|&c| source_coordinate(c, img.width(), new_w))
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|&r| source_coordinate(r, img.height(), new_h))
            .collect();
        resize::sample_grid(img, &xs, &ys)
    };

    Ok(RoiImage {
        image,
        scale_factor,
        transform: RoiTransform {
            scale_x,
            scale_y,
            origin_x,
            origin_y,
        },
    })
}

/// Zeroes every ROI pixel whose center lies inside the annotated iris circle,
/// mapped through the ROI transform.
pub fn mask_iris(roi: &RoiImage, ann: &EyeAnnotation) -> RoiImage {
    let (cx, cy) = roi.transform.map_point(ann.iris.x, ann.iris.y);
    let r = ann.iris.radius * roi.scale_factor;
    let r2 = r * r;
    let mut image = roi.image.clone();
    let side = image.width() as isize;
    let x_lo = ((cx - r).floor() as isize).max(0);
    let x_hi = ((cx + r).ceil() as isize).min(side - 1);
    let y_lo = ((cy - r).floor() as isize).max(0);
    let y_hi = ((cy + r).ceil() as isize).min(image.height() as isize - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r2 {
                image.set(x as usize, y as usize, 0.0);
            }
        }
    }
    RoiImage {
        image,
        scale_factor: roi.scale_factor,
        transform: roi.transform,
    }
}

/// Subtracts the pixel-wise mean image from every input and returns the
/// residuals together with the mean. Residuals are not clamped.
pub fn mean_subtract(imgs: &[GrayImage]) -> Result<(Vec<GrayImage>, GrayImage)> {
    let first = imgs
        .first()
        .ok_or_else(|| Error::invalid("mean subtraction needs at least one image"))?;
    if let Some(bad) = imgs.iter().position(|im| !im.same_dims(first)) {
        return Err(Error::invalid(format!(
            "image {bad} is {}x{}, expected {}x{}",
            imgs[bad].width(),
            imgs[bad].height(),
            first.width(),
            first.height()
        )));
    }
    let n = imgs.len() as f64;
    let mut sum = vec![0.0; first.data().len()];
    for im in imgs {
        for (acc, v) in sum.iter_mut().zip(im.data()) {
            *acc += v;
        }
    }
    let mean = GrayImage::new(
        first.width(),
        first.height(),
        sum.into_iter().map(|s| s / n).collect(),
    )?;
    let residuals = imgs
        .iter()
        .map(|im| subtract(im, &mean))
        .collect::<Result<_>>()?;
    Ok((residuals, mean))
}

/// Pixel-wise `img - mean`; dimensions must agree.
pub fn subtract(img: &GrayImage, mean: &GrayImage) -> Result<GrayImage> {
    if !img.same_dims(mean) {
        return Err(Error::invalid("mean image dimensions differ from input"));
    }
    GrayImage::new(
        img.width(),
        img.height(),
        img.data()
            .iter()
            .zip(mean.data())
            .map(|(a, m)| a - m)
            .collect(),
    )
}

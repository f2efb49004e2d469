//! Image decoding and the binary mean-image format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Raster};

/// Decodes a PNG or JPEG file into an RGB raster with channel values in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Raster> {
    let img = image::open(path)?;
    Ok(raster_from_dynamic(&img))
}

pub fn decode_rgb(bytes: &[u8]) -> Result<Raster> {
    let img = image::load_from_memory(bytes)?;
    Ok(raster_from_dynamic(&img))
}

fn raster_from_dynamic(img: &image::DynamicImage) -> Raster {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Raster {
        width: w as usize,
        height: h as usize,
        channels: 3,
        data: rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
    }
}

/// Writes a `[0, 1]` image as 8-bit grayscale PNG (values are clamped).
pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer size matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Mean image file: `u32 width, u32 height` (little-endian) followed by
/// row-major little-endian `f32` pixels.
pub fn encode_mean(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * img.data().len());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_mean(mut bytes: &[u8]) -> Result<GrayImage> {
    let mut word = [0u8; 4];
    let mut read_u32 = |b: &mut &[u8]| -> Result<u32> {
        b.read_exact(&mut word)
            .map_err(|_| Error::Format("mean image header truncated".into()))?;
        Ok(u32::from_le_bytes(word))
    };
    let w = read_u32(&mut bytes)? as usize;
    let h = read_u32(&mut bytes)? as usize;
    if bytes.len() != w * h * 4 {
        return Err(Error::Format(format!(
            "mean image payload is {} bytes, expected {}",
            bytes.len(),
            w * h * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    GrayImage::new(w, h, data)
}

pub fn write_mean(img: &GrayImage, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_mean(img))?;
    Ok(())
}

pub fn read_mean(path: &Path) -> Result<GrayImage> {
    decode_mean(&fs::read(path)?)
}

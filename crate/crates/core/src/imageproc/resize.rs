use crate::error::{Error, Result};
use crate::image::GrayImage;

const CUBIC_A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel.
#[inline]
fn cubic(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Source-space coordinate of output sample `dst` when resampling an axis of
/// length `src_len` to `dst_len` (pixel-center alignment).
#[inline]
pub fn source_coordinate(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * (src_len as f64 / dst_len as f64) - 0.5
}

struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn taps(pos: f64, len: usize) -> Taps {
    let base = pos.floor();
    let t = pos - base;
    let base = base as isize;
    let last = len as isize - 1;
    let mut index = [0usize; 4];
    let mut weight = [0.0; 4];
    for k in 0..4 {
        let off = k as isize - 1;
        index[k] = (base + off).clamp(0, last) as usize;
        weight[k] = cubic(t - off as f64);
    }
    Taps { index, weight }
}

/// Separable bicubic sampling at arbitrary source coordinates, one per output
/// column (`xs`) and row (`ys`). Output is clamped to `[0, 1]`.
pub(crate) fn sample_grid(img: &GrayImage, xs: &[f64], ys: &[f64]) -> GrayImage {
    let col_taps: Vec<Taps> = xs.iter().map(|&x| taps(x, img.width())).collect();
    let row_taps: Vec<Taps> = ys.iter().map(|&y| taps(y, img.height())).collect();

    // Horizontal pass over the source rows the vertical pass will touch.
    let mut needed = vec![false; img.height()];
    for t in &row_taps {
        for &i in &t.index {
            needed[i] = true;
        }
    }
    let out_w = xs.len();
    let mut horiz = vec![0.0; out_w * img.height()];
    for (y, _) in needed.iter().enumerate().filter(|(_, &n)| n) {
        let row = &img.data()[y * img.width()..(y + 1) * img.width()];
        let dst = &mut horiz[y * out_w..(y + 1) * out_w];
        for (d, t) in dst.iter_mut().zip(&col_taps) {
            *d = (0..4).map(|k| t.weight[k] * row[t.index[k]]).sum();
        }
    }

    let mut data = Vec::with_capacity(out_w * ys.len());
    for t in &row_taps {
        for x in 0..out_w {
            let v: f64 = (0..4)
                .map(|k| t.weight[k] * horiz[t.index[k] * out_w + x])
                .sum();
            data.push(v.clamp(0.0, 1.0));
        }
    }
    GrayImage::new(out_w, ys.len(), data).expect("bicubic output is finite")
}

/// Bicubic (Catmull-Rom, a = -0.5) resize with edge-clamped taps.
pub fn resize_bicubic(img: &GrayImage, target_w: usize, target_h: usize) -> Result<GrayImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::invalid(format!(
            "resize target must be non-empty, got {target_w}x{target_h}"
        )));
    }
    let xs: Vec<f64> = (0..target_w)
        .map(|x| source_coordinate(x, img.width(), target_w))
        .collect();
    let ys: Vec<f64> = (0..target_h)
        .map(|y| source_coordinate(y, img.height(), target_h))
        .collect();
    Ok(sample_grid(img, &xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reference: full 4x4 neighbourhood, 2-D kernel product, no
    /// separability or tap tables.
    fn reference(img: &GrayImage, w: usize, h: usize) -> GrayImage {
        let kernel = |t: f64| {
            let a = -0.5;
            let t = t.abs();
            if t <= 1.0 {
                (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
            } else if t < 2.0 {
                a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
            } else {
                0.0
            }
        };
        GrayImage::from_fn(w, h, |ox, oy| {
            let sx = (ox as f64 + 0.5) * img.width() as f64 / w as f64 - 0.5;
            let sy = (oy as f64 + 0.5) * img.height() as f64 / h as f64 - 0.5;
            let mut acc = 0.0;
            for j in (sy.floor() as isize - 1)..=(sy.floor() as isize + 2) {
                for i in (sx.floor() as isize - 1)..=(sx.floor() as isize + 2) {
                    acc += kernel(sx - i as f64) * kernel(sy - j as f64) * img.get_clamped(i, j);
                }
            }
            acc.clamp(0.0, 1.0)
        })
    }

    #[test]
    fn kernel_is_interpolating() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        let s: f64 = [-1.0, 0.0, 1.0, 2.0].iter().map(|&k| cubic(0.3 - k)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_stays_constant() {
        let img = GrayImage::filled(7, 5, 0.5);
        for (w, h) in [(3, 3), (14, 10), (1, 1), (100, 2)] {
            let out = resize_bicubic(&img, w, h).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn identity_resize() {
        let img = GrayImage::from_fn(9, 6, |x, y| ((x * 5 + y * 11) % 13) as f64 / 12.0);
        let out = resize_bicubic(&img, 9, 6).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ramp_upscale_matches_reference() {
        let img = GrayImage::from_fn(4, 4, |x, y| (x + 4 * y) as f64 / 15.0);
        let out = resize_bicubic(&img, 8, 8).unwrap();
        let want = reference(&img, 8, 8);
        for (a, b) in out.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // interior samples of a linear ramp are reproduced exactly by the kernel
        assert!(
            (out.get(3, 3) - 6.25 / 15.0).abs() < 1e-12,
            "{}",
            out.get(3, 3)
        );
    }

    #[test]
    fn downscale_matches_reference() {
        let img = GrayImage::from_fn(23, 17, |x, y| ((x * 37 + y * 91) % 29) as f64 / 28.0);
        let out = resize_bicubic(&img, 10, 7).unwrap();
        let want = reference(&img, 10, 7);
        for (a, b) in out.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target_is_rejected() {
        let img = GrayImage::filled(3, 3, 0.1);
        assert!(resize_bicubic(&img, 0, 3).is_err());
        assert!(resize_bicubic(&img, 3, 0).is_err());
    }
}

//! Block-based LBP and HOG descriptors.
//!
//! Both descriptors split the image into an 8x8 grid of non-overlapping
//! blocks, build an 8-bin histogram per block, L1-normalize it and concatenate
//! the 64 histograms into a 512-value vector.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::features::{ExtractorKind, FeatureVector};
use crate::grid::partition_axis;
use crate::image::GrayImage;

pub const GRID: usize = 8;
pub const BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = GRID * GRID * BINS;
pub const MIN_SIDE: usize = 10;

const HOG_EPS: f64 = 1e-10;

/// Pixel ranges of the 8x8 block grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGrid {
    col_bounds: Vec<usize>,
    row_bounds: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Block {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

impl BlockGrid {
    pub fn rows(&self) -> usize {
        GRID
    }

    pub fn cols(&self) -> usize {
        GRID
    }

    pub fn block(&self, row: usize, col: usize) -> Block {
        Block {
            x0: self.col_bounds[col],
            x1: self.col_bounds[col + 1],
            y0: self.row_bounds[row],
            y1: self.row_bounds[row + 1],
        }
    }

    /// Blocks in row-major order.
    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        (0..GRID).flat_map(move |r| (0..GRID).map(move |c| self.block(r, c)))
    }

    /// Row-major block index holding pixel `(x, y)`.
    fn index_of(&self, x: usize, y: usize) -> usize {
        let col = self.col_bounds[1..].partition_point(|&b| b <= x);
        let row = self.row_bounds[1..].partition_point(|&b| b <= y);
        row * GRID + col
    }
}

pub fn block_partition(width: usize, height: usize) -> Result<BlockGrid> {
    if width < GRID || height < GRID {
        return Err(Error::invalid(format!(
            "{width}x{height} is too small for an {GRID}x{GRID} block grid"
        )));
    }
    Ok(BlockGrid {
        col_bounds: partition_axis(width, GRID),
        row_bounds: partition_axis(height, GRID),
    })
}

fn check_size(img: &GrayImage) -> Result<()> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::invalid(format!(
            "descriptor needs at least {MIN_SIDE}x{MIN_SIDE} pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Normalizes every 8-bin block segment of `hist` by its sum (+ `eps`);
/// empty segments stay zero.
fn normalize_blocks(hist: &[f64], eps: f64) -> Vec<f32> {
    hist.chunks_exact(BINS)
        .flat_map(|block| {
            let sum: f64 = block.iter().sum();
            block.iter().map(move |&v| {
                if sum > 0.0 {
                    (v / (sum + eps)) as f32
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Neighbour offsets clockwise from the top-left; the first one is the most
/// significant bit of the label.
const LBP_NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

/// 8-bit LBP label of interior pixel `(x, y)`; a neighbour `>=` the center sets its bit.
pub fn lbp_label(img: &GrayImage, x: usize, y: usize) -> u8 {
    let c = img.get(x, y);
    LBP_NEIGHBOURS.iter().fold(0u8, |acc, &(dx, dy)| {
        let n = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        (acc << 1) | u8::from(n >= c)
    })
}

pub fn lbp_descriptor(img: &GrayImage) -> Result<FeatureVector> {
    check_size(img)?;
    let grid = block_partition(img.width(), img.height())?;
    let mut hist = vec![0.0; DESCRIPTOR_LEN];
    for y in 1..img.height() - 1 {
        for x in 1..img.width() - 1 {
            let label = lbp_label(img, x, y) as usize;
            hist[grid.index_of(x, y) * BINS + label / 32] += 1.0;
        }
    }
    Ok(FeatureVector::new(
        normalize_blocks(&hist, 0.0),
        ExtractorKind::Lbp,
    ))
}

/// Splits `magnitude` between the two orientation bins nearest to `angle`
/// (radians in `[0, pi)`), bin `k` being centered on `(k + 0.5) * pi / 8`.
pub fn soft_bin(angle: f64, magnitude: f64) -> [(usize, f64); 2] {
    let width = PI / BINS as f64;
    let pos = angle / width - 0.5;
    let lo = pos.floor();
    let frac = pos - lo;
    let lo = (lo as isize).rem_euclid(BINS as isize) as usize;
    let hi = (lo + 1) % BINS;
    [(lo, magnitude * (1.0 - frac)), (hi, magnitude * frac)]
}

/// Unsigned gradient orientation in `[0, pi)`.
#[inline]
pub fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    let a = gy.atan2(gx).rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}

pub fn hog_descriptor(img: &GrayImage) -> Result<FeatureVector> {
    check_size(img)?;
    let grid = block_partition(img.width(), img.height())?;
    let mut hist = vec![0.0; DESCRIPTOR_LEN];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (xi, yi) = (x as isize, y as isize);
            let gx = img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi);
            let gy = img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let base = grid.index_of(x, y) * BINS;
            for (bin, w) in soft_bin(unsigned_orientation(gx, gy), mag) {
                hist[base + bin] += w;
            }
        }
    }
    Ok(FeatureVector::new(
        normalize_blocks(&hist, HOG_EPS),
        ExtractorKind::Hog,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_sums(fv: &FeatureVector) -> Vec<f64> {
        fv.values
            .chunks(BINS)
            .map(|b| b.iter().map(|&v| v as f64).sum())
            .collect()
    }

    #[test]
    fn partition_examples() {
        let g = block_partition(64, 64).unwrap();
        assert!(g.blocks().all(|b| b.width() == 8 && b.height() == 8));
        let g = block_partition(67, 64).unwrap();
        assert_eq!(g.block(0, 7).width(), 11);
        assert_eq!(g.block(3, 6).width(), 8);
        let g = block_partition(8, 8).unwrap();
        assert_eq!(g.blocks().count(), 64);
        assert!(g.blocks().all(|b| b.width() == 1 && b.height() == 1));
        assert!(block_partition(7, 30).is_err());
    }

    #[test]
    fn partition_tiles_image_exactly() {
        for (w, h) in [(8, 8), (67, 64), (100, 13), (381, 380)] {
            let g = block_partition(w, h).unwrap();
            let mut cover = vec![0u8; w * h];
            for b in g.blocks() {
                for y in b.y0..b.y1 {
                    for x in b.x0..b.x1 {
                        cover[y * w + x] += 1;
                    }
                }
            }
            assert!(cover.iter().all(|&c| c == 1));
            for y in 0..h {
                for x in 0..w {
                    let b = g.blocks().nth(g.index_of(x, y)).unwrap();
                    assert!((b.x0..b.x1).contains(&x) && (b.y0..b.y1).contains(&y));
                }
            }
        }
    }

    #[test]
    fn lbp_labels_by_hand() {
        let patch = |n: [f64; 8]| {
            let mut img = GrayImage::filled(3, 3, 0.0);
            img.set(1, 1, 0.5);
            for (v, (dx, dy)) in n.iter().zip(LBP_NEIGHBOURS) {
                img.set((1 + dx) as usize, (1 + dy) as usize, *v);
            }
            lbp_label(&img, 1, 1)
        };
        assert_eq!(patch([0.0; 8]), 0);
        assert_eq!(patch([0.5; 8]), 255);
        assert_eq!(patch([0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4]), 0b1010_1010);
        assert_eq!(patch([0.6, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4]), 128);
    }

    #[test]
    fn lbp_constant_image() {
        let fv = lbp_descriptor(&GrayImage::filled(40, 40, 0.3)).unwrap();
        assert_eq!(fv.len(), DESCRIPTOR_LEN);
        for block in fv.values.chunks(BINS) {
            assert_eq!(block, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn too_small_is_rejected() {
        let img = GrayImage::filled(9, 20, 0.1);
        assert!(lbp_descriptor(&img).is_err());
        assert!(hog_descriptor(&img).is_err());
    }

    #[test]
    fn minimum_size_has_degenerate_lbp_blocks() {
        let img = GrayImage::from_fn(10, 10, |x, y| ((x * 3 + y * 5) % 7) as f64 / 6.0);
        let fv = lbp_descriptor(&img).unwrap();
        let sums = block_sums(&fv);
        // the top-left block is a single border pixel
        assert_eq!(sums[0], 0.0);
        assert!(sums.iter().all(|&s| s == 0.0 || (s - 1.0).abs() < 1e-6));
    }

    #[test]
    fn hog_constant_is_all_zero() {
        let fv = hog_descriptor(&GrayImage::filled(32, 32, 0.8)).unwrap();
        assert_eq!(fv.len(), DESCRIPTOR_LEN);
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hog_horizontal_ramp_sits_at_zero_degrees() {
        let img = GrayImage::from_fn(40, 24, |x, _| x as f64 / 40.0);
        let fv = hog_descriptor(&img).unwrap();
        // 0 degrees lies halfway between the centers of bins 7 and 0
        for block in fv.values.chunks(BINS) {
            assert!((block[0] - 0.5).abs() < 1e-6 && (block[7] - 0.5).abs() < 1e-6);
            assert!(block[1..7].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn hog_diagonal_ramp_split() {
        // I = (x + y) / 32: interior gradient (2, 2)/32 -> 45 degrees, halfway
        // between the centers of bin 1 (33.75) and bin 2 (56.25). Border pixels
        // see one-sided differences; expected block histograms are rebuilt
        // pixel by pixel below.
        let img = GrayImage::from_fn(16, 16, |x, y| (x + y) as f64 / 32.0);
        let fv = hog_descriptor(&img).unwrap();
        let mut expect = vec![[0.0f64; BINS]; 64];
        for y in 0..16i32 {
            for x in 0..16i32 {
                let gx = (((x + 1).min(15) - (x - 1).max(0)) as f64) / 32.0;
                let gy = (((y + 1).min(15) - (y - 1).max(0)) as f64) / 32.0;
                let deg = gy.atan2(gx).to_degrees();
                let pos = deg / 22.5 - 0.5;
                let lo = pos.floor() as usize;
                let f = pos - pos.floor();
                let m = (gx * gx + gy * gy).sqrt();
                let b = (y / 2 * 8 + x / 2) as usize;
                expect[b][lo] += m * (1.0 - f);
                expect[b][lo + 1] += m * f;
            }
        }
        for (b, block) in fv.values.chunks(BINS).enumerate() {
            let s: f64 = expect[b].iter().sum();
            for k in 0..BINS {
                assert!(
                    (block[k] as f64 - expect[b][k] / s).abs() < 1e-6,
                    "block {b} bin {k}"
                );
            }
        }
        // an interior block carries the exact 50/50 split
        let inner = &fv.values[(3 * 8 + 3) * BINS..(3 * 8 + 4) * BINS];
        assert!((inner[1] - 0.5).abs() < 1e-6 && (inner[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn soft_bin_wraps_around() {
        let [(a, wa), (b, wb)] = soft_bin(0.0, 1.0);
        assert_eq!((a, b), (7, 0));
        assert!((wa - 0.5).abs() < 1e-12 && (wb - 0.5).abs() < 1e-12);
        let [(a, wa), (b, _)] = soft_bin(PI / 16.0, 2.0);
        assert_eq!((a, b), (0, 1));
        assert!((wa - 2.0).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use crate::grid::partition_axis;
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Per-bin clip limit as a fraction of the tile's pixel count.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 0.01,
            bins: 256,
        }
    }
}

enum TileMap {
    /// All pixels of the tile fall in one bin; there is nothing to stretch.
    Identity,
    Lut(Vec<f64>),
}

impl TileMap {
    #[inline]
    fn apply(&self, v: f64, bin: usize) -> f64 {
        match self {
            TileMap::Identity => v,
            TileMap::Lut(lut) => lut[bin],
        }
    }
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn tile_map(img: &GrayImage, xr: (usize, usize), yr: (usize, usize), p: &ClaheParams) -> TileMap {
    let mut hist = vec![0.0f64; p.bins];
    for y in yr.0..yr.1 {
        for x in xr.0..xr.1 {
            hist[bin_of(img.get(x, y), p.bins)] += 1.0;
        }
    }
    let n = ((xr.1 - xr.0) * (yr.1 - yr.0)) as f64;
    if hist.iter().filter(|&&h| h > 0.0).count() <= 1 {
        return TileMap::Identity;
    }
    let limit = (p.clip_limit * n).max(1.0);
    let mut excess = 0.0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / p.bins as f64;
    let mut acc = 0.0;
    let lut = hist
        .iter()
        .map(|h| {
            acc += h + share;
            (acc / n).clamp(0.0, 1.0)
        })
        .collect();
    TileMap::Lut(lut)
}

/// Interpolation anchor along one axis: lower tile, upper tile, weight of upper.
fn anchors(len: usize, bounds: &[usize]) -> Vec<(usize, usize, f64)> {
    let centers: Vec<f64> = bounds
        .windows(2)
        .map(|w| (w[0] + w[1]) as f64 / 2.0 - 0.5)
        .collect();
    let last = centers.len() - 1;
    (0..len)
        .map(|p| {
            let p = p as f64;
            if p <= centers[0] {
                (0, 0, 0.0)
            } else if p >= centers[last] {
                (last, last, 0.0)
            } else {
                let t = centers.partition_point(|&c| c <= p) - 1;
                let w = (p - centers[t]) / (centers[t + 1] - centers[t]);
                (t, t + 1, w)
            }
        })
        .collect()
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile's histogram is clipped at `clip_limit * tile_pixels` counts (at
/// least one), the clipped mass is spread uniformly over all bins, and the
/// normalized cumulative histogram becomes the tile's mapping. Pixels blend
/// the mappings of the four nearest tile centers bilinearly; pixels outside
/// the outermost centers use the nearest tiles only.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> GrayImage {
    assert!(params.bins > 0, "CLAHE needs at least one bin");
    assert!(
        params.clip_limit > 0.0 && params.clip_limit <= 1.0,
        "clip limit must lie in (0, 1]"
    );
    let tiles_x = params.tiles_x.clamp(1, img.width());
    let tiles_y = params.tiles_y.clamp(1, img.height());
    let xb = partition_axis(img.width(), tiles_x);
    let yb = partition_axis(img.height(), tiles_y);

    let maps: Vec<TileMap> = (0..tiles_y)
        .flat_map(|ty| (0..tiles_x).map(move |tx| (tx, ty)))
        .map(|(tx, ty)| tile_map(img, (xb[tx], xb[tx + 1]), (yb[ty], yb[ty + 1]), params))
        .collect();
    let map = |tx: usize, ty: usize| &maps[ty * tiles_x + tx];

    let ax = anchors(img.width(), &xb);
    let ay = anchors(img.height(), &yb);
    let mut out = img.clone();
    for (y, &(t0, t1, wy)) in ay.iter().enumerate() {
        for (x, &(s0, s1, wx)) in ax.iter().enumerate() {
            let v = img.get(x, y);
            let b = bin_of(v, params.bins);
            let top = (1.0 - wx) * map(s0, t0).apply(v, b) + wx * map(s1, t0).apply(v, b);
            let bottom = (1.0 - wx) * map(s0, t1).apply(v, b) + wx * map(s1, t1).apply(v, b);
            out.set(x, y, ((1.0 - wy) * top + wy * bottom).clamp(0.0, 1.0));
        }
    }
    out
}

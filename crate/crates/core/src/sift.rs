//! SIFT keypoints (difference-of-Gaussians detector, 4x4x8 descriptor) and a
//! pair matcher whose score is the number of geometrically consistent pairs.
//!
//! Orientations use a y-up convention: a gradient pointing towards smaller row
//! indices has angle pi/2. All angles live in `[0, 2pi)`.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DESCRIPTOR_LEN: usize = 128;
pub const MIN_SIDE: usize = 32;

const BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;
const DESCR_WIDTH: usize = 4;
const DESCR_BINS: usize = 8;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0 * ORI_SIGMA_FACTOR;
const DESCR_SCALE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma: f64,
    /// Blur assumed to be already present in the input image.
    pub input_sigma: f64,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub orientation_bins: usize,
    pub orientation_peak_ratio: f64,
    pub descriptor_clip: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams {
            octaves: 4,
            scales_per_octave: 3,
            sigma: 1.6,
            input_sigma: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            orientation_bins: 36,
            orientation_peak_ratio: 0.8,
            descriptor_clip: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub orientation: f64,
    pub descriptor: Vec<f32>,
}

/// Keypoints of one image together with the image size (the distance
/// constraint of the matcher is relative to the image diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub width: usize,
    pub height: usize,
    pub keypoints: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// One keypoint per line.
pub fn write_jsonl<W: Write>(keypoints: &[Keypoint], mut w: W) -> Result<()> {
    for kp in keypoints {
        serde_json::to_writer(&mut w, kp)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Keypoint>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let kp: Keypoint = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("keypoint line {}: {e}", i + 1)))?;
        if kp.descriptor.len() != DESCRIPTOR_LEN {
            return Err(Error::Format(format!(
                "keypoint line {}: descriptor has {} values",
                i + 1,
                kp.descriptor.len()
            )));
        }
        out.push(kp);
    }
    Ok(out)
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn blur(&self, sigma: f64) -> Plane {
        let radius = (3.0 * sigma).ceil().max(1.0) as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= norm);

        let (w, h) = (self.w as isize, self.h as isize);
        let mut tmp = vec![0.0; self.data.len()];
        for y in 0..h {
            let row = &self.data[(y * w) as usize..((y + 1) * w) as usize];
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let xi = (x + k as isize - radius).clamp(0, w - 1) as usize;
                    acc += kv * row[xi];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let yi = (y + k as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[(yi * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Plane {
            w: self.w,
            h: self.h,
            data: out,
        }
    }

    fn downsample(&self) -> Plane {
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane { w, h, data }
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Central-difference gradient with y pointing up; `None` on the border.
    #[inline]
    fn gradient(&self, x: isize, y: isize) -> Option<(f64, f64)> {
        if x < 1 || y < 1 || x >= self.w as isize - 1 || y >= self.h as isize - 1 {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        let dx = self.at(x + 1, y) - self.at(x - 1, y);
        let dy = self.at(x, y - 1) - self.at(x, y + 1);
        Some((dx, dy))
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_pyramid(img: &GrayImage, p: &SiftParams) -> Vec<Octave> {
    let s = p.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    // incremental blur from level i-1 to level i
    let increments: Vec<f64> = (1..s + 3)
        .map(|i| {
            let prev = p.sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt()
        })
        .collect();

    let src = Plane {
        w: img.width(),
        h: img.height(),
        data: img.data().to_vec(),
    };
    let init = (p.sigma * p.sigma - p.input_sigma * p.input_sigma)
        .max(0.01)
        .sqrt();
    let mut base = src.blur(init);
    let mut octaves = Vec::new();
    for o in 0..p.octaves {
        if o > 0 && base.w.min(base.h) < 2 * (BORDER + 2) {
            break;
        }
        let mut gauss = vec![base.clone()];
        for inc in &increments {
            let next = gauss.last().unwrap().blur(*inc);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|w| w[1].sub(&w[0])).collect();
        let next_base = gauss[s].downsample();
        octaves.push(Octave { gauss, dog });
        base = next_base;
    }
    octaves
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for (l, plane) in dog.iter().enumerate().take(layer + 2).skip(layer - 1) {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if l == layer && yy == y && xx == x {
                    continue;
                }
                let n = plane.at(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

struct Extremum {
    x: usize,
    y: usize,
    layer: usize,
    offset: [f64; 3],
}

fn solve3(h: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
        - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if det.abs() < 1e-15 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
            / det;
    }
    Some(out)
}

/// Quadratic refinement of a DoG extremum plus contrast and edge tests.
fn refine(
    dog: &[Plane],
    mut x: usize,
    mut y: usize,
    mut layer: usize,
    p: &SiftParams,
) -> Option<Extremum> {
    let s = p.scales_per_octave;
    let (w, h) = (dog[0].w, dog[0].h);
    for _ in 0..MAX_INTERP_STEPS {
        let d = |l: usize, xx: usize, yy: usize| dog[l].at(xx, yy);
        let v = d(layer, x, y);
        let grad = [
            (d(layer, x + 1, y) - d(layer, x - 1, y)) * 0.5,
            (d(layer, x, y + 1) - d(layer, x, y - 1)) * 0.5,
            (d(layer + 1, x, y) - d(layer - 1, x, y)) * 0.5,
        ];
        let dxx = d(layer, x + 1, y) + d(layer, x - 1, y) - 2.0 * v;
        let dyy = d(layer, x, y + 1) + d(layer, x, y - 1) - 2.0 * v;
        let dss = d(layer + 1, x, y) + d(layer - 1, x, y) - 2.0 * v;
        let dxy = (d(layer, x + 1, y + 1) - d(layer, x - 1, y + 1) - d(layer, x + 1, y - 1)
            + d(layer, x - 1, y - 1))
            * 0.25;
        let dxs = (d(layer + 1, x + 1, y) - d(layer + 1, x - 1, y) - d(layer - 1, x + 1, y)
            + d(layer - 1, x - 1, y))
            * 0.25;
        let dys = (d(layer + 1, x, y + 1) - d(layer + 1, x, y - 1) - d(layer - 1, x, y + 1)
            + d(layer - 1, x, y - 1))
            * 0.25;
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let sol = solve3(hess, grad)?;
        let offset = [-sol[0], -sol[1], -sol[2]];

        if offset.iter().all(|o| o.abs() < 0.5) {
            let contrast =
                v + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
            if contrast.abs() < p.contrast_threshold {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = p.edge_ratio;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            return Some(Extremum {
                x,
                y,
                layer,
                offset,
            });
        }
        if offset.iter().any(|o| o.abs() > (w.max(h) as f64)) {
            return None;
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let nl = layer as isize + offset[2].round() as isize;
        if nl < 1
            || nl > s as isize
            || nx < BORDER as isize
            || ny < BORDER as isize
            || nx >= (w - BORDER) as isize
            || ny >= (h - BORDER) as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

fn orientation_peaks(
    gauss: &Plane,
    x: usize,
    y: usize,
    scale_oct: f64,
    p: &SiftParams,
) -> Vec<f64> {
    let n = p.orientation_bins;
    let sigma = ORI_SIGMA_FACTOR * scale_oct;
    let radius = (ORI_RADIUS_FACTOR * scale_oct).round() as isize;
    let mut hist = vec![0.0; n];
    for i in -radius..=radius {
        for j in -radius..=radius {
            let Some((dx, dy)) = gauss.gradient(x as isize + j, y as isize + i) else {
                continue;
            };
            let w = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
            let angle = dy.atan2(dx).rem_euclid(TAU);
            let bin = ((angle * n as f64 / TAU).round() as usize) % n;
            hist[bin] += w * dx.hypot(dy);
        }
    }
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let at = |o: isize| hist[(i as isize + o).rem_euclid(n as isize) as usize];
            (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0
        })
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 0..n {
        let l = smooth[(i + n - 1) % n];
        let r = smooth[(i + 1) % n];
        let c = smooth[i];
        if c > l && c > r && c >= p.orientation_peak_ratio * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = i as f64 + shift;
            peaks.push((bin * TAU / n as f64).rem_euclid(TAU));
        }
    }
    peaks
}

fn descriptor(
    gauss: &Plane,
    x: usize,
    y: usize,
    scale_oct: f64,
    ori: f64,
    p: &SiftParams,
) -> Vec<f32> {
    let d = DESCR_WIDTH;
    let n = DESCR_BINS;
    let hist_width = DESCR_SCALE_FACTOR * scale_oct;
    let diag = (gauss.w as f64).hypot(gauss.h as f64);
    let radius = (hist_width * 2f64.sqrt() * (d as f64 + 1.0) * 0.5)
        .round()
        .min(diag) as isize;
    let (sin_o, cos_o) = ori.sin_cos();
    let exp_scale = -1.0 / (d as f64 * d as f64 * 0.5);
    let mut hist = vec![0.0f64; (d + 2) * (d + 2) * (n + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (d + 2) + c) * (n + 2) + o;

    for i in -radius..=radius {
        for j in -radius..=radius {
            // (u, v): offset with y up, rotated into the keypoint frame
            let (u, v) = (j as f64, -(i as f64));
            let u_rot = (u * cos_o + v * sin_o) / hist_width;
            let v_rot = (-u * sin_o + v * cos_o) / hist_width;
            let c_bin = u_rot + d as f64 / 2.0 - 0.5;
            let r_bin = -v_rot + d as f64 / 2.0 - 0.5;
            if !(r_bin > -1.0 && r_bin < d as f64 && c_bin > -1.0 && c_bin < d as f64) {
                continue;
            }
            let Some((dx, dy)) = gauss.gradient(x as isize + j, y as isize + i) else {
                continue;
            };
            let weight = ((u_rot * u_rot + v_rot * v_rot) * exp_scale).exp();
            let mag = dx.hypot(dy) * weight;
            let rel = (dy.atan2(dx) - ori).rem_euclid(TAU);
            let o_bin = rel * n as f64 / TAU;

            let (r0, c0, o0) = (r_bin.floor(), c_bin.floor(), o_bin.floor());
            let (fr, fc, fo) = (r_bin - r0, c_bin - c0, o_bin - o0);
            let (r0, c0) = ((r0 as isize + 1) as usize, (c0 as isize + 1) as usize);
            let o0 = (o0 as usize) % n;
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        hist[idx(r0 + dr, c0 + dc, (o0 + dob) % n)] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut desc = Vec::with_capacity(d * d * n);
    for r in 0..d {
        for c in 0..d {
            for o in 0..n {
                desc.push(hist[idx(r + 1, c + 1, o)]);
            }
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return vec![0.0; d * d * n];
    }
    for v in desc.iter_mut() {
        *v = (*v / norm).min(p.descriptor_clip);
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    desc.iter().map(|v| (v / norm) as f32).collect()
}

pub fn detect_keypoints(img: &GrayImage) -> Result<Vec<Keypoint>> {
    detect_keypoints_with(img, &SiftParams::default())
}

pub fn detect_keypoints_with(img: &GrayImage, p: &SiftParams) -> Result<Vec<Keypoint>> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(Error::invalid(format!(
            "SIFT needs at least {MIN_SIDE}x{MIN_SIDE} pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let s = p.scales_per_octave;
    let prefilter = 0.5 * p.contrast_threshold;
    let mut keypoints = Vec::new();
    for (o, oct) in build_pyramid(img, p).iter().enumerate() {
        let (w, h) = (oct.dog[0].w, oct.dog[0].h);
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        let octave_scale = 2f64.powi(o as i32);
        for layer in 1..=s {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    if oct.dog[layer].at(x, y).abs() <= prefilter
                        || !is_extremum(&oct.dog, layer, x, y)
                    {
                        continue;
                    }
                    let Some(ext) = refine(&oct.dog, x, y, layer, p) else {
                        continue;
                    };
                    let scale_oct =
                        p.sigma * 2f64.powf((ext.layer as f64 + ext.offset[2]) / s as f64);
                    let gauss = &oct.gauss[ext.layer];
                    for ori in orientation_peaks(gauss, ext.x, ext.y, scale_oct, p) {
                        keypoints.push(Keypoint {
                            x: (ext.x as f64 + ext.offset[0]) * octave_scale,
                            y: (ext.y as f64 + ext.offset[1]) * octave_scale,
                            scale: scale_oct * octave_scale,
                            orientation: ori,
                            descriptor: descriptor(gauss, ext.x, ext.y, scale_oct, ori, p),
                        });
                    }
                }
            }
        }
    }
    Ok(keypoints)
}

/// Detects keypoints and records the image size alongside them.
pub fn keypoint_set(img: &GrayImage) -> Result<KeypointSet> {
    Ok(KeypointSet {
        width: img.width(),
        height: img.height(),
        keypoints: detect_keypoints(img)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    /// Nearest / second-nearest descriptor distance ratio.
    pub ratio: f64,
    pub angle_bins: usize,
    /// Accepted deviation from the modal orientation difference, degrees.
    pub angle_tolerance_deg: f64,
    /// Accepted deviation from the median displacement, as a fraction of the
    /// image diagonal.
    pub distance_fraction: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            ratio: 0.8,
            angle_bins: 36,
            angle_tolerance_deg: 20.0,
            distance_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub enrol: usize,
    pub probe: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Pair>,
    /// Pairs surviving the ratio test and one-to-one assignment, before the
    /// geometric constraints.
    pub candidates: usize,
}

impl MatchSet {
    pub fn score(&self) -> usize {
        self.pairs.len()
    }
}

fn descriptor_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Ratio test, greedy one-to-one assignment by ascending distance.
pub fn candidate_pairs(enrol: &[Keypoint], probe: &[Keypoint], ratio: f64) -> Vec<Pair> {
    let mut cands = Vec::new();
    if probe.is_empty() {
        return cands;
    }
    for (i, e) in enrol.iter().enumerate() {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for (j, q) in probe.iter().enumerate() {
            let d = descriptor_distance(&e.descriptor, &q.descriptor);
            if d < best.0 {
                second = best.0;
                best = (d, j);
            } else if d < second {
                second = d;
            }
        }
        if probe.len() == 1 || best.0 < ratio * second {
            cands.push(Pair {
                enrol: i,
                probe: best.1,
                distance: best.0,
            });
        }
    }
    cands.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.enrol.cmp(&b.enrol))
            .then(a.probe.cmp(&b.probe))
    });
    let mut used = vec![false; probe.len()];
    let mut out = Vec::with_capacity(cands.len());
    for c in cands {
        if !used[c.probe] {
            used[c.probe] = true;
            out.push(c);
        }
    }
    out
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pairs keypoints and removes spurious pairs whose orientation change or
/// displacement disagrees with the dominant one. The score is the number of
/// surviving pairs.
pub fn match_constrained(
    enrol: &KeypointSet,
    probe: &KeypointSet,
    params: &MatchParams,
) -> MatchSet {
    let pairs = candidate_pairs(&enrol.keypoints, &probe.keypoints, params.ratio);
    let candidates = pairs.len();
    if pairs.is_empty() {
        return MatchSet::default();
    }

    // orientation constraint around the modal rotation
    let n = params.angle_bins;
    let rot = |p: &Pair| {
        (probe.keypoints[p.probe].orientation - enrol.keypoints[p.enrol].orientation)
            .rem_euclid(TAU)
    };
    let bin_of = |a: f64| ((a * n as f64 / TAU) as usize).min(n - 1);
    let mut hist = vec![0usize; n];
    for p in &pairs {
        hist[bin_of(rot(p))] += 1;
    }
    let mode_bin = (0..n).fold(0, |best, i| if hist[i] > hist[best] { i } else { best });
    let (sx, sy) = pairs
        .iter()
        .map(rot)
        .filter(|&a| bin_of(a) == mode_bin)
        .fold((0.0, 0.0), |(sx, sy), a| (sx + a.cos(), sy + a.sin()));
    let mode = sy.atan2(sx);
    let tol = params.angle_tolerance_deg.to_radians();
    let pairs: Vec<Pair> = pairs
        .into_iter()
        .filter(|p| angle_diff(rot(p), mode) <= tol)
        .collect();

    // displacement constraint around the median translation
    let disp = |p: &Pair| {
        let (e, q) = (&enrol.keypoints[p.enrol], &probe.keypoints[p.probe]);
        (q.x - e.x, q.y - e.y)
    };
    let mut dx: Vec<f64> = pairs.iter().map(|p| disp(p).0).collect();
    let mut dy: Vec<f64> = pairs.iter().map(|p| disp(p).1).collect();
    let (mx, my) = (median(&mut dx), median(&mut dy));
    let limit = params.distance_fraction * enrol.diagonal().max(probe.diagonal());
    let pairs = pairs
        .into_iter()
        .filter(|p| {
            let (x, y) = disp(p);
            (x - mx).hypot(y - my) <= limit
        })
        .collect();
    MatchSet { pairs, candidates }
}

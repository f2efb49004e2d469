//! Synthetic periocular dataset with a known identity signal.
//!
//! Each user owns a texture defined in eye-centred units (sclera radius 16):
//! two octaves of value noise, a set of Gaussian blobs around the eye, and
//! sclera, iris and pupil disks. Images render that texture at a per-image
//! position, scale and tilt, perturb the skin with image-specific texture, and
//! add an illumination ramp, a brightness shift and pixel noise, so every
//! within-user difference is nuisance and every between-user difference is
//! identity.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CliError, Result, StageExt};
use crate::manifest::{write_manifest, Manifest, ManifestRecord};

pub const WIDTH: u32 = 160;
pub const HEIGHT: u32 = 128;
pub const MANIFEST_NAME: &str = "manifest.csv";

const REF_RADIUS: f64 = 16.0;
const IRIS_FRACTION: f64 = 7.0 / 16.0;
const PUPIL_FRACTION: f64 = 3.0 / 16.0;
/// (distance in meters, nominal sclera radius in pixels)
const DISTANCE_GROUPS: [(f64, f64); 2] = [(4.0, 16.0), (8.0, 12.0)];
const LATTICE_EXTENT: f64 = 96.0;
const NOISE_STD: f64 = 0.015;
const MAX_TILT: f64 = 0.1;
/// Illumination change per pixel.
const RAMP: f64 = 0.0015;
const SKIN_JITTER: f64 = 0.12;

struct Lattice {
    spacing: f64,
    n: usize,
    values: Vec<f64>,
}

impl Lattice {
    fn new(rng: &mut ChaCha8Rng, spacing: f64) -> Self {
        let n = (2.0 * LATTICE_EXTENT / spacing).ceil() as usize + 2;
        Lattice {
            spacing,
            n,
            values: (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let gx = ((u + LATTICE_EXTENT) / self.spacing).clamp(0.0, (self.n - 2) as f64);
        let gy = ((v + LATTICE_EXTENT) / self.spacing).clamp(0.0, (self.n - 2) as f64);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx - x0 as f64), smooth(gy - y0 as f64));
        let g = |x: usize, y: usize| self.values[y * self.n + x];
        let top = g(x0, y0) * (1.0 - tx) + g(x0 + 1, y0) * tx;
        let bottom = g(x0, y0 + 1) * (1.0 - tx) + g(x0 + 1, y0 + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

struct Blob {
    u: f64,
    v: f64,
    sigma: f64,
    amplitude: f64,
}

struct UserTexture {
    coarse: Lattice,
    fine: Lattice,
    blobs: Vec<Blob>,
    skin: f64,
    sclera: f64,
    iris: f64,
}

impl UserTexture {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let coarse = Lattice::new(rng, 12.0);
        let fine = Lattice::new(rng, 5.0);
        let mut blobs = Vec::new();
        while blobs.len() < 16 {
            let (u, v) = (rng.gen_range(-60.0..60.0), rng.gen_range(-50.0..50.0));
            if f64::hypot(u, v) < REF_RADIUS + 4.0 {
                continue;
            }
            let amplitude = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.12..0.3);
            blobs.push(Blob {
                u,
                v,
                sigma: rng.gen_range(3.0..8.0),
                amplitude,
            });
        }
        UserTexture {
            coarse,
            fine,
            blobs,
            skin: rng.gen_range(0.4..0.6),
            sclera: rng.gen_range(0.72..0.85),
            iris: rng.gen_range(0.25..0.45),
        }
    }

    /// Intensity at eye-centred coordinates.
    fn intensity(&self, u: f64, v: f64) -> f64 {
        let r = f64::hypot(u, v);
        if r <= PUPIL_FRACTION * REF_RADIUS {
            return 0.02;
        }
        if r <= IRIS_FRACTION * REF_RADIUS {
            return self.iris + 0.04 * self.fine.at(u, v);
        }
        if r <= REF_RADIUS {
            return self.sclera + 0.04 * self.fine.at(u, v);
        }
        let mut s = self.skin + 0.15 * self.coarse.at(u, v) + 0.08 * self.fine.at(u, v);
        for b in &self.blobs {
            let d2 = (u - b.u).powi(2) + (v - b.v).powi(2);
            s += b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp();
        }
        s
    }
}

/// Per-image acquisition nuisance.
struct Capture {
    cx: f64,
    cy: f64,
    radius: f64,
    /// In-plane head rotation, radians.
    angle: f64,
    brightness: f64,
    /// Illumination ramp per pixel along x and y.
    ramp: (f64, f64),
    /// Skin appearance change (expression, makeup, blur) independent of identity.
    skin: Lattice,
}

impl Capture {
    fn draw(rng: &mut ChaCha8Rng, nominal: f64) -> Self {
        Capture {
            radius: nominal * rng.gen_range(0.96..1.04),
            cx: WIDTH as f64 / 2.0 + rng.gen_range(-4.0..4.0),
            cy: HEIGHT as f64 / 2.0 + rng.gen_range(-3.0..3.0),
            angle: rng.gen_range(-MAX_TILT..MAX_TILT),
            brightness: rng.gen_range(-0.04..0.04),
            ramp: (rng.gen_range(-RAMP..RAMP), rng.gen_range(-RAMP..RAMP)),
            skin: Lattice::new(rng, 7.0),
        }
    }
}

fn render(tex: &UserTexture, cap: &Capture, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let scale = REF_RADIUS / cap.radius;
    let (sin, cos) = cap.angle.sin_cos();
    let mut buf = Vec::with_capacity((WIDTH * HEIGHT * 3) as usize);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let (dx, dy) = (x as f64 - cap.cx, y as f64 - cap.cy);
            let (u, v) = (
                (cos * dx + sin * dy) * scale,
                (-sin * dx + cos * dy) * scale,
            );
            let mut g = tex.intensity(u, v);
            if f64::hypot(u, v) > REF_RADIUS {
                g += SKIN_JITTER * cap.skin.at(u, v);
            }
            g += cap.brightness + cap.ramp.0 * dx + cap.ramp.1 * dy + noise.sample(rng);
            // mild tint; the luma of the triple stays close to g
            for k in [1.02, 1.0, 0.95] {
                buf.push(((g * k).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    buf
}

/// Writes `users` eye-users (alternating left/right eyes of consecutive
/// subjects) with `images_per_user` PNG images each, plus `manifest.csv`.
pub fn generate_synthetic(
    users: usize,
    images_per_user: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    if users < 2 || images_per_user < 2 {
        return Err(CliError::Usage(
            "synthetic data needs at least 2 users with 2 images".into(),
        ));
    }
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).stage("synth")?;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for user in 0..users {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let tex = UserTexture::new(&mut rng);
        let subject_id = format!("S{:03}", user / 2);
        let eye = if user % 2 == 0 { "left" } else { "right" };
        for i in 0..images_per_user {
            let (distance_m, nominal) = DISTANCE_GROUPS[i % DISTANCE_GROUPS.len()];
            let cap = Capture::draw(&mut rng, nominal);
            let pixels = render(&tex, &cap, &mut rng);
            let (cx, cy, radius) = (cap.cx, cap.cy, cap.radius);

            let rel = format!("images/{subject_id}_{eye}_{i:02}.png");
            let img =
                image::RgbImage::from_raw(WIDTH, HEIGHT, pixels).expect("buffer matches size");
            img.save_with_format(out_dir.join(&rel), image::ImageFormat::Png)
                .map_err(|e| CliError::internal("synth", e))?;
            records.push(ManifestRecord {
                image_path: rel,
                subject_id: subject_id.clone(),
                eye: eye.parse().expect("valid eye"),
                session: if i < images_per_user.div_ceil(2) {
                    1
                } else {
                    2
                },
                distance_m,
                sclera_x: cx,
                sclera_y: cy,
                sclera_r: radius,
                iris_x: cx,
                iris_y: cy,
                iris_r: radius * IRIS_FRACTION,
                pupil_x: Some(cx),
                pupil_y: Some(cy),
                pupil_r: Some(radius * PUPIL_FRACTION),
                order: None,
            });
        }
    }
    let file = std::fs::File::create(out_dir.join(MANIFEST_NAME)).stage("synth")?;
    write_manifest(&records, std::io::BufWriter::new(file))?;
    Ok(Manifest {
        root: out_dir.to_path_buf(),
        records,
        skipped: Vec::new(),
    })
}

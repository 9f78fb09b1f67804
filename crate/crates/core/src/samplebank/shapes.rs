//! Procedural shapes: one geometric family per class, rendered from a latent.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::augmentation::{mix64, Image, SampleRng};

/// Shape family names, indexed by class id.
pub const FAMILIES: [&str; 12] = [
    "triangle",
    "square",
    "disk",
    "star",
    "cross",
    "ring",
    "crescent",
    "hollow_square",
    "bar",
    "corner",
    "ellipse",
    "half_disk",
];

pub const MAX_CLASSES: usize = FAMILIES.len();

const TEXTURE_AMPLITUDE: f64 = 12.0;
const MIN_LUMA_GAP: f64 = 60.0;
const SUPERSAMPLE: usize = 3;

/// Everything needed to render one image of a class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeLatent {
    pub class_id: u32,
    /// Radians.
    pub angle: f64,
    /// Shape radius as a fraction of half the image side.
    pub scale: f64,
    /// Center offset as a fraction of the image side.
    pub tx: f64,
    pub ty: f64,
    pub foreground: [u8; 3],
    pub background: [u8; 3],
    pub texture_seed: u64,
}

fn luma(c: [u8; 3]) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

fn random_color(rng: &mut SampleRng) -> [u8; 3] {
    [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]
}

impl ShapeLatent {
    /// Draws pose and appearance for `class_id`. The class is never changed.
    pub fn draw(class_id: u32, rng: &mut SampleRng) -> Self {
        let angle = rng.uniform(0.0, 2.0 * PI);
        let scale = rng.uniform(0.5, 0.85);
        let tx = rng.uniform(-0.12, 0.12);
        let ty = rng.uniform(-0.12, 0.12);
        let foreground = random_color(rng);
        let mut background = random_color(rng);
        let mut tries = 0;
        while (luma(foreground) - luma(background)).abs() < MIN_LUMA_GAP {
            background = random_color(rng);
            tries += 1;
            if tries == 64 {
                background = foreground.map(|v| 255 - v);
                if (luma(foreground) - luma(background)).abs() < MIN_LUMA_GAP {
                    background = if luma(foreground) > 127.5 { [0; 3] } else { [255; 3] };
                }
                break;
            }
        }
        ShapeLatent {
            class_id,
            angle,
            scale,
            tx,
            ty,
            foreground,
            background,
            texture_seed: rng.next_u64(),
        }
    }
}

/// Regular n-gon of circumradius `r` with a vertex on the +u axis.
fn in_polygon(n: usize, r: f64, u: f64, v: f64) -> bool {
    let rho = u.hypot(v);
    let sector = 2.0 * PI / n as f64;
    let t = v.atan2(u).rem_euclid(sector);
    rho * (t - sector / 2.0).cos() <= r * (sector / 2.0).cos()
}

fn in_star(u: f64, v: f64) -> bool {
    let (outer, inner) = (0.95, 0.42);
    let sector = 2.0 * PI / 5.0;
    let mut phi = v.atan2(u).rem_euclid(sector);
    if phi > sector / 2.0 {
        phi = sector - phi;
    }
    let rho = u.hypot(v);
    let (qx, qy) = (rho * phi.cos(), rho * phi.sin());
    let (ox, oy) = (outer, 0.0);
    let (ix, iy) = (inner * (sector / 2.0).cos(), inner * (sector / 2.0).sin());
    let cross = |px: f64, py: f64| (ix - ox) * (py - oy) - (iy - oy) * (px - ox);
    cross(qx, qy) * cross(0.0, 0.0) >= 0.0
}

/// Membership test in the unit shape frame (shapes fit inside radius ~1).
pub fn inside(class_id: u32, u: f64, v: f64) -> bool {
    let r = u.hypot(v);
    match class_id {
        0 => in_polygon(3, 1.0, u, v),
        1 => in_polygon(4, 0.95, u, v),
        2 => r < 0.8,
        3 => in_star(u, v),
        4 => (u.abs() < 0.25 && v.abs() < 0.9) || (v.abs() < 0.25 && u.abs() < 0.9),
        5 => r < 0.9 && r > 0.5,
        6 => r < 0.9 && (u - 0.4).hypot(v) > 0.7,
        7 => u.abs().max(v.abs()) < 0.7 && u.abs().max(v.abs()) > 0.38,
        8 => u.abs() < 0.95 && v.abs() < 0.22,
        9 => (u > -0.8 && u < -0.3 && v.abs() < 0.85) || (v > 0.35 && v < 0.85 && u.abs() < 0.8),
        10 => (u / 0.95).powi(2) + (v / 0.45).powi(2) < 1.0,
        11 => r < 0.9 && v > -0.1,
        _ => false,
    }
}

fn texture(seed: u64, y: usize, x: usize, c: usize) -> f64 {
    let h = mix64(seed ^ mix64(((y as u64) << 32) | ((x as u64) << 2) | c as u64));
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
    (2.0 * unit - 1.0) * TEXTURE_AMPLITUDE
}

/// Renders a latent into a `size × size` image (antialiased by supersampling).
pub fn render(latent: &ShapeLatent, size: usize) -> Image {
    let half = size as f64 / 2.0;
    let cx = half + latent.tx * size as f64;
    let cy = half + latent.ty * size as f64;
    let radius = latent.scale * half;
    let (sin, cos) = latent.angle.sin_cos();
    let mut data = vec![0.0; size * size * 3];
    let n_sub = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in 0..size {
        for x in 0..size {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64 - cy;
                    let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64 - cx;
                    // rotate by -angle into the shape frame
                    let u = (cos * px + sin * py) / radius;
                    let v = (-sin * px + cos * py) / radius;
                    if inside(latent.class_id, u, v) {
                        hits += 1;
                    }
                }
            }
            let a = hits as f64 / n_sub;
            for c in 0..3 {
                let base = a * latent.foreground[c] as f64 + (1.0 - a) * latent.background[c] as f64;
                data[(y * size + x) * 3 + c] = base + texture(latent.texture_seed, y, x, c);
            }
        }
    }
    Image::from_f64(size, size, &data)
}

/// Re-renders the latent's class with pose and appearance redrawn from `rng`.
///
/// Passing the rng that produced the source latent reproduces the source image.
pub fn oracle_regenerate(latent: &ShapeLatent, size: usize, rng: &mut SampleRng) -> (ShapeLatent, Image) {
    let fresh = ShapeLatent::draw(latent.class_id, rng);
    let img = render(&fresh, size);
    (fresh, img)
}

//! The standard photometric and geometric transforms.
//!
//! Every transform maps an [`Image`] to a new [`Image`] and draws all of its
//! randomness from the caller's [`SampleRng`], so a fixed seed tuple reproduces
//! the output bit for bit.

use serde::{Deserialize, Serialize};

use super::image::{quantize, Image};
use super::rng::SampleRng;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_RATIO: f64 = 3.0 / 4.0;
pub const DEFAULT_MAX_RATIO: f64 = 4.0 / 3.0;
pub const DEFAULT_SIGMA_MIN: f64 = 0.1;
pub const DEFAULT_SIGMA_MAX: f64 = 2.0;
pub const DEFAULT_SOLARIZE_THRESHOLD: u8 = 128;
pub const CROP_ATTEMPTS: usize = 10;

/// ITU-R BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn default_min_ratio() -> f64 {
    DEFAULT_MIN_RATIO
}
fn default_max_ratio() -> f64 {
    DEFAULT_MAX_RATIO
}
fn default_sigma_min() -> f64 {
    DEFAULT_SIGMA_MIN
}
fn default_sigma_max() -> f64 {
    DEFAULT_SIGMA_MAX
}
fn default_threshold() -> u8 {
    DEFAULT_SOLARIZE_THRESHOLD
}

/// One parameterized step of a view's pipeline.
///
/// The crop always fires (it is also the resize to the pipeline's output size);
/// every other kind is gated by its `prob`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    RandomResizedCrop {
        min_scale: f64,
        max_scale: f64,
        #[serde(default = "default_min_ratio")]
        min_ratio: f64,
        #[serde(default = "default_max_ratio")]
        max_ratio: f64,
    },
    ColorJitter {
        prob: f64,
        brightness: f64,
        contrast: f64,
        saturation: f64,
        hue: f64,
    },
    Grayscale {
        prob: f64,
    },
    GaussianBlur {
        prob: f64,
        #[serde(default = "default_sigma_min")]
        sigma_min: f64,
        #[serde(default = "default_sigma_max")]
        sigma_max: f64,
    },
    Solarize {
        prob: f64,
        #[serde(default = "default_threshold")]
        threshold: u8,
    },
    HorizontalFlip {
        prob: f64,
    },
}

impl TransformSpec {
    pub fn crop(min_scale: f64, max_scale: f64) -> Self {
        TransformSpec::RandomResizedCrop {
            min_scale,
            max_scale,
            min_ratio: DEFAULT_MIN_RATIO,
            max_ratio: DEFAULT_MAX_RATIO,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformSpec::RandomResizedCrop { .. } => "random_resized_crop",
            TransformSpec::ColorJitter { .. } => "color_jitter",
            TransformSpec::Grayscale { .. } => "grayscale",
            TransformSpec::GaussianBlur { .. } => "gaussian_blur",
            TransformSpec::Solarize { .. } => "solarize",
            TransformSpec::HorizontalFlip { .. } => "horizontal_flip",
        }
    }

    /// Gate probability; the crop reports 1.
    pub fn prob(&self) -> f64 {
        match *self {
            TransformSpec::RandomResizedCrop { .. } => 1.0,
            TransformSpec::ColorJitter { prob, .. }
            | TransformSpec::Grayscale { prob }
            | TransformSpec::GaussianBlur { prob, .. }
            | TransformSpec::Solarize { prob, .. }
            | TransformSpec::HorizontalFlip { prob } => prob,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.prob();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{}: prob {p} outside [0,1]", self.name())));
        }
        match *self {
            TransformSpec::RandomResizedCrop {
                min_scale,
                max_scale,
                min_ratio,
                max_ratio,
            } => {
                if !(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0) {
                    return Err(Error::Config(format!(
                        "crop scale range [{min_scale}, {max_scale}] must satisfy 0 < min <= max <= 1"
                    )));
                }
                if !(min_ratio > 0.0 && min_ratio <= max_ratio) {
                    return Err(Error::Config(format!(
                        "crop ratio range [{min_ratio}, {max_ratio}] invalid"
                    )));
                }
            }
            TransformSpec::ColorJitter {
                brightness,
                contrast,
                saturation,
                hue,
                ..
            } => {
                if [brightness, contrast, saturation, hue].iter().any(|&s| !(s >= 0.0)) {
                    return Err(Error::Config("jitter strengths must be >= 0".into()));
                }
                if hue > 0.5 {
                    return Err(Error::Config(format!("hue strength {hue} exceeds 0.5")));
                }
            }
            TransformSpec::GaussianBlur {
                sigma_min, sigma_max, ..
            } if !(sigma_min > 0.0 && sigma_min <= sigma_max) => {
                return Err(Error::Config(format!(
                    "blur sigma range [{sigma_min}, {sigma_max}] invalid"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Applies one transform. Returns the image and whether the gate fired.
pub fn apply_transform(
    spec: &TransformSpec,
    img: &Image,
    rng: &mut SampleRng,
    output_size: usize,
) -> Result<(Image, bool)> {
    match *spec {
        TransformSpec::RandomResizedCrop {
            min_scale,
            max_scale,
            min_ratio,
            max_ratio,
        } => Ok((
            random_resized_crop_with_ratio(img, rng, min_scale, max_scale, (min_ratio, max_ratio), output_size)?,
            true,
        )),
        TransformSpec::ColorJitter {
            prob,
            brightness,
            contrast,
            saturation,
            hue,
        } => {
            let fire = rng.bernoulli(prob);
            if !fire {
                return Ok((img.clone(), false));
            }
            Ok((jitter_fired(img, rng, brightness, contrast, saturation, hue), true))
        }
        TransformSpec::GaussianBlur {
            prob,
            sigma_min,
            sigma_max,
        } => {
            let fire = rng.bernoulli(prob);
            if !fire {
                return Ok((img.clone(), false));
            }
            let sigma = rng.uniform(sigma_min, sigma_max);
            Ok((blur_with_sigma(img, sigma), true))
        }
        TransformSpec::Grayscale { prob } => gated(rng, prob, img, grayscale),
        TransformSpec::Solarize { prob, threshold } => gated(rng, prob, img, |i| solarize(i, threshold)),
        TransformSpec::HorizontalFlip { prob } => gated(rng, prob, img, horizontal_flip),
    }
}

fn gated(rng: &mut SampleRng, prob: f64, img: &Image, f: impl FnOnce(&Image) -> Image) -> Result<(Image, bool)> {
    if rng.bernoulli(prob) {
        Ok((f(img), true))
    } else {
        Ok((img.clone(), false))
    }
}

// ---------------------------------------------------------------------------
// random resized crop

/// Crop rectangle in source pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// One proposal of the crop sampler: area fraction and aspect ratio, both uniform.
pub fn draw_crop_proposal(rng: &mut SampleRng, min_scale: f64, max_scale: f64, ratio: (f64, f64)) -> (f64, f64) {
    let area = rng.uniform(min_scale, max_scale);
    let aspect = rng.uniform(ratio.0, ratio.1);
    (area, aspect)
}

/// Samples a crop window: up to [`CROP_ATTEMPTS`] proposals, then a center crop of
/// the largest window with the aspect ratio clamped into `ratio`.
pub fn sample_crop_window(
    height: usize,
    width: usize,
    rng: &mut SampleRng,
    min_scale: f64,
    max_scale: f64,
    ratio: (f64, f64),
) -> CropWindow {
    let area = (height * width) as f64;
    for _ in 0..CROP_ATTEMPTS {
        let (frac, aspect) = draw_crop_proposal(rng, min_scale, max_scale, ratio);
        let target = area * frac;
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w > 0 && h > 0 && w <= width && h <= height {
            let top = rng.below(height - h + 1);
            let left = rng.below(width - w + 1);
            return CropWindow {
                top,
                left,
                height: h,
                width: w,
            };
        }
    }
    let in_ratio = width as f64 / height as f64;
    let (h, w) = if in_ratio < ratio.0 {
        let w = width;
        (((w as f64) / ratio.0).round() as usize, w)
    } else if in_ratio > ratio.1 {
        let h = height;
        (h, ((h as f64) * ratio.1).round() as usize)
    } else {
        (height, width)
    };
    let (h, w) = (h.clamp(1, height), w.clamp(1, width));
    CropWindow {
        top: (height - h) / 2,
        left: (width - w) / 2,
        height: h,
        width: w,
    }
}

/// Crops a window of uniformly random relative area in `[min_scale, max_scale]`
/// and aspect ratio in `[3/4, 4/3]`, then resizes bilinearly to `out × out`.
pub fn random_resized_crop(
    img: &Image,
    rng: &mut SampleRng,
    min_scale: f64,
    max_scale: f64,
    out: usize,
) -> Result<Image> {
    random_resized_crop_with_ratio(
        img,
        rng,
        min_scale,
        max_scale,
        (DEFAULT_MIN_RATIO, DEFAULT_MAX_RATIO),
        out,
    )
}

pub fn random_resized_crop_with_ratio(
    img: &Image,
    rng: &mut SampleRng,
    min_scale: f64,
    max_scale: f64,
    ratio: (f64, f64),
    out: usize,
) -> Result<Image> {
    if !(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0) {
        return Err(Error::Config(format!(
            "crop scale range [{min_scale}, {max_scale}] must satisfy 0 < min <= max <= 1"
        )));
    }
    let window = sample_crop_window(img.height(), img.width(), rng, min_scale, max_scale, ratio);
    resize_window(img, window, out)
}

/// Bilinear resize of `window` to `out × out` (half-pixel centers, edge clamp).
pub fn resize_window(img: &Image, window: CropWindow, out: usize) -> Result<Image> {
    if out < super::image::MIN_SIDE {
        return Err(Error::Config(format!("output size {out} below minimum")));
    }
    let sy = window.height as f64 / out as f64;
    let sx = window.width as f64 / out as f64;
    let src = img.pixels();
    let w = img.width();
    let mut data = vec![0.0; out * out * 3];
    let coord = |d: usize, scale: f64, origin: usize, len: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (origin + i0, origin + i1, s - i0 as f64)
    };
    for y in 0..out {
        let (y0, y1, fy) = coord(y, sy, window.top, window.height);
        for x in 0..out {
            let (x0, x1, fx) = coord(x, sx, window.left, window.width);
            for c in 0..3 {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * 3 + c] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                data[(y * out + x) * 3 + c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Ok(Image::from_f64(out, out, &data))
}

// ---------------------------------------------------------------------------
// color jitter

fn luma(px: &[f64]) -> f64 {
    LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]
}

/// `v ← v · factor`, clamped.
pub fn adjust_brightness(img: &Image, factor: f64) -> Image {
    let d: Vec<f64> = img.to_f64().iter().map(|v| v * factor).collect();
    Image::from_f64(img.height(), img.width(), &d)
}

/// Blends with the image's mean luma: `v ← f·v + (1−f)·mean`.
pub fn adjust_contrast(img: &Image, factor: f64) -> Image {
    let d = img.to_f64();
    let mean = d.chunks_exact(3).map(luma).sum::<f64>() / (img.height() * img.width()) as f64;
    let out: Vec<f64> = d.iter().map(|v| factor * v + (1.0 - factor) * mean).collect();
    Image::from_f64(img.height(), img.width(), &out)
}

/// Blends each pixel with its own luma: `v ← f·v + (1−f)·gray`.
pub fn adjust_saturation(img: &Image, factor: f64) -> Image {
    let mut d = img.to_f64();
    for px in d.chunks_exact_mut(3) {
        let g = luma(px);
        px.iter_mut().for_each(|v| *v = factor * *v + (1.0 - factor) * g);
    }
    Image::from_f64(img.height(), img.width(), &d)
}

/// Rotates hue by `shift` turns of the hue circle (`shift ∈ [−0.5, 0.5]`).
pub fn adjust_hue(img: &Image, shift: f64) -> Image {
    let mut d = img.to_f64();
    for px in d.chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0] / 255.0, px[1] / 255.0, px[2] / 255.0);
        let h = (h + shift).rem_euclid(1.0);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        px[0] = r * 255.0;
        px[1] = g * 255.0;
        px[2] = b * 255.0;
    }
    Image::from_f64(img.height(), img.width(), &d)
}

/// RGB in `[0,1]` to HSV with hue in turns `[0,1)`.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, v)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Gated color jitter: with probability `prob`, applies brightness, contrast,
/// saturation and hue in a uniformly random order. Multiplicative factors are
/// uniform in `[max(0, 1−s), 1+s]`, the hue shift uniform in `[−s, s]`; a zero
/// strength disables that sub-jitter.
pub fn color_jitter(
    img: &Image,
    rng: &mut SampleRng,
    prob: f64,
    brightness: f64,
    contrast: f64,
    saturation: f64,
    hue: f64,
) -> Image {
    if !rng.bernoulli(prob) {
        return img.clone();
    }
    jitter_fired(img, rng, brightness, contrast, saturation, hue)
}

fn jitter_fired(img: &Image, rng: &mut SampleRng, brightness: f64, contrast: f64, saturation: f64, hue: f64) -> Image {
    let mut order = [0usize, 1, 2, 3];
    for i in (1..4).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let mut factor = |s: f64| -> Option<f64> { (s > 0.0).then(|| rng.uniform((1.0 - s).max(0.0), 1.0 + s)) };
    let fb = factor(brightness);
    let fc = factor(contrast);
    let fs = factor(saturation);
    let fh = (hue > 0.0).then(|| rng.uniform(-hue, hue));

    let mut out = img.clone();
    for op in order {
        out = match (op, fb, fc, fs, fh) {
            (0, Some(f), _, _, _) => adjust_brightness(&out, f),
            (1, _, Some(f), _, _) => adjust_contrast(&out, f),
            (2, _, _, Some(f), _) => adjust_saturation(&out, f),
            (3, _, _, _, Some(h)) => adjust_hue(&out, h),
            _ => out,
        };
    }
    out
}

// ---------------------------------------------------------------------------
// gaussian blur

/// Normalized 1-D Gaussian kernel of radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Mirror index repeating the edge sample (`-1 → 0`, `n → n−1`). Every source
/// pixel then appears twice per period, so a normalized kernel keeps the mass.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with symmetric padding at a fixed `sigma`.
///
/// The result is re-quantized with per-channel error carry along the raster
/// order, so channel sums are preserved to within one count.
pub fn blur_with_sigma(img: &Image, sigma: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let src = img.to_f64();
    let mut tmp = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let xx = reflect(x as isize + t as isize - r, w);
                    s += kv * src[(y * w + xx) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = s;
            }
        }
    }
    let mut out = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let yy = reflect(y as isize + t as isize - r, h);
                    s += kv * tmp[(yy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = s;
            }
        }
    }
    let mut carry = [0.0f64; 3];
    let mut pixels = vec![0u8; h * w * 3];
    for (i, v) in out.iter().enumerate() {
        let c = i % 3;
        let target = v + carry[c];
        let q = quantize(target);
        carry[c] = target - q as f64;
        pixels[i] = q;
    }
    Image::new(h, w, pixels).expect("blur preserves dimensions")
}

/// Gated blur with `σ ~ U[sigma_min, sigma_max]`.
pub fn gaussian_blur(img: &Image, rng: &mut SampleRng, prob: f64, sigma_min: f64, sigma_max: f64) -> Result<Image> {
    if !(sigma_min > 0.0 && sigma_min <= sigma_max) {
        return Err(Error::Config(format!(
            "blur sigma range [{sigma_min}, {sigma_max}] invalid"
        )));
    }
    if !rng.bernoulli(prob) {
        return Ok(img.clone());
    }
    let sigma = rng.uniform(sigma_min, sigma_max);
    Ok(blur_with_sigma(img, sigma))
}

// ---------------------------------------------------------------------------
// simple transforms

/// Luma replicated on all three channels.
pub fn grayscale(img: &Image) -> Image {
    let mut d = img.to_f64();
    for px in d.chunks_exact_mut(3) {
        let g = luma(px);
        px.iter_mut().for_each(|v| *v = g);
    }
    Image::from_f64(img.height(), img.width(), &d)
}

/// Values `>= threshold` become `255 − v`.
pub fn solarize(img: &Image, threshold: u8) -> Image {
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| if v >= threshold { 255 - v } else { v })
        .collect();
    Image::new(img.height(), img.width(), pixels).expect("same dims")
}

pub fn horizontal_flip(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.set(y, x, img.get(y, w - 1 - x));
        }
    }
    out
}

/// The gated simple transforms selectable by kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimpleTransform {
    Grayscale,
    Solarize { threshold: u8 },
    HorizontalFlip,
}

pub fn apply_simple_transform(kind: SimpleTransform, img: &Image, rng: &mut SampleRng, prob: f64) -> Image {
    if !rng.bernoulli(prob) {
        return img.clone();
    }
    match kind {
        SimpleTransform::Grayscale => grayscale(img),
        SimpleTransform::Solarize { threshold } => solarize(img, threshold),
        SimpleTransform::HorizontalFlip => horizontal_flip(img),
    }
}

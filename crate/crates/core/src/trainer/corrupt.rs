//! Image corruption operators with five-step severity tables.
//!
//! Nine kinds spanning noise, blur, and digital distortions. Every
//! operator is a pure function of (kind, severity, seed, image): the seed
//! drives a private generator, outputs are clamped back to [0, 1], and
//! severity tables only ever get harsher as the level rises.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    GaussianBlur,
    MotionBlur,
    Contrast,
    Brightness,
    Pixelate,
    JpegProxy,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 9] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::GaussianBlur,
        CorruptionKind::MotionBlur,
        CorruptionKind::Contrast,
        CorruptionKind::Brightness,
        CorruptionKind::Pixelate,
        CorruptionKind::JpegProxy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::GaussianBlur => "gaussian_blur",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Pixelate => "pixelate",
            CorruptionKind::JpegProxy => "jpeg_proxy",
        }
    }

    pub fn parse(s: &str) -> Result<CorruptionKind> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown corruption kind '{s}'")))
    }
}

/// A corruption choice: kind, severity 1-5 (5 strongest), and the seed for
/// its random draws. Kinds without randomness ignore the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u32,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u32) -> Result<CorruptionSpec> {
        if !(1..=5).contains(&severity) {
            return Err(Error::validation(format!(
                "severity must be 1-5, got {severity}"
            )));
        }
        Ok(CorruptionSpec { kind, severity, seed: 0 })
    }

    pub fn with_seed(mut self, seed: u64) -> CorruptionSpec {
        self.seed = seed;
        self
    }

    /// Parse "kind:severity", e.g. "gaussian_noise:5".
    pub fn parse(s: &str) -> Result<CorruptionSpec> {
        let (kind, sev) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("corruption '{s}' is not kind:severity")))?;
        let severity: u32 = sev
            .parse()
            .map_err(|_| Error::validation(format!("bad severity '{sev}' in '{s}'")))?;
        CorruptionSpec::new(CorruptionKind::parse(kind)?, severity)
    }

    /// The canonical "kind:severity" tag used in metadata and flags.
    pub fn tag(&self) -> String {
        format!("{}:{}", self.kind.name(), self.severity)
    }
}

// Severity tables, index 0 = severity 1. Contrast lists the retained
// contrast fraction, so it falls as severity rises; shot noise lists the
// photon budget, likewise falling. Everything else rises.
const GAUSSIAN_SIGMA: [f64; 5] = [0.04, 0.08, 0.12, 0.18, 0.26];
const SHOT_PHOTONS: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
const IMPULSE_FRACTION: [f64; 5] = [0.01, 0.03, 0.06, 0.10, 0.17];
const BLUR_SIGMA: [f64; 5] = [0.4, 0.6, 0.9, 1.3, 1.8];
const MOTION_LENGTH: [usize; 5] = [3, 5, 7, 9, 11];
const CONTRAST_KEEP: [f64; 5] = [0.75, 0.6, 0.45, 0.3, 0.15];
const BRIGHTNESS_SHIFT: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.3];
const PIXELATE_FACTOR: [usize; 5] = [2, 2, 3, 4, 6];
const JPEG_STEP: [f64; 5] = [10.0, 16.0, 26.0, 44.0, 72.0];

/// Apply a corruption to one grayscale image with pixels in [0, 1].
pub fn corrupt(image: &[f32], h: usize, w: usize, spec: &CorruptionSpec) -> Result<Vec<f32>> {
    if !(1..=5).contains(&spec.severity) {
        return Err(Error::validation(format!(
            "severity must be 1-5, got {}",
            spec.severity
        )));
    }
    if image.len() != h * w {
        return Err(Error::validation(format!(
            "image has {} pixels, expected {h}x{w}",
            image.len()
        )));
    }
    let i = (spec.severity - 1) as usize;
    let mut rng = SplitMix64::new(spec.seed);
    Ok(match spec.kind {
        CorruptionKind::GaussianNoise => gaussian_noise(image, GAUSSIAN_SIGMA[i], &mut rng),
        CorruptionKind::ShotNoise => shot_noise(image, SHOT_PHOTONS[i], &mut rng),
        CorruptionKind::ImpulseNoise => impulse_noise(image, IMPULSE_FRACTION[i], &mut rng),
        CorruptionKind::GaussianBlur => gaussian_blur(image, h, w, BLUR_SIGMA[i]),
        CorruptionKind::MotionBlur => motion_blur(image, h, w, MOTION_LENGTH[i]),
        CorruptionKind::Contrast => contrast(image, CONTRAST_KEEP[i]),
        CorruptionKind::Brightness => brightness(image, BRIGHTNESS_SHIFT[i]),
        CorruptionKind::Pixelate => pixelate(image, h, w, PIXELATE_FACTOR[i]),
        CorruptionKind::JpegProxy => jpeg_proxy(image, h, w, JPEG_STEP[i]),
    })
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

fn gaussian_noise(image: &[f32], sigma: f64, rng: &mut SplitMix64) -> Vec<f32> {
    image.iter().map(|&x| clamp01(f64::from(x) + sigma * rng.next_normal())).collect()
}

fn shot_noise(image: &[f32], photons: f64, rng: &mut SplitMix64) -> Vec<f32> {
    image
        .iter()
        .map(|&x| {
            let k = rng.next_poisson(f64::from(x) * photons);
            clamp01(k as f64 / photons)
        })
        .collect()
}

fn impulse_noise(image: &[f32], fraction: f64, rng: &mut SplitMix64) -> Vec<f32> {
    image
        .iter()
        .map(|&x| {
            if rng.next_f64() < fraction {
                if rng.next_f64() < 0.5 {
                    0.0
                } else {
                    1.0
                }
            } else {
                x
            }
        })
        .collect()
}

/// Separable convolution with replicated edges.
fn convolve_1d(image: &[f32], h: usize, w: usize, kernel: &[f64], horizontal: bool) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &kv) in kernel.iter().enumerate() {
                let o = k as isize - r;
                let (sy, sx) = if horizontal {
                    (y as isize, (x as isize + o).clamp(0, w as isize - 1))
                } else {
                    ((y as isize + o).clamp(0, h as isize - 1), x as isize)
                };
                acc += kv * f64::from(image[sy as usize * w + sx as usize]);
            }
            out[y * w + x] = clamp01(acc);
        }
    }
    out
}

fn gaussian_blur(image: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    let pass = convolve_1d(image, h, w, &kernel, true);
    convolve_1d(&pass, h, w, &kernel, false)
}

fn motion_blur(image: &[f32], h: usize, w: usize, len: usize) -> Vec<f32> {
    let kernel = vec![1.0 / len as f64; len];
    convolve_1d(image, h, w, &kernel, true)
}

fn contrast(image: &[f32], keep: f64) -> Vec<f32> {
    let mean: f64 = image.iter().map(|&v| f64::from(v)).sum::<f64>() / image.len() as f64;
    image.iter().map(|&x| clamp01((f64::from(x) - mean) * keep + mean)).collect()
}

fn brightness(image: &[f32], shift: f64) -> Vec<f32> {
    image.iter().map(|&x| clamp01(f64::from(x) + shift)).collect()
}

fn pixelate(image: &[f32], h: usize, w: usize, factor: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    let mut by = 0;
    while by < h {
        let bh = factor.min(h - by);
        let mut bx = 0;
        while bx < w {
            let bw = factor.min(w - bx);
            let mut acc = 0.0f64;
            for y in by..by + bh {
                for x in bx..bx + bw {
                    acc += f64::from(image[y * w + x]);
                }
            }
            let avg = (acc / (bh * bw) as f64) as f32;
            for y in by..by + bh {
                for x in bx..bx + bw {
                    out[y * w + x] = avg;
                }
            }
            bx += factor;
        }
        by += factor;
    }
    out
}

/// Orthonormal 8-point DCT-II basis, row u, column x.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = a * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
}

/// JPEG-style distortion: scale to [0, 255], pad to 8x8 blocks with edge
/// replication, quantize every block-DCT coefficient with a uniform step,
/// invert, crop.
fn jpeg_proxy(image: &[f32], h: usize, w: usize, step: f64) -> Vec<f32> {
    let c = dct_basis();
    let ph = h.div_ceil(8) * 8;
    let pw = w.div_ceil(8) * 8;
    let mut padded = vec![0.0f64; ph * pw];
    for y in 0..ph {
        for x in 0..pw {
            padded[y * pw + x] = 255.0 * f64::from(image[y.min(h - 1) * w + x.min(w - 1)]);
        }
    }
    for by in (0..ph).step_by(8) {
        for bx in (0..pw).step_by(8) {
            let mut block = [[0.0f64; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = padded[(by + y) * pw + bx + x];
                }
            }
            // coeffs = C * block * C^T, quantized, then C^T * coeffs * C.
            let mut tmp = [[0.0f64; 8]; 8];
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|y| c[u][y] * block[y][x]).sum();
                }
            }
            let mut coef = [[0.0f64; 8]; 8];
            for u in 0..8 {
                for v in 0..8 {
                    coef[u][v] = (0..8).map(|x| tmp[u][x] * c[v][x]).sum();
                    coef[u][v] = (coef[u][v] / step).round() * step;
                }
            }
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|v| coef[u][v] * c[v][x]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    padded[(by + y) * pw + bx + x] = (0..8).map(|u| c[u][y] * tmp[u][x]).sum();
                }
            }
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = clamp01(padded[y * pw + x] / 255.0);
        }
    }
    out
}

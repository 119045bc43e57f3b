//! Procedural grayscale datasets and an IDX file loader.
//!
//! Two synthetic datasets draw the same five glyph classes (disk,
//! horizontal bar, vertical bar, diagonal stroke, ring) under disjoint
//! parameter regimes: synthA uses bright, thick, center-heavy glyphs while
//! synthB uses dimmer, thinner, larger-jitter ones. Same task family,
//! genuine domain gap. Labels cycle `i mod C`, so class counts per set
//! never differ by more than one.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

pub const CLASS_COUNT: usize = 5;
pub const IMAGE_SIDE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetId {
    SynthA,
    SynthB,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::SynthA => "synthA",
            DatasetId::SynthB => "synthB",
        }
    }

    pub fn parse(s: &str) -> Result<DatasetId> {
        match s {
            "synthA" => Ok(DatasetId::SynthA),
            "synthB" => Ok(DatasetId::SynthB),
            other => Err(Error::validation(format!(
                "unknown dataset '{other}' (expected synthA or synthB)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A set of same-sized grayscale images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub height: usize,
    pub width: usize,
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

struct Regime {
    bg_lo: f64,
    bg_hi: f64,
    fg_lo: f64,
    fg_hi: f64,
    jitter: f64,
    center: (f64, f64),
    disk_r: (f64, f64),
    bar_half_th: (f64, f64),
    bar_half_len: (f64, f64),
    diag_half_th: (f64, f64),
    ring_outer: (f64, f64),
    ring_gap: (f64, f64),
    noise: f64,
}

const REGIME_A: Regime = Regime {
    bg_lo: 0.05,
    bg_hi: 0.13,
    fg_lo: 0.62,
    fg_hi: 0.85,
    jitter: 4.0,
    center: (14.0, 14.0),
    disk_r: (2.6, 4.2),
    bar_half_th: (0.8, 1.4),
    bar_half_len: (7.0, 11.0),
    diag_half_th: (0.7, 1.1),
    ring_outer: (3.4, 5.0),
    ring_gap: (1.2, 1.8),
    noise: 0.03,
};

const REGIME_B: Regime = Regime {
    bg_lo: 0.0,
    bg_hi: 0.05,
    fg_lo: 0.55,
    fg_hi: 0.7,
    jitter: 5.0,
    center: (13.0, 15.0),
    disk_r: (2.2, 3.6),
    bar_half_th: (0.6, 1.1),
    bar_half_len: (11.0, 13.5),
    diag_half_th: (0.5, 1.0),
    ring_outer: (2.8, 4.4),
    ring_gap: (1.0, 1.6),
    noise: 0.04,
};

/// Fraction of the fg-bg contrast removed inside a ring's core. Kept well
/// above the pixel noise so rings are cleanly separable from disks, but
/// small enough that the core is what heavy corruption erases first.
const RING_CORE_DIM: f64 = 0.3;

/// Draw `n` images of the id's regime. Deterministic in every argument;
/// the per-image stream is keyed by (seed, id, split, index), so a longer
/// set extends a shorter one rather than reshuffling it.
pub fn generate_dataset(id: DatasetId, split: Split, n: usize, seed: u64) -> LabeledSet {
    assert!(n >= CLASS_COUNT, "need at least one image per class");
    let regime = match id {
        DatasetId::SynthA => &REGIME_A,
        DatasetId::SynthB => &REGIME_B,
    };
    let tag = format!("{}/{}", id.name(), split.name());
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = SplitMix64::new(derive_seed(seed, &tag, i as u64));
        let label = (i % CLASS_COUNT) as u8;
        images.push(draw_glyph(regime, label, &mut rng));
        labels.push(label);
    }
    LabeledSet { height: IMAGE_SIDE, width: IMAGE_SIDE, images, labels }
}

fn draw_glyph(r: &Regime, label: u8, rng: &mut SplitMix64) -> Vec<f32> {
    let bg = rng.range_f64(r.bg_lo, r.bg_hi);
    let fg = rng.range_f64(r.fg_lo, r.fg_hi);
    let cy = r.center.0 + rng.range_f64(-r.jitter, r.jitter);
    let cx = r.center.1 + rng.range_f64(-r.jitter, r.jitter);

    // Glyph shading over (dy, dx) offsets from the jittered center:
    // returns the pixel base value before noise.
    let shade: Box<dyn Fn(f64, f64) -> f64> = match label {
        0 => {
            let rad = rng.range_f64(r.disk_r.0, r.disk_r.1);
            Box::new(move |dy, dx| if dy * dy + dx * dx <= rad * rad { fg } else { bg })
        }
        1 => {
            let th = rng.range_f64(r.bar_half_th.0, r.bar_half_th.1);
            let len = rng.range_f64(r.bar_half_len.0, r.bar_half_len.1);
            Box::new(move |dy, dx| if dy.abs() <= th && dx.abs() <= len { fg } else { bg })
        }
        2 => {
            let th = rng.range_f64(r.bar_half_th.0, r.bar_half_th.1);
            let len = rng.range_f64(r.bar_half_len.0, r.bar_half_len.1);
            Box::new(move |dy, dx| if dx.abs() <= th && dy.abs() <= len { fg } else { bg })
        }
        3 => {
            let th = rng.range_f64(r.diag_half_th.0, r.diag_half_th.1);
            let len = rng.range_f64(r.bar_half_len.0, r.bar_half_len.1);
            // Main-diagonal stroke: |dy - dx| measures distance from the
            // diagonal line scaled by sqrt(2).
            Box::new(move |dy, dx| {
                if (dy - dx).abs() <= th * std::f64::consts::SQRT_2
                    && dy.abs() <= len
                    && dx.abs() <= len
                {
                    fg
                } else {
                    bg
                }
            })
        }
        _ => {
            // Ring: a disk whose core is dimmed only slightly toward the
            // background. The faint core is the sole cue separating rings
            // from same-sized disks, so the class pair hinges on a
            // low-contrast, high-frequency detail.
            let outer = rng.range_f64(r.ring_outer.0, r.ring_outer.1);
            let inner = outer - rng.range_f64(r.ring_gap.0, r.ring_gap.1);
            let core = fg - RING_CORE_DIM * (fg - bg);
            Box::new(move |dy, dx| {
                let d2 = dy * dy + dx * dx;
                if d2 > outer * outer {
                    bg
                } else if d2 > inner * inner {
                    fg
                } else {
                    core
                }
            })
        }
    };

    let mut img = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let v = shade(dy, dx) + rng.range_f64(-r.noise, r.noise);
            img.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    img
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    let end = at + 4;
    if end > bytes.len() {
        return Err(Error::format(format!("IDX file truncated reading {what}")));
    }
    Ok(u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]))
}

/// Load a labeled set from a pair of IDX files (big-endian magic plus
/// dimension sizes, then raw bytes). Pixels are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledSet> {
    let img_bytes =
        fs::read(images_path).map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let lbl_bytes =
        fs::read(labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    let magic = read_u32_be(&img_bytes, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad IDX image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let n = read_u32_be(&img_bytes, 4, "image count")? as usize;
    let h = read_u32_be(&img_bytes, 8, "image height")? as usize;
    let w = read_u32_be(&img_bytes, 12, "image width")? as usize;
    let need = 16 + n * h * w;
    if img_bytes.len() < need {
        return Err(Error::format(format!(
            "IDX image file truncated: {} bytes, need {need}",
            img_bytes.len()
        )));
    }

    let magic = read_u32_be(&lbl_bytes, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad IDX label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let ln = read_u32_be(&lbl_bytes, 4, "label count")? as usize;
    if ln != n {
        return Err(Error::format(format!(
            "IDX count mismatch: {n} images but {ln} labels"
        )));
    }
    if lbl_bytes.len() < 8 + ln {
        return Err(Error::format(format!(
            "IDX label file truncated: {} bytes, need {}",
            lbl_bytes.len(),
            8 + ln
        )));
    }

    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let at = 16 + i * h * w;
        images.push(img_bytes[at..at + h * w].iter().map(|&b| f32::from(b) / 255.0).collect());
    }
    let labels = lbl_bytes[8..8 + ln].to_vec();
    Ok(LabeledSet { height: h, width: w, images, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(DatasetId::SynthA, Split::Train, 25, 42);
        let b = generate_dataset(DatasetId::SynthA, Split::Train, 25, 42);
        assert_eq!(a, b);
        let c = generate_dataset(DatasetId::SynthA, Split::Train, 25, 43);
        assert_ne!(a, c);
        let d = generate_dataset(DatasetId::SynthA, Split::Test, 25, 42);
        assert_ne!(a, d, "splits draw from separate streams");
    }

    #[test]
    fn longer_set_extends_a_shorter_one() {
        let short = generate_dataset(DatasetId::SynthB, Split::Train, 10, 7);
        let long = generate_dataset(DatasetId::SynthB, Split::Train, 20, 7);
        assert_eq!(short.images[..], long.images[..10]);
    }

    #[test]
    fn class_balance_is_within_one() {
        for n in [25usize, 27, 99] {
            let set = generate_dataset(DatasetId::SynthA, Split::Train, n, 1);
            let mut counts = [0usize; CLASS_COUNT];
            for &l in &set.labels {
                counts[l as usize] += 1;
            }
            let lo = n / CLASS_COUNT;
            for c in counts {
                assert!(c == lo || c == lo + 1, "n={n} counts={counts:?}");
            }
        }
    }

    #[test]
    fn pixels_stay_in_unit_range_and_regimes_differ() {
        let a = generate_dataset(DatasetId::SynthA, Split::Train, 30, 9);
        let b = generate_dataset(DatasetId::SynthB, Split::Train, 30, 9);
        for set in [&a, &b] {
            for img in &set.images {
                assert_eq!(img.len(), IMAGE_SIDE * IMAGE_SIDE);
                assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
        // synthA draws brighter, thicker glyphs; its mean intensity should
        // be clearly higher than synthB's over a sample.
        let mean = |s: &LabeledSet| -> f64 {
            let total: f64 = s.images.iter().flatten().map(|&v| f64::from(v)).sum();
            total / (s.images.len() * IMAGE_SIDE * IMAGE_SIDE) as f64
        };
        assert!(mean(&a) > mean(&b) + 0.05, "{} vs {}", mean(&a), mean(&b));
    }

    fn write_idx_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        // Two 2x3 images and two labels, crafted byte by byte.
        let imgs = dir.join("imgs.idx");
        let lbls = dir.join("lbls.idx");
        let mut f = fs::File::create(&imgs).unwrap();
        f.write_all(&0x0000_0803u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&3u32.to_be_bytes()).unwrap();
        f.write_all(&[0, 51, 102, 153, 204, 255]).unwrap();
        f.write_all(&[255, 204, 153, 102, 51, 0]).unwrap();
        let mut f = fs::File::create(&lbls).unwrap();
        f.write_all(&0x0000_0801u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&[3, 1]).unwrap();
        (imgs, lbls)
    }

    #[test]
    fn idx_fixture_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = write_idx_fixture(dir.path());
        let set = load_idx(&imgs, &lbls).unwrap();
        assert_eq!((set.height, set.width), (2, 3));
        assert_eq!(set.labels, vec![3, 1]);
        assert_eq!(
            set.images[0],
            vec![0.0, 51.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0, 204.0 / 255.0, 1.0]
        );
        assert_eq!(set.images[1][0], 1.0);
        assert_eq!(set.images[1][5], 0.0);
    }

    #[test]
    fn idx_bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = write_idx_fixture(dir.path());
        let mut bytes = fs::read(&imgs).unwrap();
        bytes[3] = 0x99;
        fs::write(&imgs, bytes).unwrap();
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.is_io_or_format(), "{err}");
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn idx_count_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = write_idx_fixture(dir.path());
        let mut bytes = fs::read(&lbls).unwrap();
        bytes[7] = 3; // claim three labels
        bytes.push(0);
        fs::write(&lbls, bytes).unwrap();
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("mismatch"), "{err}");
    }

    #[test]
    fn idx_truncation_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, lbls) = write_idx_fixture(dir.path());
        let bytes = fs::read(&imgs).unwrap();
        fs::write(&imgs, &bytes[..bytes.len() - 2]).unwrap();
        let err = load_idx(&imgs, &lbls).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}

//! Symmetric per-tensor integer quantization for signatures.
//!
//! Each payload tensor gets one positive scale `s = max|x| / q_max` with
//! `q_max = 2^(bits-1) - 1`; elements become
//! `clamp(round(x / s), -q_max, q_max)` with halves rounded away from zero.
//! Because the scale is derived from the max, no element clips, and every
//! element reconstructs to within `s / 2` of its original value.
//!
//! The scale rides along as a `<name>#scale` float32 scalar tensor right
//! after its payload tensor. An all-zero tensor stores scale 0 and
//! dequantizes to exact zeros. Quantization math runs in f64 against the
//! stored f32 scale, and the half-scale reconstruction bound is enforced on
//! the stored float32 values, not just in exact arithmetic: codes whose
//! reconstruction rounds a hair past the boundary step to the neighbouring
//! code, and in the rare degenerate alignment where no code works the
//! stored scale slides by an ulp or two (see [`quantize`]).

use crate::checkpoint::{Checkpoint, SignatureFile, META_QUANT_BITS, SCALE_SUFFIX};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

/// Largest representable magnitude for a signed `bits`-wide symmetric code.
fn q_max(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Encode one tensor against a fixed stored scale. Returns the codes and
/// whether every element's float32 reconstruction lands within `scale / 2`
/// of the original.
fn encode(data: &[f32], scale: f32, qmax: i64) -> (Vec<f32>, bool) {
    let s = f64::from(scale);
    let qlim = qmax as f64;
    let mut clean = true;
    let codes = data
        .iter()
        .map(|&x| {
            let xf = f64::from(x);
            let mut q = (xf / s).round().clamp(-qlim, qlim);
            // The reconstruction is stored as f32. When x sits almost
            // exactly halfway between two codes, that final rounding can
            // push the error a hair past s/2; stepping one code toward the
            // sample restores the bound whenever the neighbour reconstructs
            // strictly closer.
            let realized = |q: f64| (f64::from((q * s) as f32) - xf).abs();
            if realized(q) > s / 2.0 {
                let step = if xf > q * s { 1.0 } else { -1.0 };
                let q2 = (q + step).clamp(-qlim, qlim);
                if realized(q2) < realized(q) {
                    q = q2;
                }
            }
            clean &= realized(q) <= s / 2.0;
            q as f32
        })
        .collect();
    (codes, clean)
}

/// Pick the stored scale for a tensor with peak magnitude `amax > 0`.
///
/// The correctly rounded `amax / q_max` almost always works, but a tensor
/// can contain an element exactly midway between that scale's two nearest
/// float32 reconstructions, leaving both a shade past the half-scale bound.
/// The scale's own storage rounding is the remaining degree of freedom, so
/// when that degenerate alignment shows up the scale slides up to two ulps
/// in either direction until every element reconstructs within bound. The
/// first candidate that works wins, which keeps the choice deterministic
/// and leaves the usual case bit-identical to plain rounding.
fn choose_scale(data: &[f32], amax: f32, qmax: i64) -> (f32, Vec<f32>) {
    let nearest = (f64::from(amax) / qmax as f64) as f32;
    let bits = nearest.to_bits();
    let candidates = [
        nearest,
        f32::from_bits(bits + 1),
        f32::from_bits(bits.wrapping_sub(1)),
        f32::from_bits(bits + 2),
        f32::from_bits(bits.wrapping_sub(2)),
    ];
    let mut fallback = None;
    for cand in candidates {
        if !cand.is_finite() || cand <= 0.0 {
            continue;
        }
        let (codes, clean) = encode(data, cand, qmax);
        if clean {
            return (cand, codes);
        }
        if fallback.is_none() {
            fallback = Some((cand, codes));
        }
    }
    fallback.expect("nearest scale candidate is finite and positive")
}

/// Quantize an unquantized signature to 8 or 16 bits.
pub fn quantize(sig: &SignatureFile, bits: u32) -> Result<SignatureFile> {
    if bits != 8 && bits != 16 {
        return Err(Error::validation(format!(
            "quantization width must be 8 or 16 bits, got {bits}"
        )));
    }
    if sig.quant_bits() != 0 {
        return Err(Error::validation(format!(
            "signature is already quantized to {} bits",
            sig.quant_bits()
        )));
    }
    let qmax = q_max(bits);
    let dtype = if bits == 8 { DType::I8 } else { DType::I16 };
    let src = sig.checkpoint();

    let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(src.tensors().len() * 2);
    for (name, t) in src.tensors() {
        let mut amax = 0.0f32;
        for (i, &v) in t.data().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "tensor '{name}' has non-finite value {v} at index {i}"
                )));
            }
            amax = amax.max(v.abs());
        }
        let (scale, quantized) = if amax == 0.0 {
            (0.0f32, vec![0.0; t.element_count()])
        } else {
            choose_scale(t.data(), amax, qmax)
        };
        tensors.push((
            name.clone(),
            Tensor::new(dtype, t.shape().to_vec(), quantized)?,
        ));
        tensors.push((format!("{name}{SCALE_SUFFIX}"), Tensor::scalar(scale)));
    }

    let mut metadata = src.metadata.clone();
    metadata.insert(META_QUANT_BITS.to_string(), bits.to_string());
    SignatureFile::from_checkpoint(Checkpoint::new(
        tensors,
        src.layer_order().to_vec(),
        metadata,
    )?)
}

/// Reverse quantization: `x = q * scale` in f64, rounded to f32 once. Scale
/// tensors are dropped and the payload returns to float32.
pub fn dequantize(sig: &SignatureFile) -> Result<SignatureFile> {
    if sig.quant_bits() == 0 {
        return Err(Error::validation(
            "quant_bits is 0: signature is not quantized",
        ));
    }
    let src = sig.checkpoint();
    let mut tensors = Vec::new();
    for (name, t) in src.tensors() {
        if name.ends_with(SCALE_SUFFIX) {
            continue;
        }
        let scale_name = format!("{name}{SCALE_SUFFIX}");
        let scale = src
            .get(&scale_name)
            .ok_or_else(|| {
                Error::format(format!("tensor '{name}' is missing its '{scale_name}' companion"))
            })?
            .data()[0];
        let s = f64::from(scale);
        let data: Vec<f32> = t.data().iter().map(|&q| (f64::from(q) * s) as f32).collect();
        tensors.push((name.clone(), Tensor::f32(t.shape().to_vec(), data)?));
    }
    let mut metadata = src.metadata.clone();
    metadata.insert(META_QUANT_BITS.to_string(), "0".to_string());
    SignatureFile::from_checkpoint(Checkpoint::new(
        tensors,
        src.layer_order().to_vec(),
        metadata,
    )?)
}

/// One line of a storage comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageRow {
    pub configuration: String,
    pub bytes: u64,
    pub ratio: f64,
}

/// Storage cost of serving the standard model plus the given signatures, at
/// each quantization level, against the full-copy ensemble that keeps one
/// float32 model per signature. Sizes count tensor payloads at declared
/// widths; every row's ratio is against the standard model alone.
pub fn storage_report(std_model: &Checkpoint, sigs: &[&SignatureFile]) -> Vec<StorageRow> {
    let std_bytes = std_model.storage_bytes();
    let ratio = |bytes: u64| bytes as f64 / std_bytes as f64;

    let mut f32_bytes = 0u64;
    let mut i16_bytes = 0u64;
    let mut i8_bytes = 0u64;
    for sig in sigs {
        for (_, t) in sig.payload_tensors() {
            let n = t.element_count() as u64;
            f32_bytes += 4 * n;
            i16_bytes += 2 * n + 4;
            i8_bytes += n + 4;
        }
    }
    let ensemble = std_bytes * (1 + sigs.len() as u64);

    vec![
        StorageRow {
            configuration: "standard".to_string(),
            bytes: std_bytes,
            ratio: 1.0,
        },
        StorageRow {
            configuration: "standard+signatures@f32".to_string(),
            bytes: std_bytes + f32_bytes,
            ratio: ratio(std_bytes + f32_bytes),
        },
        StorageRow {
            configuration: "standard+signatures@16bit".to_string(),
            bytes: std_bytes + i16_bytes,
            ratio: ratio(std_bytes + i16_bytes),
        },
        StorageRow {
            configuration: "standard+signatures@8bit".to_string(),
            bytes: std_bytes + i8_bytes,
            ratio: ratio(std_bytes + i8_bytes),
        },
        StorageRow {
            configuration: "ensemble-full-copies".to_string(),
            bytes: ensemble,
            ratio: ratio(ensemble),
        },
    ]
}

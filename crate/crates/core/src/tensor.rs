//! Tensors and the flat-vector arithmetic everything else is built on.
//!
//! All element data lives in memory as `f32` regardless of storage dtype:
//! half floats are widened on construction, 8- and 16-bit integers are held
//! as exactly-representable floats. Constructors validate that the values
//! actually fit the declared dtype, which is what makes serialization
//! round-trips bit-exact.
//!
//! Reductions (`dot`, `l2_norm`, `cosine`) accumulate in f64, sequentially,
//! so results are identical across runs and platforms for identical inputs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    /// Storage-only half float; widened to f32 on load.
    F16,
    I8,
    I16,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F16 => "F16",
            DType::I8 => "I8",
            DType::I16 => "I16",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        match s {
            "F32" => Some(DType::F32),
            "F16" => Some(DType::F16),
            "I8" => Some(DType::I8),
            "I16" => Some(DType::I16),
            _ => None,
        }
    }

    /// Bytes per element on disk.
    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 | DType::I16 => 2,
            DType::I8 => 1,
        }
    }
}

/// Widen a half-float bit pattern to f32. Exact for every input.
pub fn f16_to_f32(bits: u16) -> f32 {
    let sign = u32::from(bits >> 15) << 31;
    let exp = u32::from(bits >> 10) & 0x1f;
    let mant = u32::from(bits) & 0x3ff;
    let out = if exp == 0x1f {
        sign | 0x7f80_0000 | (mant << 13)
    } else if exp == 0 {
        if mant == 0 {
            sign
        } else {
            // Subnormal: value is mant * 2^-24. Renormalize, putting the
            // leading 1 at bit 10 where the mask strips it.
            let shift = mant.leading_zeros() - 21;
            let frac = (mant << shift) & 0x3ff;
            sign | ((113 - shift) << 23) | (frac << 13)
        }
    } else {
        sign | ((exp + 112) << 23) | (mant << 13)
    };
    f32::from_bits(out)
}

/// Narrow f32 to the nearest half float, ties to even. Overflow becomes
/// infinity, NaN becomes the canonical quiet NaN.
pub fn f16_from_f32(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xff) as i32;
    let mant = bits & 0x007f_ffff;
    if exp == 0xff {
        return sign | 0x7c00 | if mant != 0 { 0x0200 } else { 0 };
    }
    let e = exp - 127;
    if e > 15 {
        return sign | 0x7c00;
    }
    if e >= -14 {
        let mut out = (((e + 15) as u32) << 10) | (mant >> 13);
        let rem = mant & 0x1fff;
        if rem > 0x1000 || (rem == 0x1000 && out & 1 == 1) {
            out += 1; // carry into the exponent rounds up a binade, which is correct
        }
        return sign | out as u16;
    }
    if e >= -25 && exp != 0 {
        // Subnormal half: make the implicit bit explicit, then drop enough
        // mantissa bits to land in the 10-bit field with exponent -14.
        let m = mant | 0x0080_0000;
        let shift = (-1 - e) as u32;
        let mut out = m >> shift;
        let rem = m & ((1 << shift) - 1);
        let halfway = 1u32 << (shift - 1);
        if rem > halfway || (rem == halfway && out & 1 == 1) {
            out += 1;
        }
        return sign | out as u16;
    }
    sign
}

/// True when `x` survives a round trip through half precision unchanged.
pub fn f16_representable(x: f32) -> bool {
    f16_to_f32(f16_from_f32(x)).to_bits() == x.to_bits()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dtype: DType,
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, validating shape and that every value fits `dtype`.
    pub fn new(dtype: DType, shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        if shape.is_empty() {
            return Err(Error::validation("tensor shape must have at least one dimension"));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::validation(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let count: usize = shape.iter().product();
        if data.len() != count {
            return Err(Error::DimensionMismatch {
                context: format!("tensor data for shape {shape:?}"),
                expected: count,
                got: data.len(),
            });
        }
        match dtype {
            DType::F32 => {}
            DType::F16 => {
                for (i, &v) in data.iter().enumerate() {
                    if !f16_representable(v) {
                        return Err(Error::validation(format!(
                            "value {v} at index {i} is not representable in F16"
                        )));
                    }
                }
            }
            DType::I8 => validate_int(&data, -128.0, 127.0, "I8")?,
            DType::I16 => validate_int(&data, -32768.0, 32767.0, "I16")?,
        }
        Ok(Tensor { dtype, shape, data })
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        Tensor::new(DType::F32, shape, data)
    }

    /// F32 scalar, used for quantization scales.
    pub fn scalar(value: f32) -> Tensor {
        Tensor { dtype: DType::F32, shape: vec![1], data: vec![value] }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// On-disk payload size.
    pub fn byte_len(&self) -> usize {
        self.element_count() * self.dtype.width()
    }

    /// Serialize the payload little-endian, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        match self.dtype {
            DType::F32 => {
                for &v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            DType::F16 => {
                for &v in &self.data {
                    out.extend_from_slice(&f16_from_f32(v).to_le_bytes());
                }
            }
            DType::I8 => {
                for &v in &self.data {
                    out.push((v as i8) as u8);
                }
            }
            DType::I16 => {
                for &v in &self.data {
                    out.extend_from_slice(&(v as i16).to_le_bytes());
                }
            }
        }
        out
    }

    /// Decode a payload previously produced by [`Tensor::to_le_bytes`].
    pub fn from_le_bytes(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Tensor> {
        let count: usize = shape.iter().product();
        if bytes.len() != count * dtype.width() {
            return Err(Error::format(format!(
                "payload of {} bytes does not match shape {shape:?} with dtype {}",
                bytes.len(),
                dtype.name()
            )));
        }
        let data: Vec<f32> = match dtype {
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            DType::F16 => bytes
                .chunks_exact(2)
                .map(|c| f16_to_f32(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
            DType::I8 => bytes.iter().map(|&b| f32::from(b as i8)).collect(),
            DType::I16 => bytes
                .chunks_exact(2)
                .map(|c| f32::from(i16::from_le_bytes([c[0], c[1]])))
                .collect(),
        };
        Tensor::new(dtype, shape, data)
    }

    /// Same name, shape, and dtype; says nothing about values.
    pub fn compatible_with(&self, other: &Tensor) -> bool {
        self.dtype == other.dtype && self.shape == other.shape
    }
}

fn validate_int(data: &[f32], lo: f32, hi: f32, dtype: &str) -> Result<()> {
    for (i, &v) in data.iter().enumerate() {
        if v.fract() != 0.0 || !(lo..=hi).contains(&v) || !v.is_finite() {
            return Err(Error::validation(format!(
                "value {v} at index {i} is not a valid {dtype} element"
            )));
        }
    }
    Ok(())
}

/// One named span inside a [`FlatVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub len: usize,
}

/// A group of tensors concatenated into one vector, remembering where each
/// tensor's elements live so the operation can be undone.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatVector {
    pub values: Vec<f32>,
    pub segments: Vec<Segment>,
}

impl FlatVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenate tensors in the given order. The order is the caller's
/// contract; checkpoints always pass tensors in header order so the same
/// model flattens identically everywhere.
pub fn flatten(tensors: &[(&str, &Tensor)]) -> FlatVector {
    let total: usize = tensors.iter().map(|(_, t)| t.element_count()).sum();
    let mut values = Vec::with_capacity(total);
    let mut segments = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        values.extend_from_slice(t.data());
        segments.push(Segment { name: (*name).to_string(), len: t.element_count() });
    }
    FlatVector { values, segments }
}

/// Rebuild tensors from a flat vector using per-name shape and dtype
/// templates. Segment names and lengths must match the templates in order.
pub fn unflatten(flat: &FlatVector, templates: &[(&str, &Tensor)]) -> Result<Vec<Tensor>> {
    if flat.segments.len() != templates.len() {
        return Err(Error::DimensionMismatch {
            context: "unflatten segment count".to_string(),
            expected: templates.len(),
            got: flat.segments.len(),
        });
    }
    let mut out = Vec::with_capacity(templates.len());
    let mut offset = 0;
    for (seg, (name, proto)) in flat.segments.iter().zip(templates) {
        if seg.name != *name {
            return Err(Error::validation(format!(
                "unflatten segment '{}' does not match template '{name}'",
                seg.name
            )));
        }
        if seg.len != proto.element_count() {
            return Err(Error::DimensionMismatch {
                context: format!("unflatten segment '{}'", seg.name),
                expected: proto.element_count(),
                got: seg.len,
            });
        }
        let data = flat.values[offset..offset + seg.len].to_vec();
        out.push(Tensor::new(proto.dtype(), proto.shape().to_vec(), data)?);
        offset += seg.len;
    }
    if offset != flat.values.len() {
        return Err(Error::DimensionMismatch {
            context: "unflatten total length".to_string(),
            expected: flat.values.len(),
            got: offset,
        });
    }
    Ok(out)
}

fn check_same_len(context: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Inner product with sequential f64 accumulation.
pub fn dot(a: &[f32], b: &[f32]) -> Result<f64> {
    check_same_len("dot", a.len(), b.len())?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    Ok(acc)
}

/// Euclidean norm with f64 accumulation.
pub fn l2_norm(a: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &x in a {
        acc += f64::from(x) * f64::from(x);
    }
    acc.sqrt()
}

/// y + alpha * x. alpha == 0 returns y bit-exactly (no sign-of-zero churn).
pub fn axpy(alpha: f32, x: &[f32], y: &[f32]) -> Result<Vec<f32>> {
    check_same_len("axpy", y.len(), x.len())?;
    if alpha == 0.0 {
        return Ok(y.to_vec());
    }
    Ok(y.iter().zip(x).map(|(&yi, &xi)| yi + alpha * xi).collect())
}

/// Cosine similarity; 0.0 when either argument has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    check_same_len("cosine", a.len(), b.len())?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(a, b)? / (na * nb))
}

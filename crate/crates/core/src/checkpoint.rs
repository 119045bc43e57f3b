//! The on-disk checkpoint container.
//!
//! Layout: bytes 0-7 hold a little-endian u64 header length `H`; bytes
//! 8..8+H hold a UTF-8 JSON object mapping each tensor name to
//! `{"dtype": ..., "shape": [...], "data_offsets": [begin, end]}` plus a
//! `"__metadata__"` string map; tensor payloads follow, concatenated
//! little-endian row-major in header key order with no padding, offsets
//! relative to the end of the header.
//!
//! Serialization is canonical: the same checkpoint always produces the same
//! bytes. Metadata keys are written sorted, tensor entries in checkpoint
//! order, and no floats ever appear in the header. The ordered list of layer
//! groups rides inside `__metadata__` under `layer_order`, comma-separated.
//!
//! Both model checkpoints (`.ckpt`) and signatures (`.rws`) use this
//! container; a signature is a checkpoint with required metadata keys,
//! validated by [`SignatureFile`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{flatten, DType, FlatVector, Tensor};

/// Reserved metadata key carrying the layer-group order.
const LAYER_ORDER_KEY: &str = "layer_order";

/// Suffix marking a quantization-scale companion tensor.
pub const SCALE_SUFFIX: &str = "#scale";

/// Required signature metadata keys.
pub const META_CORRUPTION: &str = "corruption";
pub const META_MODE: &str = "mode";
pub const META_LAYERS_KEPT: &str = "layers_kept";
pub const META_QUANT_BITS: &str = "quant_bits";
pub const META_SOURCE_FINGERPRINT: &str = "source_fingerprint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<(String, Tensor)>,
    layer_order: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(
        tensors: Vec<(String, Tensor)>,
        layer_order: Vec<String>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Checkpoint> {
        let ckpt = Checkpoint { tensors, layer_order, metadata };
        ckpt.validate()?;
        Ok(ckpt)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_order.is_empty() {
            return Err(Error::validation("layer_order must not be empty"));
        }
        let mut seen_groups = std::collections::HashSet::new();
        for g in &self.layer_order {
            if g.is_empty() {
                return Err(Error::validation("layer group names must not be empty"));
            }
            if g.contains(',') {
                return Err(Error::validation(format!(
                    "layer group '{g}' must not contain a comma"
                )));
            }
            if !seen_groups.insert(g) {
                return Err(Error::validation(format!("duplicate layer group '{g}'")));
            }
        }
        if self.metadata.contains_key(LAYER_ORDER_KEY) {
            return Err(Error::validation(
                "metadata key 'layer_order' is reserved for the group list",
            ));
        }
        let mut seen_names = std::collections::HashSet::new();
        for (name, _) in &self.tensors {
            if name.is_empty() {
                return Err(Error::validation("tensor names must not be empty"));
            }
            if name == "__metadata__" {
                return Err(Error::validation("tensor name '__metadata__' is reserved"));
            }
            if !seen_names.insert(name) {
                return Err(Error::validation(format!("duplicate tensor name '{name}'")));
            }
            self.group_of(name)?;
        }
        Ok(())
    }

    /// The unique layer group whose `<group>.` prefix matches `name`.
    pub fn group_of(&self, name: &str) -> Result<&str> {
        let mut found = None;
        for g in &self.layer_order {
            if name.len() > g.len() && name.starts_with(g.as_str()) && name.as_bytes()[g.len()] == b'.' {
                if let Some(first) = found {
                    return Err(Error::validation(format!(
                        "tensor '{name}' matches multiple layer groups ('{first}' and '{g}')"
                    )));
                }
                found = Some(g.as_str());
            }
        }
        found.ok_or_else(|| {
            Error::validation(format!("orphan tensor '{name}' matches no layer group"))
        })
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn layer_order(&self) -> &[String] {
        &self.layer_order
    }

    /// Tensors belonging to one layer group, in checkpoint order.
    pub fn tensors_in_group(&self, group: &str) -> Vec<(&str, &Tensor)> {
        self.tensors
            .iter()
            .filter(|(name, _)| {
                self.group_of(name).map(|g| g == group).unwrap_or(false)
            })
            .map(|(n, t)| (n.as_str(), t))
            .collect()
    }

    /// Flatten one layer group into a single vector, in checkpoint order.
    pub fn flatten_group(&self, group: &str) -> FlatVector {
        flatten(&self.tensors_in_group(group))
    }

    /// Total payload bytes at declared storage dtypes. Header not counted:
    /// storage comparisons are about tensor data, not JSON framing.
    pub fn storage_bytes(&self) -> u64 {
        self.tensors.iter().map(|(_, t)| t.byte_len() as u64).sum()
    }

    /// Digest of the architecture: tensor names, dtypes, shapes, and layer
    /// order. Two checkpoints with equal fingerprints are shape-compatible.
    pub fn arch_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.tensors {
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update(t.dtype().name().as_bytes());
            h.update([0u8]);
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            h.update([0xffu8]);
        }
        h.update(b"layers");
        for g in &self.layer_order {
            h.update([0u8]);
            h.update(g.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Canonical serialization. Validates first; a checkpoint that fails
    /// validation produces no bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut header = String::from("{");
        header.push_str("\"__metadata__\":{");
        let mut meta = self.metadata.clone();
        meta.insert(LAYER_ORDER_KEY.to_string(), self.layer_order.join(","));
        for (i, (k, v)) in meta.iter().enumerate() {
            if i > 0 {
                header.push(',');
            }
            header.push_str(&json_string(k));
            header.push(':');
            header.push_str(&json_string(v));
        }
        header.push('}');

        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            let begin = payload.len();
            payload.extend_from_slice(&t.to_le_bytes());
            let end = payload.len();
            header.push(',');
            header.push_str(&json_string(name));
            header.push_str(":{\"dtype\":");
            header.push_str(&json_string(t.dtype().name()));
            header.push_str(",\"shape\":[");
            for (i, d) in t.shape().iter().enumerate() {
                if i > 0 {
                    header.push(',');
                }
                header.push_str(&d.to_string());
            }
            header.push_str("],\"data_offsets\":[");
            header.push_str(&begin.to_string());
            header.push(',');
            header.push_str(&end.to_string());
            header.push_str("]}");
        }
        header.push('}');

        let hb = header.as_bytes();
        let mut out = Vec::with_capacity(8 + hb.len() + payload.len());
        out.extend_from_slice(&(hb.len() as u64).to_le_bytes());
        out.extend_from_slice(hb);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    /// Parse the container format, validating structure as it goes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 8 {
            return Err(Error::format(format!(
                "file too short for header length field ({} bytes)",
                bytes.len()
            )));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let hend = 8u64.checked_add(hlen).filter(|&e| e <= bytes.len() as u64);
        let hend = match hend {
            Some(e) => e as usize,
            None => {
                return Err(Error::format(format!(
                    "header overruns file: header length {hlen}, file length {}",
                    bytes.len()
                )))
            }
        };
        let header = std::str::from_utf8(&bytes[8..hend])
            .map_err(|_| Error::format("header is not valid UTF-8"))?;
        let doc: serde_json::Value = serde_json::from_str(header)
            .map_err(|e| Error::format(format!("header is not valid JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::format("header must be a JSON object"))?;
        let payload = &bytes[hend..];

        let mut metadata = BTreeMap::new();
        let mut layer_order = Vec::new();
        if let Some(meta) = obj.get("__metadata__") {
            let meta = meta
                .as_object()
                .ok_or_else(|| Error::format("__metadata__ must be a JSON object"))?;
            for (k, v) in meta {
                let v = v.as_str().ok_or_else(|| {
                    Error::format(format!("metadata value for '{k}' must be a string"))
                })?;
                if k == LAYER_ORDER_KEY {
                    layer_order = v.split(',').map(str::to_string).collect();
                } else {
                    metadata.insert(k.clone(), v.to_string());
                }
            }
        }
        if layer_order.is_empty() || layer_order.iter().all(|g| g.is_empty()) {
            return Err(Error::format("missing layer_order metadata"));
        }

        let mut tensors = Vec::new();
        let mut expected_offset = 0u64;
        for (name, entry) in obj {
            if name == "__metadata__" {
                continue;
            }
            let entry = entry.as_object().ok_or_else(|| {
                Error::format(format!("tensor '{name}': entry must be a JSON object"))
            })?;
            let dtype_str = entry
                .get("dtype")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::format(format!("tensor '{name}': missing dtype")))?;
            let dtype = DType::parse(dtype_str).ok_or_else(|| {
                Error::format(format!("tensor '{name}': unknown dtype '{dtype_str}'"))
            })?;
            let shape_val = entry
                .get("shape")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::format(format!("tensor '{name}': missing shape")))?;
            let mut shape = Vec::with_capacity(shape_val.len());
            for d in shape_val {
                let d = d.as_u64().filter(|&d| d > 0).ok_or_else(|| {
                    Error::format(format!(
                        "tensor '{name}': shape dimensions must be positive integers"
                    ))
                })?;
                shape.push(d as usize);
            }
            if shape.is_empty() {
                return Err(Error::format(format!("tensor '{name}': shape must not be empty")));
            }
            let offs = entry
                .get("data_offsets")
                .and_then(|v| v.as_array())
                .filter(|a| a.len() == 2)
                .ok_or_else(|| {
                    Error::format(format!("tensor '{name}': missing data_offsets"))
                })?;
            let begin = offs[0].as_u64().ok_or_else(|| {
                Error::format(format!("tensor '{name}': data_offsets must be integers"))
            })?;
            let end = offs[1].as_u64().ok_or_else(|| {
                Error::format(format!("tensor '{name}': data_offsets must be integers"))
            })?;
            if end < begin {
                return Err(Error::format(format!(
                    "tensor '{name}': data_offsets end before they begin"
                )));
            }
            if begin < expected_offset {
                return Err(Error::format(format!(
                    "tensor '{name}': data_offsets overlap the previous tensor"
                )));
            }
            if begin > expected_offset {
                return Err(Error::format(format!(
                    "tensor '{name}': data_offsets leave a gap after the previous tensor"
                )));
            }
            if end > payload.len() as u64 {
                return Err(Error::format(format!(
                    "tensor '{name}': data_offsets run past the end of the file"
                )));
            }
            let elem_count: usize = shape.iter().product();
            let expect_bytes = (elem_count * dtype.width()) as u64;
            if end - begin != expect_bytes {
                return Err(Error::format(format!(
                    "tensor '{name}': data_offsets span {} bytes but shape {shape:?} with dtype {} needs {expect_bytes}",
                    end - begin,
                    dtype.name()
                )));
            }
            let tensor =
                Tensor::from_le_bytes(dtype, shape, &payload[begin as usize..end as usize])?;
            tensors.push((name.clone(), tensor));
            expected_offset = end;
        }
        if expected_offset != payload.len() as u64 {
            return Err(Error::format(format!(
                "trailing bytes after last tensor payload: {} of {}",
                expected_offset,
                payload.len()
            )));
        }

        let ckpt = Checkpoint { tensors, layer_order, metadata };
        ckpt.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(ckpt)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { message } => {
                Error::format(format!("{}: {message}", path.display()))
            }
            other => other,
        })
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

/// A checkpoint carrying an extracted signature. Construction validates the
/// required metadata keys and the quantization invariants, so holding a
/// `SignatureFile` means the container is coherent.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureFile {
    checkpoint: Checkpoint,
}

impl SignatureFile {
    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<SignatureFile> {
        for key in [
            META_CORRUPTION,
            META_MODE,
            META_LAYERS_KEPT,
            META_QUANT_BITS,
            META_SOURCE_FINGERPRINT,
        ] {
            if !checkpoint.metadata.contains_key(key) {
                return Err(Error::validation(format!(
                    "signature is missing required metadata key '{key}'"
                )));
            }
        }
        let mode = &checkpoint.metadata[META_MODE];
        if !["vector", "global", "matrix"].contains(&mode.as_str()) {
            return Err(Error::validation(format!("unknown projection mode '{mode}'")));
        }
        let bits: u32 = checkpoint.metadata[META_QUANT_BITS]
            .parse()
            .map_err(|_| Error::validation("quant_bits must be an integer"))?;
        if ![0, 8, 16].contains(&bits) {
            return Err(Error::validation(format!("unsupported quant_bits {bits}")));
        }
        let expected_dtype = match bits {
            0 => DType::F32,
            8 => DType::I8,
            _ => DType::I16,
        };
        let mut covered = std::collections::HashSet::new();
        for (name, t) in checkpoint.tensors() {
            if let Some(base) = name.strip_suffix(SCALE_SUFFIX) {
                if bits == 0 {
                    return Err(Error::validation(format!(
                        "unquantized signature must not carry scale tensor '{name}'"
                    )));
                }
                if t.dtype() != DType::F32 || t.element_count() != 1 {
                    return Err(Error::validation(format!(
                        "scale tensor '{name}' must be a single F32 value"
                    )));
                }
                if checkpoint.get(base).is_none() {
                    return Err(Error::validation(format!(
                        "scale tensor '{name}' has no matching payload tensor"
                    )));
                }
            } else {
                if t.dtype() != expected_dtype {
                    return Err(Error::validation(format!(
                        "payload tensor '{name}' has dtype {} but quant_bits is {bits}",
                        t.dtype().name()
                    )));
                }
                if bits != 0 && checkpoint.get(&format!("{name}{SCALE_SUFFIX}")).is_none() {
                    return Err(Error::validation(format!(
                        "quantized tensor '{name}' is missing its scale companion"
                    )));
                }
                covered.insert(checkpoint.group_of(name)?.to_string());
            }
        }
        let kept: usize = checkpoint.metadata[META_LAYERS_KEPT]
            .parse()
            .map_err(|_| Error::validation("layers_kept must be an integer"))?;
        if kept != covered.len() {
            return Err(Error::validation(format!(
                "layers_kept says {kept} but {} layer groups carry tensors",
                covered.len()
            )));
        }
        Ok(SignatureFile { checkpoint })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.checkpoint
    }

    pub fn corruption(&self) -> &str {
        &self.checkpoint.metadata[META_CORRUPTION]
    }

    pub fn mode(&self) -> &str {
        &self.checkpoint.metadata[META_MODE]
    }

    pub fn layers_kept(&self) -> usize {
        self.checkpoint.metadata[META_LAYERS_KEPT].parse().unwrap()
    }

    pub fn quant_bits(&self) -> u32 {
        self.checkpoint.metadata[META_QUANT_BITS].parse().unwrap()
    }

    pub fn source_fingerprint(&self) -> &str {
        &self.checkpoint.metadata[META_SOURCE_FINGERPRINT]
    }

    /// Layer groups this signature covers, in order.
    pub fn covered_groups(&self) -> &[String] {
        self.checkpoint.layer_order()
    }

    /// Tensors excluding scale companions.
    pub fn payload_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.checkpoint
            .tensors()
            .iter()
            .filter(|(n, _)| !n.ends_with(SCALE_SUFFIX))
            .map(|(n, t)| (n.as_str(), t))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint.write(path)
    }

    /// Read and validate a signature. A container that parses but does not
    /// satisfy the signature contract (missing required metadata, missing
    /// scale companions) is a malformed file, so the validation failure is
    /// reported as a format error naming the path.
    pub fn read(path: impl AsRef<Path>) -> Result<SignatureFile> {
        let path = path.as_ref();
        let ckpt = Checkpoint::read(path)?;
        SignatureFile::from_checkpoint(ckpt).map_err(|e| match e {
            Error::Validation { message } => {
                Error::format(format!("{}: {message}", path.display()))
            }
            other => other,
        })
    }
}

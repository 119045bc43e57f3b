//! Weight-space analyses over signature collections: norm profiles,
//! similarity matrices, cross-dataset comparisons, transfer-gain tables,
//! and feature-map dumps.
//!
//! Every function takes signatures, checkpoints, and evaluation hooks as
//! plain values and returns plain rows or matrices; serialization to CSV
//! and PGM lives in the render helpers at the bottom so that callers can
//! also consume the numbers directly.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::checkpoint::{Checkpoint, SignatureFile};
use crate::error::{Error, Result};
use crate::quantizer;
use crate::tensor::{cosine, l2_norm};
use crate::trainer::Network;

/// A labelled matrix of pairwise scores. `values[r][c]` belongs to
/// `row_labels[r]` and `col_labels[c]`; `context` records what was compared
/// (a layer name, an aggregate tag, a dataset pair).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub context: String,
}

impl SimilarityReport {
    pub fn new(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        values: Vec<Vec<f64>>,
        context: impl Into<String>,
    ) -> Result<SimilarityReport> {
        if values.len() != row_labels.len() {
            return Err(Error::DimensionMismatch {
                context: "similarity rows".into(),
                expected: row_labels.len(),
                got: values.len(),
            });
        }
        for row in &values {
            if row.len() != col_labels.len() {
                return Err(Error::DimensionMismatch {
                    context: "similarity columns".into(),
                    expected: col_labels.len(),
                    got: row.len(),
                });
            }
        }
        Ok(SimilarityReport { row_labels, col_labels, values, context: context.into() })
    }
}

/// One layer group of a norm profile. Ratios are means over the profiled
/// signatures; energy shares are that group's slice of the total signature
/// norm mass, under two conventions (plain norms and squared norms).
#[derive(Debug, Clone, PartialEq)]
pub struct NormProfileRow {
    pub group: String,
    pub rws_over_std: f64,
    pub rws_over_base: Option<f64>,
    pub energy_share: f64,
    pub energy_share_squared: f64,
}

/// One corruption's cosine comparison across two signature sets: the
/// same-corruption pair against the mean over differently-corrupted pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDatasetRow {
    pub corruption: String,
    pub same_cosine: f64,
    pub cross_mean_cosine: f64,
}

/// Accuracy oracle used by [`transfer_gain_matrix`]. Implementations decide
/// what data backs the number; the analyzer only differences the scores.
pub trait AccuracyEval {
    /// Accuracy of `model` under the corruption named by `corruption`.
    fn accuracy(&self, model: &Checkpoint, corruption: &str) -> Result<f64>;
}

/// [`AccuracyEval`] backed by a held-out labelled set: corrupts the set with
/// the named corruption at a fixed severity and scores the model on it. A
/// `kind:severity` label overrides the default severity.
pub struct CorruptedSetEval<'a> {
    pub set: &'a crate::trainer::LabeledSet,
    pub severity: u32,
}

impl AccuracyEval for CorruptedSetEval<'_> {
    fn accuracy(&self, model: &Checkpoint, corruption: &str) -> Result<f64> {
        let spec = if corruption.contains(':') {
            crate::trainer::CorruptionSpec::parse(corruption)?
        } else {
            let kind = crate::trainer::corrupt::CorruptionKind::parse(corruption)?;
            crate::trainer::CorruptionSpec::new(kind, self.severity)?
        };
        crate::trainer::evaluate(model, self.set, Some(&spec))
    }
}

/// Dequantized view of a signature: quantized files are decoded, plain
/// files are passed through unchanged.
fn plain(sig: &SignatureFile) -> Result<SignatureFile> {
    if sig.quant_bits() == 0 {
        Ok(sig.clone())
    } else {
        quantizer::dequantize(sig)
    }
}

/// All covered groups of a (dequantized) signature concatenated into one
/// vector, in the signature's own layer order.
fn concat_covered(sig: &SignatureFile) -> Vec<f32> {
    let ckpt = sig.checkpoint();
    let mut out = Vec::new();
    for group in sig.covered_groups() {
        out.extend_from_slice(&ckpt.flatten_group(group).values);
    }
    out
}

fn ensure_common_source(sigs: &[&SignatureFile]) -> Result<()> {
    let first = sigs[0].source_fingerprint();
    for sig in &sigs[1..] {
        if sig.source_fingerprint() != first {
            return Err(Error::FingerprintMismatch {
                expected: first.to_string(),
                found: sig.source_fingerprint().to_string(),
            });
        }
    }
    Ok(())
}

fn ensure_same_coverage(sigs: &[&SignatureFile]) -> Result<()> {
    let first = sigs[0].covered_groups();
    for sig in &sigs[1..] {
        if sig.covered_groups() != first {
            return Err(Error::validation(
                "signatures cover different layer groups and cannot be compared",
            ));
        }
    }
    Ok(())
}

/// Per-layer-group norm profile of a signature collection against the
/// standard model it patches. Every signature must cover the full layer
/// order of `std_model`. When `init` is given, a second ratio column against
/// the standard drift from that initialization is filled in; a group whose
/// drift is zero gets `None` there.
pub fn layer_norm_profile(
    sigs: &[&SignatureFile],
    std_model: &Checkpoint,
    init: Option<&Checkpoint>,
) -> Result<Vec<NormProfileRow>> {
    if sigs.is_empty() {
        return Err(Error::validation("norm profile needs at least one signature"));
    }
    ensure_common_source(sigs)?;
    let target_fp = std_model.arch_fingerprint();
    if sigs[0].source_fingerprint() != target_fp {
        return Err(Error::FingerprintMismatch {
            expected: target_fp,
            found: sigs[0].source_fingerprint().to_string(),
        });
    }
    let groups = std_model.layer_order().to_vec();
    for sig in sigs {
        if sig.covered_groups() != groups {
            return Err(Error::validation(format!(
                "norm profile needs full coverage, but a '{}' signature keeps {} of {} groups",
                sig.corruption(),
                sig.covered_groups().len(),
                groups.len()
            )));
        }
    }

    let decoded: Vec<SignatureFile> = sigs.iter().map(|s| plain(s)).collect::<Result<_>>()?;

    // Per-group standard norms and (optionally) drift norms.
    let mut std_norms = Vec::with_capacity(groups.len());
    let mut base_norms: Option<Vec<f64>> = None;
    for group in &groups {
        std_norms.push(l2_norm(&std_model.flatten_group(group).values));
    }
    if let Some(init_ckpt) = init {
        if init_ckpt.arch_fingerprint() != target_fp {
            return Err(Error::FingerprintMismatch {
                expected: target_fp,
                found: init_ckpt.arch_fingerprint(),
            });
        }
        let mut norms = Vec::with_capacity(groups.len());
        for group in &groups {
            let s = std_model.flatten_group(group);
            let i = init_ckpt.flatten_group(group);
            let diff: Vec<f32> =
                s.values.iter().zip(&i.values).map(|(&a, &b)| a - b).collect();
            norms.push(l2_norm(&diff));
        }
        base_norms = Some(norms);
    }

    // Mean signature norm per group, and mean ratios.
    let n = decoded.len() as f64;
    let mut mean_norm = vec![0.0f64; groups.len()];
    let mut mean_norm_sq = vec![0.0f64; groups.len()];
    let mut mean_over_std = vec![0.0f64; groups.len()];
    let mut mean_over_base = vec![0.0f64; groups.len()];
    for sig in &decoded {
        for (g, group) in groups.iter().enumerate() {
            let norm = l2_norm(&sig.checkpoint().flatten_group(group).values);
            mean_norm[g] += norm / n;
            mean_norm_sq[g] += norm * norm / n;
            if std_norms[g] == 0.0 {
                return Err(Error::validation(format!(
                    "group '{group}' of the standard model has zero norm"
                )));
            }
            mean_over_std[g] += norm / std_norms[g] / n;
            if let Some(base) = &base_norms {
                if base[g] > 0.0 {
                    mean_over_base[g] += norm / base[g] / n;
                }
            }
        }
    }

    let total: f64 = mean_norm.iter().sum();
    let total_sq: f64 = mean_norm_sq.iter().sum();
    let rows = groups
        .iter()
        .enumerate()
        .map(|(g, group)| NormProfileRow {
            group: group.clone(),
            rws_over_std: mean_over_std[g],
            rws_over_base: match &base_norms {
                Some(base) if base[g] > 0.0 => Some(mean_over_base[g]),
                Some(_) => None,
                None => None,
            },
            energy_share: if total > 0.0 { mean_norm[g] / total } else { 0.0 },
            energy_share_squared: if total_sq > 0.0 { mean_norm_sq[g] / total_sq } else { 0.0 },
        })
        .collect();
    Ok(rows)
}

/// Pairwise cosine similarity between the signatures restricted to one
/// layer group. Labels are the corruption tags.
pub fn per_layer_cosine(sigs: &[&SignatureFile], layer: &str) -> Result<SimilarityReport> {
    if sigs.is_empty() {
        return Err(Error::validation("cosine matrix needs at least one signature"));
    }
    ensure_common_source(sigs)?;
    for sig in sigs {
        if !sig.covered_groups().iter().any(|g| g == layer) {
            return Err(Error::validation(format!(
                "layer group '{layer}' is not covered by the '{}' signature",
                sig.corruption()
            )));
        }
    }
    let decoded: Vec<SignatureFile> = sigs.iter().map(|s| plain(s)).collect::<Result<_>>()?;
    let vectors: Vec<Vec<f32>> =
        decoded.iter().map(|s| s.checkpoint().flatten_group(layer).values).collect();
    let labels: Vec<String> = decoded.iter().map(|s| s.corruption().to_string()).collect();
    let values = cosine_matrix(&vectors)?;
    SimilarityReport::new(labels.clone(), labels, values, format!("layer {layer}"))
}

/// Pairwise cosine similarity between whole signatures (all covered groups
/// concatenated). The signatures must cover identical group sets.
pub fn rws_relationship_matrix(sigs: &[&SignatureFile]) -> Result<SimilarityReport> {
    if sigs.len() < 2 {
        return Err(Error::validation("relationship matrix needs at least two signatures"));
    }
    ensure_common_source(sigs)?;
    ensure_same_coverage(sigs)?;
    let decoded: Vec<SignatureFile> = sigs.iter().map(|s| plain(s)).collect::<Result<_>>()?;
    let vectors: Vec<Vec<f32>> = decoded.iter().map(concat_covered).collect();
    let labels: Vec<String> = decoded.iter().map(|s| s.corruption().to_string()).collect();
    let values = cosine_matrix(&vectors)?;
    let context = format!("{}-group aggregate", sigs[0].covered_groups().len());
    SimilarityReport::new(labels.clone(), labels, values, context)
}

fn cosine_matrix(vectors: &[Vec<f32>]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut values = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = cosine(&vectors[i], &vectors[j])?;
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(values)
}

/// Accuracy gain, in percentage points, of each listed model over the
/// standard model, per corruption. Rows are the given `(label, model)`
/// pairs in order; columns are `corruptions` in order. Entry `(r, c)` is
/// `accuracy(model_r, c) - accuracy(std, c)`, scaled by 100.
pub fn transfer_gain_matrix(
    models: &[(String, &Checkpoint)],
    std_model: &Checkpoint,
    corruptions: &[String],
    eval: &dyn AccuracyEval,
) -> Result<SimilarityReport> {
    if models.is_empty() || corruptions.is_empty() {
        return Err(Error::validation("transfer matrix needs models and corruptions"));
    }
    let mut std_row = Vec::with_capacity(corruptions.len());
    for c in corruptions {
        std_row.push(eval.accuracy(std_model, c)?);
    }
    let mut values = Vec::with_capacity(models.len());
    for (_, model) in models {
        let mut row = Vec::with_capacity(corruptions.len());
        for (c, &base) in corruptions.iter().zip(&std_row) {
            row.push((eval.accuracy(model, c)? - base) * 100.0);
        }
        values.push(row);
    }
    let row_labels: Vec<String> = models.iter().map(|(l, _)| l.clone()).collect();
    SimilarityReport::new(
        row_labels,
        corruptions.to_vec(),
        values,
        "accuracy gain over standard, percentage points",
    )
}

/// Compare two signature sets extracted for the same corruptions (for
/// example from two datasets): for each corruption, the cosine between its
/// two signatures, against the mean cosine between that corruption's first
/// signature and every differently-corrupted signature from the second set.
/// Both sets must carry the same corruption tags and cover the same groups.
pub fn cross_dataset_report(
    sigs_a: &[&SignatureFile],
    sigs_b: &[&SignatureFile],
) -> Result<Vec<CrossDatasetRow>> {
    if sigs_a.len() < 2 || sigs_a.len() != sigs_b.len() {
        return Err(Error::validation(
            "cross-dataset report needs two equally sized sets with at least two corruptions",
        ));
    }
    let all: Vec<&SignatureFile> = sigs_a.iter().chain(sigs_b.iter()).copied().collect();
    ensure_common_source(&all)?;
    ensure_same_coverage(&all)?;

    let tags_a: Vec<&str> = sigs_a.iter().map(|s| s.corruption()).collect();
    let tags_b: Vec<&str> = sigs_b.iter().map(|s| s.corruption()).collect();
    for tag in &tags_a {
        if !tags_b.contains(tag) {
            return Err(Error::validation(format!(
                "corruption '{tag}' is missing from the second signature set"
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for tag in &tags_a {
        if !seen.insert(*tag) {
            return Err(Error::validation(format!(
                "corruption '{tag}' appears more than once in a set"
            )));
        }
    }

    let dec_a: Vec<SignatureFile> = sigs_a.iter().map(|s| plain(s)).collect::<Result<_>>()?;
    let dec_b: Vec<SignatureFile> = sigs_b.iter().map(|s| plain(s)).collect::<Result<_>>()?;
    let vec_a: Vec<Vec<f32>> = dec_a.iter().map(concat_covered).collect();
    let vec_b: Vec<Vec<f32>> = dec_b.iter().map(concat_covered).collect();

    let mut rows = Vec::with_capacity(tags_a.len());
    for (i, tag) in tags_a.iter().enumerate() {
        let same_j = tags_b.iter().position(|t| t == tag).unwrap();
        let same_cosine = cosine(&vec_a[i], &vec_b[same_j])?;
        let mut cross_sum = 0.0;
        let mut cross_n = 0usize;
        for (j, other) in tags_b.iter().enumerate() {
            if j != same_j && *other != *tag {
                cross_sum += cosine(&vec_a[i], &vec_b[j])?;
                cross_n += 1;
            }
        }
        rows.push(CrossDatasetRow {
            corruption: tag.to_string(),
            same_cosine,
            cross_mean_cosine: cross_sum / cross_n as f64,
        });
    }
    Ok(rows)
}

/// Write every channel of the requested convolutional layer groups as
/// 8-bit PGM images under `out_dir`, named `<layer>_<channel>.pgm`. Maps
/// are the post-activation values before pooling, min-max normalized per
/// channel; a constant channel renders as black. Returns the written paths
/// in layer order, channels ascending.
pub fn feature_map_dump(
    model: &Checkpoint,
    image: &[f32],
    height: usize,
    width: usize,
    layers: &[String],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let net = Network::from_checkpoint(height, width, model)?;
    let maps = net.conv_feature_maps(image);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let mut written = Vec::new();
    for layer in layers {
        let (_, channels, mh, mw, data) = maps
            .iter()
            .find(|(name, ..)| name == layer)
            .ok_or_else(|| {
                Error::validation(format!("'{layer}' is not a convolutional layer group"))
            })?;
        for ch in 0..*channels {
            let slice = &data[ch * mh * mw..(ch + 1) * mh * mw];
            let bytes = normalize_to_bytes(slice);
            let path = out_dir.join(format!("{layer}_{ch}.pgm"));
            write_pgm(&path, *mw, *mh, &bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Min-max normalize to [0, 255]; a (numerically) constant slice maps to 0.
fn normalize_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    let span = f64::from(max) - f64::from(min);
    if !(span > 0.0) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| (((f64::from(v) - f64::from(min)) / span) * 255.0).round() as u8)
        .collect()
}

/// Write a binary (P5) PGM with max value 255.
pub fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    if bytes.len() != width * height {
        return Err(Error::DimensionMismatch {
            context: "pgm payload".into(),
            expected: width * height,
            got: bytes.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a binary (P5) PGM written by [`write_pgm`] (single whitespace
/// tokens, max value 255) into `(width, height, values in [0, 1])`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut raw = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path.display().to_string(), e))?;

    // Header: three whitespace-separated tokens after the magic, then one
    // whitespace byte, then the payload.
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> Result<String> {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("pgm header is truncated"));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    if token(&raw)? != "P5" {
        return Err(Error::format("not a binary pgm (missing P5 magic)"));
    }
    let width: usize =
        token(&raw)?.parse().map_err(|_| Error::format("bad pgm width"))?;
    let height: usize =
        token(&raw)?.parse().map_err(|_| Error::format("bad pgm height"))?;
    let maxval: u32 = token(&raw)?.parse().map_err(|_| Error::format("bad pgm maxval"))?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported pgm maxval {maxval}")));
    }
    pos += 1; // the single whitespace byte after the header
    let need = width * height;
    if raw.len() < pos || raw.len() - pos != need {
        return Err(Error::format("pgm payload length does not match its header"));
    }
    let values = raw[pos..].iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok((width, height, values))
}

// ---------------------------------------------------------------------------
// CSV rendering
// ---------------------------------------------------------------------------

/// Stable float rendering for CSV cells: nine significant digits in
/// scientific notation, with negative zero folded into zero.
fn fmt_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.8e}")
}

/// Render a similarity matrix. The first row holds column labels with an
/// empty corner cell; each following row starts with its row label. Lines
/// end with `\n`, the final one included.
pub fn similarity_csv(report: &SimilarityReport) -> String {
    let mut out = String::new();
    out.push(',');
    out.push_str(&report.col_labels.join(","));
    out.push('\n');
    for (label, row) in report.row_labels.iter().zip(&report.values) {
        out.push_str(label);
        for v in row {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push('\n');
    }
    out
}

/// Render a norm profile, one row per layer group. A missing base-ratio
/// renders as an empty cell.
pub fn norm_profile_csv(rows: &[NormProfileRow]) -> String {
    let mut out = String::from(",rws_over_std,rws_over_base,energy_share,energy_share_squared\n");
    for row in rows {
        out.push_str(&row.group);
        out.push(',');
        out.push_str(&fmt_float(row.rws_over_std));
        out.push(',');
        if let Some(b) = row.rws_over_base {
            out.push_str(&fmt_float(b));
        }
        out.push(',');
        out.push_str(&fmt_float(row.energy_share));
        out.push(',');
        out.push_str(&fmt_float(row.energy_share_squared));
        out.push('\n');
    }
    out
}

/// Render a cross-dataset comparison, one row per corruption.
pub fn cross_dataset_csv(rows: &[CrossDatasetRow]) -> String {
    let mut out = String::from(",same_corruption,cross_corruption_mean\n");
    for row in rows {
        out.push_str(&row.corruption);
        out.push(',');
        out.push_str(&fmt_float(row.same_cosine));
        out.push(',');
        out.push_str(&fmt_float(row.cross_mean_cosine));
        out.push('\n');
    }
    out
}

/// Render a storage report, one row per serving configuration.
pub fn storage_csv(rows: &[quantizer::StorageRow]) -> String {
    let mut out = String::from(",bytes,ratio_vs_standard\n");
    for row in rows {
        out.push_str(&row.configuration);
        out.push(',');
        out.push_str(&row.bytes.to_string());
        out.push(',');
        out.push_str(&fmt_float(row.ratio));
        out.push('\n');
    }
    out
}

/// Render generic label/value rows (used for run summaries).
pub fn pairs_csv(header: &str, rows: &[(String, f64)]) -> String {
    let mut out = format!(",{header}\n");
    for (label, value) in rows {
        out.push_str(label);
        out.push(',');
        out.push_str(&fmt_float(*value));
        out.push('\n');
    }
    out
}

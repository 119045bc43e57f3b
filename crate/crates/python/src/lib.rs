//! Python bindings.
//!
//! Exposes the two container types (`Checkpoint`, `Signature`) and the
//! operations a notebook needs to run the whole loop in-process: train,
//! extract, quantize, patch, evaluate, report. Everything crosses the
//! boundary as plain Python data (bytes, str, lists, dicts); the heavy
//! lifting stays in the core crate.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use rws_core::checkpoint::{Checkpoint as CoreCheckpoint, SignatureFile};
use rws_core::signature::{self, PatchEntry, PatchRecipe, ProjectionMode};
use rws_core::trainer::{
    self, Arch, CorruptionKind, CorruptionSpec, DatasetId, NetSpec, TrainConfig,
};
use rws_core::{analyzer, quantizer, Error};

fn to_py(err: Error) -> PyErr {
    match &err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Divergence { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_corruption(s: Option<&str>) -> PyResult<Option<CorruptionSpec>> {
    s.map(CorruptionSpec::parse).transpose().map_err(to_py)
}

fn spec_for(arch: &str) -> PyResult<NetSpec> {
    match Arch::parse(arch).map_err(to_py)? {
        Arch::Convnet => Ok(NetSpec::convnet()),
        Arch::Mlp => Ok(NetSpec::mlp()),
    }
}

fn dataset_for(name: &str) -> PyResult<DatasetId> {
    DatasetId::parse(name).map_err(to_py)
}

/// A named-tensor container with ordered layer groups and string metadata.
#[pyclass]
#[derive(Clone)]
struct Checkpoint {
    inner: CoreCheckpoint,
}

#[pymethods]
impl Checkpoint {
    /// Parse a checkpoint from its serialized bytes.
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Checkpoint> {
        Ok(Checkpoint { inner: CoreCheckpoint::from_bytes(data).map_err(to_py)? })
    }

    /// Load a checkpoint file.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Checkpoint> {
        Ok(Checkpoint { inner: CoreCheckpoint::read(path).map_err(to_py)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.to_bytes().map_err(to_py)?))
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write(path).map_err(to_py)
    }

    fn tensor_names(&self) -> Vec<String> {
        self.inner.tensors().iter().map(|(n, _)| n.clone()).collect()
    }

    fn tensor_shape(&self, name: &str) -> PyResult<Vec<usize>> {
        match self.inner.get(name) {
            Some(t) => Ok(t.shape().to_vec()),
            None => Err(PyValueError::new_err(format!("no tensor named '{name}'"))),
        }
    }

    /// Tensor values as a flat list of floats, row-major.
    fn tensor_data(&self, name: &str) -> PyResult<Vec<f32>> {
        match self.inner.get(name) {
            Some(t) => Ok(t.data().to_vec()),
            None => Err(PyValueError::new_err(format!("no tensor named '{name}'"))),
        }
    }

    fn layer_order(&self) -> Vec<String> {
        self.inner.layer_order().to_vec()
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        self.inner.metadata.clone()
    }

    fn arch_fingerprint(&self) -> String {
        self.inner.arch_fingerprint()
    }

    /// Bytes of tensor payload at declared dtype widths.
    fn storage_bytes(&self) -> u64 {
        self.inner.storage_bytes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Checkpoint({} tensors, groups [{}])",
            self.inner.tensors().len(),
            self.inner.layer_order().join(", "),
        )
    }
}

/// An extracted signature: a partial checkpoint holding the projection
/// residual for the covered layer groups, plus provenance metadata.
#[pyclass]
#[derive(Clone)]
struct Signature {
    inner: SignatureFile,
}

#[pymethods]
impl Signature {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Signature> {
        Ok(Signature { inner: SignatureFile::read(path).map_err(to_py)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write(path).map_err(to_py)
    }

    #[getter]
    fn corruption(&self) -> String {
        self.inner.corruption().to_string()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }

    #[getter]
    fn layers_kept(&self) -> usize {
        self.inner.layers_kept()
    }

    /// 0 for float32 payloads, otherwise 8 or 16.
    #[getter]
    fn quant_bits(&self) -> u32 {
        self.inner.quant_bits()
    }

    #[getter]
    fn source_fingerprint(&self) -> String {
        self.inner.source_fingerprint().to_string()
    }

    #[getter]
    fn covered_groups(&self) -> Vec<String> {
        self.inner.covered_groups().to_vec()
    }

    /// The underlying tensor container (payloads plus any scale tensors).
    fn checkpoint(&self) -> Checkpoint {
        Checkpoint { inner: self.inner.checkpoint().clone() }
    }

    fn __repr__(&self) -> String {
        format!(
            "Signature(corruption='{}', mode='{}', layers_kept={}, quant_bits={})",
            self.inner.corruption(),
            self.inner.mode(),
            self.inner.layers_kept(),
            self.inner.quant_bits(),
        )
    }
}

/// Residual of the robust direction after projecting out the base
/// direction, per layer group. `layers_kept=None` keeps every group;
/// `corruption` is a provenance string like "gaussian_noise:5".
#[pyfunction]
#[pyo3(signature = (std, init, robust, mode="vector", layers_kept=None, corruption=None))]
fn extract_rws(
    std: &Checkpoint,
    init: &Checkpoint,
    robust: &Checkpoint,
    mode: &str,
    layers_kept: Option<usize>,
    corruption: Option<&str>,
) -> PyResult<Signature> {
    let mode = ProjectionMode::parse(mode).map_err(to_py)?;
    let layers = layers_kept.unwrap_or(std.inner.layer_order().len());
    let sig = signature::extract_rws(&std.inner, &init.inner, &robust.inner, mode, layers, corruption)
        .map_err(to_py)?;
    Ok(Signature { inner: sig })
}

/// Add `alpha * signature` onto the standard model for each (signature,
/// alpha) entry; quantized signatures are dequantized on the way in.
#[pyfunction]
fn patch(std: &Checkpoint, entries: Vec<(Signature, f32)>) -> PyResult<Checkpoint> {
    let entries = entries
        .into_iter()
        .map(|(sig, alpha)| PatchEntry { signature: sig.inner, alpha })
        .collect();
    let recipe = PatchRecipe::for_target(&std.inner, entries);
    Ok(Checkpoint { inner: signature::patch(&std.inner, &recipe).map_err(to_py)? })
}

/// Patch one signature at several strengths; returns (alpha, model) pairs.
#[pyfunction]
fn rescale_sweep(
    std: &Checkpoint,
    sig: &Signature,
    alphas: Vec<f32>,
) -> PyResult<Vec<(f32, Checkpoint)>> {
    let out = signature::rescale_sweep(&std.inner, &sig.inner, &alphas).map_err(to_py)?;
    Ok(out.into_iter().map(|(a, c)| (a, Checkpoint { inner: c })).collect())
}

/// Symmetric integer quantization of a float32 signature (bits = 8 or 16).
#[pyfunction]
fn quantize(sig: &Signature, bits: u32) -> PyResult<Signature> {
    Ok(Signature { inner: quantizer::quantize(&sig.inner, bits).map_err(to_py)? })
}

#[pyfunction]
fn dequantize(sig: &Signature) -> PyResult<Signature> {
    Ok(Signature { inner: quantizer::dequantize(&sig.inner).map_err(to_py)? })
}

/// Storage cost rows as (configuration, bytes, ratio-vs-standard) tuples.
#[pyfunction]
fn storage_report(std: &Checkpoint, sigs: Vec<Signature>) -> Vec<(String, u64, f64)> {
    let refs: Vec<&SignatureFile> = sigs.iter().map(|s| &s.inner).collect();
    quantizer::storage_report(&std.inner, &refs)
        .into_iter()
        .map(|row| (row.configuration, row.bytes, row.ratio))
        .collect()
}

/// A fresh random initialization for an architecture ("convnet" or "mlp").
#[pyfunction]
fn fresh_init(arch: &str, seed: u64) -> PyResult<Checkpoint> {
    let spec = spec_for(arch)?;
    Ok(Checkpoint { inner: trainer::fresh_init(&spec, seed).map_err(to_py)? })
}

/// Train a model. `dataset` is "synthA" or "synthB"; omitted options keep
/// the defaults of the deterministic trainer. `init` anchors the run at a
/// given checkpoint; `corruption` ("kind:severity") trains on corrupted
/// inputs for robustness.
#[pyfunction]
#[pyo3(signature = (
    dataset,
    arch = "convnet",
    init = None,
    corruption = None,
    epochs = None,
    batch_size = None,
    learning_rate = None,
    momentum = None,
    seed = None,
    train_n = None,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    dataset: &str,
    arch: &str,
    init: Option<&Checkpoint>,
    corruption: Option<&str>,
    epochs: Option<u32>,
    batch_size: Option<usize>,
    learning_rate: Option<f32>,
    momentum: Option<f32>,
    seed: Option<u64>,
    train_n: Option<usize>,
) -> PyResult<Checkpoint> {
    let spec = spec_for(arch)?;
    let mut config = TrainConfig::new(dataset_for(dataset)?);
    if let Some(v) = epochs {
        config.epochs = v;
    }
    if let Some(v) = batch_size {
        config.batch_size = v;
    }
    if let Some(v) = learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = momentum {
        config.momentum = v;
    }
    if let Some(v) = seed {
        config.seed = v;
    }
    if let Some(v) = train_n {
        config.train_n = v;
    }
    let corruption = parse_corruption(corruption)?;
    let model = trainer::train(&spec, &config, init.map(|c| &c.inner), corruption.as_ref())
        .map_err(to_py)?;
    Ok(Checkpoint { inner: model })
}

/// Accuracy on a dataset's test split, optionally under a corruption
/// ("kind:severity") drawn with the fixed evaluation seed.
#[pyfunction]
#[pyo3(signature = (model, dataset, n = 256, corruption = None))]
fn evaluate(model: &Checkpoint, dataset: &str, n: usize, corruption: Option<&str>) -> PyResult<f64> {
    let set = trainer::test_set(dataset_for(dataset)?, n);
    let corruption = parse_corruption(corruption)?;
    trainer::evaluate(&model.inner, &set, corruption.as_ref()).map_err(to_py)
}

/// Mean accuracy over every corruption kind at one severity.
#[pyfunction]
#[pyo3(signature = (model, dataset, n = 256, severity = 5))]
fn robust_accuracy(model: &Checkpoint, dataset: &str, n: usize, severity: u32) -> PyResult<f64> {
    let set = trainer::test_set(dataset_for(dataset)?, n);
    trainer::robust_accuracy(&model.inner, &set, severity).map_err(to_py)
}

/// Max relative error between analytic gradients and finite differences.
#[pyfunction]
#[pyo3(signature = (arch, seed = 0))]
fn grad_check(arch: &str, seed: u64) -> PyResult<f64> {
    Ok(trainer::grad_check(&spec_for(arch)?, seed))
}

/// The corruption kind names, in canonical order.
#[pyfunction]
fn corruption_kinds() -> Vec<String> {
    CorruptionKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

/// Pairwise cosine matrix of the signatures restricted to one layer group,
/// as CSV text.
#[pyfunction]
fn per_layer_cosine_csv(sigs: Vec<Signature>, layer: &str) -> PyResult<String> {
    let refs: Vec<&SignatureFile> = sigs.iter().map(|s| &s.inner).collect();
    let report = analyzer::per_layer_cosine(&refs, layer).map_err(to_py)?;
    Ok(analyzer::similarity_csv(&report))
}

/// Pairwise cosine matrix of whole signatures, as CSV text.
#[pyfunction]
fn relationship_csv(sigs: Vec<Signature>) -> PyResult<String> {
    let refs: Vec<&SignatureFile> = sigs.iter().map(|s| &s.inner).collect();
    let report = analyzer::rws_relationship_matrix(&refs).map_err(to_py)?;
    Ok(analyzer::similarity_csv(&report))
}

/// Per-group norm profile of full-coverage signatures against the standard
/// model (and optionally its init), as CSV text.
#[pyfunction]
#[pyo3(signature = (sigs, std, init = None))]
fn norm_profile_csv(
    sigs: Vec<Signature>,
    std: &Checkpoint,
    init: Option<&Checkpoint>,
) -> PyResult<String> {
    let refs: Vec<&SignatureFile> = sigs.iter().map(|s| &s.inner).collect();
    let rows = analyzer::layer_norm_profile(&refs, &std.inner, init.map(|c| &c.inner))
        .map_err(to_py)?;
    Ok(analyzer::norm_profile_csv(&rows))
}

#[pymodule]
fn rws_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Checkpoint>()?;
    m.add_class::<Signature>()?;
    m.add_function(wrap_pyfunction!(extract_rws, m)?)?;
    m.add_function(wrap_pyfunction!(patch, m)?)?;
    m.add_function(wrap_pyfunction!(rescale_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(dequantize, m)?)?;
    m.add_function(wrap_pyfunction!(storage_report, m)?)?;
    m.add_function(wrap_pyfunction!(fresh_init, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(robust_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(corruption_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(per_layer_cosine_csv, m)?)?;
    m.add_function(wrap_pyfunction!(relationship_csv, m)?)?;
    m.add_function(wrap_pyfunction!(norm_profile_csv, m)?)?;
    Ok(())
}

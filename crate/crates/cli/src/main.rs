//! `rws`: command-line front end for the signature toolkit.
//!
//! One process per invocation, no shared state. Exit codes: 0 on success,
//! 1 on a usage or validation problem, 2 on an I/O or file-format problem.
//! Diagnostics go to stderr; data goes to files or stdout. Every run that
//! writes files also writes a JSON manifest (flags, input digests, output
//! digests) beside them, so reruns can be audited byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rws_core::analyzer;
use rws_core::checkpoint::{Checkpoint, SignatureFile};
use rws_core::error::Error;
use rws_core::quantizer;
use rws_core::signature::{extract_rws, patch, PatchEntry, PatchRecipe, ProjectionMode};
use rws_core::trainer::{
    self, corrupt::CorruptionKind, Arch, CorruptionSpec, DatasetId, InitStrategy, LabeledSet,
    NetSpec, TrainConfig,
};

const USAGE: &str = "\
usage: rws <subcommand> --flag=value ...

subcommands:
  extract        --std= --init= --robust= [--mode=vector|global|matrix]
                 [--layers=N] [--corruption=kind:sev] --out=
  patch          --model= [--sig=path[:alpha]]... [--recipe=json] --out=
  sweep          --model= --sig= --alphas=a,b,c --outdir=
  quantize       --sig= --bits=8|16 --out=
  dequantize     --sig= --out=
  report         --kind=norms|layer-cosine|relationship|cross-dataset|storage|transfer
                 --out= plus kind-specific inputs:
                   norms:         --std= --sig=... [--init=]
                   layer-cosine:  --sig=... --layer=
                   relationship:  --sig=...
                   cross-dataset: --sig-a=... --sig-b=...
                   storage:       --std= --sig=...
                   transfer:      --std= --model=... --dataset=
                                  [--severity=5] [--corruptions=a,b] [--n=256]
  train          --dataset=synthA|synthB|idx:<img>,<lbl> [--corruption=kind:sev]
                 [--init=<path|seed:N>] [--config=json] [--arch=convnet|mlp] --out=
  eval           --model= --dataset= [--corruption=kind:sev] [--n=256]
  dump-features  --model= --input=<pgm> --layers=a,b --outdir=

flags are long-form and '='-separated; order does not matter.";

/// Usage problems print the grammar and exit 1; toolkit errors keep their
/// own exit-code split (I/O and format problems exit 2, the rest exit 1).
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_or_format() { 2 } else { 1 })
        }
    }
}

fn run(args: &[String]) -> CliResult<()> {
    let Some(subcommand) = args.first() else {
        return Err(usage("no subcommand given"));
    };
    let rest = &args[1..];
    match subcommand.as_str() {
        "extract" => cmd_extract(rest),
        "patch" => cmd_patch(rest),
        "sweep" => cmd_sweep(rest),
        "quantize" => cmd_quantize(rest),
        "dequantize" => cmd_dequantize(rest),
        "report" => cmd_report(rest),
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "dump-features" => cmd_dump_features(rest),
        other => Err(usage(format!("unknown subcommand '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Flag parsing
// ---------------------------------------------------------------------------

struct Flags {
    command: &'static str,
    values: BTreeMap<String, Vec<String>>,
}

impl Flags {
    fn parse(command: &'static str, args: &[String], known: &[&str]) -> CliResult<Flags> {
        let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for arg in args {
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| usage(format!("expected --name=value, got '{arg}'")))?;
            let (name, value) = body
                .split_once('=')
                .ok_or_else(|| usage(format!("flag '--{body}' is missing its '=value'")))?;
            if !known.contains(&name) {
                return Err(usage(format!("unknown flag '--{name}' for '{command}'")));
            }
            if value.is_empty() {
                return Err(usage(format!("flag '--{name}' has an empty value")));
            }
            values.entry(name.to_string()).or_default().push(value.to_string());
        }
        Ok(Flags { command, values })
    }

    /// A flag that must appear exactly once.
    fn one(&self, name: &str) -> CliResult<&str> {
        match self.values.get(name).map(Vec::as_slice) {
            Some([v]) => Ok(v),
            Some(_) => Err(usage(format!("flag '--{name}' given more than once"))),
            None => Err(usage(format!("'{}' requires --{name}=", self.command))),
        }
    }

    /// A flag that may appear at most once.
    fn opt(&self, name: &str) -> CliResult<Option<&str>> {
        match self.values.get(name).map(Vec::as_slice) {
            Some([v]) => Ok(Some(v)),
            Some(_) => Err(usage(format!("flag '--{name}' given more than once"))),
            None => Ok(None),
        }
    }

    /// A repeatable flag; empty when absent.
    fn many(&self, name: &str) -> Vec<String> {
        self.values.get(name).cloned().unwrap_or_default()
    }
}

fn parse_usize(flags: &Flags, name: &str, default: usize) -> CliResult<usize> {
    match flags.opt(name)? {
        Some(v) => v
            .parse()
            .map_err(|_| usage(format!("flag '--{name}' wants an integer, got '{v}'"))),
        None => Ok(default),
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Manifest {
    command: String,
    flags: BTreeMap<String, Vec<String>>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

/// Write the audit record for a completed run next to its outputs. Every
/// field is deterministic (no timestamps), so identical reruns produce
/// byte-identical manifests.
fn write_manifest(
    manifest_path: &Path,
    flags: &Flags,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> CliResult<()> {
    let digest_map = |paths: &[PathBuf]| -> CliResult<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for p in paths {
            map.insert(p.display().to_string(), file_digest(p)?);
        }
        Ok(map)
    };
    let manifest = Manifest {
        command: flags.command.to_string(),
        flags: flags.values.clone(),
        inputs: digest_map(inputs)?,
        outputs: digest_map(outputs)?,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(format!("manifest serialization failed: {e}")))?;
    text.push('\n');
    fs::write(manifest_path, text)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    Ok(())
}

/// Manifest path for a single-file output: `<out>.manifest.json`.
fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.push_str(".manifest.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------------
// Shared input helpers
// ---------------------------------------------------------------------------

fn read_sigs(paths: &[String]) -> CliResult<Vec<SignatureFile>> {
    paths.iter().map(|p| SignatureFile::read(p).map_err(CliError::from)).collect()
}

/// `path[:alpha]`: the suffix is an alpha only when it parses as a float,
/// so paths containing ':' still work.
fn parse_sig_flag(value: &str) -> (String, f32) {
    if let Some((path, alpha)) = value.rsplit_once(':') {
        if let Ok(alpha) = alpha.parse::<f32>() {
            return (path.to_string(), alpha);
        }
    }
    (value.to_string(), 1.0)
}

/// `synthA`, `synthB`, or `idx:<images>,<labels>`, rendered as a labelled
/// evaluation or training set. `n` caps synthetic set sizes; IDX files are
/// loaded whole.
fn load_dataset(value: &str, split: trainer::Split, n: usize) -> CliResult<LabeledSet> {
    if let Some(pair) = value.strip_prefix("idx:") {
        let (images, labels) = pair
            .split_once(',')
            .ok_or_else(|| usage(format!("'--dataset=idx:' wants '<images>,<labels>', got '{pair}'")))?;
        return Ok(trainer::load_idx(Path::new(images), Path::new(labels))?);
    }
    let id = DatasetId::parse(value)?;
    let seed = match split {
        trainer::Split::Train => trainer::TRAIN_SET_SEED,
        trainer::Split::Test => trainer::TEST_SET_SEED,
    };
    Ok(trainer::generate_dataset(id, split, n, seed))
}

fn dataset_input_paths(value: &str) -> Vec<PathBuf> {
    match value.strip_prefix("idx:") {
        Some(pair) => match pair.split_once(',') {
            Some((images, labels)) => vec![PathBuf::from(images), PathBuf::from(labels)],
            None => Vec::new(),
        },
        None => Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_extract(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        "extract",
        args,
        &["std", "init", "robust", "mode", "layers", "corruption", "out"],
    )?;
    let std_path = flags.one("std")?;
    let init_path = flags.one("init")?;
    let robust_path = flags.one("robust")?;
    let out = PathBuf::from(flags.one("out")?);

    let std_model = Checkpoint::read(std_path)?;
    let init = Checkpoint::read(init_path)?;
    let robust = Checkpoint::read(robust_path)?;
    let mode = ProjectionMode::parse(flags.opt("mode")?.unwrap_or("vector"))?;
    let layers = parse_usize(&flags, "layers", std_model.layer_order().len())?;
    let corruption = flags.opt("corruption")?;

    let sig = extract_rws(&std_model, &init, &robust, mode, layers, corruption)?;
    sig.write(&out)?;
    write_manifest(
        &manifest_beside(&out),
        &flags,
        &[std_path.into(), init_path.into(), robust_path.into()],
        &[out],
    )
}

fn cmd_patch(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("patch", args, &["model", "sig", "recipe", "out"])?;
    let model_path = flags.one("model")?;
    let out = PathBuf::from(flags.one("out")?);
    let model = Checkpoint::read(model_path)?;

    let mut inputs: Vec<PathBuf> = vec![model_path.into()];
    let mut entries = Vec::new();

    #[derive(Deserialize)]
    struct RecipeEntry {
        path: String,
        alpha: Option<f32>,
    }
    if let Some(recipe_path) = flags.opt("recipe")? {
        let text = fs::read_to_string(recipe_path)
            .map_err(|e| Error::io(recipe_path.to_string(), e))?;
        let listed: Vec<RecipeEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("recipe '{recipe_path}' is not valid: {e}")))?;
        inputs.push(recipe_path.into());
        for entry in listed {
            let sig = SignatureFile::read(&entry.path)?;
            inputs.push(entry.path.into());
            entries.push(PatchEntry { signature: sig, alpha: entry.alpha.unwrap_or(1.0) });
        }
    }
    for value in flags.many("sig") {
        let (path, alpha) = parse_sig_flag(&value);
        let sig = SignatureFile::read(&path)?;
        inputs.push(path.into());
        entries.push(PatchEntry { signature: sig, alpha });
    }

    let recipe = PatchRecipe::for_target(&model, entries);
    let patched = patch(&model, &recipe)?;
    patched.write(&out)?;
    write_manifest(&manifest_beside(&out), &flags, &inputs, &[out])
}

fn cmd_sweep(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("sweep", args, &["model", "sig", "alphas", "outdir"])?;
    let model_path = flags.one("model")?;
    let sig_path = flags.one("sig")?;
    let outdir = PathBuf::from(flags.one("outdir")?);

    let mut alphas = Vec::new();
    for token in flags.one("alphas")?.split(',') {
        let alpha: f32 = token
            .parse()
            .map_err(|_| usage(format!("'--alphas' wants floats, got '{token}'")))?;
        if alphas.iter().any(|(t, _)| t == token) {
            return Err(usage(format!("alpha '{token}' listed twice")));
        }
        alphas.push((token.to_string(), alpha));
    }

    let model = Checkpoint::read(model_path)?;
    let sig = SignatureFile::read(sig_path)?;
    fs::create_dir_all(&outdir).map_err(|e| Error::io(outdir.display().to_string(), e))?;

    let mut outputs = Vec::new();
    for (token, alpha) in &alphas {
        let recipe = PatchRecipe::for_target(
            &model,
            vec![PatchEntry { signature: sig.clone(), alpha: *alpha }],
        );
        let patched = patch(&model, &recipe)?;
        let out = outdir.join(format!("patched_{token}.ckpt"));
        patched.write(&out)?;
        outputs.push(out);
    }
    write_manifest(
        &outdir.join("manifest.json"),
        &flags,
        &[model_path.into(), sig_path.into()],
        &outputs,
    )
}

fn cmd_quantize(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("quantize", args, &["sig", "bits", "out"])?;
    let sig_path = flags.one("sig")?;
    let out = PathBuf::from(flags.one("out")?);
    let bits_text = flags.one("bits")?;
    let bits: u32 = bits_text
        .parse()
        .map_err(|_| usage(format!("'--bits' wants 8 or 16, got '{bits_text}'")))?;
    let sig = SignatureFile::read(sig_path)?;
    let q = quantizer::quantize(&sig, bits)?;
    q.write(&out)?;
    write_manifest(&manifest_beside(&out), &flags, &[sig_path.into()], &[out])
}

fn cmd_dequantize(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("dequantize", args, &["sig", "out"])?;
    let sig_path = flags.one("sig")?;
    let out = PathBuf::from(flags.one("out")?);
    let sig = SignatureFile::read(sig_path)?;
    let d = quantizer::dequantize(&sig)?;
    d.write(&out)?;
    write_manifest(&manifest_beside(&out), &flags, &[sig_path.into()], &[out])
}

fn cmd_report(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        "report",
        args,
        &[
            "kind", "out", "std", "sig", "init", "layer", "sig-a", "sig-b", "model",
            "dataset", "severity", "corruptions", "n",
        ],
    )?;
    let kind = flags.one("kind")?;
    let out = PathBuf::from(flags.one("out")?);
    let mut inputs: Vec<PathBuf> = Vec::new();

    let csv = match kind {
        "norms" => {
            let std_path = flags.one("std")?;
            let std_model = Checkpoint::read(std_path)?;
            inputs.push(std_path.into());
            let sig_paths = flags.many("sig");
            let sigs = read_sigs(&sig_paths)?;
            inputs.extend(sig_paths.iter().map(PathBuf::from));
            let init = match flags.opt("init")? {
                Some(p) => {
                    inputs.push(p.into());
                    Some(Checkpoint::read(p)?)
                }
                None => None,
            };
            let refs: Vec<&SignatureFile> = sigs.iter().collect();
            let rows = analyzer::layer_norm_profile(&refs, &std_model, init.as_ref())?;
            analyzer::norm_profile_csv(&rows)
        }
        "layer-cosine" => {
            let layer = flags.one("layer")?;
            let sig_paths = flags.many("sig");
            let sigs = read_sigs(&sig_paths)?;
            inputs.extend(sig_paths.iter().map(PathBuf::from));
            let refs: Vec<&SignatureFile> = sigs.iter().collect();
            analyzer::similarity_csv(&analyzer::per_layer_cosine(&refs, layer)?)
        }
        "relationship" => {
            let sig_paths = flags.many("sig");
            let sigs = read_sigs(&sig_paths)?;
            inputs.extend(sig_paths.iter().map(PathBuf::from));
            let refs: Vec<&SignatureFile> = sigs.iter().collect();
            analyzer::similarity_csv(&analyzer::rws_relationship_matrix(&refs)?)
        }
        "cross-dataset" => {
            let a_paths = flags.many("sig-a");
            let b_paths = flags.many("sig-b");
            let sigs_a = read_sigs(&a_paths)?;
            let sigs_b = read_sigs(&b_paths)?;
            inputs.extend(a_paths.iter().chain(&b_paths).map(PathBuf::from));
            let refs_a: Vec<&SignatureFile> = sigs_a.iter().collect();
            let refs_b: Vec<&SignatureFile> = sigs_b.iter().collect();
            analyzer::cross_dataset_csv(&analyzer::cross_dataset_report(&refs_a, &refs_b)?)
        }
        "storage" => {
            let std_path = flags.one("std")?;
            let std_model = Checkpoint::read(std_path)?;
            inputs.push(std_path.into());
            let sig_paths = flags.many("sig");
            let sigs = read_sigs(&sig_paths)?;
            inputs.extend(sig_paths.iter().map(PathBuf::from));
            let refs: Vec<&SignatureFile> = sigs.iter().collect();
            analyzer::storage_csv(&quantizer::storage_report(&std_model, &refs))
        }
        "transfer" => {
            let std_path = flags.one("std")?;
            let std_model = Checkpoint::read(std_path)?;
            inputs.push(std_path.into());
            let model_paths = flags.many("model");
            if model_paths.is_empty() {
                return Err(usage("'report --kind=transfer' requires --model="));
            }
            let mut models = Vec::new();
            for p in &model_paths {
                let label = Path::new(p)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.clone());
                models.push((label, Checkpoint::read(p)?));
                inputs.push(p.into());
            }
            let dataset = flags.one("dataset")?;
            let n = parse_usize(&flags, "n", 256)?;
            let severity = parse_usize(&flags, "severity", 5)? as u32;
            let set = load_dataset(dataset, trainer::Split::Test, n)?;
            inputs.extend(dataset_input_paths(dataset));
            let corruptions: Vec<String> = match flags.opt("corruptions")? {
                Some(list) => list.split(',').map(str::to_string).collect(),
                None => CorruptionKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            };
            let eval = analyzer::CorruptedSetEval { set: &set, severity };
            let model_refs: Vec<(String, &Checkpoint)> =
                models.iter().map(|(l, m)| (l.clone(), m)).collect();
            analyzer::similarity_csv(&analyzer::transfer_gain_matrix(
                &model_refs,
                &std_model,
                &corruptions,
                &eval,
            )?)
        }
        other => return Err(usage(format!("unknown report kind '{other}'"))),
    };

    fs::write(&out, csv).map_err(|e| Error::io(out.display().to_string(), e))?;
    write_manifest(&manifest_beside(&out), &flags, &inputs, &[out])
}

/// Optional JSON overrides for the training configuration; absent fields
/// keep their defaults.
#[derive(Deserialize)]
struct ConfigPatch {
    epochs: Option<u32>,
    batch_size: Option<usize>,
    learning_rate: Option<f32>,
    momentum: Option<f32>,
    seed: Option<u64>,
    train_n: Option<usize>,
    init_strategy: Option<String>,
}

fn cmd_train(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        "train",
        args,
        &["dataset", "corruption", "init", "config", "arch", "out"],
    )?;
    let dataset = flags.one("dataset")?;
    let out = PathBuf::from(flags.one("out")?);
    let arch = Arch::parse(flags.opt("arch")?.unwrap_or("convnet"))?;
    let mut inputs: Vec<PathBuf> = Vec::new();

    // SynthA is only a placeholder for IDX runs; the tag and data override it.
    let mut config = TrainConfig::new(DatasetId::SynthA);
    if let Some(config_path) = flags.opt("config")? {
        let text =
            fs::read_to_string(config_path).map_err(|e| Error::io(config_path.to_string(), e))?;
        let patch: ConfigPatch = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("config '{config_path}' is not valid: {e}")))?;
        inputs.push(config_path.into());
        if let Some(v) = patch.epochs {
            config.epochs = v;
        }
        if let Some(v) = patch.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = patch.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = patch.momentum {
            config.momentum = v;
        }
        if let Some(v) = patch.seed {
            config.seed = v;
        }
        if let Some(v) = patch.train_n {
            config.train_n = v;
        }
        if let Some(v) = patch.init_strategy {
            config.init_strategy = InitStrategy::parse(&v)?;
        }
    }

    let data = match dataset.strip_prefix("idx:") {
        Some(_) => {
            let set = load_dataset(dataset, trainer::Split::Train, 0)?;
            inputs.extend(dataset_input_paths(dataset));
            set
        }
        None => {
            config.dataset = DatasetId::parse(dataset)?;
            trainer::training_set(config.dataset, config.train_n)
        }
    };
    let classes = data.labels.iter().copied().max().map_or(1, |m| usize::from(m) + 1);
    let spec = NetSpec::new(arch, data.height, data.width, classes.max(2));

    let init = match flags.opt("init")? {
        Some(value) => match value.strip_prefix("seed:") {
            Some(seed) => {
                let seed: u64 = seed
                    .parse()
                    .map_err(|_| usage(format!("'--init=seed:' wants an integer, got '{seed}'")))?;
                Some(trainer::fresh_init(&spec, seed)?)
            }
            None => {
                inputs.push(value.into());
                Some(Checkpoint::read(value)?)
            }
        },
        None => None,
    };

    let corruption = match flags.opt("corruption")? {
        Some(tag) => Some(CorruptionSpec::parse(tag)?),
        None => None,
    };

    let (model, history) =
        trainer::train_on_set(&spec, &config, &data, dataset, init.as_ref(), corruption.as_ref())?;
    for (epoch, loss) in history.iter().enumerate() {
        eprintln!("epoch {}/{}: mean loss {loss:.6}", epoch + 1, history.len());
    }
    model.write(&out)?;
    write_manifest(&manifest_beside(&out), &flags, &inputs, &[out])
}

#[derive(Serialize)]
struct EvalOutput {
    accuracy: f64,
    corruption: String,
    dataset: String,
    n: usize,
}

fn cmd_eval(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("eval", args, &["model", "dataset", "corruption", "n"])?;
    let model_path = flags.one("model")?;
    let dataset = flags.one("dataset")?;
    let n = parse_usize(&flags, "n", 256)?;

    let model = Checkpoint::read(model_path)?;
    let set = load_dataset(dataset, trainer::Split::Test, n)?;
    let corruption = match flags.opt("corruption")? {
        Some(tag) => Some(CorruptionSpec::parse(tag)?),
        None => None,
    };
    let accuracy = trainer::evaluate(&model, &set, corruption.as_ref())?;
    let output = EvalOutput {
        accuracy,
        corruption: corruption.map_or("none".to_string(), |c| c.tag()),
        dataset: dataset.to_string(),
        n: set.len(),
    };
    let text = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::format(format!("result serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}

fn cmd_dump_features(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse("dump-features", args, &["model", "input", "layers", "outdir"])?;
    let model_path = flags.one("model")?;
    let input_path = flags.one("input")?;
    let outdir = PathBuf::from(flags.one("outdir")?);
    let layers: Vec<String> = flags.one("layers")?.split(',').map(str::to_string).collect();

    let model = Checkpoint::read(model_path)?;
    let (width, height, image) = analyzer::read_pgm(Path::new(input_path))?;
    let written = analyzer::feature_map_dump(&model, &image, height, width, &layers, &outdir)?;
    write_manifest(
        &outdir.join("manifest.json"),
        &flags,
        &[model_path.into(), input_path.into()],
        &written,
    )
}

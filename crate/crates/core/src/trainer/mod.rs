//! Deterministic desk-scale training and evaluation.
//!
//! Everything here exists to manufacture checkpoint fixtures in seconds on
//! one core: two small architectures, procedural datasets, corruption
//! augmentation, SGD with momentum, and a finite-difference gate for the
//! hand-written backprop. Every run is a pure function of its config,
//! including all random draws, so identical configs produce bit-identical
//! checkpoints on any platform.

pub mod corrupt;
pub mod dataset;
pub mod net;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

pub use corrupt::{corrupt, CorruptionKind, CorruptionSpec};
pub use dataset::{
    generate_dataset, load_idx, DatasetId, LabeledSet, Split, CLASS_COUNT, IMAGE_SIDE,
};
pub use net::{NetDef, Network};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use net::{LayerDef, LayerKind};

/// Seed for the canonical training split shared by every model in a
/// pipeline; training runs vary augmentation and order, never the data.
pub const TRAIN_SET_SEED: u64 = 0x5261_774A_0000_0001;
/// Seed for the canonical held-out split.
pub const TEST_SET_SEED: u64 = 0x5261_774A_0000_0002;
/// Seed for evaluation-time corruption draws, fixed so robust accuracy is
/// comparable across models.
pub const EVAL_SEED: u64 = 0x5261_774A_0000_0003;

/// The two desk architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Mlp,
    Convnet,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Convnet => "convnet",
        }
    }

    pub fn parse(s: &str) -> Result<Arch> {
        match s {
            "mlp" => Ok(Arch::Mlp),
            "convnet" => Ok(Arch::Convnet),
            other => Err(Error::validation(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Architecture plus input geometry; expands to a concrete layer stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub arch: Arch,
    pub input_h: usize,
    pub input_w: usize,
    pub classes: usize,
}

impl NetSpec {
    pub fn new(arch: Arch, input_h: usize, input_w: usize, classes: usize) -> NetSpec {
        NetSpec { arch, input_h, input_w, classes }
    }

    /// The default convnet: two conv+pool stages then two dense layers.
    pub fn convnet() -> NetSpec {
        NetSpec::new(Arch::Convnet, IMAGE_SIDE, IMAGE_SIDE, CLASS_COUNT)
    }

    /// The default four-group MLP.
    pub fn mlp() -> NetSpec {
        NetSpec::new(Arch::Mlp, IMAGE_SIDE, IMAGE_SIDE, CLASS_COUNT)
    }

    pub fn net_def(&self) -> NetDef {
        let dense = |name: &str, inputs: usize, outputs: usize, relu: bool| LayerDef {
            name: name.to_string(),
            kind: LayerKind::Dense { inputs, outputs, relu },
        };
        let layers = match self.arch {
            Arch::Convnet => {
                let (h1, w1) = ((self.input_h - 2) / 2, (self.input_w - 2) / 2);
                let (h2, w2) = ((h1 - 2) / 2, (w1 - 2) / 2);
                vec![
                    LayerDef {
                        name: "conv1".to_string(),
                        kind: LayerKind::Conv { in_ch: 1, out_ch: 16, kernel: 3 },
                    },
                    LayerDef {
                        name: "conv2".to_string(),
                        kind: LayerKind::Conv { in_ch: 16, out_ch: 20, kernel: 3 },
                    },
                    dense("fc1", 20 * h2 * w2, 8, true),
                    dense("fc2", 8, self.classes, false),
                ]
            }
            Arch::Mlp => {
                let flat = self.input_h * self.input_w;
                vec![
                    dense("fc1", flat, 128, true),
                    dense("fc2", 128, 64, true),
                    dense("fc3", 64, 32, true),
                    dense("fc4", 32, self.classes, false),
                ]
            }
        };
        NetDef { input_h: self.input_h, input_w: self.input_w, layers }
    }

    pub fn layer_order(&self) -> Vec<String> {
        self.net_def().layer_order()
    }
}

/// How a training run anchors its initialization; recorded in provenance
/// and used by pipelines to pick the shared starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Strategy 1: start from a checkpoint pre-trained on a pretext
    /// dataset, so the standard-training direction has nonzero norm.
    PretextPretrain,
    /// Strategy 2: start robust runs from the standard model itself,
    /// which zeroes the base direction exactly.
    StdAsInit,
}

impl InitStrategy {
    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::PretextPretrain => "pretext-pretrain",
            InitStrategy::StdAsInit => "std-as-init",
        }
    }

    pub fn parse(s: &str) -> Result<InitStrategy> {
        match s {
            "pretext-pretrain" => Ok(InitStrategy::PretextPretrain),
            "std-as-init" => Ok(InitStrategy::StdAsInit),
            other => Err(Error::validation(format!("unknown init strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetId,
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub seed: u64,
    pub train_n: usize,
    pub init_strategy: InitStrategy,
}

impl TrainConfig {
    pub fn new(dataset: DatasetId) -> TrainConfig {
        TrainConfig {
            dataset,
            epochs: 24,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0x5EED_0001,
            train_n: 512,
            init_strategy: InitStrategy::PretextPretrain,
        }
    }

    fn digest(&self, corruption: Option<&CorruptionSpec>) -> String {
        let text = format!(
            "dataset={};epochs={};batch={};lr={};momentum={};seed={};n={};strategy={};corruption={}",
            self.dataset.name(),
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.momentum,
            self.seed,
            self.train_n,
            self.init_strategy.name(),
            corruption.map_or("none".to_string(), CorruptionSpec::tag),
        );
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

/// The canonical training split for a dataset id.
pub fn training_set(id: DatasetId, n: usize) -> LabeledSet {
    generate_dataset(id, Split::Train, n, TRAIN_SET_SEED)
}

/// The canonical held-out split for a dataset id.
pub fn test_set(id: DatasetId, n: usize) -> LabeledSet {
    generate_dataset(id, Split::Test, n, TEST_SET_SEED)
}

/// A freshly initialized, untrained checkpoint for the architecture.
pub fn fresh_init(spec: &NetSpec, seed: u64) -> Result<Checkpoint> {
    let net: Network<f32> = Network::init(spec.net_def(), seed)?;
    let mut metadata = BTreeMap::new();
    metadata.insert("init_seed".to_string(), seed.to_string());
    net.to_checkpoint(metadata)
}

/// Train a model, returning the checkpoint and the mean loss per epoch.
///
/// With `init` given, training continues from those weights (zero epochs
/// hands the init back bit-exactly); otherwise weights start from the
/// config seed. With `corruption` given, every training image is corrupted
/// with a fresh draw each epoch, keyed by (config seed, epoch, image), the
/// data-augmentation recipe for robust models. The seed carried inside
/// `corruption` is ignored here; training owns its draws.
pub fn train_with_history(
    spec: &NetSpec,
    config: &TrainConfig,
    init: Option<&Checkpoint>,
    corruption: Option<&CorruptionSpec>,
) -> Result<(Checkpoint, Vec<f64>)> {
    let data = training_set(config.dataset, config.train_n);
    train_on_set(spec, config, &data, config.dataset.name(), init, corruption)
}

/// [`train_with_history`] on caller-provided data. `dataset_tag` feeds the
/// provenance metadata, since an external set is not derivable from the
/// config; `config.dataset` and `config.train_n` are ignored here.
pub fn train_on_set(
    spec: &NetSpec,
    config: &TrainConfig,
    data: &LabeledSet,
    dataset_tag: &str,
    init: Option<&Checkpoint>,
    corruption: Option<&CorruptionSpec>,
) -> Result<(Checkpoint, Vec<f64>)> {
    let def = spec.net_def();
    let mut net: Network<f32> = match init {
        Some(ckpt) => {
            let net = Network::from_checkpoint(spec.input_h, spec.input_w, ckpt)?;
            if net.def != def {
                return Err(Error::ArchMismatch {
                    detail: format!(
                        "init checkpoint layers {:?} do not match the {} architecture",
                        ckpt.layer_order(),
                        spec.arch.name()
                    ),
                });
            }
            net
        }
        None => Network::init(def, config.seed)?,
    };

    if config.epochs == 0 {
        if let Some(ckpt) = init {
            return Ok((ckpt.clone(), Vec::new()));
        }
    }

    let mut velocity = net.zero_grads();
    let mut history = Vec::with_capacity(config.epochs as usize);
    let lr = config.learning_rate;
    let momentum = config.momentum;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut shuffler = SplitMix64::new(derive_seed(config.seed, "shuffle", u64::from(epoch)));
        shuffler.shuffle(&mut order);

        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let mut grads = net.zero_grads();
            let mut batch_loss = 0.0f64;
            for &idx in chunk {
                let image: &[f32] = &data.images[idx];
                let corrupted;
                let image = match corruption {
                    Some(spec) => {
                        let draw = spec.with_seed(derive_seed(
                            config.seed,
                            "augment",
                            (u64::from(epoch) << 32) | idx as u64,
                        ));
                        corrupted = corrupt(image, data.height, data.width, &draw)?;
                        &corrupted[..]
                    }
                    None => image,
                };
                batch_loss +=
                    net.loss_and_accumulate(image, data.labels[idx] as usize, &mut grads);
            }
            let inv = 1.0f32 / chunk.len() as f32;
            for g in &mut grads {
                for v in &mut g.w {
                    *v *= inv;
                }
                for v in &mut g.b {
                    *v *= inv;
                }
            }
            net.sgd_step(&grads, &mut velocity, lr, momentum);
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch as usize,
                    loss: batch_loss / chunk.len() as f64,
                });
            }
            epoch_loss += batch_loss;
        }
        history.push(epoch_loss / data.len() as f64);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("train_dataset".to_string(), dataset_tag.to_string());
    metadata.insert("train_epochs".to_string(), config.epochs.to_string());
    metadata.insert("train_seed".to_string(), config.seed.to_string());
    metadata.insert("train_n".to_string(), data.len().to_string());
    metadata.insert(
        "train_corruption".to_string(),
        corruption.map_or("none".to_string(), CorruptionSpec::tag),
    );
    metadata.insert("init_strategy".to_string(), config.init_strategy.name().to_string());
    metadata.insert("train_config_digest".to_string(), config.digest(corruption));
    Ok((net.to_checkpoint(metadata)?, history))
}

/// [`train_with_history`] without the loss trace.
pub fn train(
    spec: &NetSpec,
    config: &TrainConfig,
    init: Option<&Checkpoint>,
    corruption: Option<&CorruptionSpec>,
) -> Result<Checkpoint> {
    train_with_history(spec, config, init, corruption).map(|(ckpt, _)| ckpt)
}

/// Fraction of the set classified correctly; argmax ties go to the lowest
/// class index. With a corruption, every image is corrupted first using
/// the fixed evaluation seed (keyed by kind, severity, and image index),
/// so scores are comparable across models.
pub fn evaluate(
    model: &Checkpoint,
    set: &LabeledSet,
    corruption: Option<&CorruptionSpec>,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty set"));
    }
    let net = Network::from_checkpoint(set.height, set.width, model)?;
    let mut correct = 0usize;
    for (i, (image, &label)) in set.images.iter().zip(&set.labels).enumerate() {
        let corrupted;
        let image = match corruption {
            Some(spec) => {
                let draw = spec.with_seed(derive_seed(EVAL_SEED, &spec.tag(), i as u64));
                corrupted = corrupt(image, set.height, set.width, &draw)?;
                &corrupted[..]
            }
            None => &image[..],
        };
        if net::argmax(&net.logits(image)) == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Robust accuracy: the mean of [`evaluate`] over every corruption kind at
/// one severity.
pub fn robust_accuracy(model: &Checkpoint, set: &LabeledSet, severity: u32) -> Result<f64> {
    let mut total = 0.0f64;
    for kind in CorruptionKind::ALL {
        total += evaluate(model, set, Some(&CorruptionSpec::new(kind, severity)?))?;
    }
    Ok(total / CorruptionKind::ALL.len() as f64)
}

/// Compare analytic gradients against central finite differences (step
/// 1e-3) in f64, sampling the 20 largest-gradient parameters per layer
/// group and skipping steps that cross a ReLU kink or flip a pooling
/// argmax. Returns the max relative error.
pub fn grad_check(spec: &NetSpec, seed: u64) -> f64 {
    grad_check_def(&spec.net_def(), seed, false)
}

/// Implementation with a sabotage hook: when set, the first compared
/// analytic value is sign-flipped, which must blow the error up and
/// proves the comparison is live.
pub(crate) fn grad_check_def(def: &NetDef, seed: u64, sabotage: bool) -> f64 {
    const STEP: f64 = 1e-3;
    const PER_GROUP: usize = 20;

    let mut net: Network<f64> =
        Network::init(def.clone(), derive_seed(seed, "grad-check-init", 0)).unwrap();
    let classes = net.def.class_count();
    let mut rng = SplitMix64::new(derive_seed(seed, "grad-check-data", 0));
    let images: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..def.input_h * def.input_w).map(|_| rng.next_f64()).collect())
        .collect();
    let labels: Vec<usize> = images.iter().map(|_| rng.below(classes as u64) as usize).collect();

    let mut grads = net.zero_grads();
    for (img, &label) in images.iter().zip(&labels) {
        net.loss_and_accumulate(img, label, &mut grads);
    }

    let batch_loss_and_mask = |net: &Network<f64>| -> (f64, Vec<bool>) {
        let mut loss = 0.0;
        let mut mask = Vec::new();
        for (img, &label) in images.iter().zip(&labels) {
            let (l, m) = net.loss_and_kink_mask(img, label);
            loss += l;
            mask.extend(m);
        }
        (loss, mask)
    };

    let mut worst = 0.0f64;
    let mut sabotage = sabotage;
    for li in 0..net.def.layers.len() {
        let w_len = grads[li].w.len();
        let mut candidates: Vec<(usize, f64)> = grads[li]
            .w
            .iter()
            .copied()
            .chain(grads[li].b.iter().copied())
            .enumerate()
            .collect();
        candidates
            .sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));

        let mut taken = 0usize;
        for &(flat, analytic) in &candidates {
            if taken >= PER_GROUP {
                break;
            }
            let read = |net: &Network<f64>| {
                if flat < w_len {
                    net.params[li].w[flat]
                } else {
                    net.params[li].b[flat - w_len]
                }
            };
            let write = |net: &mut Network<f64>, v: f64| {
                if flat < w_len {
                    net.params[li].w[flat] = v;
                } else {
                    net.params[li].b[flat - w_len] = v;
                }
            };
            let orig = read(&net);
            write(&mut net, orig + STEP);
            let (loss_hi, mask_hi) = batch_loss_and_mask(&net);
            write(&mut net, orig - STEP);
            let (loss_lo, mask_lo) = batch_loss_and_mask(&net);
            write(&mut net, orig);
            if mask_hi != mask_lo {
                continue; // the step crossed a kink; not comparable
            }
            let numeric = (loss_hi - loss_lo) / (2.0 * STEP);
            let mut analytic = analytic;
            if sabotage {
                analytic = -analytic;
                sabotage = false;
            }
            let denom = analytic.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max((analytic - numeric).abs() / denom);
            taken += 1;
        }
    }
    worst
}

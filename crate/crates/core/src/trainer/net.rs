//! Hand-written feedforward networks with analytic backprop.
//!
//! Two desk architectures are built from the same two layer kinds: valid
//! 2D convolution with ReLU and 2x2 max pooling, and a fully connected
//! layer with optional ReLU. Everything is generic over the scalar type so
//! training runs in f32 while gradient verification runs the identical
//! code in f64.

use std::collections::BTreeMap;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::Tensor;

/// The arithmetic surface the network needs from its element type.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    #[inline]
    fn exp(self) -> Self {
        self.exp()
    }
    #[inline]
    fn ln(self) -> Self {
        self.ln()
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        self.exp()
    }
    #[inline]
    fn ln(self) -> Self {
        self.ln()
    }
}

/// One layer's shape. Convolutions are valid (no padding), stride 1, and
/// always followed by ReLU and a floor 2x2 max pool; dense layers may skip
/// the ReLU (the final classifier does).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv { in_ch: usize, out_ch: usize, kernel: usize },
    Dense { inputs: usize, outputs: usize, relu: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDef {
    pub name: String,
    pub kind: LayerKind,
}

/// A full architecture: grayscale input dimensions plus the layer stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDef {
    pub input_h: usize,
    pub input_w: usize,
    pub layers: Vec<LayerDef>,
}

impl NetDef {
    /// Walk the shape through every layer, rejecting chains that do not
    /// fit together. Returns the flattened size entering each layer.
    fn shape_chain(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.layers.is_empty() {
            return Err(Error::validation("network has no layers"));
        }
        let mut dims = (1usize, self.input_h, self.input_w);
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            chain.push(dims);
            match layer.kind {
                LayerKind::Conv { in_ch, out_ch, kernel } => {
                    if in_ch != dims.0 {
                        return Err(Error::validation(format!(
                            "layer '{}' expects {} input channels, got {}",
                            layer.name, in_ch, dims.0
                        )));
                    }
                    if kernel == 0 || dims.1 < kernel || dims.2 < kernel {
                        return Err(Error::validation(format!(
                            "layer '{}': {}x{} input cannot take a {}x{} kernel",
                            layer.name, dims.1, dims.2, kernel, kernel
                        )));
                    }
                    let ch = dims.1 - kernel + 1;
                    let cw = dims.2 - kernel + 1;
                    if ch < 2 || cw < 2 {
                        return Err(Error::validation(format!(
                            "layer '{}': {}x{} output too small to pool",
                            layer.name, ch, cw
                        )));
                    }
                    dims = (out_ch, ch / 2, cw / 2);
                }
                LayerKind::Dense { inputs, outputs, .. } => {
                    let flat = dims.0 * dims.1 * dims.2;
                    if inputs != flat {
                        return Err(Error::validation(format!(
                            "layer '{}' expects {} inputs, got {} from the previous layer",
                            layer.name, inputs, flat
                        )));
                    }
                    dims = (outputs, 1, 1);
                }
            }
            if i + 1 == self.layers.len() {
                if let LayerKind::Conv { .. } = layer.kind {
                    return Err(Error::validation("final layer must be dense"));
                }
            }
        }
        Ok(chain)
    }

    pub fn check(&self) -> Result<()> {
        let mut names: Vec<&str> = self.layers.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.layers.len() {
            return Err(Error::validation("duplicate layer names"));
        }
        self.shape_chain().map(|_| ())
    }

    pub fn layer_order(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name.clone()).collect()
    }

    pub fn class_count(&self) -> usize {
        match self.layers.last() {
            Some(LayerDef { kind: LayerKind::Dense { outputs, .. }, .. }) => *outputs,
            _ => 0,
        }
    }

    /// Recover the layer stack of a trained checkpoint from its tensor
    /// shapes: 4-d weights are convolutions, 2-d weights are dense layers,
    /// and every layer but the last is assumed to carry a ReLU (the only
    /// pattern this crate's trainers emit).
    pub fn infer(input_h: usize, input_w: usize, model: &Checkpoint) -> Result<NetDef> {
        let order = model.layer_order();
        let mut layers = Vec::with_capacity(order.len());
        for (i, group) in order.iter().enumerate() {
            let weight = model
                .get(&format!("{group}.weight"))
                .ok_or_else(|| Error::validation(format!("group '{group}' has no weight tensor")))?;
            let kind = match *weight.shape() {
                [out_ch, in_ch, kh, kw] if kh == kw => LayerKind::Conv { in_ch, out_ch, kernel: kh },
                [outputs, inputs] => {
                    LayerKind::Dense { inputs, outputs, relu: i + 1 < order.len() }
                }
                ref other => {
                    return Err(Error::validation(format!(
                        "group '{group}' has unsupported weight shape {other:?}"
                    )))
                }
            };
            layers.push(LayerDef { name: group.clone(), kind });
        }
        let def = NetDef { input_h, input_w, layers };
        def.check()?;
        Ok(def)
    }
}

/// Weight and bias buffers for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub w: Vec<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> LayerParams<S> {
    fn zeros_like(&self) -> LayerParams<S> {
        LayerParams { w: vec![S::ZERO; self.w.len()], b: vec![S::ZERO; self.b.len()] }
    }
}

#[derive(Debug, Clone)]
pub struct Network<S> {
    pub def: NetDef,
    pub params: Vec<LayerParams<S>>,
}

/// Per-layer forward state kept for the backward pass.
enum Cache<S> {
    Conv {
        input: Vec<S>,
        in_dims: (usize, usize, usize),
        pre: Vec<S>,
        pre_dims: (usize, usize, usize),
        pool_src: Vec<usize>,
    },
    Dense {
        input: Vec<S>,
        pre: Vec<S>,
    },
}

#[inline]
fn at3(c: usize, y: usize, x: usize, h: usize, w: usize) -> usize {
    (c * h + y) * w + x
}

impl<S: Scalar> Network<S> {
    /// He-normal initialization; biases start at zero. The draw order is a
    /// fixed function of (seed, tensor name), so adding layers elsewhere
    /// never shifts another tensor's values.
    pub fn init(def: NetDef, seed: u64) -> Result<Network<S>> {
        def.check()?;
        let mut params = Vec::with_capacity(def.layers.len());
        for layer in &def.layers {
            let (w_len, b_len, fan_in) = match layer.kind {
                LayerKind::Conv { in_ch, out_ch, kernel } => {
                    (out_ch * in_ch * kernel * kernel, out_ch, in_ch * kernel * kernel)
                }
                LayerKind::Dense { inputs, outputs, .. } => (inputs * outputs, outputs, inputs),
            };
            let mut rng = SplitMix64::new(derive_seed(seed, &layer.name, 0));
            let sd = (2.0 / fan_in as f64).sqrt();
            let w = (0..w_len).map(|_| S::from_f64(rng.next_normal() * sd)).collect();
            params.push(LayerParams { w, b: vec![S::ZERO; b_len] });
        }
        Ok(Network { def, params })
    }

    fn forward_trace(&self, image: &[S]) -> (Vec<Cache<S>>, Vec<S>) {
        let mut dims = (1usize, self.def.input_h, self.def.input_w);
        let mut act: Vec<S> = image.to_vec();
        let mut caches = Vec::with_capacity(self.def.layers.len());
        for (layer, p) in self.def.layers.iter().zip(&self.params) {
            match layer.kind {
                LayerKind::Conv { in_ch, out_ch, kernel } => {
                    let (h, w) = (dims.1, dims.2);
                    let (ch, cw) = (h - kernel + 1, w - kernel + 1);
                    let mut pre = vec![S::ZERO; out_ch * ch * cw];
                    for oc in 0..out_ch {
                        for oy in 0..ch {
                            for ox in 0..cw {
                                let mut acc = p.b[oc];
                                for ic in 0..in_ch {
                                    for ky in 0..kernel {
                                        let row = at3(ic, oy + ky, ox, h, w);
                                        let wrow = ((oc * in_ch + ic) * kernel + ky) * kernel;
                                        for kx in 0..kernel {
                                            acc += act[row + kx] * p.w[wrow + kx];
                                        }
                                    }
                                }
                                pre[at3(oc, oy, ox, ch, cw)] = acc;
                            }
                        }
                    }
                    let (ph, pw) = (ch / 2, cw / 2);
                    let mut out = vec![S::ZERO; out_ch * ph * pw];
                    let mut pool_src = vec![0usize; out.len()];
                    for oc in 0..out_ch {
                        for py in 0..ph {
                            for px in 0..pw {
                                let mut best_i = at3(oc, 2 * py, 2 * px, ch, cw);
                                let mut best = pre[best_i];
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let i = at3(oc, 2 * py + dy, 2 * px + dx, ch, cw);
                                        if pre[i] > best {
                                            best = pre[i];
                                            best_i = i;
                                        }
                                    }
                                }
                                let o = at3(oc, py, px, ph, pw);
                                out[o] = if best > S::ZERO { best } else { S::ZERO };
                                pool_src[o] = best_i;
                            }
                        }
                    }
                    caches.push(Cache::Conv {
                        input: act,
                        in_dims: dims,
                        pre,
                        pre_dims: (out_ch, ch, cw),
                        pool_src,
                    });
                    act = out;
                    dims = (out_ch, ph, pw);
                }
                LayerKind::Dense { inputs, outputs, relu } => {
                    let mut pre = vec![S::ZERO; outputs];
                    for o in 0..outputs {
                        let mut acc = p.b[o];
                        let row = o * inputs;
                        for i in 0..inputs {
                            acc += p.w[row + i] * act[i];
                        }
                        pre[o] = acc;
                    }
                    let out: Vec<S> = if relu {
                        pre.iter().map(|&v| if v > S::ZERO { v } else { S::ZERO }).collect()
                    } else {
                        pre.clone()
                    };
                    caches.push(Cache::Dense { input: act, pre });
                    act = out;
                    dims = (outputs, 1, 1);
                }
            }
        }
        (caches, act)
    }

    /// Raw class scores for one image.
    pub fn logits(&self, image: &[S]) -> Vec<S> {
        self.forward_trace(image).1
    }

    /// Class probabilities (softmax of the logits).
    pub fn forward(&self, image: &[S]) -> Vec<S> {
        softmax(&self.logits(image))
    }

    fn mask_from_caches(&self, caches: &[Cache<S>]) -> Vec<bool> {
        let mut mask = Vec::new();
        for (cache, layer) in caches.iter().zip(&self.def.layers) {
            match cache {
                Cache::Conv { pre, pre_dims, pool_src, .. } => {
                    mask.extend(pre.iter().map(|&v| v > S::ZERO));
                    // Pool selections: each window's winner as (dy, dx) bits,
                    // so an argmax flip shows up as a mask change too.
                    let (out_ch, ch, cw) = *pre_dims;
                    let (ph, pw) = (ch / 2, cw / 2);
                    for oc in 0..out_ch {
                        for py in 0..ph {
                            for px in 0..pw {
                                let o = at3(oc, py, px, ph, pw);
                                let base = at3(oc, 2 * py, 2 * px, ch, cw);
                                let rel = pool_src[o] - base;
                                let dy = rel >= cw;
                                mask.push(dy);
                                mask.push(rel - if dy { cw } else { 0 } == 1);
                            }
                        }
                    }
                }
                Cache::Dense { pre, .. } => {
                    if let LayerKind::Dense { relu: true, .. } = layer.kind {
                        mask.extend(pre.iter().map(|&v| v > S::ZERO));
                    }
                }
            }
        }
        mask
    }

    /// The sign pattern of every ReLU input plus the argmax choice of every
    /// pooling window, used by the gradient checker to detect
    /// finite-difference steps that cross a non-differentiable point.
    pub fn kink_mask(&self, image: &[S]) -> Vec<bool> {
        let (caches, _) = self.forward_trace(image);
        self.mask_from_caches(&caches)
    }

    /// Loss for one labeled image plus the kink mask of the forward pass,
    /// from a single trace.
    pub fn loss_and_kink_mask(&self, image: &[S], label: usize) -> (f64, Vec<bool>) {
        let (caches, logits) = self.forward_trace(image);
        let (loss, _) = ce_loss_and_dlogits(&logits, label);
        (loss, self.mask_from_caches(&caches))
    }

    /// Cross-entropy loss for one labeled image, with parameter gradients
    /// accumulated into `grads` (shaped like `self.params`).
    pub fn loss_and_accumulate(
        &self,
        image: &[S],
        label: usize,
        grads: &mut [LayerParams<S>],
    ) -> f64 {
        let (caches, logits) = self.forward_trace(image);
        let (loss, mut d) = ce_loss_and_dlogits(&logits, label);

        for li in (0..self.def.layers.len()).rev() {
            let p = &self.params[li];
            let g = &mut grads[li];
            match (&self.def.layers[li].kind, &caches[li]) {
                (
                    &LayerKind::Dense { inputs, outputs, relu },
                    Cache::Dense { input, pre },
                ) => {
                    if relu {
                        for (dv, &pv) in d.iter_mut().zip(pre.iter()) {
                            if pv <= S::ZERO {
                                *dv = S::ZERO;
                            }
                        }
                    }
                    let mut dx = vec![S::ZERO; inputs];
                    for o in 0..outputs {
                        let row = o * inputs;
                        let dv = d[o];
                        g.b[o] += dv;
                        for i in 0..inputs {
                            g.w[row + i] += dv * input[i];
                            dx[i] += dv * p.w[row + i];
                        }
                    }
                    d = dx;
                }
                (
                    &LayerKind::Conv { in_ch, out_ch, kernel },
                    Cache::Conv { input, in_dims, pre, pre_dims, pool_src },
                ) => {
                    let (_, ch, cw) = *pre_dims;
                    let (_, h, w) = *in_dims;
                    // Un-pool and apply the ReLU mask in one scatter.
                    let mut dpre = vec![S::ZERO; pre.len()];
                    for (&src, &dv) in pool_src.iter().zip(d.iter()) {
                        if pre[src] > S::ZERO {
                            dpre[src] += dv;
                        }
                    }
                    let mut dx = vec![S::ZERO; input.len()];
                    for oc in 0..out_ch {
                        for oy in 0..ch {
                            for ox in 0..cw {
                                let dv = dpre[at3(oc, oy, ox, ch, cw)];
                                if dv == S::ZERO {
                                    continue;
                                }
                                g.b[oc] += dv;
                                for ic in 0..in_ch {
                                    for ky in 0..kernel {
                                        let row = at3(ic, oy + ky, ox, h, w);
                                        let wrow = ((oc * in_ch + ic) * kernel + ky) * kernel;
                                        for kx in 0..kernel {
                                            g.w[wrow + kx] += dv * input[row + kx];
                                            dx[row + kx] += dv * p.w[wrow + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    d = dx;
                }
                _ => unreachable!("cache kind always matches layer kind"),
            }
        }
        loss
    }

    pub fn zero_grads(&self) -> Vec<LayerParams<S>> {
        self.params.iter().map(LayerParams::zeros_like).collect()
    }

    /// One SGD-with-momentum update: v = m*v - lr*g; w += v.
    pub fn sgd_step(
        &mut self,
        grads: &[LayerParams<S>],
        velocity: &mut [LayerParams<S>],
        lr: S,
        momentum: S,
    ) {
        for ((p, g), v) in self.params.iter_mut().zip(grads).zip(velocity) {
            for ((pw, &gw), vw) in p.w.iter_mut().zip(&g.w).zip(&mut v.w) {
                *vw = momentum * *vw - lr * gw;
                *pw += *vw;
            }
            for ((pb, &gb), vb) in p.b.iter_mut().zip(&g.b).zip(&mut v.b) {
                *vb = momentum * *vb - lr * gb;
                *pb += *vb;
            }
        }
    }
}

impl Network<f32> {
    /// Post-ReLU, pre-pool activation maps of every convolutional layer,
    /// as (layer name, channels, height, width, data).
    pub fn conv_feature_maps(&self, image: &[f32]) -> Vec<(String, usize, usize, usize, Vec<f32>)> {
        let (caches, _) = self.forward_trace(image);
        let mut maps = Vec::new();
        for (cache, layer) in caches.iter().zip(&self.def.layers) {
            if let Cache::Conv { pre, pre_dims, .. } = cache {
                let relu: Vec<f32> = pre.iter().map(|&v| v.max(0.0)).collect();
                maps.push((layer.name.clone(), pre_dims.0, pre_dims.1, pre_dims.2, relu));
            }
        }
        maps
    }

    pub fn to_checkpoint(&self, metadata: BTreeMap<String, String>) -> Result<Checkpoint> {
        let mut tensors = Vec::with_capacity(self.params.len() * 2);
        for (layer, p) in self.def.layers.iter().zip(&self.params) {
            let w_shape = match layer.kind {
                LayerKind::Conv { in_ch, out_ch, kernel } => vec![out_ch, in_ch, kernel, kernel],
                LayerKind::Dense { inputs, outputs, .. } => vec![outputs, inputs],
            };
            tensors.push((format!("{}.weight", layer.name), Tensor::f32(w_shape, p.w.clone())?));
            tensors.push((format!("{}.bias", layer.name), Tensor::f32(vec![p.b.len()], p.b.clone())?));
        }
        Checkpoint::new(tensors, self.def.layer_order(), metadata)
    }

    pub fn from_checkpoint(input_h: usize, input_w: usize, model: &Checkpoint) -> Result<Network<f32>> {
        let def = NetDef::infer(input_h, input_w, model)?;
        if model.tensors().len() != def.layers.len() * 2 {
            return Err(Error::validation(format!(
                "expected {} tensors for {} layers, found {}",
                def.layers.len() * 2,
                def.layers.len(),
                model.tensors().len()
            )));
        }
        let mut params = Vec::with_capacity(def.layers.len());
        for layer in &def.layers {
            let w = model.get(&format!("{}.weight", layer.name)).unwrap();
            let b = model
                .get(&format!("{}.bias", layer.name))
                .ok_or_else(|| Error::validation(format!("group '{}' has no bias tensor", layer.name)))?;
            let expect_b = match layer.kind {
                LayerKind::Conv { out_ch, .. } => out_ch,
                LayerKind::Dense { outputs, .. } => outputs,
            };
            if b.shape() != [expect_b] {
                return Err(Error::validation(format!(
                    "group '{}' bias has shape {:?}, expected [{}]",
                    layer.name,
                    b.shape(),
                    expect_b
                )));
            }
            params.push(LayerParams { w: w.data().to_vec(), b: b.data().to_vec() });
        }
        Ok(Network { def, params })
    }
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let mut m = logits[0];
    for &v in &logits[1..] {
        if v > m {
            m = v;
        }
    }
    let exps: Vec<S> = logits.iter().map(|&v| (v - m).exp()).collect();
    let mut sum = S::ZERO;
    for &e in &exps {
        sum += e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable cross-entropy with its gradient in the logits.
pub fn ce_loss_and_dlogits<S: Scalar>(logits: &[S], label: usize) -> (f64, Vec<S>) {
    let p = softmax(logits);
    let mut m = logits[0];
    for &v in &logits[1..] {
        if v > m {
            m = v;
        }
    }
    let mut lse = S::ZERO;
    for &v in logits {
        lse += (v - m).exp();
    }
    let loss = (lse.ln() + m - logits[label]).to_f64();
    let mut d = p;
    d[label] = d[label] - S::ONE;
    (loss, d)
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_conv_def() -> NetDef {
        NetDef {
            input_h: 5,
            input_w: 5,
            layers: vec![
                LayerDef {
                    name: "conv1".to_string(),
                    kind: LayerKind::Conv { in_ch: 1, out_ch: 1, kernel: 3 },
                },
                LayerDef {
                    name: "fc1".to_string(),
                    kind: LayerKind::Dense { inputs: 1, outputs: 3, relu: false },
                },
            ],
        }
    }

    #[test]
    fn conv_pool_hand_case() {
        // 5x5 ramp input, all-ones 3x3 kernel, bias 0.5. The valid output
        // is 3x3; each entry is the 3x3 window sum plus 0.5, the pool takes
        // the max of the top-left 2x2 of that.
        let def = tiny_conv_def();
        let mut net: Network<f64> = Network::init(def, 1).unwrap();
        net.params[0].w = vec![1.0; 9];
        net.params[0].b = vec![0.5];
        net.params[1].w = vec![1.0, 0.0, 0.0];
        net.params[1].b = vec![0.0; 3];
        let image: Vec<f64> = (0..25).map(f64::from).collect();
        // Window sum at (oy,ox) = 9*center of window = 9*(6*oy+6+ox... computed directly:
        // sum_{ky,kx} (5*(oy+ky)+(ox+kx)) = 9*(5*oy+ox) + 5*9 + 9 = 45*oy+9*ox+54.
        let windows: Vec<f64> = (0..3)
            .flat_map(|oy| (0..3).map(move |ox| 45.0 * f64::from(oy) + 9.0 * f64::from(ox) + 54.5))
            .collect();
        let pooled = windows[0].max(windows[1]).max(windows[3]).max(windows[4]);
        let logits = net.logits(&image);
        assert_eq!(logits, vec![pooled, 0.0, 0.0]);
    }

    #[test]
    fn softmax_sums_to_one_and_matches_hand_values() {
        let p = softmax(&[0.0f64, 0.0, std::f64::consts::LN_2]);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
        assert!((p[0] - 0.25).abs() < 1e-12);

        let (loss, d) = ce_loss_and_dlogits(&[0.0f64, 0.0, std::f64::consts::LN_2], 2);
        assert!((loss - 0.5f64.ln().abs()).abs() < 1e-12);
        assert!((d[2] - (0.5 - 1.0)).abs() < 1e-12);
        assert!((d[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        assert_eq!(argmax(&[0.0f32, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0f32, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[1.0f32, 0.0, 2.0]), 2);
    }

    #[test]
    fn dense_forward_hand_case() {
        let def = NetDef {
            input_h: 1,
            input_w: 2,
            layers: vec![LayerDef {
                name: "fc1".to_string(),
                kind: LayerKind::Dense { inputs: 2, outputs: 2, relu: false },
            }],
        };
        let mut net: Network<f64> = Network::init(def, 3).unwrap();
        net.params[0].w = vec![1.0, 2.0, -3.0, 4.0];
        net.params[0].b = vec![0.25, -0.5];
        let l = net.logits(&[10.0, 20.0]);
        assert_eq!(l, vec![10.0 + 40.0 + 0.25, -30.0 + 80.0 - 0.5]);
    }

    #[test]
    fn bad_chains_are_rejected() {
        let mut def = tiny_conv_def();
        def.layers[1].kind = LayerKind::Dense { inputs: 2, outputs: 3, relu: false };
        assert!(def.check().is_err());

        let mut def = tiny_conv_def();
        def.input_h = 3; // conv output 1x1 cannot pool
        assert!(def.check().is_err());

        let mut def = tiny_conv_def();
        def.layers[0].name = "fc1".to_string();
        assert!(def.check().is_err(), "duplicate names");

        let def = NetDef {
            input_h: 4,
            input_w: 4,
            layers: vec![LayerDef {
                name: "conv1".to_string(),
                kind: LayerKind::Conv { in_ch: 1, out_ch: 2, kernel: 3 },
            }],
        };
        assert!(def.check().is_err(), "final layer must be dense");
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let def = NetDef {
            input_h: 8,
            input_w: 8,
            layers: vec![
                LayerDef {
                    name: "conv1".to_string(),
                    kind: LayerKind::Conv { in_ch: 1, out_ch: 2, kernel: 3 },
                },
                LayerDef {
                    name: "fc1".to_string(),
                    kind: LayerKind::Dense { inputs: 2 * 3 * 3, outputs: 4, relu: true },
                },
                LayerDef {
                    name: "fc2".to_string(),
                    kind: LayerKind::Dense { inputs: 4, outputs: 3, relu: false },
                },
            ],
        };
        let net: Network<f32> = Network::init(def.clone(), 99).unwrap();
        let ckpt = net.to_checkpoint(BTreeMap::new()).unwrap();
        assert_eq!(ckpt.layer_order(), ["conv1", "fc1", "fc2"]);
        assert_eq!(
            ckpt.get("conv1.weight").unwrap().shape(),
            &[2, 1, 3, 3],
            "conv weight shape"
        );
        let back = Network::from_checkpoint(8, 8, &ckpt).unwrap();
        assert_eq!(back.def, def);
        for (a, b) in net.params.iter().zip(&back.params) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn from_checkpoint_rejects_missing_and_misshapen_tensors() {
        let def = tiny_conv_def();
        let net: Network<f32> = Network::init(def, 7).unwrap();
        let good = net.to_checkpoint(BTreeMap::new()).unwrap();

        let missing: Vec<(String, Tensor)> = good
            .tensors()
            .iter()
            .filter(|(n, _)| n != "fc1.bias")
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();
        let ckpt = Checkpoint::new(missing, good.layer_order().to_vec(), BTreeMap::new()).unwrap();
        assert!(Network::from_checkpoint(5, 5, &ckpt).is_err());

        let reshaped: Vec<(String, Tensor)> = good
            .tensors()
            .iter()
            .map(|(n, t)| {
                if n == "conv1.weight" {
                    (n.clone(), Tensor::f32(vec![1, 1, 3, 2], vec![0.0; 6]).unwrap())
                } else {
                    (n.clone(), t.clone())
                }
            })
            .collect();
        let ckpt = Checkpoint::new(reshaped, good.layer_order().to_vec(), BTreeMap::new()).unwrap();
        assert!(Network::from_checkpoint(5, 5, &ckpt).is_err());
    }

    #[test]
    fn init_is_reproducible_and_name_keyed() {
        let def = tiny_conv_def();
        let a: Network<f32> = Network::init(def.clone(), 5).unwrap();
        let b: Network<f32> = Network::init(def.clone(), 5).unwrap();
        assert_eq!(a.params, b.params);
        let c: Network<f32> = Network::init(def, 6).unwrap();
        assert_ne!(a.params[0].w, c.params[0].w);
    }

    #[test]
    fn probabilities_sum_to_one_for_both_architectures() {
        use crate::trainer::{Arch, NetSpec};
        for arch in [Arch::Convnet, Arch::Mlp] {
            let spec = NetSpec::new(arch, 28, 28, 5);
            let net: Network<f32> = Network::init(spec.net_def(), 11).unwrap();
            let mut rng = SplitMix64::new(3);
            let image: Vec<f32> = (0..28 * 28).map(|_| rng.next_f32()).collect();
            let p = net.forward(&image);
            assert_eq!(p.len(), 5);
            let sum: f32 = p.iter().sum();
            assert!((f64::from(sum) - 1.0).abs() <= 1e-6, "sum {sum}");
        }
    }
}

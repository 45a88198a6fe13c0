//! Single-convolution 1D CNN over spectra.
//!
//! Layer stack: valid convolution (stride 1) -> ReLU -> dropout -> max-pool
//! -> flatten -> dense + ReLU -> dense -> softmax.

mod adam;
mod io;
mod train;

pub use adam::{adam_update, Adam, AdamConfig};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use train::{
    predict, predict_batch, train, train_with_progress, EarlyStopping, EpochRecord, StopReason, TrainConfig,
    TrainedModel,
};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::FaultLabel;

/// Shape of the network. Filter count, kernel size and class count follow the
/// reference model; the rest are tunable.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_len: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub n_classes: usize,
}

impl Architecture {
    pub fn new(input_len: usize) -> Self {
        Self {
            input_len,
            conv_filters: 32,
            kernel_size: 5,
            pool_size: 4,
            dropout_rate: 0.5,
            dense_units: 100,
            n_classes: FaultLabel::COUNT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters == 0 || self.kernel_size == 0 || self.dense_units == 0 {
            return Err(Error::invalid("filters, kernel size and dense units must be positive"));
        }
        if self.input_len < self.kernel_size {
            return Err(Error::invalid(format!(
                "input length {} is shorter than the kernel ({})",
                self.input_len, self.kernel_size
            )));
        }
        if self.pool_size == 0 || self.pooled_len() == 0 {
            return Err(Error::invalid("pool size must be in 1..=conv output length"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        if self.n_classes != FaultLabel::COUNT {
            return Err(Error::invalid(format!(
                "the classifier has {} outputs, got n_classes = {}",
                FaultLabel::COUNT,
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn conv_len(&self) -> usize {
        self.input_len + 1 - self.kernel_size
    }

    /// Trailing conv positions that do not fill a pool window are dropped.
    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool_size
    }

    pub fn flat_len(&self) -> usize {
        self.conv_filters * self.pooled_len()
    }
}

/// All trainable tensors, in serialization order. Also used for gradients
/// and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub conv_kernels: Array2<f64>,
    pub conv_bias: Array1<f64>,
    pub hidden_w: Array2<f64>,
    pub hidden_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl ModelWeights {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            conv_kernels: Array2::zeros((arch.conv_filters, arch.kernel_size)),
            conv_bias: Array1::zeros(arch.conv_filters),
            hidden_w: Array2::zeros((arch.dense_units, arch.flat_len())),
            hidden_b: Array1::zeros(arch.dense_units),
            out_w: Array2::zeros((arch.n_classes, arch.dense_units)),
            out_b: Array1::zeros(arch.n_classes),
        }
    }

    /// He-style uniform init, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init_he<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut w = Self::zeros(arch);
        let mut fill = |a: &mut Array2<f64>, fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            a.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
        };
        fill(&mut w.conv_kernels, arch.kernel_size);
        fill(&mut w.hidden_w, arch.flat_len());
        fill(&mut w.out_w, arch.dense_units);
        w
    }

    pub fn shapes_match(&self, arch: &Architecture) -> bool {
        self.conv_kernels.dim() == (arch.conv_filters, arch.kernel_size)
            && self.conv_bias.len() == arch.conv_filters
            && self.hidden_w.dim() == (arch.dense_units, arch.flat_len())
            && self.hidden_b.len() == arch.dense_units
            && self.out_w.dim() == (arch.n_classes, arch.dense_units)
            && self.out_b.len() == arch.n_classes
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.conv_kernels.as_slice().expect("standard layout"),
            self.conv_bias.as_slice().expect("standard layout"),
            self.hidden_w.as_slice().expect("standard layout"),
            self.hidden_b.as_slice().expect("standard layout"),
            self.out_w.as_slice().expect("standard layout"),
            self.out_b.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.conv_kernels.as_slice_mut().expect("standard layout"),
            self.conv_bias.as_slice_mut().expect("standard layout"),
            self.hidden_w.as_slice_mut().expect("standard layout"),
            self.hidden_b.as_slice_mut().expect("standard layout"),
            self.out_w.as_slice_mut().expect("standard layout"),
            self.out_b.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    #[cfg(test)]
    pub(crate) fn add_scaled(&mut self, other: &ModelWeights, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Convolution block intermediates for one input.
#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Pre-activation, `filters x conv_len`, row-major.
    pub pre: Vec<f64>,
    /// Rectified feature maps (before dropout), same layout.
    pub act: Vec<f64>,
    /// Inverted-dropout multipliers, present in training mode.
    pub mask: Option<Vec<f64>>,
    /// Pooled features, `filters x pooled_len`; also the flattened dense input.
    pub pooled: Vec<f64>,
    /// Winning conv position for each pooled cell.
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub conv: ConvCache,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Architecture,
    pub weights: ModelWeights,
}

impl Network {
    pub fn new(arch: Architecture, weights: ModelWeights) -> Result<Self> {
        arch.validate()?;
        if !weights.shapes_match(&arch) {
            return Err(Error::invalid("weight shapes do not match the architecture"));
        }
        Ok(Self { arch, weights })
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let weights = ModelWeights::init_he(&arch, rng);
        Ok(Self { arch, weights })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_len {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_len,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout disabled).
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let cache = self.forward_with_mask(x, None);
        Ok((cache.probs.clone(), cache))
    }

    /// Training-mode forward pass with a freshly drawn dropout mask.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mask = dropout_mask(&self.arch, rng);
        Ok(self.forward_with_mask(x, mask))
    }

    /// Forward pass with an explicit dropout mask (`filters x conv_len`).
    pub fn forward_with_mask(&self, x: &[f64], mask: Option<Vec<f64>>) -> ForwardCache {
        let conv = conv_forward(&self.arch, &self.weights, x, mask);
        let w = &self.weights;
        let hidden_pre: Vec<f64> = (0..self.arch.dense_units)
            .map(|h| w.hidden_b[h] + dot(w.hidden_w.row(h).as_slice().unwrap(), &conv.pooled))
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
        let logits: Vec<f64> = (0..self.arch.n_classes)
            .map(|c| w.out_b[c] + dot(w.out_w.row(c).as_slice().unwrap(), &hidden))
            .collect();
        let probs = softmax(&logits);
        ForwardCache {
            input: x.to_vec(),
            conv,
            hidden_pre,
            hidden,
            logits,
            probs,
        }
    }

    /// Gradients of the cross-entropy loss for one sample.
    pub fn backward(&self, cache: &ForwardCache, onehot: &[f64]) -> ModelWeights {
        let dlogits: Vec<f64> = cache.probs.iter().zip(onehot).map(|(p, t)| p - t).collect();
        self.backward_logits(cache, &dlogits).0
    }

    /// Backpropagates an arbitrary logit gradient. Also returns the gradient
    /// with respect to the rectified feature maps (`filters x conv_len`).
    pub fn backward_logits(&self, cache: &ForwardCache, dlogits: &[f64]) -> (ModelWeights, Vec<f64>) {
        let arch = &self.arch;
        let w = &self.weights;
        let mut g = ModelWeights::zeros(arch);

        for (c, &d) in dlogits.iter().enumerate() {
            g.out_b[c] = d;
            for (gw, h) in g.out_w.row_mut(c).iter_mut().zip(&cache.hidden) {
                *gw = d * h;
            }
        }
        let mut dhidden_pre = vec![0.0; arch.dense_units];
        for (h, dh) in dhidden_pre.iter_mut().enumerate() {
            if cache.hidden_pre[h] > 0.0 {
                *dh = (0..arch.n_classes).map(|c| dlogits[c] * w.out_w[[c, h]]).sum();
            }
        }
        let mut dpooled = vec![0.0; arch.flat_len()];
        for (h, &dh) in dhidden_pre.iter().enumerate() {
            g.hidden_b[h] = dh;
            if dh == 0.0 {
                continue;
            }
            let row = w.hidden_w.row(h);
            for ((gw, p), (dp, wv)) in g
                .hidden_w
                .row_mut(h)
                .iter_mut()
                .zip(&cache.conv.pooled)
                .zip(dpooled.iter_mut().zip(row.iter()))
            {
                *gw = dh * p;
                *dp += dh * wv;
            }
        }
        conv_backward(
            arch,
            &cache.input,
            &cache.conv,
            &dpooled,
            g.conv_kernels.as_slice_mut().unwrap(),
            g.conv_bias.as_slice_mut().unwrap(),
        );
        let dact = feature_map_gradient(arch, &cache.conv, &dpooled);
        (g, dact)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Categorical cross-entropy, `-sum t log(p + 1e-12)`.
pub fn cross_entropy(probs: &[f64], onehot: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(onehot)
        .map(|(p, t)| t * (p + 1e-12).ln())
        .sum::<f64>()
}

pub(crate) fn dropout_mask<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Option<Vec<f64>> {
    if arch.dropout_rate == 0.0 {
        return None;
    }
    let (threshold, scale) = keep_threshold(arch);
    let mut draws = vec![0u32; arch.conv_filters * arch.conv_len()];
    rng.fill(&mut draws[..]);
    Some(
        draws
            .into_iter()
            .map(|d| if (d as u64) < threshold { scale } else { 0.0 })
            .collect(),
    )
}

/// Integer threshold for 32-bit keep draws, and the inverted-dropout scale.
fn keep_threshold(arch: &Architecture) -> (u64, f64) {
    let keep = 1.0 - arch.dropout_rate;
    ((keep * 4_294_967_296.0) as u64, 1.0 / keep)
}

/// Pooled features and pooling winners only, for training and batch
/// inference. Consumes `rng` exactly like [`dropout_mask`] followed by
/// [`conv_forward`], so both paths see the same mask.
pub(crate) struct PooledConv {
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
}

pub(crate) fn conv_pool<R: Rng + ?Sized>(
    arch: &Architecture,
    w: &ModelWeights,
    x: &[f64],
    mut rng: Option<&mut R>,
) -> PooledConv {
    let lc = arch.conv_len();
    let lp = arch.pooled_len();
    let k = arch.kernel_size;
    let ps = arch.pool_size;
    let dropout = arch.dropout_rate > 0.0 && rng.is_some();
    let (threshold, scale) = keep_threshold(arch);
    let mut row = vec![0.0; lc];
    let mut draws = vec![0u32; if dropout { lc } else { 0 }];
    let mut pooled = vec![0.0; arch.conv_filters * lp];
    let mut argmax = vec![0; arch.conv_filters * lp];
    for fi in 0..arch.conv_filters {
        row.fill(w.conv_bias[fi]);
        for t in 0..k {
            let kv = w.conv_kernels[[fi, t]];
            for (r, xv) in row.iter_mut().zip(&x[t..t + lc]) {
                *r += kv * xv;
            }
        }
        if let (true, Some(r)) = (dropout, rng.as_deref_mut()) {
            r.fill(&mut draws[..]);
            for (v, &d) in row.iter_mut().zip(&draws) {
                *v = v.max(0.0) * if (d as u64) < threshold { scale } else { 0.0 };
            }
        } else {
            for v in row.iter_mut() {
                *v = v.max(0.0);
            }
        }
        for p in 0..lp {
            let start = p * ps;
            let mut best = start;
            for j in start + 1..start + ps {
                if row[j] > row[best] {
                    best = j;
                }
            }
            pooled[fi * lp + p] = row[best];
            argmax[fi * lp + p] = best;
        }
    }
    PooledConv { pooled, argmax }
}

/// Kernel and bias gradients from a [`PooledConv`]. A pooled cell passes
/// gradient exactly when it is positive, scaled by the dropout factor.
pub(crate) fn conv_pool_backward(
    arch: &Architecture,
    x: &[f64],
    conv: &PooledConv,
    dpooled: &[f64],
    dropout: bool,
    dkernels: &mut [f64],
    dbias: &mut [f64],
) {
    let lp = arch.pooled_len();
    let k = arch.kernel_size;
    let scale = if dropout { keep_threshold(arch).1 } else { 1.0 };
    for fi in 0..arch.conv_filters {
        for p in 0..lp {
            let d = dpooled[fi * lp + p];
            if d == 0.0 || conv.pooled[fi * lp + p] <= 0.0 {
                continue;
            }
            let g = d * scale;
            let j = conv.argmax[fi * lp + p];
            dbias[fi] += g;
            for t in 0..k {
                dkernels[fi * k + t] += g * x[j + t];
            }
        }
    }
}

pub(crate) fn conv_forward(arch: &Architecture, w: &ModelWeights, x: &[f64], mask: Option<Vec<f64>>) -> ConvCache {
    let lc = arch.conv_len();
    let lp = arch.pooled_len();
    let k = arch.kernel_size;
    let f = arch.conv_filters;
    let mut pre = vec![0.0; f * lc];
    for fi in 0..f {
        let row = &mut pre[fi * lc..(fi + 1) * lc];
        row.fill(w.conv_bias[fi]);
        for t in 0..k {
            let kv = w.conv_kernels[[fi, t]];
            for (r, xv) in row.iter_mut().zip(&x[t..t + lc]) {
                *r += kv * xv;
            }
        }
    }
    let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let mut pooled = vec![0.0; f * lp];
    let mut argmax = vec![0; f * lp];
    for fi in 0..f {
        for p in 0..lp {
            let start = p * arch.pool_size;
            let mut best = start;
            let mut best_v = drop_value(&act, mask.as_deref(), fi * lc + start);
            for j in start + 1..start + arch.pool_size {
                let v = drop_value(&act, mask.as_deref(), fi * lc + j);
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            pooled[fi * lp + p] = best_v;
            argmax[fi * lp + p] = best;
        }
    }
    ConvCache {
        pre,
        act,
        mask,
        pooled,
        argmax,
    }
}

#[inline]
fn drop_value(act: &[f64], mask: Option<&[f64]>, i: usize) -> f64 {
    match mask {
        Some(m) => act[i] * m[i],
        None => act[i],
    }
}

/// Accumulates kernel and bias gradients given the pooled-feature gradient.
pub(crate) fn conv_backward(
    arch: &Architecture,
    x: &[f64],
    cache: &ConvCache,
    dpooled: &[f64],
    dkernels: &mut [f64],
    dbias: &mut [f64],
) {
    let lc = arch.conv_len();
    let lp = arch.pooled_len();
    let k = arch.kernel_size;
    for fi in 0..arch.conv_filters {
        for p in 0..lp {
            let d = dpooled[fi * lp + p];
            if d == 0.0 {
                continue;
            }
            let j = cache.argmax[fi * lp + p];
            let idx = fi * lc + j;
            if cache.pre[idx] <= 0.0 {
                continue;
            }
            let g = d * cache.mask.as_ref().map_or(1.0, |m| m[idx]);
            if g == 0.0 {
                continue;
            }
            dbias[fi] += g;
            for t in 0..k {
                dkernels[fi * k + t] += g * x[j + t];
            }
        }
    }
}

/// Gradient with respect to the rectified feature maps (pre-dropout).
pub(crate) fn feature_map_gradient(arch: &Architecture, cache: &ConvCache, dpooled: &[f64]) -> Vec<f64> {
    let lc = arch.conv_len();
    let lp = arch.pooled_len();
    let mut out = vec![0.0; arch.conv_filters * lc];
    for fi in 0..arch.conv_filters {
        for p in 0..lp {
            let idx = fi * lc + cache.argmax[fi * lp + p];
            out[idx] += dpooled[fi * lp + p] * cache.mask.as_ref().map_or(1.0, |m| m[idx]);
        }
    }
    out
}

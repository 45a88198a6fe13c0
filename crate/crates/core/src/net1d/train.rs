use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{conv_pool, conv_pool_backward, softmax, Adam, AdamConfig, Architecture, ModelWeights, Network};
use crate::error::{Error, Result};
use crate::types::{argmax, derive_seed, FaultLabel, LabeledDataset, Spectrum, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    /// Validation-accuracy gain needed to count as an improvement.
    pub min_delta: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 8,
            min_delta: 0.001,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and max epochs must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::invalid("Adam betas must lie in (0, 1)"));
        }
        if !(self.learning_rate >= 0.0 && self.epsilon > 0.0) || self.min_delta.is_nan() {
            return Err(Error::invalid("learning rate must be >= 0 and epsilon > 0"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Stops when the monitored metric has not beaten the best value by more
/// than `min_delta` for `patience` consecutive epochs. The first observation
/// always counts as an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some(best) => metric - self.min_delta > best,
        };
        if improved {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        (improved, self.wait >= self.patience)
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based; 0 when loaded from disk).
    pub best_epoch: usize,
    pub stop_reason: Option<StopReason>,
    pub label_order: [FaultLabel; FaultLabel::COUNT],
}

impl TrainedModel {
    pub fn from_network(network: Network) -> Self {
        Self {
            network,
            history: Vec::new(),
            best_epoch: 0,
            stop_reason: None,
            label_order: FaultLabel::ALL,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.network.arch
    }

    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

pub(crate) struct BatchOutcome {
    pub grads: ModelWeights,
    pub loss_sum: f64,
    pub correct: usize,
}

fn rows_to_matrix(rows: &[&[f64]], width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), width));
    for (mut dst, src) in m.axis_iter_mut(Axis(0)).zip(rows) {
        dst.as_slice_mut().unwrap().copy_from_slice(src);
    }
    m
}

/// Dense head on a batch of pooled feature rows: returns hidden
/// pre-activations and logits.
fn dense_head(w: &ModelWeights, pooled: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut hidden_pre = pooled.dot(&w.hidden_w.t());
    hidden_pre += &w.hidden_b;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let mut logits = hidden.dot(&w.out_w.t());
    logits += &w.out_b;
    (hidden_pre, logits)
}

/// Mean cross-entropy gradient over a batch, with one dropout mask per
/// sample drawn from `mask_seeds`. Equivalent to averaging
/// [`Network::backward`] over the batch.
pub(crate) fn batch_gradients(net: &Network, inputs: &[&[f64]], labels: &[usize], mask_seeds: &[u64]) -> BatchOutcome {
    let arch = &net.arch;
    let w = &net.weights;
    let b = inputs.len();
    let convs: Vec<_> = inputs
        .par_iter()
        .zip(mask_seeds.par_iter())
        .map(|(x, &seed)| conv_pool(arch, w, x, Some(&mut ChaCha8Rng::seed_from_u64(seed))))
        .collect();
    let pooled_rows: Vec<&[f64]> = convs.iter().map(|c| c.pooled.as_slice()).collect();
    let pooled = rows_to_matrix(&pooled_rows, arch.flat_len());
    let (hidden_pre, logits) = dense_head(w, &pooled);
    let hidden = hidden_pre.mapv(|v| v.max(0.0));

    let mut dlogits = Array2::zeros((b, arch.n_classes));
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let p = softmax(row.as_slice().unwrap());
        loss_sum -= (p[labels[i]] + 1e-12).ln();
        if argmax(&p) == labels[i] {
            correct += 1;
        }
        for c in 0..arch.n_classes {
            let t = if c == labels[i] { 1.0 } else { 0.0 };
            dlogits[[i, c]] = (p[c] - t) / b as f64;
        }
    }

    let mut dhidden = dlogits.dot(&w.out_w);
    dhidden.zip_mut_with(&hidden_pre, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let dpooled = dhidden.dot(&w.hidden_w);
    let mut grads = ModelWeights {
        conv_kernels: Array2::zeros((arch.conv_filters, arch.kernel_size)),
        conv_bias: Array1::zeros(arch.conv_filters),
        hidden_w: dhidden.t().dot(&pooled),
        hidden_b: dhidden.sum_axis(Axis(0)),
        out_w: dlogits.t().dot(&hidden),
        out_b: dlogits.sum_axis(Axis(0)),
    };

    let k = arch.conv_filters * arch.kernel_size;
    let dropout = arch.dropout_rate > 0.0;
    let conv_grads: Vec<Vec<f64>> = convs
        .par_iter()
        .enumerate()
        .map(|(i, cache)| {
            let mut g = vec![0.0; k + arch.conv_filters];
            let (dk, db) = g.split_at_mut(k);
            conv_pool_backward(arch, inputs[i], cache, dpooled.row(i).as_slice().unwrap(), dropout, dk, db);
            g
        })
        .collect();
    let dk = grads.conv_kernels.as_slice_mut().unwrap();
    for g in &conv_grads {
        for (a, v) in dk.iter_mut().zip(&g[..k]) {
            *a += v;
        }
    }
    let db = grads.conv_bias.as_slice_mut().unwrap();
    for g in &conv_grads {
        for (a, v) in db.iter_mut().zip(&g[k..]) {
            *a += v;
        }
    }
    BatchOutcome {
        grads,
        loss_sum,
        correct,
    }
}

/// Class probabilities for many inputs (inference mode).
pub fn predict_batch(net: &Network, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    for x in inputs {
        if x.len() != net.arch.input_len {
            return Err(Error::ShapeMismatch {
                expected: net.arch.input_len,
                got: x.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        let pooled_rows: Vec<Vec<f64>> = chunk
            .par_iter()
            .map(|x| conv_pool::<ChaCha8Rng>(&net.arch, &net.weights, x, None).pooled)
            .collect();
        let refs: Vec<&[f64]> = pooled_rows.iter().map(|r| r.as_slice()).collect();
        let (_, logits) = dense_head(&net.weights, &rows_to_matrix(&refs, net.arch.flat_len()));
        out.extend(logits.axis_iter(Axis(0)).map(|r| softmax(r.as_slice().unwrap())));
    }
    Ok(out)
}

/// Predicted label (lowest index on ties) and class probabilities.
pub fn predict(model: &TrainedModel, spectrum: &Spectrum) -> Result<(FaultLabel, Vec<f64>)> {
    let (probs, _) = model.network.forward(spectrum.magnitudes())?;
    let label = model.label_order[argmax(&probs)];
    Ok((label, probs))
}

fn split_arrays(dataset: &LabeledDataset, which: Split) -> (Vec<&[f64]>, Vec<usize>) {
    dataset
        .split(which)
        .map(|s| (s.spectrum.magnitudes(), s.label.index()))
        .unzip()
}

/// Mini-batch Adam with validation-accuracy early stopping; the weights of
/// the best validation epoch are restored at the end.
pub fn train(dataset: &LabeledDataset, arch: &Architecture, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with_progress(dataset, arch, cfg, |_| {})
}

pub fn train_with_progress(
    dataset: &LabeledDataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    cfg.validate()?;
    arch.validate()?;
    let (train_x, train_y) = split_arrays(dataset, Split::Train);
    let (val_x, val_y) = split_arrays(dataset, Split::Validation);
    if train_x.is_empty() || val_x.is_empty() {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    if let Some(bad) = train_x.iter().chain(&val_x).find(|x| x.len() != arch.input_len) {
        return Err(Error::ShapeMismatch {
            expected: arch.input_len,
            got: bad.len(),
        });
    }

    let mut net = Network::init(arch.clone(), &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0])))?;
    let mut adam = Adam::new(arch, cfg.adam());
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best_weights = net.weights.clone();
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_x[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let seeds: Vec<u64> = batch
                .iter()
                .map(|&i| derive_seed(cfg.seed, &[2, epoch as u64, i as u64]))
                .collect();
            let out = batch_gradients(&net, &xs, &ys, &seeds);
            if !out.loss_sum.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += out.loss_sum;
            correct += out.correct;
            adam.step(&mut net.weights, &out.grads);
            if !net.weights.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
        }

        let probs = predict_batch(&net, &val_x)?;
        let val_correct = probs.iter().zip(&val_y).filter(|(p, &y)| argmax(p) == y).count();
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            train_accuracy: correct as f64 / train_x.len() as f64,
            val_accuracy: val_correct as f64 / val_x.len() as f64,
        };
        history.push(record);
        on_epoch(&record);

        let (improved, stop) = stopper.observe(epoch, record.val_accuracy);
        if improved {
            best_weights = net.weights.clone();
        }
        if stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }
    net.weights = best_weights;
    Ok(TrainedModel {
        network: net,
        history,
        best_epoch: stopper.best_epoch(),
        stop_reason: Some(stop_reason),
        label_order: FaultLabel::ALL,
    })
}

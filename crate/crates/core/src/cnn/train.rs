//! Cross-entropy loss, backpropagation, Adam and the epoch loop.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cnn::layers;
use crate::cnn::{log_softmax, softmax, ArchSpec, Classifier, CnnModel};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("train: epochs and batch_size must be positive"));
        }
        let positive = [self.learning_rate, self.epsilon];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("train: learning_rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("train: betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One training example: flattened (channel, bin, frame) input and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub input: Vec<f64>,
    pub label: usize,
}

/// Mean cross-entropy over the batch and its parameter gradients.
pub fn loss_and_grad(model: &CnnModel, inputs: &[&[f64]], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::invalid("batch needs matching non-empty inputs and labels"));
    }
    let classes = model.arch.classes;
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
    }
    let mut grads: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.len()]).collect();
    let scale = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    for (x, &label) in inputs.iter().zip(labels) {
        if x.len() != model.arch.input_len() {
            return Err(Error::invalid("input length does not match the architecture"));
        }
        let trace = layers::forward(model, x);
        loss -= log_softmax(&trace.logits)[label];
        let mut d = softmax(&trace.logits);
        d[label] -= 1.0;
        for v in &mut d {
            *v *= scale;
        }
        layers::backward(model, &trace, &d, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Adam moments mirroring the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &CnnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn matches(&self, model: &CnnModel) -> bool {
        self.m.len() == model.params.len()
            && self.v.len() == model.params.len()
            && self.m.iter().zip(&model.params).all(|(a, b)| a.len() == b.len())
            && self.v.iter().zip(&model.params).all(|(a, b)| a.len() == b.len())
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(model: &mut CnnModel, grads: &[Vec<f64>], opt: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if !opt.matches(model)
        || grads.len() != model.params.len()
        || grads.iter().zip(&model.params).any(|(g, p)| g.len() != p.len())
    {
        return Err(Error::invalid("gradient/optimizer shapes do not match the model"));
    }
    opt.t += 1;
    let t = opt.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in model.params.iter_mut().zip(grads).zip(&mut opt.m).zip(&mut opt.v) {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch, weighted by size.
    pub train_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CnnModel,
    pub optimizer: AdamState,
    pub best_model: CnnModel,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
}

pub fn accuracy<C: Classifier + ?Sized>(model: &C, set: &[Labeled]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let mut hits = 0;
    for s in set {
        hits += (model.predict(&s.input)?.class == s.label) as usize;
    }
    Ok(hits as f64 / set.len() as f64)
}

/// Number of mini-batches per epoch and the size of the last one.
pub fn batch_layout(n: usize, batch: usize) -> (usize, usize) {
    let full = n / batch;
    match n % batch {
        0 => (full, batch.min(n)),
        r => (full + 1, r),
    }
}

/// Trains a freshly initialized model; the seed drives initialization and
/// the per-epoch shuffles.
pub fn train(arch: &ArchSpec, train: &[Labeled], val: &[Labeled], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("train: training and validation sets must be non-empty"));
    }
    let mut model = CnnModel::new(arch.clone(), cfg.seed)?;
    let mut opt = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::NEG_INFINITY, 0, model.clone());
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(cfg.seed, epoch as u64));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| train[i].input.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, grads) = loss_and_grad(&model, &inputs, &labels)?;
            adam_step(&mut model, &grads, &mut opt, cfg)?;
            total += loss * batch.len() as f64;
        }
        let val_acc = accuracy(&model, val)?;
        if val_acc > best.0 {
            best = (val_acc, epoch, model.clone());
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_acc,
            lr: cfg.learning_rate,
        });
    }
    Ok(TrainOutcome {
        model,
        optimizer: opt,
        best_model: best.2,
        best_epoch: best.1,
        best_val_acc: best.0,
        history,
    })
}

pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_acc,lr")?;
    for r in history {
        writeln!(out, "{},{:.6},{:.6},{}", r.epoch, r.train_loss, r.val_acc, r.lr)?;
    }
    Ok(())
}

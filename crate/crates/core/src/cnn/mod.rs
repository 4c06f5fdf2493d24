//! Lightweight multi-channel CNN.
//!
//! ```text
//! input C×H×W ─ [conv k×k (pad k/2) ─ ReLU ─ maxpool p×p]* ─ flatten
//!             ─ [dense ─ ReLU]* ─ dense ─ softmax
//! ```
//!
//! The default stack for 3×64×30 windows is conv 3→8, conv 8→16, a
//! 1792→128 hidden layer and 10 outputs. Weights are f64 throughout.

mod layers;
pub mod io;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

pub use io::{decode_model, encode_model, load_model, save_model};
pub use train::{
    adam_step, loss_and_grad, train, write_history_csv, AdamState, EpochRecord, Labeled, TrainConfig, TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    /// (channels, height = bins, width = frames).
    pub input: [usize; 3],
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            input: [3, 64, 30],
            conv_filters: vec![8, 16],
            kernel: 3,
            pool: 2,
            hidden: vec![128],
            classes: 10,
        }
    }
}

impl ArchSpec {
    pub fn with_input(input: [usize; 3]) -> Self {
        Self {
            input,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.contains(&0) || self.classes < 2 {
            return Err(Error::config("cnn: input dimensions must be positive and classes ≥ 2"));
        }
        if self.kernel.is_multiple_of(2) || self.pool == 0 {
            return Err(Error::config("cnn: kernel must be odd and pool ≥ 1"));
        }
        if self.conv_filters.contains(&0) || self.hidden.contains(&0) {
            return Err(Error::config("cnn: layer widths must be positive"));
        }
        let [_, h, w] = self.feature_shape();
        if h == 0 || w == 0 {
            return Err(Error::config("cnn: input too small for the pooling stack"));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Shape entering conv layer `i` (or the flatten step when `i` equals
    /// the conv count).
    fn conv_input_shape(&self, i: usize) -> [usize; 3] {
        let [mut c, mut h, mut w] = self.input;
        for &f in &self.conv_filters[..i] {
            c = f;
            h /= self.pool;
            w /= self.pool;
        }
        [c, h, w]
    }

    pub fn feature_shape(&self) -> [usize; 3] {
        self.conv_input_shape(self.conv_filters.len())
    }

    fn dense_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.feature_shape().iter().product()];
        sizes.extend(&self.hidden);
        sizes.push(self.classes);
        sizes
    }

    /// Parameter tensors in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, &f) in self.conv_filters.iter().enumerate() {
            let cin = self.conv_input_shape(i)[0];
            out.push((format!("conv{i}.weight"), vec![f, cin, self.kernel, self.kernel]));
            out.push((format!("conv{i}.bias"), vec![f]));
        }
        for (j, pair) in self.dense_sizes().windows(2).enumerate() {
            out.push((format!("dense{j}.weight"), vec![pair[1], pair[0]]));
            out.push((format!("dense{j}.bias"), vec![pair[1]]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub arch: ArchSpec,
    /// One flat tensor per entry of `arch.tensor_shapes()`.
    pub params: Vec<Vec<f64>>,
}

/// Class decision with the full probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Anything that maps an input window to class probabilities.
pub trait Classifier {
    fn classes(&self) -> usize;
    fn predict(&self, input: &[f64]) -> Result<Prediction>;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl CnnModel {
    /// Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        use rand::Rng;
        arch.validate()?;
        let mut rng = rng_for(seed, 0x696e_6974);
        let k2 = arch.kernel * arch.kernel;
        let params = arch
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                if name.ends_with(".bias") {
                    return vec![0.0; len];
                }
                let (fan_in, fan_out) = if shape.len() == 4 {
                    (shape[1] * k2, shape[0] * k2)
                } else {
                    (shape[1], shape[0])
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-limit..limit)).collect()
            })
            .collect();
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let params = arch
            .tensor_shapes()
            .iter()
            .map(|(_, s)| vec![0.0; s.iter().product()])
            .collect();
        Ok(Self { arch, params })
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_len() {
            return Err(Error::invalid(format!(
                "input has {} values, model expects {:?}",
                input.len(),
                self.arch.input
            )));
        }
        Ok(())
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(layers::forward(self, input).logits)
    }

    /// Class probabilities for each input, in order.
    pub fn forward(&self, batch: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        batch.iter().map(|x| self.logits(x).map(|z| softmax(&z))).collect()
    }
}

impl Classifier for CnnModel {
    fn classes(&self) -> usize {
        self.arch.classes
    }

    fn predict(&self, input: &[f64]) -> Result<Prediction> {
        let probs = softmax(&self.logits(input)?);
        Ok(Prediction {
            class: argmax(&probs),
            probs,
        })
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

//! A single trainable hidden layer `relu(W x + b)` fitted on labeled
//! features through a softmax classification head.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterHyper {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for AdapterHyper {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 32,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl AdapterHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::invalid("adapter", "hidden_dim must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("adapter", "batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("adapter", "learning_rate must be finite and >= 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("adapter", "weight_decay must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Row-major `hidden_dim x input_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// Row-major `num_classes x hidden_dim`; used only while training.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    /// Full-data training loss after each epoch.
    pub losses: Vec<f64>,
}

/// Gradient of the training loss, shaped like the adapter parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl AdapterGradient {
    fn zeros(a: &Adapter) -> Self {
        Self {
            w: vec![0.0; a.w.len()],
            b: vec![0.0; a.b.len()],
            head_w: vec![0.0; a.head_w.len()],
            head_b: vec![0.0; a.head_b.len()],
        }
    }

    /// All components in the order `w, b, head_w, head_b`.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w, &self.b, &self.head_w, &self.head_b]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

impl Adapter {
    /// Scaled uniform initialization; biases start at zero.
    pub fn init(input_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = stream(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let r = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-r..=r)).collect()
        };
        let w = uniform(hidden_dim * input_dim, input_dim);
        let head_w = uniform(num_classes * hidden_dim, hidden_dim);
        Self {
            input_dim,
            hidden_dim,
            num_classes,
            w,
            b: vec![0.0; hidden_dim],
            head_w,
            head_b: vec![0.0; num_classes],
            losses: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Parameters in the order `w, b, head_w, head_b`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w, &self.b, &self.head_w, &self.head_b]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    /// Inverse of [`Adapter::params`].
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.params().len(), "parameter count");
        let mut rest = flat;
        for dst in [&mut self.w, &mut self.b, &mut self.head_w, &mut self.head_b] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim)
            .map(|j| {
                let row = &self.w[j * self.input_dim..][..self.input_dim];
                self.b[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let row = &self.head_w[c * self.hidden_dim..][..self.hidden_dim];
                self.head_b[c] + row.iter().zip(hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Class the training head assigns to `x`.
    pub fn predict(&self, x: &[f64]) -> usize {
        let hidden: Vec<f64> = self.pre_activation(x).into_iter().map(|z| z.max(0.0)).collect();
        let logits = self.logits(&hidden);
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        best
    }

    /// Mean softmax cross-entropy over `batch` plus
    /// `weight_decay / 2 * (|W|^2 + |head_w|^2)`, and its gradient.
    pub fn loss_and_gradient(
        &self,
        xs: &[&[f64]],
        labels: &[usize],
        weight_decay: f64,
    ) -> (f64, AdapterGradient) {
        let mut grad = AdapterGradient::zeros(self);
        let n = xs.len().max(1) as f64;
        let mut loss = 0.0;
        let (d, h) = (self.input_dim, self.hidden_dim);
        for (x, &y) in xs.iter().zip(labels) {
            let z = self.pre_activation(x);
            let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            let logits = self.logits(&a);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let log_z = max + sum.ln();
            loss += log_z - logits[y];
            let mut da = vec![0.0; h];
            for (c, &l) in logits.iter().enumerate() {
                let g = ((l - log_z).exp() - if c == y { 1.0 } else { 0.0 }) / n;
                grad.head_b[c] += g;
                let row = &self.head_w[c * h..][..h];
                let grow = &mut grad.head_w[c * h..][..h];
                for j in 0..h {
                    grow[j] += g * a[j];
                    da[j] += g * row[j];
                }
            }
            for j in 0..h {
                if z[j] > 0.0 {
                    grad.b[j] += da[j];
                    let grow = &mut grad.w[j * d..][..d];
                    for (g, v) in grow.iter_mut().zip(x.iter()) {
                        *g += da[j] * v;
                    }
                }
            }
        }
        loss /= n;
        let sq: f64 = self.w.iter().chain(&self.head_w).map(|v| v * v).sum();
        loss += 0.5 * weight_decay * sq;
        for (g, w) in grad.w.iter_mut().zip(&self.w) {
            *g += weight_decay * w;
        }
        for (g, w) in grad.head_w.iter_mut().zip(&self.head_w) {
            *g += weight_decay * w;
        }
        (loss, grad)
    }

    fn step(&mut self, grad: &AdapterGradient, lr: f64) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 4] = [
            (&mut self.w, &grad.w),
            (&mut self.b, &grad.b),
            (&mut self.head_w, &grad.head_w),
            (&mut self.head_b, &grad.head_b),
        ];
        for (p, g) in pairs {
            for (v, d) in p.iter_mut().zip(g) {
                *v -= lr * d;
            }
        }
    }
}

/// Fit an adapter by mini-batch gradient descent on softmax cross-entropy.
/// Sample order is reshuffled every epoch from `hyper.seed`.
pub fn train_adapter(features: &[FeatureVector], labels: &[usize], hyper: &AdapterHyper) -> Result<Adapter> {
    hyper.validate()?;
    if features.len() != labels.len() {
        return Err(Error::invalid(
            "adapter",
            format!("{} features but {} labels", features.len(), labels.len()),
        ));
    }
    let Some(first) = features.first() else {
        return Err(Error::SingleClass);
    };
    let dim = first.dim();
    if let Some(f) = features.iter().find(|f| f.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: f.dim(),
        });
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; num_classes];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClass);
    }

    let mut adapter = Adapter::init(dim, hyper.hidden_dim, num_classes, hyper.seed);
    let mut rng = stream(hyper.seed ^ 0x5eed_ada9_7e55);
    let xs: Vec<&[f64]> = features.iter().map(FeatureVector::values).collect();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i]).collect();
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, grad) = adapter.loss_and_gradient(&bx, &by, hyper.weight_decay);
            adapter.step(&grad, hyper.learning_rate);
        }
        let (loss, _) = adapter.loss_and_gradient(&xs, labels, hyper.weight_decay);
        if !loss.is_finite() || adapter.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        adapter.losses.push(loss);
    }
    Ok(adapter)
}

/// `relu(W f + b)`, L2-normalized.
pub fn adapt(adapter: &Adapter, f: &FeatureVector) -> Result<FeatureVector> {
    if f.dim() != adapter.input_dim {
        return Err(Error::DimMismatch {
            expected: adapter.input_dim,
            got: f.dim(),
        });
    }
    let hidden = adapter.pre_activation(f.values()).into_iter().map(|z| z.max(0.0)).collect();
    Ok(FeatureVector { values: hidden }.l2_normalized())
}

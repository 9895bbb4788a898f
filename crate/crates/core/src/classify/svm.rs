//! Primal linear SVM trained by Pegasos-style stochastic subgradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LinearClassifier;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmHyper {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub final_objective: f64,
    /// Objective of the kept solution after each epoch.
    pub objectives: Vec<f64>,
}

/// `0.5 |w|^2 + C * sum_i max(0, 1 - y_i (w . x_i + b))`.
pub fn svm_objective(w: &[f64], b: f64, xs: &[&[f64]], ys: &[f64], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    reg + c * hinge
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact minimizer over `b` of `sum_i max(0, 1 - y_i (s_i + b))`.
///
/// The objective is convex and piecewise linear with one kink per sample at
/// `b = y_i - s_i`; its slope starts at `-P` (P = positive count) and rises
/// by one at every kink, so the flat bottom lies between the P-th and
/// (P+1)-th sorted kinks. The midpoint of that interval is returned.
pub fn optimal_bias(scores: &[f64], ys: &[f64]) -> f64 {
    let mut kinks: Vec<f64> = scores.iter().zip(ys).map(|(s, y)| y - s).collect();
    kinks.sort_by(f64::total_cmp);
    let p = ys.iter().filter(|&&y| y > 0.0).count();
    match p {
        0 => kinks[0],
        p if p == kinks.len() => kinks[p - 1],
        p => 0.5 * (kinks[p - 1] + kinks[p]),
    }
}

/// Train a linear SVM on labels in {+1, -1}.
///
/// Each epoch visits the samples in a seed-shuffled order, applying the
/// Pegasos update with step `1 / (lambda t)`, `lambda = 1 / (C n)`, followed by
/// projection onto the ball of radius `1 / sqrt(lambda)`. The bias is not
/// regularized: it starts at its optimum for `w = 0` and after every epoch
/// is reset to its exact optimum for the kept weights. Subgradient steps do
/// not decrease the objective monotonically, so the best of the current
/// iterate and the epoch's average iterate seen so far is kept, and that is
/// what the recorded objectives track.
pub fn train_svm(
    features: &[FeatureVector],
    labels: &[f64],
    category: &str,
    hyper: &SvmHyper,
) -> Result<LinearClassifier> {
    if !(hyper.c > 0.0 && hyper.c.is_finite()) {
        return Err(Error::invalid("svm", format!("C must be positive and finite, got {}", hyper.c)));
    }
    if hyper.epochs == 0 {
        return Err(Error::invalid("svm", "epochs must be at least 1"));
    }
    if features.len() != labels.len() {
        return Err(Error::invalid(
            "svm",
            format!("{} features but {} labels", features.len(), labels.len()),
        ));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid("svm", "labels must be +1 or -1"));
    }
    let has_pos = labels.iter().any(|&y| y > 0.0);
    let has_neg = labels.iter().any(|&y| y < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }
    let dim = features[0].dim();
    if let Some(f) = features.iter().find(|f| f.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: f.dim(),
        });
    }

    let xs: Vec<&[f64]> = features.iter().map(FeatureVector::values).collect();
    let n = xs.len();
    let lambda = 1.0 / (hyper.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut rng = stream(hyper.seed);
    let mut order: Vec<usize> = (0..n).collect();

    // `w` is stored as `scale * v` so the shrink step costs O(1).
    let mut v = vec![0.0; dim];
    let mut scale = 1.0f64;
    let mut avg = vec![0.0; dim];
    let mut t = 0usize;

    // The zero vector only seeds the bias; the kept solution is always an
    // iterate, so a near-trivial optimum still carries a direction.
    let mut b = optimal_bias(&vec![0.0; n], labels);
    let mut best_w = vec![0.0; dim];
    let mut best_b = b;
    let mut best_obj = f64::INFINITY;
    let mut objectives = Vec::with_capacity(hyper.epochs);

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        avg.iter_mut().for_each(|a| *a = 0.0);
        for (step_in_epoch, &i) in order.iter().enumerate() {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = labels[i] * (scale * dot(&v, xs[i]) + b);
            let shrink = 1.0 - eta * lambda;
            if shrink == 0.0 {
                v.iter_mut().for_each(|x| *x = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * labels[i] / scale;
                for (vj, xj) in v.iter_mut().zip(xs[i]) {
                    *vj += step * xj;
                }
            }
            let norm = scale.abs() * v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > radius {
                scale *= radius / norm;
            }
            if scale.abs() < 1e-100 || scale.abs() > 1e100 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
            let k = (step_in_epoch + 1) as f64;
            for (a, vj) in avg.iter_mut().zip(&v) {
                *a += (scale * vj - *a) / k;
            }
        }
        let w: Vec<f64> = v.iter().map(|x| scale * x).collect();
        for cand in [w, avg.clone()] {
            let scores: Vec<f64> = xs.iter().map(|x| dot(&cand, x)).collect();
            let cb = optimal_bias(&scores, labels);
            let obj = svm_objective(&cand, cb, &xs, labels, hyper.c);
            if !obj.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            log::debug!("svm {category} epoch {epoch}: candidate objective {obj:.6}, best {best_obj:.6}");
            if obj < best_obj {
                best_obj = obj;
                best_w = cand;
                best_b = cb;
            }
        }
        b = best_b;
        objectives.push(best_obj);
    }

    Ok(LinearClassifier {
        category: category.to_string(),
        w: best_w,
        b: best_b,
        meta: TrainingMeta {
            c: hyper.c,
            epochs: hyper.epochs,
            seed: hyper.seed,
            final_objective: best_obj,
            objectives,
        },
    })
}

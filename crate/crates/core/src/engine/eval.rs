//! Plain evaluation over every output neuron. Nothing here is oblivious.

use crate::dataio::SparseExample;
use crate::error::{Error, Result};
use crate::model::NeuronRecord;

/// ReLU hidden activations of `x` under dense weights `nodes`.
pub fn forward_hidden(nodes: &[NeuronRecord], x: &SparseExample) -> Vec<f32> {
    nodes
        .iter()
        .map(|node| {
            let w = node.weights();
            let mut a = node.bias;
            for &(idx, v) in &x.features {
                a += w[idx as usize] * v;
            }
            if a > 0.0 {
                a
            } else {
                0.0
            }
        })
        .collect()
}

/// Id of the largest output logit; ties go to the smaller id.
pub fn predict_top1(dense: &[NeuronRecord], outputs: &[&NeuronRecord], x: &SparseExample) -> Option<u64> {
    let h = forward_hidden(dense, x);
    let mut best: Option<(f32, u64)> = None;
    for u in outputs {
        let mut a = u.bias;
        for (w, hv) in u.weights().iter().zip(&h) {
            a += w * hv;
        }
        let better = match best {
            None => true,
            Some((b, id)) => a > b || (a == b && u.id < id),
        };
        if better {
            best = Some((a, u.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Mean softmax cross-entropy over all outputs, against the uniform
/// distribution on each labeled example's labels.
pub fn full_loss(dense: &[NeuronRecord], outputs: &[&NeuronRecord], data: &[SparseExample]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for x in data.iter().filter(|x| !x.labels.is_empty()) {
        let h = forward_hidden(dense, x);
        let logits: Vec<f64> = outputs
            .iter()
            .map(|u| {
                u.bias as f64
                    + u.weights()
                        .iter()
                        .zip(&h)
                        .map(|(w, v)| (*w as f64) * (*v as f64))
                        .sum::<f64>()
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|a| (a - m).exp()).sum::<f64>().ln();
        let label_mean: f64 = outputs
            .iter()
            .zip(&logits)
            .filter(|(u, _)| x.labels.iter().any(|&y| y as u64 == u.id))
            .map(|(_, a)| a)
            .sum::<f64>()
            / x.labels.len() as f64;
        total += lse - label_mean;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Fraction of labeled examples whose prediction is one of their labels.
/// Unlabeled examples (batch padding, filtered test rows) are skipped.
pub fn precision_at_1(data: &[SparseExample], mut predict: impl FnMut(&SparseExample) -> Option<u64>) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for x in data.iter().filter(|x| !x.labels.is_empty()) {
        total += 1;
        if let Some(p) = predict(x) {
            hits += usize::from(x.labels.iter().any(|&y| y as u64 == p));
        }
    }
    if total == 0 {
        return Err(Error::InvalidConfig("evaluation set has no labeled examples".into()));
    }
    Ok(hits as f64 / total as f64)
}

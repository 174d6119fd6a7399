//! Fixed-shape forward and backward passes over the dense layer and the
//! requested output slots.

use crate::dataio::SparseExample;
use crate::lsh::{mp_wta_probes, signature_top3, LshConfig, WtaFamily};
use crate::model::DenseLayer;
use crate::obliv::{ct_eq, ct_gt, ct_select, Predicate};
use crate::request::RequestEntry;
use crate::trace::TraceLog;

use super::fetcher::BufferShape;

/// Per-batch activations of the output layer, with public capacities.
#[derive(Clone, Debug)]
pub struct ActiveState {
    /// Output-layer logits, `B x R` row-major.
    pub logits: Vec<f32>,
    /// Largest real logit per input (`-inf` when none).
    pub max: Vec<f32>,
    /// Softmax normalizer per input, forced to 1 when no slot is real.
    pub norm: Vec<f32>,
    pub slots: usize,
}

impl ActiveState {
    pub fn new(batch: usize, slots: usize) -> Self {
        Self {
            logits: vec![0.0; batch * slots],
            max: vec![f32::NEG_INFINITY; batch],
            norm: vec![0.0; batch],
            slots,
        }
    }
}

/// Hidden activations into `dense.nodes[n].last_activation[i]`.
///
/// Pre-activation is `bias + sum_j w[idx_j] * x_j` over the input's public
/// non-zero indices, then a branch-free ReLU.
pub fn dense_forward(log: &mut TraceLog, dense: &mut DenseLayer, batch: &[SparseExample]) {
    for (i, x) in batch.iter().enumerate() {
        for (n, node) in dense.nodes.iter_mut().enumerate() {
            log.read("Dense", n, x.nnz());
            let w = node.weights();
            let mut a = node.bias;
            for &(idx, v) in &x.features {
                a += w[idx as usize] * v;
            }
            let h = ct_select(ct_gt(a, 0.0), a, 0.0);
            node.arrays_mut().last_activation[i] = h;
        }
    }
}

/// Hidden activation vector of input `i`.
pub fn hidden(dense: &DenseLayer, i: usize) -> Vec<f32> {
    dense.nodes.iter().map(|n| n.last_activation()[i]).collect()
}

/// `B * lenSeq` entries; entry `(i-1)*lenSeq + t` is input `i`'s probe `t`.
pub fn neuron_requester(
    log: &mut TraceLog,
    dense: &DenseLayer,
    batch_size: usize,
    family: &WtaFamily,
    cfg: &LshConfig,
    shape: &BufferShape,
    defer_payload: bool,
) -> Vec<RequestEntry> {
    let len_seq = cfg.len_seq();
    let mut out = Vec::with_capacity(batch_size * len_seq);
    for i in 0..batch_size {
        let q = hidden(dense, i);
        let top = signature_top3(log, &q, family);
        for (t, bucket) in mp_wta_probes(&top, cfg).into_iter().enumerate() {
            let idx = i * len_seq + t;
            log.write("ReqArray", idx, 1);
            let buffer = if defer_payload { Vec::new() } else { shape.dummies() };
            out.push(RequestEntry::new(bucket, i as u64 + 1, idx as u64, buffer));
        }
    }
    out
}

#[inline]
fn slot_of(i: usize, r: usize, len_seq: usize, pad: usize) -> (usize, usize) {
    (i * len_seq + r / pad, r % pad)
}

/// Output logits, stable softmax numerators into `last_activation[i]`
/// (zero for dummies), and the per-input normalizer.
pub fn feed_forward(
    log: &mut TraceLog,
    reqs: &mut [RequestEntry],
    dense: &DenseLayer,
    state: &mut ActiveState,
    len_seq: usize,
    pad: usize,
) {
    let batch = state.norm.len();
    let r_max = state.slots;
    for i in 0..batch {
        let h = hidden(dense, i);
        let mut m = f32::NEG_INFINITY;
        for r in 0..r_max {
            let (e, s) = slot_of(i, r, len_seq, pad);
            log.read("ReqArray", e * pad + s, 1);
            let u = &reqs[e].buffer[s];
            let mut a = u.bias;
            for (w, x) in u.weights().iter().zip(&h) {
                a += w * x;
            }
            state.logits[i * r_max + r] = a;
            let larger = ct_select(ct_gt(a, m), a, m);
            m = ct_select(u.is_dummy, m, larger);
        }
        let mut norm = 0.0f32;
        for r in 0..r_max {
            let (e, s) = slot_of(i, r, len_seq, pad);
            log.write("ReqArray", e * pad + s, 1);
            let u = &mut reqs[e].buffer[s];
            let z = (state.logits[i * r_max + r] - m).exp();
            let z = ct_select(u.is_dummy, 0.0, z);
            u.arrays_mut().last_activation[i] = z;
            norm += z;
        }
        state.max[i] = m;
        state.norm[i] = ct_select(ct_gt(norm, 0.0), norm, 1.0);
    }
}

/// Softmax cross-entropy delta of one output slot (negative gradient of the
/// loss with respect to the logit).
#[inline]
pub fn output_delta(z: f32, norm: f32, is_label: Predicate, inv_labels: f32, batch: usize) -> f32 {
    let p = z / norm;
    let b = batch as f32;
    ct_select(is_label, (inv_labels - p) / b, -p / b)
}

/// Fills output and dense gradient accumulators (`t`, `t_bias`) and deltas.
/// Inputs with no labels (batch padding) get zero deltas through a public gate.
/// Returns the summed loss over inputs with labels.
pub fn backprop(
    log: &mut TraceLog,
    reqs: &mut [RequestEntry],
    dense: &mut DenseLayer,
    state: &ActiveState,
    batch: &[SparseExample],
    len_seq: usize,
    pad: usize,
) -> f64 {
    let b = batch.len();
    let r_max = state.slots;
    let n0 = dense.len();
    let mut loss = 0.0f64;
    let mut dense_delta = vec![0.0f32; n0];

    for (i, x) in batch.iter().enumerate() {
        let ny = x.labels.len();
        let gate = Predicate::public(ny > 0);
        let inv = if ny > 0 { 1.0 / ny as f32 } else { 0.0 };
        let h = hidden(dense, i);
        let mut label_logits = 0.0f32;

        for r in 0..r_max {
            let (e, s) = slot_of(i, r, len_seq, pad);
            log.cmpset("Labels", i, ny);
            let u = &mut reqs[e].buffer[s];
            let mut is_label = Predicate::FALSE;
            for &y in &x.labels {
                is_label = is_label | ct_eq(u.id, y as u64);
            }
            let z = u.last_activation()[i];
            let d = output_delta(z, state.norm[i], is_label, inv, b) * gate.as_f32();
            u.arrays_mut().delta[i] = d;
            let a = state.logits[i * r_max + r];
            label_logits += ct_select(is_label, a, 0.0);
        }
        // loss_i = logsumexp over real slots - mean logit of requested labels
        let lse = state.max[i] as f64 + (state.norm[i] as f64).ln();
        let li = lse - (inv as f64) * label_logits as f64;
        let any_real = ct_gt(state.max[i], f32::NEG_INFINITY);
        let li = ct_select(any_real, li, 0.0);
        loss += gate.as_f64() * li;

        dense_delta.iter_mut().for_each(|d| *d = 0.0);
        for r in 0..r_max {
            let (e, s) = slot_of(i, r, len_seq, pad);
            log.write("ReqArray", e * pad + s, 1);
            let u = &mut reqs[e].buffer[s];
            let d = u.delta()[i];
            u.t_bias += d;
            let arrs = u.arrays_mut();
            for n in 0..n0 {
                dense_delta[n] += d * arrs.weights[n];
                arrs.t[n] += d * h[n];
            }
        }
        for (n, node) in dense.nodes.iter_mut().enumerate() {
            let active = ct_gt(h[n], 0.0);
            node.arrays_mut().delta[i] = ct_select(active, dense_delta[n], 0.0);
        }
    }

    for (i, x) in batch.iter().enumerate() {
        for (n, node) in dense.nodes.iter_mut().enumerate() {
            log.write("Dense", n, x.nnz());
            let d = node.delta()[i];
            let t = node.arrays_mut().t;
            for &(idx, v) in &x.features {
                t[idx as usize] += d * v;
            }
            node.t_bias += d;
        }
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(output_delta(0.25, 1.0, Predicate::TRUE, 1.0, 2), 0.375);
        assert_eq!(output_delta(0.25, 1.0, Predicate::FALSE, 1.0, 2), -0.125);
        assert_eq!(output_delta(0.0, 1.0, Predicate::FALSE, 1.0, 2), 0.0);
    }
}

//! Plain trainer with direct indexing, used to check the oblivious engine.
//!
//! It selects the same active neurons (same hash family, probe order and
//! bucket truncation) and accumulates in the same order as the engine, so
//! results normally agree bit for bit; comparisons still use a tolerance.

use std::collections::BTreeMap;

use crate::dataio::SparseExample;
use crate::engine::{
    adam_record, corrected_lr, forward_hidden, output_delta, precision_at_1, predict_top1, Engine, PublicParams,
};
use crate::error::{Error, Result};
use crate::lsh::{encode_bucket, mp_wta_probes, top3_plain, WtaFamily};
use crate::model::{InitialWeights, NeuronRecord};
use crate::obliv::Predicate;

#[derive(Clone, Debug)]
pub struct RefModel {
    pub params: PublicParams,
    pub family: WtaFamily,
    pub dense: Vec<NeuronRecord>,
    /// Output neurons indexed by id.
    pub output: Vec<NeuronRecord>,
    /// Reachable ids per bucket, ascending, at most `PADSIZE`.
    pub buckets: Vec<Vec<u64>>,
    pub step: u64,
}

impl RefModel {
    pub fn new(params: PublicParams, init: &InitialWeights) -> Result<Self> {
        params.validate()?;
        let lsh = &params.lsh;
        let family = WtaFamily::sample(lsh.k, lsh.m, params.network.n0, lsh.seed)?;
        let rec = |(i, w): (usize, &Vec<f32>)| NeuronRecord::real(i as u64, w, 0);
        let mut model = Self {
            dense: init.dense.iter().enumerate().map(rec).collect(),
            output: init.output.iter().enumerate().map(rec).collect(),
            buckets: Vec::new(),
            family,
            params,
            step: 0,
        };
        model.refresh();
        Ok(model)
    }

    /// Rehashes every output neuron; buckets keep their smallest ids.
    pub fn refresh(&mut self) {
        let lsh = &self.params.lsh;
        let mut buckets = vec![Vec::new(); lsh.num_buckets()];
        for u in &self.output {
            let top = top3_plain(u.weights(), &self.family);
            buckets[encode_bucket(&top.h, lsh.m) as usize].push(u.id);
        }
        for b in &mut buckets {
            b.truncate(lsh.pad_size);
        }
        self.buckets = buckets;
    }

    /// Active output ids of hidden vector `h`, in slot order.
    pub fn active_set(&self, h: &[f32]) -> Vec<u64> {
        let top = top3_plain(h, &self.family);
        mp_wta_probes(&top, &self.params.lsh)
            .into_iter()
            .flat_map(|b| self.buckets[b as usize].iter().copied())
            .collect()
    }

    pub fn active_sets(&self, batch: &[SparseExample]) -> Vec<Vec<u64>> {
        batch
            .iter()
            .map(|x| self.active_set(&forward_hidden(&self.dense, x)))
            .collect()
    }

    pub fn predict(&self, x: &SparseExample) -> Option<u64> {
        let outputs: Vec<&NeuronRecord> = self.output.iter().collect();
        predict_top1(&self.dense, &outputs, x)
    }

    pub fn p_at_1(&self, data: &[SparseExample]) -> Result<f64> {
        precision_at_1(data, |x| self.predict(x))
    }
}

/// One training step; returns the summed loss over labeled inputs.
pub fn ref_batch_step(model: &mut RefModel, batch: &[SparseExample]) -> Result<f64> {
    let b = model.params.train.batch_size;
    if batch.len() != b {
        return Err(Error::LengthMismatch {
            expected: b,
            actual: batch.len(),
        });
    }
    let n0 = model.dense.len();
    let hs: Vec<Vec<f32>> = batch.iter().map(|x| forward_hidden(&model.dense, x)).collect();

    // contributions[u] = per-input (t, t_bias) in ascending input order
    let mut contributions: BTreeMap<u64, Vec<(Vec<f32>, f32)>> = BTreeMap::new();
    let mut dense_deltas = vec![vec![0.0f32; n0]; b];
    let mut loss = 0.0f64;

    for (i, x) in batch.iter().enumerate() {
        let h = &hs[i];
        let active = model.active_set(h);
        let logits: Vec<f32> = active
            .iter()
            .map(|&u| {
                let u = &model.output[u as usize];
                let mut a = u.bias;
                for (w, hv) in u.weights().iter().zip(h) {
                    a += w * hv;
                }
                a
            })
            .collect();
        let mut m = f32::NEG_INFINITY;
        for &a in &logits {
            if a > m {
                m = a;
            }
        }
        let z: Vec<f32> = logits.iter().map(|a| (a - m).exp()).collect();
        let mut norm = 0.0f32;
        for &zv in &z {
            norm += zv;
        }
        // NaN falls back to 1 too, as in the engine
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(norm > 0.0) {
            norm = 1.0;
        }

        let ny = x.labels.len();
        let gate = if ny > 0 { 1.0f32 } else { 0.0 };
        let inv = if ny > 0 { 1.0 / ny as f32 } else { 0.0 };
        let mut label_logits = 0.0f32;
        let mut dd = vec![0.0f32; n0];
        for (r, &u) in active.iter().enumerate() {
            let is_label = x.labels.iter().any(|&y| y as u64 == u);
            if is_label {
                label_logits += logits[r];
            }
            let d = output_delta(z[r], norm, Predicate::public(is_label), inv, b) * gate;
            let w = model.output[u as usize].weights();
            let mut t = vec![0.0f32; n0];
            for n in 0..n0 {
                dd[n] += d * w[n];
                t[n] += d * h[n];
            }
            contributions.entry(u).or_default().push((t, 0.0 + d));
        }
        if ny > 0 && !active.is_empty() {
            let lse = m as f64 + (norm as f64).ln();
            loss += lse - inv as f64 * label_logits as f64;
        }
        for n in 0..n0 {
            dense_deltas[i][n] = if h[n] > 0.0 { dd[n] } else { 0.0 };
        }
    }

    for (i, x) in batch.iter().enumerate() {
        for (n, node) in model.dense.iter_mut().enumerate() {
            let d = dense_deltas[i][n];
            let t = node.t_mut();
            for &(idx, v) in &x.features {
                t[idx as usize] += d * v;
            }
            node.t_bias += d;
        }
    }

    let tp = model.params.train.clone();
    let lr = corrected_lr(&tp, model.step + 1);
    for (u, parts) in contributions {
        // right fold, matching the merge's backward scan
        let (mut t, mut tb) = parts.last().cloned().expect("non-empty");
        for (pt, pb) in parts.iter().rev().skip(1) {
            for (acc, &v) in t.iter_mut().zip(pt) {
                *acc += v;
            }
            tb += pb;
        }
        let rec = &mut model.output[u as usize];
        rec.t_mut().copy_from_slice(&t);
        rec.t_bias = tb;
        adam_record(rec, lr, &tp);
    }
    for node in &mut model.dense {
        adam_record(node, lr, &tp);
    }
    model.step += 1;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub max_rel: f64,
    /// Where the largest deviation sits, e.g. `output[12].w[3]`.
    pub location: String,
    pub pass: bool,
}

/// Relative deviation of `a` from `b`, with denominator `max(|a|, |b|, 1e-8)`.
pub fn rel_dev(a: f32, b: f32) -> f64 {
    let (a, b) = (a as f64, b as f64);
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn compare_records(layer: &str, a: &[&NeuronRecord], b: &[&NeuronRecord], worst: &mut (f64, String)) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            actual: a.len(),
        });
    }
    for (ra, rb) in a.iter().zip(b) {
        if ra.id != rb.id || ra.dim() != rb.dim() {
            return Err(Error::InvalidConfig(format!(
                "{layer}: record {} does not line up with {}",
                ra.id, rb.id
            )));
        }
        let d = rel_dev(ra.bias, rb.bias);
        if d > worst.0 {
            *worst = (d, format!("{layer}[{}].bias", ra.id));
        }
        for (k, (&x, &y)) in ra.weights().iter().zip(rb.weights()).enumerate() {
            let d = rel_dev(x, y);
            if d > worst.0 {
                *worst = (d, format!("{layer}[{}].w[{k}]", ra.id));
            }
        }
    }
    Ok(())
}

/// Largest per-parameter relative deviation between two models.
pub fn compare_models(engine: &Engine, model: &RefModel, tol: f64) -> Result<Deviation> {
    let mut worst = (0.0, String::from("none"));
    let ed: Vec<&NeuronRecord> = engine.dense.nodes.iter().collect();
    let rd: Vec<&NeuronRecord> = model.dense.iter().collect();
    compare_records("dense", &ed, &rd, &mut worst)?;
    let eo = engine.output_neurons();
    let ro: Vec<&NeuronRecord> = model.output.iter().collect();
    compare_records("output", &eo, &ro, &mut worst)?;
    Ok(Deviation {
        max_rel: worst.0,
        location: worst.1,
        pass: worst.0 <= tol,
    })
}

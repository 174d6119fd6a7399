use crate::model::NeuronRecord;

use super::params::TrainParams;

/// Bias-corrected step size `lr * sqrt(1 - b2^step) / (1 - b1^step)` for a
/// 1-based step.
pub fn corrected_lr(p: &TrainParams, step: u64) -> f32 {
    let s = step as i32;
    let b1 = p.beta1 as f64;
    let b2 = p.beta2 as f64;
    (p.lr as f64 * (1.0 - b2.powi(s)).sqrt() / (1.0 - b1.powi(s))) as f32
}

/// Adam on one parameter vector. `t` holds the descent direction (negative
/// gradient) and is cleared.
#[inline]
pub fn adam_apply(w: &mut [f32], m: &mut [f32], v: &mut [f32], t: &mut [f32], lr: f32, p: &TrainParams) {
    for d in 0..w.len() {
        let g = t[d];
        m[d] = p.beta1 * m[d] + (1.0 - p.beta1) * g;
        v[d] = p.beta2 * v[d] + (1.0 - p.beta2) * g * g;
        w[d] += lr * m[d] / (v[d].sqrt() + p.eps);
        t[d] = 0.0;
    }
}

/// Adam on every weight and the bias of `rec`, identically for dummies.
pub fn adam_record(rec: &mut NeuronRecord, lr: f32, p: &TrainParams) {
    let mut bias = [rec.bias];
    let mut mb = [rec.m_bias];
    let mut vb = [rec.v_bias];
    let mut tb = [rec.t_bias];
    adam_apply(&mut bias, &mut mb, &mut vb, &mut tb, lr, p);
    rec.bias = bias[0];
    rec.m_bias = mb[0];
    rec.v_bias = vb[0];
    rec.t_bias = tb[0];
    let a = rec.arrays_mut();
    adam_apply(a.weights, a.m, a.v, a.t, lr, p);
}

//! Neuron state and parameter initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::obliv::{assign_f32s, ct_select, swap_f32s, Field, OblRecord, Predicate};

/// One neuron's full state.
///
/// The six array fields share one contiguous allocation laid out as
/// `weights | m | v | t | last_activation | delta`, with `dim` entries for the
/// first four and `lanes` (= batch size) entries for the last two.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronRecord {
    pub id: u64,
    pub is_dummy: Predicate,
    /// Bucket a dummy is pinned to across refreshes; unused for reals.
    pub target: u64,
    pub bias: f32,
    pub m_bias: f32,
    pub v_bias: f32,
    pub t_bias: f32,
    dim: usize,
    lanes: usize,
    data: Vec<f32>,
}

/// Mutable views of every array field at once.
pub struct NeuronArraysMut<'a> {
    pub weights: &'a mut [f32],
    pub m: &'a mut [f32],
    pub v: &'a mut [f32],
    pub t: &'a mut [f32],
    pub last_activation: &'a mut [f32],
    pub delta: &'a mut [f32],
}

impl NeuronRecord {
    pub fn real(id: u64, weights: &[f32], lanes: usize) -> Self {
        let mut rec = Self::dummy(weights.len(), lanes, id);
        rec.is_dummy = Predicate::FALSE;
        rec.weights_mut().copy_from_slice(weights);
        rec
    }

    /// All-zero record flagged dummy, with sentinel id.
    pub fn dummy(dim: usize, lanes: usize, sentinel: u64) -> Self {
        Self {
            id: sentinel,
            is_dummy: Predicate::TRUE,
            target: 0,
            bias: 0.0,
            m_bias: 0.0,
            v_bias: 0.0,
            t_bias: 0.0,
            dim,
            lanes,
            data: vec![0.0; 4 * dim + 2 * lanes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn weights(&self) -> &[f32] {
        &self.data[..self.dim]
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.data[..self.dim]
    }

    pub fn m(&self) -> &[f32] {
        &self.data[self.dim..2 * self.dim]
    }

    pub fn v(&self) -> &[f32] {
        &self.data[2 * self.dim..3 * self.dim]
    }

    pub fn t(&self) -> &[f32] {
        &self.data[3 * self.dim..4 * self.dim]
    }

    pub fn t_mut(&mut self) -> &mut [f32] {
        &mut self.data[3 * self.dim..4 * self.dim]
    }

    pub fn last_activation(&self) -> &[f32] {
        &self.data[4 * self.dim..4 * self.dim + self.lanes]
    }

    pub fn delta(&self) -> &[f32] {
        &self.data[4 * self.dim + self.lanes..]
    }

    pub fn arrays_mut(&mut self) -> NeuronArraysMut<'_> {
        let (weights, rest) = self.data.split_at_mut(self.dim);
        let (m, rest) = rest.split_at_mut(self.dim);
        let (v, rest) = rest.split_at_mut(self.dim);
        let (t, rest) = rest.split_at_mut(self.dim);
        let (last_activation, delta) = rest.split_at_mut(self.lanes);
        NeuronArraysMut {
            weights,
            m,
            v,
            t,
            last_activation,
            delta,
        }
    }

    /// Every numeric field is exactly zero.
    pub fn is_all_zero(&self) -> bool {
        self.bias == 0.0
            && self.m_bias == 0.0
            && self.v_bias == 0.0
            && self.t_bias == 0.0
            && self.data.iter().all(|&x| x == 0.0)
    }

    /// Overwrites weights, moments and bias state, keeping the shape.
    pub fn set_params(&mut self, weights: &[f32], m: &[f32], v: &[f32], bias: f32, m_bias: f32, v_bias: f32) {
        let a = self.arrays_mut();
        a.weights.copy_from_slice(weights);
        a.m.copy_from_slice(m);
        a.v.copy_from_slice(v);
        self.bias = bias;
        self.m_bias = m_bias;
        self.v_bias = v_bias;
    }
}

impl OblRecord for NeuronRecord {
    #[inline]
    fn cond_assign(&mut self, pred: Predicate, src: &Self) {
        debug_assert_eq!(self.data.len(), src.data.len());
        self.id = ct_select(pred, src.id, self.id);
        self.is_dummy = ct_select(pred, src.is_dummy, self.is_dummy);
        self.target = ct_select(pred, src.target, self.target);
        self.bias = ct_select(pred, src.bias, self.bias);
        self.m_bias = ct_select(pred, src.m_bias, self.m_bias);
        self.v_bias = ct_select(pred, src.v_bias, self.v_bias);
        self.t_bias = ct_select(pred, src.t_bias, self.t_bias);
        assign_f32s(pred, &src.data, &mut self.data);
    }

    #[inline]
    fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self) {
        debug_assert_eq!(a.data.len(), b.data.len());
        fn sw<T: crate::obliv::ObliviousScalar>(p: Predicate, x: &mut T, y: &mut T) {
            let (u, v) = (*x, *y);
            *x = ct_select(p, v, u);
            *y = ct_select(p, u, v);
        }
        sw(pred, &mut a.id, &mut b.id);
        sw(pred, &mut a.is_dummy, &mut b.is_dummy);
        sw(pred, &mut a.target, &mut b.target);
        sw(pred, &mut a.bias, &mut b.bias);
        sw(pred, &mut a.m_bias, &mut b.m_bias);
        sw(pred, &mut a.v_bias, &mut b.v_bias);
        sw(pred, &mut a.t_bias, &mut b.t_bias);
        swap_f32s(pred, &mut a.data, &mut b.data);
    }

    fn fields(&self) -> Vec<Field> {
        let d = self.dim * 4;
        let l = self.lanes * 4;
        vec![
            Field::scalar("id"),
            Field::scalar("is_dummy"),
            Field::scalar("target"),
            Field::scalar("bias"),
            Field::scalar("m_bias"),
            Field::scalar("v_bias"),
            Field::scalar("t_bias"),
            Field::block("weights", d),
            Field::block("m", d),
            Field::block("v", d),
            Field::block("t", d),
            Field::block("last_activation", l),
            Field::block("delta", l),
        ]
    }
}

/// The fully connected hidden layer, always scanned in public order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub nodes: Vec<NeuronRecord>,
}

impl DenseLayer {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Initial parameters of both layers, drawn uniformly from `[-s, s]` with
/// `s = 1/sqrt(fan_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialWeights {
    /// `n0` rows of `d_input` weights.
    pub dense: Vec<Vec<f32>>,
    /// `c` rows of `n0` weights.
    pub output: Vec<Vec<f32>>,
}

pub fn init_weights(d_input: usize, n0: usize, c: usize, seed: u64) -> InitialWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = |count: usize, fan_in: usize| -> Vec<Vec<f32>> {
        let s = 1.0 / (fan_in.max(1) as f32).sqrt();
        (0..count)
            .map(|_| (0..fan_in).map(|_| rng.random_range(-s..=s)).collect())
            .collect()
    };
    let dense = rows(n0, d_input);
    let output = rows(c, n0);
    InitialWeights { dense, output }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obliv::obl_copy_record;
    use crate::trace::{EventKind, TraceLog};

    #[test]
    fn copy_record_event_count_is_layout_only() {
        let src = NeuronRecord::real(3, &[1.0, 2.0, 3.0], 2);
        for pred in [Predicate::TRUE, Predicate::FALSE] {
            let mut dst = NeuronRecord::dummy(3, 2, 99);
            let before = dst.clone();
            let mut log = TraceLog::new();
            obl_copy_record(&mut log, pred, &src, &mut dst);
            assert_eq!(log.count(EventKind::Write, "weights"), 1);
            assert_eq!(log.len(), 7 + 6);
            if pred == Predicate::TRUE {
                assert_eq!(dst, src);
            } else {
                assert_eq!(dst, before);
            }
        }
    }

    #[test]
    fn swap_exchanges_everything() {
        let mut a = NeuronRecord::real(1, &[1.0, 2.0], 1);
        let mut b = NeuronRecord::dummy(2, 1, 5);
        let (a0, b0) = (a.clone(), b.clone());
        NeuronRecord::cond_swap(Predicate::FALSE, &mut a, &mut b);
        assert_eq!((&a, &b), (&a0, &b0));
        NeuronRecord::cond_swap(Predicate::TRUE, &mut a, &mut b);
        assert_eq!((a, b), (b0, a0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_weights(10, 4, 6, 1);
        assert_eq!(a, init_weights(10, 4, 6, 1));
        assert_ne!(a, init_weights(10, 4, 6, 2));
        let s = 1.0 / 10f32.sqrt();
        assert!(a.dense.iter().flatten().all(|w| w.abs() <= s));
        assert_eq!(a.output.len(), 6);
        assert_eq!(a.output[0].len(), 4);
    }
}

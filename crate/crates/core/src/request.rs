//! Request entries: the fixed-shape triplets that carry neurons between the
//! LSH table and the updater.

use crate::error::{Error, Result};
use crate::model::NeuronRecord;
use crate::obliv::{ct_select, Field, OblRecord, ObliviousScalar, Predicate};

/// Bucket id carried by hash-table padding; matches no real bucket.
pub const FILLER_BUCKET: u64 = u64::MAX;

/// One probed bucket for one input, with its neuron buffer.
///
/// `bin`, `rank` and `overflow` are scratch columns used while routing the
/// entry into the oblivious hash table; `oht_pos` is the slot it was placed
/// in, kept so the write-back table can be rebuilt with a single sort.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestEntry {
    pub bucket: u64,
    /// Input index within the batch, 1-based.
    pub batch_rank: u64,
    /// Position in the requester's output, `(i-1)*lenSeq + t`.
    pub req_index: u64,
    pub is_dummy: Predicate,
    pub filler: Predicate,
    pub bin: u64,
    pub rank: u64,
    pub overflow: Predicate,
    pub oht_pos: u64,
    /// `PADSIZE` records, or empty while payloads are deferred.
    pub buffer: Vec<NeuronRecord>,
}

impl RequestEntry {
    pub fn new(bucket: u64, batch_rank: u64, req_index: u64, buffer: Vec<NeuronRecord>) -> Self {
        Self {
            bucket,
            batch_rank,
            req_index,
            is_dummy: Predicate::FALSE,
            filler: Predicate::FALSE,
            bin: 0,
            rank: 0,
            overflow: Predicate::FALSE,
            oht_pos: 0,
            buffer,
        }
    }

    pub fn filler(buffer: Vec<NeuronRecord>) -> Self {
        Self {
            is_dummy: Predicate::TRUE,
            filler: Predicate::TRUE,
            ..Self::new(FILLER_BUCKET, 0, 0, buffer)
        }
    }

    /// Copy without the neuron buffer.
    pub fn metadata(&self) -> Self {
        Self {
            buffer: Vec::new(),
            ..self.clone()
        }
    }
}

#[inline(always)]
fn sw<T: ObliviousScalar>(p: Predicate, x: &mut T, y: &mut T) {
    let (u, v) = (*x, *y);
    *x = ct_select(p, v, u);
    *y = ct_select(p, u, v);
}

impl OblRecord for RequestEntry {
    fn cond_assign(&mut self, pred: Predicate, src: &Self) {
        self.bucket = ct_select(pred, src.bucket, self.bucket);
        self.batch_rank = ct_select(pred, src.batch_rank, self.batch_rank);
        self.req_index = ct_select(pred, src.req_index, self.req_index);
        self.is_dummy = ct_select(pred, src.is_dummy, self.is_dummy);
        self.filler = ct_select(pred, src.filler, self.filler);
        self.bin = ct_select(pred, src.bin, self.bin);
        self.rank = ct_select(pred, src.rank, self.rank);
        self.overflow = ct_select(pred, src.overflow, self.overflow);
        self.oht_pos = ct_select(pred, src.oht_pos, self.oht_pos);
        for (d, s) in self.buffer.iter_mut().zip(&src.buffer) {
            d.cond_assign(pred, s);
        }
    }

    fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self) {
        debug_assert_eq!(a.buffer.len(), b.buffer.len());
        sw(pred, &mut a.bucket, &mut b.bucket);
        sw(pred, &mut a.batch_rank, &mut b.batch_rank);
        sw(pred, &mut a.req_index, &mut b.req_index);
        sw(pred, &mut a.is_dummy, &mut b.is_dummy);
        sw(pred, &mut a.filler, &mut b.filler);
        sw(pred, &mut a.bin, &mut b.bin);
        sw(pred, &mut a.rank, &mut b.rank);
        sw(pred, &mut a.overflow, &mut b.overflow);
        sw(pred, &mut a.oht_pos, &mut b.oht_pos);
        for (x, y) in a.buffer.iter_mut().zip(b.buffer.iter_mut()) {
            NeuronRecord::cond_swap(pred, x, y);
        }
    }

    fn fields(&self) -> Vec<Field> {
        let mut f = vec![
            Field::scalar("bucket"),
            Field::scalar("batch_rank"),
            Field::scalar("req_index"),
            Field::scalar("is_dummy"),
            Field::scalar("filler"),
            Field::scalar("bin"),
            Field::scalar("rank"),
            Field::scalar("overflow"),
            Field::scalar("oht_pos"),
        ];
        for r in &self.buffer {
            f.extend(r.fields());
        }
        f
    }
}

/// Public location of output slot `r` (1-based) of input `i` (1-based):
/// `(entry index, buffer slot)`.
pub fn slot_node(i: usize, r: usize, batch: usize, len_seq: usize, pad: usize) -> Result<(usize, usize)> {
    let r_max = len_seq * pad;
    if i == 0 || i > batch || r == 0 || r > r_max {
        return Err(Error::OutOfRange(format!(
            "slot (i={i}, r={r}) outside 1..={batch} x 1..={r_max}"
        )));
    }
    let t = (r - 1) / pad;
    let s = (r - 1) % pad;
    Ok(((i - 1) * len_seq + t, s))
}

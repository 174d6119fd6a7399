//! Conditional assignment and swap over byte buffers of public length.

use crate::error::{Error, Result};
use crate::obliv::Predicate;
use crate::trace::TraceLog;

const CHUNKS: [usize; 6] = [32, 16, 8, 4, 2, 1];

/// Chunk sizes used for a buffer of `n` bytes: as many 32-byte chunks as fit,
/// then a cascade over the remainder. Depends on `n` only.
pub fn chunk_schedule(n: usize) -> Vec<usize> {
    let mut out = vec![32; n / 32];
    let mut rem = n % 32;
    for &c in &CHUNKS[1..] {
        if rem >= c {
            out.push(c);
            rem -= c;
        }
    }
    out
}

#[inline(always)]
fn select_bytes(mask: u8, t: &[u8], f: &[u8], dst: &mut [u8]) {
    for ((d, &a), &b) in dst.iter_mut().zip(t).zip(f) {
        *d = b ^ (mask & (a ^ b));
    }
}

/// `dst := pred ? src : dst` over raw bytes, untraced. Lengths must match.
#[inline(always)]
pub(crate) fn assign_bytes(pred: Predicate, src: &[u8], dst: &mut [u8]) {
    let mask = pred.mask8();
    for (d, &s) in dst.iter_mut().zip(src) {
        *d ^= mask & (*d ^ s);
    }
}

/// Swaps `a` and `b` iff `pred`, untraced.
#[inline(always)]
pub(crate) fn swap_bytes(pred: Predicate, a: &mut [u8], b: &mut [u8]) {
    let mask = pred.mask8();
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let d = mask & (*x ^ *y);
        *x ^= d;
        *y ^= d;
    }
}

/// `dst := pred ? src : dst` over `f32` lanes, untraced.
#[inline(always)]
pub(crate) fn assign_f32s(pred: Predicate, src: &[f32], dst: &mut [f32]) {
    assign_bytes(pred, bytemuck::cast_slice(src), bytemuck::cast_slice_mut(dst));
}

#[inline(always)]
pub(crate) fn swap_f32s(pred: Predicate, a: &mut [f32], b: &mut [f32]) {
    swap_bytes(pred, bytemuck::cast_slice_mut(a), bytemuck::cast_slice_mut(b));
}

/// `dst := pred ? t_buf : f_buf`, one `CmpSet` event per chunk.
pub fn obl_choose_block(log: &mut TraceLog, pred: Predicate, t_buf: &[u8], f_buf: &[u8], dst: &mut [u8]) -> Result<()> {
    let n = dst.len();
    for len in [t_buf.len(), f_buf.len()] {
        if len != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    let mask = pred.mask8();
    let mut off = 0;
    for c in chunk_schedule(n) {
        log.cmpset("block", off, c);
        select_bytes(mask, &t_buf[off..off + c], &f_buf[off..off + c], &mut dst[off..off + c]);
        off += c;
    }
    Ok(())
}

/// Swaps two equal-length buffers iff `pred`, traced like [`obl_choose_block`].
pub fn obl_swap_block(log: &mut TraceLog, pred: Predicate, a: &mut [u8], b: &mut [u8]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut off = 0;
    for c in chunk_schedule(a.len()) {
        log.cmpset("block", off, c);
        swap_bytes(pred, &mut a[off..off + c], &mut b[off..off + c]);
        off += c;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::assert_equal;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        assert!(chunk_schedule(0).is_empty());
        assert_eq!(chunk_schedule(7), vec![4, 2, 1]);
        assert_eq!(chunk_schedule(71), vec![32, 32, 4, 2, 1]);
    }

    #[test]
    fn empty_block_emits_nothing() {
        let mut log = TraceLog::new();
        let mut dst: [u8; 0] = [];
        obl_choose_block(&mut log, Predicate::TRUE, &[], &[], &mut dst).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn seven_bytes_follow_cascade() {
        let t = [1u8; 7];
        let f = [2u8; 7];
        let mut dst = [0u8; 7];
        let mut a = TraceLog::new();
        obl_choose_block(&mut a, Predicate::TRUE, &t, &f, &mut dst).unwrap();
        assert_eq!(dst, t);
        let lens: Vec<_> = a.events().map(|e| e.length).collect();
        assert_eq!(lens, vec![4, 2, 1]);

        let mut b = TraceLog::new();
        obl_choose_block(&mut b, Predicate::FALSE, &t, &f, &mut dst).unwrap();
        assert_eq!(dst, f);
        assert!(assert_equal(&a, &b).equal);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let mut log = TraceLog::new();
        let mut dst = [0u8; 4];
        assert!(obl_choose_block(&mut log, Predicate::TRUE, &[0; 3], &[0; 4], &mut dst).is_err());
    }

    proptest! {
        #[test]
        fn swap_swaps_iff_pred(p: bool, a in proptest::collection::vec(any::<u8>(), 0..80)) {
            let b: Vec<u8> = a.iter().map(|x| x.wrapping_add(1)).collect();
            let (mut x, mut y) = (a.clone(), b.clone());
            let mut log = TraceLog::disabled();
            obl_swap_block(&mut log, Predicate::public(p), &mut x, &mut y).unwrap();
            if p {
                prop_assert_eq!((x, y), (b, a));
            } else {
                prop_assert_eq!((x, y), (a, b));
            }
        }
    }
}

//! Branch-free scalar comparison and selection.
//!
//! All selection is done with arithmetic masks; predicates are never
//! converted to `bool` inside the pipeline.

use std::ops::{BitAnd, BitOr, Not};

use crate::trace::TraceLog;

/// A secret bit produced by a comparison and consumed only by selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Predicate(u8);

impl Predicate {
    pub const TRUE: Predicate = Predicate(1);
    pub const FALSE: Predicate = Predicate(0);

    /// From the low bit of `bit`.
    #[inline(always)]
    pub fn from_bit(bit: u64) -> Self {
        Predicate((bit & 1) as u8)
    }

    /// Public conversion, for values that are public by construction
    /// (loop indices, flags in `PublicParams`).
    #[inline(always)]
    pub fn public(b: bool) -> Self {
        Predicate(b as u8)
    }

    #[inline(always)]
    pub fn bit(self) -> u8 {
        self.0
    }

    /// All-ones when set, zero otherwise.
    #[inline(always)]
    pub fn mask64(self) -> u64 {
        0u64.wrapping_sub(self.0 as u64)
    }

    #[inline(always)]
    pub fn mask32(self) -> u32 {
        0u32.wrapping_sub(self.0 as u32)
    }

    #[inline(always)]
    pub fn mask8(self) -> u8 {
        0u8.wrapping_sub(self.0)
    }

    /// 1.0 or 0.0, for gating arithmetic without a branch.
    #[inline(always)]
    pub fn as_f32(self) -> f32 {
        self.0 as f32
    }

    #[inline(always)]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl Not for Predicate {
    type Output = Predicate;
    #[inline(always)]
    fn not(self) -> Predicate {
        Predicate(self.0 ^ 1)
    }
}

impl BitAnd for Predicate {
    type Output = Predicate;
    #[inline(always)]
    fn bitand(self, rhs: Predicate) -> Predicate {
        Predicate(self.0 & rhs.0)
    }
}

impl BitOr for Predicate {
    type Output = Predicate;
    #[inline(always)]
    fn bitor(self, rhs: Predicate) -> Predicate {
        Predicate(self.0 | rhs.0)
    }
}

#[inline(always)]
fn eq_u64(a: u64, b: u64) -> Predicate {
    let x = a ^ b;
    // x == 0  <=>  (x | -x) has a clear top bit
    Predicate::from_bit(((x | x.wrapping_neg()) >> 63) ^ 1)
}

#[inline(always)]
fn lt_u64(a: u64, b: u64) -> Predicate {
    Predicate::from_bit((a ^ ((a ^ b) | (a.wrapping_sub(b) ^ b))) >> 63)
}

#[inline(always)]
fn gt_u64(a: u64, b: u64) -> Predicate {
    lt_u64(b, a)
}

#[inline(always)]
fn f32_order_key(x: f32) -> u32 {
    let bits = x.to_bits();
    let mask = (((bits as i32) >> 31) as u32) | 0x8000_0000;
    bits ^ mask
}

#[inline(always)]
fn f64_order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    let mask = (((bits as i64) >> 63) as u64) | 0x8000_0000_0000_0000;
    bits ^ mask
}

/// Scalars that support branch-free equality, ordering and selection.
///
/// Floats are ordered by the IEEE-754 total order on bit patterns:
/// `-NaN < -inf < ... < -0.0 < +0.0 < ... < +inf < +NaN`, and equality is
/// bit equality.
pub trait ObliviousScalar: Copy {
    fn ct_eq(a: Self, b: Self) -> Predicate;
    fn ct_gt(a: Self, b: Self) -> Predicate;
    fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self;
}

macro_rules! unsigned_scalar {
    ($($t:ty),*) => {$(
        impl ObliviousScalar for $t {
            #[inline(always)]
            fn ct_eq(a: Self, b: Self) -> Predicate { eq_u64(a as u64, b as u64) }
            #[inline(always)]
            fn ct_gt(a: Self, b: Self) -> Predicate { gt_u64(a as u64, b as u64) }
            #[inline(always)]
            fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self {
                let m = pred.mask64() as $t;
                v0 ^ (m & (v0 ^ v1))
            }
        }
    )*};
}

unsigned_scalar!(u8, u16, u32, u64, usize);

macro_rules! signed_scalar {
    ($($t:ty),*) => {$(
        impl ObliviousScalar for $t {
            #[inline(always)]
            fn ct_eq(a: Self, b: Self) -> Predicate { eq_u64(a as i64 as u64, b as i64 as u64) }
            #[inline(always)]
            fn ct_gt(a: Self, b: Self) -> Predicate {
                const FLIP: u64 = 1 << 63;
                gt_u64((a as i64 as u64) ^ FLIP, (b as i64 as u64) ^ FLIP)
            }
            #[inline(always)]
            fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self {
                let m = pred.mask64() as $t;
                v0 ^ (m & (v0 ^ v1))
            }
        }
    )*};
}

signed_scalar!(i32, i64);

impl ObliviousScalar for f32 {
    #[inline(always)]
    fn ct_eq(a: Self, b: Self) -> Predicate {
        eq_u64(a.to_bits() as u64, b.to_bits() as u64)
    }
    #[inline(always)]
    fn ct_gt(a: Self, b: Self) -> Predicate {
        gt_u64(f32_order_key(a) as u64, f32_order_key(b) as u64)
    }
    #[inline(always)]
    fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self {
        f32::from_bits(u32::ct_select(pred, v1.to_bits(), v0.to_bits()))
    }
}

impl ObliviousScalar for f64 {
    #[inline(always)]
    fn ct_eq(a: Self, b: Self) -> Predicate {
        eq_u64(a.to_bits(), b.to_bits())
    }
    #[inline(always)]
    fn ct_gt(a: Self, b: Self) -> Predicate {
        gt_u64(f64_order_key(a), f64_order_key(b))
    }
    #[inline(always)]
    fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self {
        f64::from_bits(u64::ct_select(pred, v1.to_bits(), v0.to_bits()))
    }
}

impl ObliviousScalar for Predicate {
    #[inline(always)]
    fn ct_eq(a: Self, b: Self) -> Predicate {
        Predicate(!(a.0 ^ b.0) & 1)
    }
    #[inline(always)]
    fn ct_gt(a: Self, b: Self) -> Predicate {
        Predicate(a.0 & !b.0 & 1)
    }
    #[inline(always)]
    fn ct_select(pred: Predicate, v1: Self, v0: Self) -> Self {
        Predicate(u8::ct_select(pred, v1.0, v0.0))
    }
}

#[inline(always)]
pub fn ct_eq<T: ObliviousScalar>(a: T, b: T) -> Predicate {
    T::ct_eq(a, b)
}

#[inline(always)]
pub fn ct_gt<T: ObliviousScalar>(a: T, b: T) -> Predicate {
    T::ct_gt(a, b)
}

#[inline(always)]
pub fn ct_select<T: ObliviousScalar>(pred: Predicate, v1: T, v0: T) -> T {
    T::ct_select(pred, v1, v0)
}

/// Traced equality test: one `CmpSet` event regardless of outcome.
pub fn obl_compare<T: ObliviousScalar>(log: &mut TraceLog, a: T, b: T) -> Predicate {
    log.cmpset("scalar", 0, 1);
    ct_eq(a, b)
}

/// Traced strict greater-than.
pub fn obl_gt<T: ObliviousScalar>(log: &mut TraceLog, a: T, b: T) -> Predicate {
    log.cmpset("scalar", 0, 1);
    ct_gt(a, b)
}

/// Traced selection: `v1` if `pred` is set, else `v0`.
pub fn obl_choose<T: ObliviousScalar>(log: &mut TraceLog, pred: Predicate, v1: T, v0: T) -> T {
    log.cmpset("scalar", 0, 1);
    ct_select(pred, v1, v0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compare_and_gt_basics() {
        let mut log = TraceLog::new();
        assert_eq!(obl_compare(&mut log, 3u64, 3), Predicate::TRUE);
        assert_eq!(obl_compare(&mut log, 3u64, 4), Predicate::FALSE);
        assert_eq!(obl_gt(&mut log, 5u64, 2), Predicate::TRUE);
        assert_eq!(obl_gt(&mut log, 2u64, 2), Predicate::FALSE);
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn negative_zero_is_not_greater_than_positive_zero() {
        assert_eq!(ct_gt(-0.0f32, 0.0f32), Predicate::FALSE);
        assert_eq!(ct_gt(0.0f32, -0.0f32), Predicate::TRUE);
        assert_eq!(ct_gt(f32::NAN, f32::INFINITY), Predicate::TRUE);
        assert_eq!(ct_gt(-1.5f32, -2.0f32), Predicate::TRUE);
    }

    #[test]
    fn choose_selects_and_traces_identically() {
        let mut a = TraceLog::new();
        let mut b = TraceLog::new();
        assert_eq!(obl_choose(&mut a, Predicate::TRUE, 7i64, -9), 7);
        assert_eq!(obl_choose(&mut b, Predicate::FALSE, 7i64, -9), -9);
        assert!(crate::trace::assert_equal(&a, &b).equal);
    }

    #[test]
    fn compare_trace_is_value_independent() {
        let mut a = TraceLog::new();
        let mut b = TraceLog::new();
        obl_compare(&mut a, 3u32, 3);
        obl_compare(&mut b, 7u32, 9);
        assert_eq!(a.canonicalize().unwrap(), b.canonicalize().unwrap());
    }

    proptest! {
        #[test]
        fn u64_ops_match_native(a: u64, b: u64) {
            prop_assert_eq!(ct_eq(a, b).bit() == 1, a == b);
            prop_assert_eq!(ct_gt(a, b).bit() == 1, a > b);
        }

        #[test]
        fn i64_gt_matches_native(a: i64, b: i64) {
            prop_assert_eq!(ct_gt(a, b).bit() == 1, a > b);
        }

        #[test]
        fn f32_gt_matches_total_cmp(a: f32, b: f32) {
            let expected = a.total_cmp(&b) == std::cmp::Ordering::Greater;
            prop_assert_eq!(ct_gt(a, b).bit() == 1, expected);
        }

        #[test]
        fn f64_gt_matches_total_cmp(a: f64, b: f64) {
            let expected = a.total_cmp(&b) == std::cmp::Ordering::Greater;
            prop_assert_eq!(ct_gt(a, b).bit() == 1, expected);
        }

        #[test]
        fn select_matches_if(p: bool, a: u32, b: u32) {
            prop_assert_eq!(ct_select(Predicate::public(p), a, b), if p { a } else { b });
        }
    }
}

//! Bitonic sorting network with a compare-exchange schedule fixed by `n`.
//!
//! Power-of-two sizes use the iterative three-loop formulation. Other sizes
//! split off the largest power of two below `n`, sort it in reverse, sort the
//! remainder recursively, and merge.

use crate::obliv::{ct_eq, ct_gt, OblRecord, Predicate};
use crate::trace::TraceLog;

/// Keys compared lexicographically, branch-free.
pub trait SortKey: Copy {
    fn key_gt(a: &Self, b: &Self) -> Predicate;
}

impl SortKey for u64 {
    #[inline(always)]
    fn key_gt(a: &Self, b: &Self) -> Predicate {
        ct_gt(*a, *b)
    }
}

impl<const N: usize> SortKey for [u64; N] {
    #[inline(always)]
    fn key_gt(a: &Self, b: &Self) -> Predicate {
        // scan from the least significant component so each earlier
        // component overrides when it differs
        let mut gt = Predicate::FALSE;
        for i in (0..N).rev() {
            let eq = ct_eq(a[i], b[i]);
            gt = ct_gt(a[i], b[i]) | (eq & gt);
        }
        gt
    }
}

struct Sorter<'a, 'l, R, F> {
    recs: &'a mut [R],
    key: F,
    log: &'l mut TraceLog,
    object: &'static str,
}

impl<R, K, F> Sorter<'_, '_, R, F>
where
    R: OblRecord,
    K: SortKey,
    F: Fn(&R) -> K,
{
    #[inline(always)]
    fn exchange(&mut self, i: usize, l: usize, ascending: bool) {
        debug_assert!(i < l);
        self.log.exchange(self.object, i, l - i);
        let (lo, hi) = self.recs.split_at_mut(l);
        let (a, b) = (&mut lo[i], &mut hi[0]);
        let (ka, kb) = ((self.key)(a), (self.key)(b));
        // `ascending` is a public schedule bit
        let swap = if ascending {
            K::key_gt(&ka, &kb)
        } else {
            K::key_gt(&kb, &ka)
        };
        R::cond_swap(swap, a, b);
    }

    fn pow2(&mut self, lo: usize, n: usize, ascending: bool) {
        let mut k = 2;
        while k <= n {
            let mut j = k / 2;
            while j > 0 {
                for i in 0..n {
                    let l = i ^ j;
                    if l > i {
                        let up = (i & k) == 0;
                        self.exchange(lo + i, lo + l, up == ascending);
                    }
                }
                j /= 2;
            }
            k *= 2;
        }
    }

    fn sort(&mut self, lo: usize, n: usize, ascending: bool) {
        if n <= 1 {
            return;
        }
        if n.is_power_of_two() {
            self.pow2(lo, n, ascending);
            return;
        }
        let m = largest_pow2_below(n);
        self.sort(lo, m, !ascending);
        self.sort(lo + m, n - m, ascending);
        self.merge(lo, n, ascending);
    }

    fn merge(&mut self, lo: usize, n: usize, ascending: bool) {
        if n <= 1 {
            return;
        }
        let m = largest_pow2_below(n);
        for i in lo..lo + n - m {
            self.exchange(i, i + m, ascending);
        }
        self.merge(lo, m, ascending);
        self.merge(lo + m, n - m, ascending);
    }
}

/// Largest power of two strictly below `n` (for n ≥ 2).
fn largest_pow2_below(n: usize) -> usize {
    debug_assert!(n >= 2);
    let top = 1usize << (usize::BITS - 1 - n.leading_zeros());
    if top == n {
        n / 2
    } else {
        top
    }
}

/// Sorts `records` ascending by `key`. One `SortExchange(object, i, l-i)` event
/// per compare-exchange; not stable.
pub fn obl_sort<R, K, F>(log: &mut TraceLog, object: &'static str, records: &mut [R], key: F)
where
    R: OblRecord,
    K: SortKey,
    F: Fn(&R) -> K,
{
    obl_sort_dir(log, object, records, key, true);
}

pub fn obl_sort_dir<R, K, F>(log: &mut TraceLog, object: &'static str, records: &mut [R], key: F, ascending: bool)
where
    R: OblRecord,
    K: SortKey,
    F: Fn(&R) -> K,
{
    let n = records.len();
    let mut s = Sorter {
        recs: records,
        key,
        log,
        object,
    };
    s.sort(0, n, ascending);
}

/// Number of compare-exchanges the network performs for `n` elements.
pub fn exchange_count(n: usize) -> usize {
    fn merge(n: usize) -> usize {
        if n <= 1 {
            return 0;
        }
        let m = largest_pow2_below(n);
        (n - m) + merge(m) + merge(n - m)
    }
    fn sort(n: usize) -> usize {
        if n <= 1 {
            0
        } else if n.is_power_of_two() {
            let lg = n.trailing_zeros() as usize;
            (n / 2) * lg * (lg + 1) / 2
        } else {
            let m = largest_pow2_below(n);
            sort(m) + sort(n - m) + merge(n)
        }
    }
    sort(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{assert_equal, EventKind};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_with_log(v: &mut [u64]) -> TraceLog {
        let mut log = TraceLog::new();
        obl_sort(&mut log, "A", v, |x| *x);
        log
    }

    #[test]
    fn three_elements() {
        let mut v = [3u64, 1, 2];
        sorted_with_log(&mut v);
        assert_eq!(v, [1, 2, 3]);
    }

    #[test]
    fn four_elements_take_six_exchanges() {
        let mut v = [4u64, 3, 2, 1];
        let log = sorted_with_log(&mut v);
        assert_eq!(log.count(EventKind::SortExchange, "A"), 6);
        assert_eq!(exchange_count(4), 6);
    }

    #[test]
    fn pow2_count_formula() {
        for lg in 0..8usize {
            let n = 1 << lg;
            let mut v: Vec<u64> = (0..n as u64).rev().collect();
            let log = sorted_with_log(&mut v);
            assert_eq!(log.len(), (n / 2) * lg * (lg + 1) / 2);
        }
    }

    #[test]
    fn zero_one_principle_exhaustive() {
        for n in 1..=13usize {
            for bits in 0u32..(1 << n) {
                let mut v: Vec<u64> = (0..n).map(|i| ((bits >> i) & 1) as u64).collect();
                let mut expected = v.clone();
                expected.sort();
                let mut log = TraceLog::disabled();
                obl_sort(&mut log, "A", &mut v, |x| *x);
                assert_eq!(v, expected, "n={n} bits={bits:b}");
            }
        }
    }

    #[test]
    fn descending_direction() {
        let mut v: Vec<u64> = vec![5, 9, 1, 7, 3, 3, 0];
        let mut log = TraceLog::disabled();
        obl_sort_dir(&mut log, "A", &mut v, |x| *x, false);
        assert_eq!(v, vec![9, 7, 5, 3, 3, 1, 0]);
    }

    #[test]
    fn random_sizes_match_std_sort_and_traces_depend_on_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=64usize {
            let mut reference: Option<Vec<u8>> = None;
            for _ in 0..20 {
                let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..50)).collect();
                let mut expected = v.clone();
                expected.sort();
                let log = sorted_with_log(&mut v);
                assert_eq!(v, expected);
                assert_eq!(log.len(), exchange_count(n));
                let bytes = log.canonicalize().unwrap();
                match &reference {
                    Some(r) => assert_eq!(r, &bytes),
                    None => reference = Some(bytes),
                }
            }
        }
    }

    #[test]
    fn permutations_share_a_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base: Vec<u64> = (0..8).collect();
        let mut a = base.clone();
        let mut b = base.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let la = sorted_with_log(&mut a);
        let lb = sorted_with_log(&mut b);
        assert!(assert_equal(&la, &lb).equal);
    }

    #[test]
    fn lexicographic_keys() {
        let mut v: Vec<[u64; 2]> = vec![[1, 5], [0, 9], [1, 2], [0, 1]];
        let mut log = TraceLog::disabled();
        obl_sort(&mut log, "A", &mut v, |x| *x);
        assert_eq!(v, vec![[0, 1], [0, 9], [1, 2], [1, 5]]);
    }

    proptest! {
        #[test]
        fn tuple_keys_match_std(mut v in proptest::collection::vec(any::<[u64; 3]>().prop_map(|a| [a[0] % 4, a[1] % 4, a[2]]), 0..40)) {
            let mut expected = v.clone();
            expected.sort();
            let mut log = TraceLog::disabled();
            obl_sort(&mut log, "A", &mut v, |x| *x);
            prop_assert_eq!(v, expected);
        }
    }
}

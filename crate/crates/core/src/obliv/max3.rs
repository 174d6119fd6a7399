use crate::error::{Error, Result};
use crate::obliv::{ct_gt, ct_select, ObliviousScalar, Predicate};
use crate::trace::TraceLog;

/// Window positions of the largest, second- and third-largest values.
///
/// Fixed scan over the window with strict comparisons, so among equal values
/// the earlier position ranks higher. One `CmpSet` event per position.
pub fn obl_max3_in_window<T: ObliviousScalar>(log: &mut TraceLog, values: &[T]) -> Result<(usize, usize, usize)> {
    if values.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "top-3 selection needs a window of at least 3, got {}",
            values.len()
        )));
    }
    Ok(max3_untraced(values, |j| log.cmpset("window", j, 1)))
}

#[inline(always)]
pub(crate) fn max3_untraced<T: ObliviousScalar>(values: &[T], mut on_step: impl FnMut(usize)) -> (usize, usize, usize) {
    let mut v = [values[0]; 3];
    let mut pos = [0usize; 3];
    let mut empty = [Predicate::TRUE; 3];
    for (j, &x) in values.iter().enumerate() {
        on_step(j);
        let g1 = empty[0] | ct_gt(x, v[0]);
        let g2 = empty[1] | ct_gt(x, v[1]);
        let g3 = empty[2] | ct_gt(x, v[2]);

        v[2] = ct_select(g2, v[1], ct_select(g3, x, v[2]));
        pos[2] = ct_select(g2, pos[1], ct_select(g3, j, pos[2]));
        empty[2] = ct_select(g2, empty[1], ct_select(g3, Predicate::FALSE, empty[2]));

        v[1] = ct_select(g1, v[0], ct_select(g2, x, v[1]));
        pos[1] = ct_select(g1, pos[0], ct_select(g2, j, pos[1]));
        empty[1] = ct_select(g1, empty[0], ct_select(g2, Predicate::FALSE, empty[1]));

        v[0] = ct_select(g1, x, v[0]);
        pos[0] = ct_select(g1, j, pos[0]);
        empty[0] = ct_select(g1, Predicate::FALSE, empty[0]);
    }
    (pos[0], pos[1], pos[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::assert_equal;

    fn top3(values: &[u32]) -> (usize, usize, usize) {
        obl_max3_in_window(&mut TraceLog::disabled(), values).unwrap()
    }

    /// Stable descending sort by value: earlier position wins ties.
    fn brute(values: &[u32]) -> (usize, usize, usize) {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].cmp(&values[a]));
        (idx[0], idx[1], idx[2])
    }

    #[test]
    fn examples() {
        assert_eq!(top3(&[9, 5, 3]), (0, 1, 2));
        assert_eq!(top3(&[5, 1, 9, 3]), (2, 0, 3));
        assert_eq!(top3(&[4, 4, 4]), (0, 1, 2));
    }

    #[test]
    fn short_window_is_rejected() {
        assert!(obl_max3_in_window(&mut TraceLog::disabled(), &[1u32, 2]).is_err());
    }

    #[test]
    fn exhaustive_small_alphabet() {
        for m in 3..=8u32 {
            for code in 0..3u32.pow(m) {
                let values: Vec<u32> = (0..m).map(|i| (code / 3u32.pow(i)) % 3).collect();
                assert_eq!(top3(&values), brute(&values), "{values:?}");
            }
        }
    }

    #[test]
    fn trace_is_value_independent() {
        let mut a = TraceLog::new();
        let mut b = TraceLog::new();
        obl_max3_in_window(&mut a, &[1.0f32, 2.0, 3.0, 4.0]).unwrap();
        obl_max3_in_window(&mut b, &[4.0f32, -1.0, 0.0, 0.0]).unwrap();
        assert!(assert_equal(&a, &b).equal);
        assert_eq!(a.len(), 4);
    }
}

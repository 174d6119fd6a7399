use crate::obliv::{ct_eq, ct_select, obl_sort};
use crate::request::RequestEntry;
use crate::trace::TraceLog;

/// Groups entries by bucket and folds every group's gradient accumulators
/// into its first entry; the other members become dummies. Survivors come
/// first afterwards. The array length never changes.
pub fn obl_merge_requests(log: &mut TraceLog, reqs: &mut [RequestEntry]) {
    let by_bucket = |e: &RequestEntry| [e.bucket, e.batch_rank, e.req_index];
    obl_sort(log, "ReqArray", reqs, by_bucket);

    for j in (1..reqs.len()).rev() {
        log.cmpset("ReqArray", j, 1);
        let (head, tail) = reqs.split_at_mut(j);
        let (prev, cur) = (&mut head[j - 1], &mut tail[0]);
        let same = ct_eq(prev.bucket, cur.bucket) & !cur.is_dummy & !prev.is_dummy;
        for (p, c) in prev.buffer.iter_mut().zip(&cur.buffer) {
            p.t_bias += ct_select(same, c.t_bias, 0.0);
            for (pt, &ct) in p.t_mut().iter_mut().zip(c.t()) {
                *pt += ct_select(same, ct, 0.0);
            }
        }
        cur.is_dummy = cur.is_dummy | same;
    }

    let survivors_first = |e: &RequestEntry| [e.is_dummy.bit() as u64, e.bucket, e.batch_rank, e.req_index];
    obl_sort(log, "ReqArray", reqs, survivors_first);
}

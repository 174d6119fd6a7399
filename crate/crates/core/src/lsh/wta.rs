use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::obliv::max3_untraced;
use crate::trace::TraceLog;

/// One WTA hash function: the first `M` entries of a fixed random permutation
/// of the feature indices. Its value on a vector is the window position of
/// the largest sampled feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WtaHashFn {
    pub sampled_order: Vec<usize>,
}

/// `K` hash functions sharing a window size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WtaFamily {
    pub fns: Vec<WtaHashFn>,
    pub m: usize,
    pub dim: usize,
}

impl WtaFamily {
    pub fn sample(k: usize, m: usize, dim: usize, seed: u64) -> Result<Self> {
        if m > dim {
            return Err(Error::InvalidConfig(format!(
                "window size {m} exceeds feature dimension {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fns = (0..k)
            .map(|_| {
                let mut perm: Vec<usize> = (0..dim).collect();
                perm.shuffle(&mut rng);
                perm.truncate(m);
                WtaHashFn { sampled_order: perm }
            })
            .collect();
        Ok(Self { fns, m, dim })
    }

    pub fn from_orders(orders: Vec<Vec<usize>>, dim: usize) -> Result<Self> {
        let m = orders.first().map_or(0, Vec::len);
        for o in &orders {
            if o.len() != m || o.iter().any(|&i| i >= dim) {
                return Err(Error::InvalidConfig("malformed WTA sampled order".into()));
            }
        }
        Ok(Self {
            fns: orders
                .into_iter()
                .map(|sampled_order| WtaHashFn { sampled_order })
                .collect(),
            m,
            dim,
        })
    }

    pub fn k(&self) -> usize {
        self.fns.len()
    }
}

/// First-, second- and third-choice signatures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Top3 {
    pub h: Vec<usize>,
    pub h2: Vec<usize>,
    pub h3: Vec<usize>,
}

/// Oblivious top-3 signature: a fixed scan over every window.
/// Emits one `CmpSet("WTA", f*M + j, 1)` per window position.
pub fn wta_signature_top3(log: &mut TraceLog, q: &[f32], family: &WtaFamily) -> Result<Top3> {
    if family.m < 3 {
        return Err(Error::InvalidConfig(format!(
            "top-3 selection needs M >= 3, got {}",
            family.m
        )));
    }
    if q.len() < family.dim {
        return Err(Error::LengthMismatch {
            expected: family.dim,
            actual: q.len(),
        });
    }
    Ok(signature_top3(log, q, family))
}

pub(crate) fn signature_top3(log: &mut TraceLog, q: &[f32], family: &WtaFamily) -> Top3 {
    let k = family.k();
    let mut out = Top3 {
        h: Vec::with_capacity(k),
        h2: Vec::with_capacity(k),
        h3: Vec::with_capacity(k),
    };
    let mut window = vec![0.0f32; family.m];
    for (f, func) in family.fns.iter().enumerate() {
        // sampled indices are public
        for (w, &idx) in window.iter_mut().zip(&func.sampled_order) {
            *w = q[idx];
        }
        let base = f * family.m;
        let (a, b, c) = max3_untraced(&window, |j| log.cmpset("WTA", base + j, 1));
        out.h.push(a);
        out.h2.push(b);
        out.h3.push(c);
    }
    out
}

/// Non-oblivious top-3 with the same tie rule, for the reference trainer
/// and benchmarks.
pub fn top3_plain(q: &[f32], family: &WtaFamily) -> Top3 {
    let mut out = Top3 {
        h: vec![],
        h2: vec![],
        h3: vec![],
    };
    for func in &family.fns {
        let mut idx: Vec<usize> = (0..func.sampled_order.len()).collect();
        // stable sort keeps earlier positions ahead on ties
        idx.sort_by(|&a, &b| {
            let (x, y) = (q[func.sampled_order[a]], q[func.sampled_order[b]]);
            y.total_cmp(&x)
        });
        out.h.push(idx[0]);
        out.h2.push(idx[1]);
        out.h3.push(idx[2]);
    }
    out
}

/// Mixed-radix bucket id `sum dims[i] * M^i`.
pub fn encode_bucket(dims: &[usize], m: usize) -> u64 {
    dims.iter().rev().fold(0u64, |acc, &d| acc * m as u64 + d as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::assert_equal;

    #[test]
    fn single_function_example() {
        let fam = WtaFamily::from_orders(vec![vec![2, 0, 3]], 4).unwrap();
        let top = wta_signature_top3(&mut TraceLog::disabled(), &[5.0, 1.0, 9.0, 3.0], &fam).unwrap();
        assert_eq!(
            top,
            Top3 {
                h: vec![0],
                h2: vec![1],
                h3: vec![2]
            }
        );
        assert_eq!(top3_plain(&[5.0, 1.0, 9.0, 3.0], &fam), top);
    }

    #[test]
    fn constant_query_uses_tie_rule() {
        let fam = WtaFamily::sample(3, 4, 10, 5).unwrap();
        let top = wta_signature_top3(&mut TraceLog::disabled(), &[1.0; 10], &fam).unwrap();
        assert_eq!(top.h, vec![0; 3]);
        assert_eq!(top.h2, vec![1; 3]);
        assert_eq!(top.h3, vec![2; 3]);
    }

    #[test]
    fn trace_ignores_query_values() {
        let fam = WtaFamily::sample(2, 4, 8, 1).unwrap();
        let mut a = TraceLog::new();
        let mut b = TraceLog::new();
        wta_signature_top3(&mut a, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], &fam).unwrap();
        wta_signature_top3(&mut b, &[0.0; 8], &fam).unwrap();
        assert!(assert_equal(&a, &b).equal);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn encoding() {
        assert_eq!(encode_bucket(&[0, 0, 0], 8), 0);
        assert_eq!(encode_bucket(&[3, 1, 0], 8), 11);
        assert_eq!(encode_bucket(&[3, 3], 4), 15);
    }

    #[test]
    fn encoding_is_bijective() {
        let mut seen = std::collections::HashSet::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    assert!(seen.insert(encode_bucket(&[a, b, c], 4)));
                }
            }
        }
        assert_eq!(seen.into_iter().max(), Some(63));
    }

    #[test]
    fn sampled_orders_are_distinct_and_in_range() {
        let fam = WtaFamily::sample(6, 5, 12, 3).unwrap();
        for f in &fam.fns {
            let mut s = f.sampled_order.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 5);
            assert!(s.iter().all(|&i| i < 12));
        }
        assert!(WtaFamily::sample(1, 5, 4, 0).is_err());
    }
}

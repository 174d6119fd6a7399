use crate::error::{Error, Result};
use crate::lsh::{encode_bucket, LshConfig, Top3};

/// Closed-form probe count `1 + sum_{i=1..N} C(K,i) (r-1)^i`.
pub fn len_seq(k: usize, r: usize, n: usize) -> usize {
    let mut total = 1usize;
    let mut binom = 1usize;
    for i in 1..=n.min(k) {
        binom = binom * (k + 1 - i) / i;
        total += binom * (r - 1).pow(i as u32);
    }
    total
}

/// One probe: the positions replaced and which winner (2 = second, 3 = third)
/// replaces each.
pub type Perturbation = Vec<(usize, u8)>;

/// The public probe schedule. Entry 0 is the unperturbed signature; then
/// position subsets by size, lexicographic within a size, and for each subset
/// the replacement tuples lexicographic over `2..=r`.
pub fn probe_schedule(k: usize, r: usize, n: usize) -> Vec<Perturbation> {
    fn subsets(k: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for p in start..k {
            cur.push(p);
            subsets(k, size, p + 1, cur, out);
            cur.pop();
        }
    }
    let choices = (r - 1) as u32;
    let mut out = vec![Vec::new()];
    for size in 1..=n.min(k) {
        let mut subs = Vec::new();
        subsets(k, size, 0, &mut Vec::new(), &mut subs);
        for s in subs {
            for code in 0..choices.pow(size as u32) {
                // most significant digit belongs to the first position
                let probe = s
                    .iter()
                    .enumerate()
                    .map(|(d, &p)| {
                        let digit = (code / choices.pow((size - 1 - d) as u32)) % choices;
                        (p, 2 + digit as u8)
                    })
                    .collect();
                out.push(probe);
            }
        }
    }
    out
}

/// Bucket ids probed for one query, in schedule order.
pub fn mp_wta_probes(top: &Top3, cfg: &LshConfig) -> Vec<u64> {
    probe_schedule(cfg.k, cfg.r, cfg.n_perturb)
        .iter()
        .map(|pert| {
            let mut dims = top.h.clone();
            for &(p, which) in pert {
                // `which` comes from the public schedule
                dims[p] = if which == 2 { top.h2[p] } else { top.h3[p] };
            }
            encode_bucket(&dims, cfg.m)
        })
        .collect()
}

/// Number of index pairs ordered the same way in `x` and `y`.
pub fn pairwise_order(x: &[f32], y: &[f32]) -> Result<u64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let mut agree = 0;
    for i in 0..x.len() {
        for j in 0..i {
            if (x[i] - x[j]) * (y[i] - y[j]) > 0.0 {
                agree += 1;
            }
        }
    }
    Ok(agree)
}

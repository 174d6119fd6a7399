use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SparseExample};

/// Half-open block `k` of `0..total` split into `parts` near-equal pieces.
pub fn cluster_block(k: usize, parts: usize, total: usize) -> std::ops::Range<usize> {
    (k * total / parts)..((k + 1) * total / parts)
}

/// Index of the block of `cluster_block` that contains `x`.
pub fn block_of(x: usize, parts: usize, total: usize) -> usize {
    (0..parts)
        .find(|&k| cluster_block(k, parts, total).contains(&x))
        .unwrap_or(parts - 1)
}

/// Cluster-structured synthetic data. Labels and features are both split into
/// `clusters` contiguous blocks; an example of label `y` (from block `k`)
/// draws three quarters of its `nnz` features from a per-label prototype pool
/// and the rest uniformly from feature block `k`. Every example has exactly one
/// label and exactly `min(nnz, block size)` features.
/// Zero labels or features yield an empty dataset.
pub fn synth_xc(d_input: usize, c: usize, n: usize, nnz: usize, clusters: usize, seed: u64) -> Dataset {
    if c == 0 || d_input == 0 {
        return Dataset {
            num_features: d_input,
            num_labels: c,
            examples: Vec::new(),
        };
    }
    let clusters = clusters.clamp(1, c.max(1)).min(d_input.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pools: Vec<Vec<usize>> = (0..c)
        .map(|y| {
            let fb = cluster_block(block_of(y, clusters, c), clusters, d_input);
            let want = (2 * nnz).min(fb.len());
            sample(&mut rng, fb.len(), want)
                .into_iter()
                .map(|i| fb.start + i)
                .collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..clusters);
        let lb = cluster_block(k, clusters, c);
        let y = rng.random_range(lb);
        let fb = cluster_block(block_of(y, clusters, c), clusters, d_input);
        let want = nnz.min(fb.len());
        let from_pool = (3 * want / 4).min(pools[y].len());

        let mut idx: Vec<usize> = sample(&mut rng, pools[y].len(), from_pool)
            .into_iter()
            .map(|j| pools[y][j])
            .collect();
        while idx.len() < want {
            let f = rng.random_range(fb.clone());
            if !idx.contains(&f) {
                idx.push(f);
            }
        }
        idx.sort_unstable();
        let features = idx
            .into_iter()
            .map(|i| (i as u32, rng.random_range(0.5f32..1.5)))
            .collect();
        examples.push(SparseExample {
            labels: vec![y as u32],
            features,
        });
    }
    Dataset {
        num_features: d_input,
        num_labels: c,
        examples,
    }
}

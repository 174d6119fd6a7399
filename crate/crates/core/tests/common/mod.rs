#![allow(dead_code)]

use oblivnet::dataio::SparseExample;
use oblivnet::engine::{NetworkParams, OptFlags, PublicParams, TrainParams};
use oblivnet::lsh::LshConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// D_input=50, N_0=8, C=64, K=2, M=4, PADSIZE=8, B=4.
pub fn tiny() -> PublicParams {
    let mut lsh = LshConfig::new(2, 4, 8);
    lsh.seed = 11;
    PublicParams {
        network: NetworkParams {
            d_input: 50,
            n0: 8,
            c: 64,
        },
        train: TrainParams {
            batch_size: 4,
            epochs: 1,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        lsh,
        oht_seed: 3,
        opts: OptFlags::default(),
    }
}

/// Public shape of one input: sorted feature indices and a label count.
#[derive(Clone, Debug)]
pub struct Shape {
    pub indices: Vec<u32>,
    pub labels: usize,
}

pub fn shapes(seed: u64, b: usize, d: usize, max_labels: usize) -> Vec<Shape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b)
        .map(|_| {
            let nnz = rng.random_range(1..=6.min(d));
            let mut idx: Vec<u32> = rand::seq::index::sample(&mut rng, d, nnz)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            idx.sort_unstable();
            Shape {
                indices: idx,
                labels: rng.random_range(0..=max_labels),
            }
        })
        .collect()
}

/// Fills `shapes` with private values and labels drawn from `seed`.
pub fn fill(shapes: &[Shape], c: usize, seed: u64) -> Vec<SparseExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes
        .iter()
        .map(|s| {
            let mut labels: Vec<u32> = rand::seq::index::sample(&mut rng, c, s.labels)
                .into_iter()
                .map(|y| y as u32)
                .collect();
            labels.sort_unstable();
            SparseExample {
                labels,
                features: s.indices.iter().map(|&i| (i, rng.random_range(-2.0f32..2.0))).collect(),
            }
        })
        .collect()
}

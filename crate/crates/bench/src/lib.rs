//! Fixtures shared by the benchmarks.

use oblivnet::dataio::{synth_xc, SparseExample};
use oblivnet::engine::{Engine, NetworkParams, OptFlags, PublicParams, TrainParams};
use oblivnet::lsh::LshConfig;
use oblivnet::model::init_weights;
use oblivnet::TraceLog;

/// A small network: D_input=256, N_0=32, C=64, K=2, M=4, PADSIZE=8, B=16.
pub fn params(workers: usize) -> PublicParams {
    let mut lsh = LshConfig::new(2, 4, 8);
    lsh.seed = 7;
    lsh.rebuild_period = Some(5);
    PublicParams {
        network: NetworkParams {
            d_input: 256,
            n0: 32,
            c: 64,
        },
        train: TrainParams {
            batch_size: 16,
            epochs: 1,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        lsh,
        oht_seed: 7,
        opts: OptFlags {
            workers,
            ..OptFlags::default()
        },
    }
}

pub fn engine(workers: usize) -> Engine {
    let p = params(workers);
    let init = init_weights(p.network.d_input, p.network.n0, p.network.c, 1);
    Engine::new(&mut TraceLog::disabled(), p, &init).expect("valid fixture")
}

pub fn batch(p: &PublicParams, seed: u64) -> Vec<SparseExample> {
    let n = &p.network;
    synth_xc(n.d_input, n.c, p.train.batch_size, 10, 4, seed).examples
}

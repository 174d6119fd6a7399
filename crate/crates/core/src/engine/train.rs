use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::SparseExample;
use crate::error::Result;
use crate::trace::TraceLog;

use super::Engine;

/// One row of the metrics sink.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batch steps completed so far, over all epochs.
    pub batch: u64,
    pub p_at_1: f64,
    /// Mean loss per labeled training input in this epoch.
    pub loss: f64,
    /// Training time of this epoch, evaluation excluded.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSummary {
    pub batches: u64,
    /// Refreshes after the initializing one.
    pub refreshes: u64,
    pub mean_batch_seconds: f64,
    pub epochs: Vec<EpochMetrics>,
}

/// Visiting order of the training set in `epoch`. Depends only on public
/// values (size, seed, epoch).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order
}

/// Groups `order` into batches of exactly `b`, padding the last one with
/// empty inputs.
pub fn batches(data: &[SparseExample], order: &[usize], b: usize) -> Vec<Vec<SparseExample>> {
    order
        .chunks(b)
        .map(|chunk| {
            let mut batch: Vec<SparseExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            batch.resize_with(b, SparseExample::default);
            batch
        })
        .collect()
}

/// Public event count of a run: the initial construction, every batch step
/// and every periodic refresh.
pub fn event_count(n_batch: u64, rebuild_period: Option<u64>) -> u64 {
    1 + n_batch + rebuild_period.map_or(0, |p| n_batch / p)
}

/// Runs the configured number of epochs. `eval` feeds P@1 (the training set
/// is used when it has no labeled rows). `on_epoch` sees each metrics row.
pub fn train_loop(
    log: &mut TraceLog,
    engine: &mut Engine,
    train: &[SparseExample],
    eval: &[SparseExample],
    shuffle_seed: Option<u64>,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<TrainSummary> {
    let b = engine.params.train.batch_size;
    let period = engine.params.lsh.rebuild_period;
    let eval_set = if eval.iter().any(|x| !x.labels.is_empty()) {
        eval
    } else {
        train
    };
    let mut summary = TrainSummary::default();
    let mut batch_seconds = 0.0;

    for epoch in 1..=engine.params.train.epochs {
        let order = match shuffle_seed {
            Some(seed) => epoch_order(train.len(), seed, epoch),
            None => (0..train.len()).collect(),
        };
        let start = Instant::now();
        let mut loss = 0.0;
        let mut labeled = 0usize;
        for batch in batches(train, &order, b) {
            let t0 = Instant::now();
            let stats = engine.batch_step(log, &batch)?;
            batch_seconds += t0.elapsed().as_secs_f64();
            loss += stats.loss;
            labeled += stats.labeled;
            summary.batches += 1;
            if let Some(p) = period {
                if engine.step.is_multiple_of(p) {
                    engine.refresh(log)?;
                    summary.refreshes += 1;
                }
            }
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let row = EpochMetrics {
            epoch,
            batch: summary.batches,
            p_at_1: engine.p_at_1(eval_set).unwrap_or(0.0),
            loss: if labeled > 0 { loss / labeled as f64 } else { 0.0 },
            wall_seconds,
        };
        on_epoch(&row)?;
        summary.epochs.push(row);
    }
    if summary.batches > 0 {
        summary.mean_batch_seconds = batch_seconds / summary.batches as f64;
    }
    Ok(summary)
}

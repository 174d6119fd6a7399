//! The oblivious batch step over a dense hidden layer and an LSH-sampled
//! softmax output layer.

mod adam;
mod checkpoint;
mod eval;
mod fetcher;
mod merge;
mod params;
mod train;
mod updater;

pub use adam::{adam_apply, adam_record, corrected_lr};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use eval::{forward_hidden, full_loss, precision_at_1, predict_top1};
pub use fetcher::{fetch_read, fetch_write, BufferShape};
pub use merge::obl_merge_requests;
pub use params::{NetworkParams, OptFlags, PublicParams, TrainParams};
pub use train::{batches, epoch_order, event_count, train_loop, EpochMetrics, TrainSummary};
pub use updater::{backprop, dense_forward, feed_forward, hidden, neuron_requester, output_delta, ActiveState};

use crate::dataio::SparseExample;
use crate::error::{Error, Result};
use crate::lsh::{refresh, LshTable, RefreshReport, WtaFamily};
use crate::model::{DenseLayer, InitialWeights, NeuronRecord};
use crate::oht::{build_scheduler, BinScheduler, LayoutRecord, OhtConfig};
use crate::request::RequestEntry;
use crate::trace::TraceLog;

/// Model state and the public machinery around it.
#[derive(Clone, Debug)]
pub struct Engine {
    pub params: PublicParams,
    pub family: WtaFamily,
    pub oht_cfg: OhtConfig,
    pub scheduler: BinScheduler,
    pub table: LshTable,
    pub dense: DenseLayer,
    /// Completed batch steps.
    pub step: u64,
    /// Real output neurons left unreachable by the latest refresh.
    pub refresh_overflow: u64,
}

/// A batch after merge, before the optimizer runs.
#[derive(Debug)]
pub struct MergedBatch {
    pub reqs: Vec<RequestEntry>,
    pub layout: LayoutRecord,
    /// Summed loss over inputs that carry labels.
    pub loss: f64,
    /// Inputs that carry labels.
    pub labeled: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub labeled: usize,
}

impl Engine {
    /// Builds both layers from `init` and runs the initializing refresh.
    pub fn new(log: &mut TraceLog, params: PublicParams, init: &InitialWeights) -> Result<Self> {
        params.validate()?;
        let net = &params.network;
        let lanes = params.train.batch_size;
        if init.dense.len() != net.n0 || init.output.len() != net.c {
            return Err(Error::InvalidConfig(
                "initial weights do not match the network shape".into(),
            ));
        }
        if init.dense.iter().any(|w| w.len() != net.d_input) || init.output.iter().any(|w| w.len() != net.n0) {
            return Err(Error::InvalidConfig("initial weight rows have the wrong width".into()));
        }
        let dense = DenseLayer {
            nodes: init
                .dense
                .iter()
                .enumerate()
                .map(|(n, w)| NeuronRecord::real(n as u64, w, lanes))
                .collect(),
        };
        let reals = init
            .output
            .iter()
            .enumerate()
            .map(|(c, w)| NeuronRecord::real(c as u64, w, lanes))
            .collect();
        let table = LshTable::staged(params.lsh.clone(), reals, net.n0, lanes, net.c as u64)?;
        Self::assemble(log, params, dense, table)
    }

    fn assemble(log: &mut TraceLog, params: PublicParams, dense: DenseLayer, table: LshTable) -> Result<Self> {
        let lsh = &params.lsh;
        let family = WtaFamily::sample(lsh.k, lsh.m, params.network.n0, lsh.seed)?;
        let oht_cfg = params.oht_config()?;
        let scheduler = build_scheduler(&oht_cfg, lsh.num_buckets(), params.opts.workers)?;
        let mut engine = Self {
            params,
            family,
            oht_cfg,
            scheduler,
            table,
            dense,
            step: 0,
            refresh_overflow: 0,
        };
        let report = refresh(log, &mut engine.table, &engine.family, true)?;
        engine.refresh_overflow = report.real_overflow;
        Ok(engine)
    }

    /// Re-inserts every output neuron under its current weights.
    pub fn refresh(&mut self, log: &mut TraceLog) -> Result<RefreshReport> {
        let report = refresh(log, &mut self.table, &self.family, false)?;
        self.refresh_overflow = report.real_overflow;
        Ok(report)
    }

    /// Switches optimization flags and worker count; neither affects results.
    pub fn set_opts(&mut self, opts: OptFlags) -> Result<()> {
        self.scheduler = build_scheduler(&self.oht_cfg, self.params.lsh.num_buckets(), opts.workers)?;
        self.params.opts = opts;
        self.params.validate()
    }

    pub fn shape(&self) -> BufferShape {
        BufferShape::of(&self.table)
    }

    fn check_batch(&self, batch: &[SparseExample]) -> Result<()> {
        let b = self.params.train.batch_size;
        if batch.len() != b {
            return Err(Error::LengthMismatch {
                expected: b,
                actual: batch.len(),
            });
        }
        let d = self.params.network.d_input as u32;
        let c = self.params.network.c as u32;
        for x in batch {
            if let Some(&(idx, _)) = x.features.iter().find(|f| f.0 >= d) {
                return Err(Error::OutOfRange(format!("feature index {idx} >= {d}")));
            }
            if let Some(&y) = x.labels.iter().find(|&&y| y >= c) {
                return Err(Error::OutOfRange(format!("label {y} >= {c}")));
            }
        }
        Ok(())
    }

    /// Requester, read fetch, forward and backward passes, and merge.
    pub fn forward_backward_merge(&mut self, log: &mut TraceLog, batch: &[SparseExample]) -> Result<MergedBatch> {
        self.check_batch(batch)?;
        let p = &self.params;
        let len_seq = p.len_seq();
        let pad = p.lsh.pad_size;
        let shape = self.shape();

        log.phase("Dense");
        dense_forward(log, &mut self.dense, batch);

        log.phase("Requester");
        let reqs = neuron_requester(log, &self.dense, batch.len(), &self.family, &p.lsh, &shape, p.opts.o1);

        log.phase("Fetcher.read");
        let (mut reqs, layout) = fetch_read(log, &self.table, reqs, &self.oht_cfg, &self.scheduler, &p.opts)?;

        log.phase("Updater");
        let mut state = ActiveState::new(batch.len(), p.active_slots());
        feed_forward(log, &mut reqs, &self.dense, &mut state, len_seq, pad);
        let loss = backprop(log, &mut reqs, &mut self.dense, &state, batch, len_seq, pad);

        log.phase("Merge");
        obl_merge_requests(log, &mut reqs);

        let labeled = batch.iter().filter(|x| !x.labels.is_empty()).count();
        Ok(MergedBatch {
            reqs,
            layout,
            loss,
            labeled,
        })
    }

    /// Optimizer step on every fetched slot and dense node, then the write
    /// fetch.
    pub fn finish(&mut self, log: &mut TraceLog, merged: MergedBatch) -> Result<StepStats> {
        let MergedBatch {
            mut reqs,
            layout,
            loss,
            labeled,
        } = merged;
        let pad = self.params.lsh.pad_size;
        let tp = &self.params.train;
        let lr = corrected_lr(tp, self.step + 1);

        log.phase("Adam");
        for (e, entry) in reqs.iter_mut().enumerate() {
            for (s, rec) in entry.buffer.iter_mut().enumerate() {
                log.write("ReqArray", e * pad + s, 1);
                adam_record(rec, lr, tp);
            }
        }
        for (n, node) in self.dense.nodes.iter_mut().enumerate() {
            log.write("Dense", n, 1);
            adam_record(node, lr, tp);
        }

        log.phase("Fetcher.write");
        fetch_write(
            log,
            &mut self.table,
            reqs,
            &layout,
            &self.oht_cfg,
            &self.scheduler,
            &self.params.opts,
        )?;
        self.step += 1;
        Ok(StepStats { loss, labeled })
    }

    pub fn batch_step(&mut self, log: &mut TraceLog, batch: &[SparseExample]) -> Result<StepStats> {
        let merged = self.forward_backward_merge(log, batch)?;
        self.finish(log, merged)
    }

    /// Real output ids each input would train on, in slot order. Runs the
    /// dense pass, requester and read fetch only.
    pub fn active_sets(&mut self, log: &mut TraceLog, batch: &[SparseExample]) -> Result<Vec<Vec<u64>>> {
        self.check_batch(batch)?;
        let p = &self.params;
        let shape = self.shape();
        dense_forward(log, &mut self.dense, batch);
        let reqs = neuron_requester(log, &self.dense, batch.len(), &self.family, &p.lsh, &shape, p.opts.o1);
        let (reqs, _) = fetch_read(log, &self.table, reqs, &self.oht_cfg, &self.scheduler, &p.opts)?;
        let len_seq = p.len_seq();
        Ok((0..batch.len())
            .map(|i| {
                reqs[i * len_seq..(i + 1) * len_seq]
                    .iter()
                    .flat_map(|e| &e.buffer)
                    .filter(|r| r.is_dummy == crate::obliv::Predicate::FALSE)
                    .map(|r| r.id)
                    .collect()
            })
            .collect())
    }

    /// Output neurons by id, from both table regions.
    pub fn output_neurons(&self) -> Vec<&NeuronRecord> {
        self.table.reals()
    }

    pub fn predict(&self, x: &SparseExample) -> Option<u64> {
        predict_top1(&self.dense.nodes, &self.output_neurons(), x)
    }

    /// Precision at 1 over the examples that carry labels.
    pub fn p_at_1(&self, data: &[SparseExample]) -> Result<f64> {
        let outputs = self.output_neurons();
        precision_at_1(data, |x| predict_top1(&self.dense.nodes, &outputs, x))
    }

    /// Mean cross-entropy over all outputs on labeled examples.
    pub fn full_loss(&self, data: &[SparseExample]) -> f64 {
        full_loss(&self.dense.nodes, &self.output_neurons(), data)
    }

    /// Restores a model from saved parameters; the table is rebuilt by an
    /// initializing refresh.
    pub fn from_checkpoint(log: &mut TraceLog, ck: Checkpoint) -> Result<Self> {
        let Checkpoint {
            params,
            step,
            dense,
            output,
        } = ck;
        params.validate()?;
        let net = &params.network;
        let table = LshTable::staged(
            params.lsh.clone(),
            output,
            net.n0,
            params.train.batch_size,
            net.c as u64,
        )?;
        let mut engine = Self::assemble(log, params, DenseLayer { nodes: dense }, table)?;
        engine.step = step;
        Ok(engine)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            step: self.step,
            dense: self.dense.nodes.clone(),
            output: self.output_neurons().into_iter().cloned().collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lsh::LshConfig;
    use crate::model::init_weights;
    use crate::obliv::Predicate;

    pub(crate) fn tiny_params() -> PublicParams {
        PublicParams {
            network: NetworkParams {
                d_input: 20,
                n0: 8,
                c: 32,
            },
            train: TrainParams {
                batch_size: 2,
                epochs: 1,
                lr: 1e-2,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lsh: LshConfig::new(2, 4, 8),
            oht_seed: 5,
            opts: OptFlags::default(),
        }
    }

    fn example(labels: &[u32], feats: &[(u32, f32)]) -> SparseExample {
        SparseExample {
            labels: labels.to_vec(),
            features: feats.to_vec(),
        }
    }

    #[test]
    fn step_counter_and_dummy_neutrality() {
        let p = tiny_params();
        let init = init_weights(20, 8, 32, 1);
        let mut log = TraceLog::disabled();
        let mut eng = Engine::new(&mut log, p, &init).unwrap();
        let batch = vec![
            example(&[3], &[(0, 1.0), (4, 0.5)]),
            example(&[7, 9], &[(2, 2.0), (5, -1.0)]),
        ];
        eng.batch_step(&mut log, &batch).unwrap();
        eng.batch_step(&mut log, &batch).unwrap();
        assert_eq!(eng.step, 2);
        for rec in eng.table.main.iter().chain(&eng.table.overflow) {
            if rec.is_dummy == Predicate::TRUE {
                assert!(rec.is_all_zero());
            } else {
                assert!(rec.t().iter().all(|&t| t == 0.0));
                assert_eq!(rec.t_bias, 0.0);
            }
        }
        assert_eq!(eng.output_neurons().len(), 32);
    }

    #[test]
    fn wrong_batch_size_is_rejected() {
        let mut log = TraceLog::disabled();
        let mut eng = Engine::new(&mut log, tiny_params(), &init_weights(20, 8, 32, 1)).unwrap();
        let err = eng.batch_step(&mut log, &[example(&[1], &[])]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 2, actual: 1 }));
    }
}

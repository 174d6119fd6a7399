//! Pairwise trace audits: two full pipelines with the same public parameters
//! and input shapes, but independent private data and initial weights, must
//! leave identical canonical traces.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Result};
use oblivnet::dataio::SparseExample;
use oblivnet::engine::Engine;
use oblivnet::model::init_weights;
use oblivnet::trace::{assert_equal, Divergence, TraceLog};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::exit::{tag, Kind};

/// Public shape of one input: feature indices and label count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub indices: Vec<u32>,
    pub labels: usize,
}

pub fn public_shapes(seed: u64, count: usize, d_input: usize, max_nnz: usize, max_labels: usize) -> Vec<InputShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let nnz = rng.random_range(0..=max_nnz.min(d_input));
            let mut indices: Vec<u32> = sample(&mut rng, d_input, nnz).into_iter().map(|i| i as u32).collect();
            indices.sort_unstable();
            InputShape {
                indices,
                labels: rng.random_range(0..=max_labels),
            }
        })
        .collect()
}

/// Private contents for `shapes`: random labels and feature values.
pub fn private_batch(shapes: &[InputShape], c: usize, seed: u64) -> Vec<SparseExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shapes
        .iter()
        .map(|s| {
            let mut labels: Vec<u32> = sample(&mut rng, c, s.labels.min(c))
                .into_iter()
                .map(|y| y as u32)
                .collect();
            labels.sort_unstable();
            SparseExample {
                labels,
                features: s.indices.iter().map(|&i| (i, rng.random_range(-3.0f32..3.0))).collect(),
            }
        })
        .collect()
}

/// Initialization, the configured batch steps, then the configured refreshes.
/// With `inject_fault`, an extra event is recorded only when the first input's
/// first feature is positive: a deliberate secret-dependent branch.
pub fn run_pipeline(cfg: &RunConfig, trial: u64, private_seed: u64, inject_fault: bool) -> Result<TraceLog> {
    let p = &cfg.params;
    let net = &p.network;
    let b = p.train.batch_size;
    let a = &cfg.audit;
    let mut log = TraceLog::new();
    let mut engine = Engine::new(
        &mut log,
        p.clone(),
        &init_weights(net.d_input, net.n0, net.c, private_seed),
    )?;
    for step in 0..a.steps as u64 {
        let shape_seed = cfg.seed ^ (trial << 32) ^ step;
        let shapes = public_shapes(shape_seed, b, net.d_input, a.max_nnz, a.max_labels);
        let batch = private_batch(&shapes, net.c, private_seed.wrapping_mul(31).wrapping_add(step));
        engine.batch_step(&mut log, &batch)?;
        if inject_fault && batch[0].features.first().is_some_and(|f| f.1 > 0.0) {
            log.read("Injected", 0, 1);
        }
    }
    for _ in 0..a.refreshes {
        engine.refresh(&mut log)?;
    }
    Ok(log)
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub digests: (String, String),
    pub divergence: Option<Divergence>,
}

/// Runs `trials` pairs and stops at the first divergent pair.
pub fn audit(
    cfg: &RunConfig,
    trials: usize,
    inject_fault: bool,
    keep_first: Option<&Path>,
) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(trials);
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA0D1);
    for trial in 0..trials {
        let (sa, sb) = (seeds.random::<u64>(), seeds.random::<u64>());
        let la = run_pipeline(cfg, trial as u64, sa, inject_fault)?;
        let lb = run_pipeline(cfg, trial as u64, sb, inject_fault)?;
        if trial == 0 {
            if let Some(p) = keep_first {
                la.write_file(p)?;
            }
        }
        let cmp = assert_equal(&la, &lb);
        let diverged = !cmp.equal;
        out.push(TrialResult {
            trial,
            digests: (la.digest()?, lb.digest()?),
            divergence: cmp.divergence,
        });
        if diverged {
            break;
        }
    }
    Ok(out)
}

pub fn cmd_audit(
    cfg: &RunConfig,
    trials: usize,
    inject_fault: bool,
    trace_out: Option<&Path>,
    w: &mut impl Write,
) -> Result<()> {
    let results = audit(cfg, trials, inject_fault, trace_out)?;
    for r in &results {
        let verdict = if r.divergence.is_none() { "equal" } else { "DIVERGED" };
        writeln!(w, "trial {:>3}: {} {} {verdict}", r.trial, r.digests.0, r.digests.1)?;
    }
    if let Some(r) = results.iter().find(|r| r.divergence.is_some()) {
        let d = r.divergence.as_ref().expect("checked");
        writeln!(w, "{d}")?;
        return tag(
            Err(anyhow!("trial {} diverged at event {}", r.trial, d.index)),
            Kind::Divergence,
        );
    }
    writeln!(w, "audit passed: {} pair(s) with identical traces", results.len())?;
    Ok(())
}

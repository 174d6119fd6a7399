//! Recall of plain multi-table WTA against single-table MP-WTA on clustered
//! synthetic vectors. Neighbors are ranked by pairwise-order agreement, the
//! similarity WTA hashing approximates. Nothing here is oblivious.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use anyhow::{ensure, Result};
use oblivnet::lsh::{encode_bucket, mp_wta_probes, pairwise_order, top3_plain, LshConfig, WtaFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::BenchSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub tables: usize,
    pub probes: usize,
    pub recall: f64,
    /// Stored (bucket, vector) entries over all tables.
    pub table_memory: usize,
}

/// Rows of one trial: WTA for every table count, MP-WTA for every probe
/// budget up to the full sequence.
pub type TrialRows = Vec<BenchRow>;

fn corpus(spec: &BenchSpec, rng: &mut ChaCha8Rng) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    let unit = Normal::new(0.0f32, 1.0).expect("valid normal");
    let centers: Vec<Vec<f32>> = (0..spec.clusters.max(1))
        .map(|_| (0..spec.dim).map(|_| unit.sample(rng)).collect())
        .collect();
    let jitter =
        |v: &[f32], s: f32, rng: &mut ChaCha8Rng| -> Vec<f32> { v.iter().map(|x| x + s * unit.sample(rng)).collect() };
    let data: Vec<Vec<f32>> = (0..spec.vectors)
        .map(|_| {
            let c = rng.random_range(0..centers.len());
            jitter(&centers[c], 0.5, rng)
        })
        .collect();
    let queries = (0..spec.queries)
        .map(|_| {
            let i = rng.random_range(0..data.len());
            jitter(&data[i], 0.3, rng)
        })
        .collect();
    (data, queries)
}

fn truth(data: &[Vec<f32>], q: &[f32], k: usize) -> Result<HashSet<usize>> {
    let mut scored: Vec<(u64, usize)> = data
        .iter()
        .enumerate()
        .map(|(i, v)| pairwise_order(q, v).map(|s| (s, i)))
        .collect::<oblivnet::Result<_>>()?;
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

struct Index {
    family: WtaFamily,
    buckets: HashMap<u64, Vec<usize>>,
}

impl Index {
    fn new(data: &[Vec<f32>], spec: &BenchSpec, seed: u64) -> Result<Self> {
        let family = WtaFamily::sample(spec.k, spec.m, spec.dim, seed)?;
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, v) in data.iter().enumerate() {
            buckets
                .entry(encode_bucket(&top3_plain(v, &family).h, spec.m))
                .or_default()
                .push(i);
        }
        Ok(Self { family, buckets })
    }

    fn get(&self, b: u64) -> &[usize] {
        self.buckets.get(&b).map_or(&[], Vec::as_slice)
    }
}

fn recall(found: &HashSet<usize>, truth: &HashSet<usize>) -> f64 {
    found.intersection(truth).count() as f64 / truth.len().max(1) as f64
}

pub fn run_trial(spec: &BenchSpec, trial: u64) -> Result<TrialRows> {
    ensure!(spec.dim >= spec.m && spec.m >= 3, "bench needs dim >= m >= 3");
    ensure!(spec.vectors > 0 && spec.queries > 0, "bench needs vectors and queries");
    let seed = spec.seed.wrapping_add(trial.wrapping_mul(0x9E37_79B9));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, queries) = corpus(spec, &mut rng);
    let max_tables = spec.tables.iter().copied().max().unwrap_or(1).max(1);
    let indexes: Vec<Index> = (0..max_tables)
        .map(|t| Index::new(&data, spec, seed ^ (t as u64 + 1).wrapping_mul(0x5851_F42D)))
        .collect::<Result<_>>()?;

    let mut cfg = LshConfig::new(spec.k, spec.m, 1);
    cfg.seed = seed;
    let len_seq = cfg.len_seq();
    let mut wta_sum = vec![0.0; spec.tables.len()];
    let mut mp_sum = vec![0.0; len_seq];

    for q in &queries {
        let want = truth(&data, q, spec.top_k)?;
        for (slot, &tables) in spec.tables.iter().enumerate() {
            let mut found = HashSet::new();
            for ix in &indexes[..tables] {
                found.extend(ix.get(encode_bucket(&top3_plain(q, &ix.family).h, spec.m)));
            }
            wta_sum[slot] += recall(&found, &want);
        }
        // MP-WTA shares the first table's hash family
        let ix = &indexes[0];
        let mut found = HashSet::new();
        for (p, b) in mp_wta_probes(&top3_plain(q, &ix.family), &cfg).into_iter().enumerate() {
            found.extend(ix.get(b));
            mp_sum[p] += recall(&found, &want);
        }
    }

    let nq = queries.len() as f64;
    let mut rows: TrialRows = spec
        .tables
        .iter()
        .zip(&wta_sum)
        .map(|(&tables, s)| BenchRow {
            method: "wta".into(),
            tables,
            probes: 1,
            recall: s / nq,
            table_memory: tables * spec.vectors,
        })
        .collect();
    rows.extend(mp_sum.iter().enumerate().map(|(p, s)| BenchRow {
        method: "mp-wta".into(),
        tables: 1,
        probes: p + 1,
        recall: s / nq,
        table_memory: spec.vectors,
    }));
    Ok(rows)
}

/// Every trial's rows, then the rows averaged over trials.
pub fn run_bench(spec: &BenchSpec) -> Result<(Vec<TrialRows>, Vec<BenchRow>)> {
    ensure!(spec.trials > 0, "bench needs at least one trial");
    let trials: Vec<TrialRows> = (0..spec.trials as u64)
        .map(|t| run_trial(spec, t))
        .collect::<Result<_>>()?;
    let mut mean = trials[0].clone();
    for row in &mut mean {
        row.recall = 0.0;
    }
    for t in &trials {
        for (m, r) in mean.iter_mut().zip(t) {
            m.recall += r.recall / spec.trials as f64;
        }
    }
    Ok((trials, mean))
}

pub fn cmd_bench_lsh(spec: &BenchSpec, dest: Option<&Path>, out: &mut impl Write) -> Result<Vec<BenchRow>> {
    let (_, mean) = run_bench(spec)?;
    let sink: Box<dyn Write> = match dest {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in &mean {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(mean)
}

//! Two-tier oblivious hash table keyed by LSH bucket id.
//!
//! Construction is two rounds of sort-and-pad. Round one routes every request
//! to its tier-1 bin `H1(bucket)`, pads each bin with `binCap` fillers, ranks
//! entries within bins, and keeps the first `binCap` per bin. The `T` entries
//! left over (excess requests and excess fillers) are routed by `H2` in round
//! two. A request that fits in neither tier is a capacity-contract violation.
//! Only the table size, `T`, `numBin` and `binCap` shape the trace.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obliv::{ct_eq, ct_gt, ct_select, obl_sort, Predicate};
use crate::request::RequestEntry;
use crate::trace::TraceLog;

const MERSENNE_61: u64 = (1 << 61) - 1;

/// `((a*x + c) mod (2^61 - 1)) mod bins` with public `a`, `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalHash {
    pub a: u64,
    pub c: u64,
}

impl UniversalHash {
    pub fn from_rng(rng: &mut impl Rng) -> Self {
        Self {
            a: rng.random_range(1..MERSENNE_61),
            c: rng.random_range(0..MERSENNE_61),
        }
    }

    #[inline]
    pub fn eval(&self, x: u64, bins: usize) -> u64 {
        let v = (self.a as u128 * x as u128 + self.c as u128) % MERSENNE_61 as u128;
        (v % bins as u128) as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OhtConfig {
    pub num_bin: usize,
    pub bin_cap: usize,
    pub h1: UniversalHash,
    pub h2: UniversalHash,
}

impl OhtConfig {
    pub fn new(num_bin: usize, bin_cap: usize, seed: u64) -> Result<Self> {
        if num_bin == 0 || bin_cap == 0 {
            return Err(Error::InvalidConfig(
                "OHT needs at least one bin of capacity one".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            num_bin,
            bin_cap,
            h1: UniversalHash::from_rng(&mut rng),
            h2: UniversalHash::from_rng(&mut rng),
        })
    }

    /// Sizing for a batch of `batch` inputs probing `len_seq` distinct buckets
    /// each out of `num_lsh_bucs`.
    ///
    /// `numBin` is the next power of two of `min(T, numLshBucs)`; `binCap` is
    /// the default `max(4, ceil(3T/numBin) + 4)`, raised if needed until
    /// [`OhtConfig::contract_holds`] accepts it.
    pub fn for_workload(batch: usize, len_seq: usize, num_lsh_bucs: usize, seed: u64) -> Result<Self> {
        let t = batch * len_seq;
        let num_bin = t.min(num_lsh_bucs).max(1).next_power_of_two();
        let default_cap = 4usize.max((3 * t).div_ceil(num_bin) + 4);
        let mut cfg = Self::new(num_bin, default_cap, seed)?;
        while !cfg.contract_holds(batch, len_seq, num_lsh_bucs) {
            cfg.bin_cap += 1;
        }
        Ok(cfg)
    }

    pub fn bins_for(&self, bucket: u64) -> (usize, usize) {
        (
            self.h1.eval(bucket, self.num_bin) as usize,
            self.h2.eval(bucket, self.num_bin) as usize,
        )
    }

    pub fn tier_slots(&self) -> usize {
        self.num_bin * self.bin_cap
    }

    pub fn total_slots(&self) -> usize {
        2 * self.tier_slots()
    }

    /// Worst-case placement check over every request multiset in which each
    /// of `batch` inputs names at most `len_seq` distinct buckets.
    ///
    /// Tier-1 bin `i` receives at most `L1(i) = B * min(lenSeq, n1(i))`
    /// requests, `n1(i)` being the number of buckets hashing to it. Its excess
    /// over `binCap` moves to tier 2, and the share landing in tier-2 bin `j`
    /// is further bounded by the buckets mapping to both `i` and `j`.
    pub fn contract_holds(&self, batch: usize, len_seq: usize, num_lsh_bucs: usize) -> bool {
        let nb = self.num_bin;
        let t = batch * len_seq;
        let mut n1 = vec![0usize; nb];
        let mut n12 = vec![0usize; nb * nb];
        for b in 0..num_lsh_bucs as u64 {
            let (i, j) = self.bins_for(b);
            n1[i] += 1;
            n12[i * nb + j] += 1;
        }
        let load = |n: usize| t.min(batch * len_seq.min(n));
        let excess: Vec<usize> = n1.iter().map(|&n| load(n).saturating_sub(self.bin_cap)).collect();
        (0..nb).all(|j| {
            let u2: usize = (0..nb).map(|i| excess[i].min(load(n12[i * nb + j]))).sum();
            u2 <= self.bin_cap
        })
    }
}

/// Both tiers, tier 1 first; every slot populated.
#[derive(Clone, Debug, PartialEq)]
pub struct Oht {
    pub cfg: OhtConfig,
    pub slots: Vec<RequestEntry>,
}

impl Oht {
    /// Slot range of `bin` in `tier` (0 or 1).
    pub fn bin_range(&self, tier: usize, bin: usize) -> Range<usize> {
        let start = tier * self.cfg.tier_slots() + bin * self.cfg.bin_cap;
        start..start + self.cfg.bin_cap
    }

    pub fn tier_name(tier: usize) -> &'static str {
        if tier == 0 {
            "OHT.t1"
        } else {
            "OHT.t2"
        }
    }
}

/// Slot positions of padding entries, captured when the read-phase table is
/// drained, so the write-phase table can be rebuilt by one sort.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayoutRecord {
    pub filler_slots: Vec<u64>,
}

fn place_round(log: &mut TraceLog, items: &mut [RequestEntry], cfg: &OhtConfig) {
    let route_key = |e: &RequestEntry| [e.bin, e.filler.bit() as u64, e.bucket, e.batch_rank, e.req_index];
    obl_sort(log, "OHT.build", items, route_key);
    let sentinel = cfg.num_bin as u64;
    let mut prev_bin = u64::MAX;
    let mut prev_rank = 0u64;
    for (j, e) in items.iter_mut().enumerate() {
        log.cmpset("OHT.build", j, 1);
        let same = ct_eq(e.bin, prev_bin) & Predicate::public(j > 0);
        e.rank = ct_select(same, prev_rank + 1, 0);
        e.overflow = ct_gt(e.rank + 1, cfg.bin_cap as u64) | ct_eq(e.bin, sentinel);
        prev_bin = e.bin;
        prev_rank = e.rank;
    }
    let place_key = |e: &RequestEntry| [e.overflow.bit() as u64, e.bin, e.rank];
    obl_sort(log, "OHT.build", items, place_key);
}

/// Builds the table from `reqs`. `make_filler` must produce padding entries
/// whose buffers have the same length as the requests'.
pub fn build(
    log: &mut TraceLog,
    reqs: Vec<RequestEntry>,
    cfg: &OhtConfig,
    make_filler: impl Fn() -> RequestEntry,
) -> Result<Oht> {
    let t = reqs.len();
    let per_tier = cfg.tier_slots();
    let fillers = |log: &mut TraceLog| -> Vec<RequestEntry> {
        (0..per_tier)
            .map(|j| {
                log.write("OHT.build", j, 1);
                let mut f = make_filler();
                f.bin = (j / cfg.bin_cap) as u64;
                f
            })
            .collect()
    };

    let mut round1 = reqs;
    for (j, e) in round1.iter_mut().enumerate() {
        log.write("OHT.build", j, 1);
        e.filler = Predicate::FALSE;
        e.bin = cfg.h1.eval(e.bucket, cfg.num_bin);
    }
    round1.extend(fillers(log));
    place_round(log, &mut round1, cfg);
    let mut round2 = round1.split_off(per_tier);
    let tier1 = round1;

    let sentinel = cfg.num_bin as u64;
    for (j, e) in round2.iter_mut().enumerate() {
        log.write("OHT.build", j, 1);
        let h2 = cfg.h2.eval(e.bucket, cfg.num_bin);
        e.bin = ct_select(e.filler, sentinel, h2);
    }
    round2.extend(fillers(log));
    place_round(log, &mut round2, cfg);
    let leftover = round2.split_off(per_tier);
    let tier2 = round2;

    let mut overflowed = 0u64;
    for e in &leftover {
        overflowed += (!e.filler).bit() as u64;
    }
    debug_assert_eq!(leftover.len(), t);
    if overflowed > 0 {
        return Err(Error::CapacityViolation { overflowed });
    }

    let mut slots = tier1;
    slots.extend(tier2);
    for (p, e) in slots.iter_mut().enumerate() {
        e.oht_pos = p as u64;
    }
    Ok(Oht {
        cfg: cfg.clone(),
        slots,
    })
}

/// Restores the `t` request entries (ordered by batch rank, then request
/// index) and records where the padding sat.
pub fn extract(log: &mut TraceLog, oht: Oht, t: usize) -> Result<(Vec<RequestEntry>, LayoutRecord)> {
    let mut slots = oht.slots;
    if t > slots.len() {
        return Err(Error::LengthMismatch {
            expected: slots.len(),
            actual: t,
        });
    }
    let key = |e: &RequestEntry| [e.filler.bit() as u64, e.batch_rank, e.req_index];
    obl_sort(log, "OHT.extract", &mut slots, key);
    let tail = slots.split_off(t);
    let filler_slots = tail
        .iter()
        .enumerate()
        .map(|(j, e)| {
            log.read("OHT.extract", t + j, 1);
            e.oht_pos
        })
        .collect();
    Ok((slots, LayoutRecord { filler_slots }))
}

/// One sort that puts every entry back at its recorded slot, padding included.
pub fn rebuild_from_layout(
    log: &mut TraceLog,
    reqs: Vec<RequestEntry>,
    layout: &LayoutRecord,
    cfg: &OhtConfig,
    make_filler: impl Fn() -> RequestEntry,
) -> Result<Oht> {
    let total = cfg.total_slots();
    if reqs.len() + layout.filler_slots.len() != total {
        return Err(Error::LengthMismatch {
            expected: total,
            actual: reqs.len() + layout.filler_slots.len(),
        });
    }
    let mut slots = reqs;
    for (j, &pos) in layout.filler_slots.iter().enumerate() {
        log.write("OHT.build", j, 1);
        let mut f = make_filler();
        f.oht_pos = pos;
        slots.push(f);
    }
    obl_sort(log, "OHT.build", &mut slots, |e: &RequestEntry| e.oht_pos);
    Ok(Oht {
        cfg: cfg.clone(),
        slots,
    })
}

/// Public bin ownership for parallel scans.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinScheduler {
    /// Contiguous bin range owned by each worker.
    pub regions: Vec<Range<usize>>,
    /// `tier_buckets[tier][bin]`: ascending LSH bucket ids hashing to `bin`.
    pub tier_buckets: [Vec<Vec<usize>>; 2],
}

impl BinScheduler {
    pub fn workers(&self) -> usize {
        self.regions.len()
    }

    /// Buckets whose `tier` bin is owned by worker `w`, in scan order.
    pub fn worker_buckets(&self, tier: usize, w: usize) -> Vec<usize> {
        self.regions[w]
            .clone()
            .flat_map(|bin| self.tier_buckets[tier][bin].iter().copied())
            .collect()
    }
}

pub fn build_scheduler(cfg: &OhtConfig, num_lsh_bucs: usize, workers: usize) -> Result<BinScheduler> {
    if workers == 0 {
        return Err(Error::InvalidConfig("worker count must be at least 1".into()));
    }
    let nb = cfg.num_bin;
    let base = nb / workers;
    let extra = nb % workers;
    let mut regions = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let len = base + usize::from(w < extra);
        regions.push(start..start + len);
        start += len;
    }
    let mut tier_buckets = [vec![Vec::new(); nb], vec![Vec::new(); nb]];
    for b in 0..num_lsh_bucs {
        let (b1, b2) = cfg.bins_for(b as u64);
        tier_buckets[0][b1].push(b);
        tier_buckets[1][b2].push(b);
    }
    Ok(BinScheduler { regions, tier_buckets })
}

//! Moves neuron buffers between the LSH table and the request array through
//! the oblivious hash table, scanning every bucket exactly once per tier.

use crate::error::Result;
use crate::lsh::LshTable;
use crate::model::NeuronRecord;
use crate::obliv::{ct_eq, OblRecord};
use crate::oht::{self, BinScheduler, LayoutRecord, Oht, OhtConfig};
use crate::request::RequestEntry;
use crate::trace::TraceLog;

use super::params::OptFlags;

/// Shape of the padding records a fetch needs.
#[derive(Clone, Copy, Debug)]
pub struct BufferShape {
    pub pad: usize,
    pub dim: usize,
    pub lanes: usize,
    pub sentinel: u64,
}

impl BufferShape {
    pub fn dummies(&self) -> Vec<NeuronRecord> {
        vec![NeuronRecord::dummy(self.dim, self.lanes, self.sentinel); self.pad]
    }

    pub fn of(table: &LshTable) -> Self {
        Self {
            pad: table.cfg.pad_size,
            dim: table.dim(),
            lanes: table.lanes(),
            sentinel: table.sentinel(),
        }
    }
}

/// Read fetch: build the table (metadata only under O1), scan, and drain it
/// back into request order. Returns the filled requests and the layout.
pub fn fetch_read(
    log: &mut TraceLog,
    table: &LshTable,
    reqs: Vec<RequestEntry>,
    cfg: &OhtConfig,
    sched: &BinScheduler,
    opts: &OptFlags,
) -> Result<(Vec<RequestEntry>, LayoutRecord)> {
    let shape = BufferShape::of(table);
    let t = reqs.len();
    let mut oht = if opts.o1 {
        let meta: Vec<RequestEntry> = reqs.iter().map(RequestEntry::metadata).collect();
        let mut oht = oht::build(log, meta, cfg, || RequestEntry::filler(Vec::new()))?;
        for (p, slot) in oht.slots.iter_mut().enumerate() {
            log.write("OHT.payload", p, shape.pad);
            slot.buffer = shape.dummies();
        }
        oht
    } else {
        oht::build(log, reqs, cfg, || RequestEntry::filler(shape.dummies()))?
    };
    scan(log, TableView::Read(&table.main, shape.pad), &mut oht, sched, opts);
    oht::extract(log, oht, t)
}

/// Write fetch: place merged requests (rebuilding from `layout` under O3),
/// then copy surviving buffers into their buckets.
pub fn fetch_write(
    log: &mut TraceLog,
    table: &mut LshTable,
    reqs: Vec<RequestEntry>,
    layout: &LayoutRecord,
    cfg: &OhtConfig,
    sched: &BinScheduler,
    opts: &OptFlags,
) -> Result<()> {
    let shape = BufferShape::of(table);
    let mut oht = if opts.o3 {
        oht::rebuild_from_layout(log, reqs, layout, cfg, || RequestEntry::filler(shape.dummies()))?
    } else {
        oht::build(log, reqs, cfg, || RequestEntry::filler(shape.dummies()))?
    };
    let pad = shape.pad;
    scan(log, TableView::Write(&mut table.main, pad), &mut oht, sched, opts);
    Ok(())
}

enum TableView<'a> {
    Read(&'a [NeuronRecord], usize),
    Write(&'a mut [NeuronRecord], usize),
}

/// Compare one bin's slots against bucket `b` and move records.
#[inline]
fn visit_bin_read(
    log: &mut TraceLog,
    tier: usize,
    slot_base: usize,
    slots: &mut [RequestEntry],
    b: u64,
    bucket: &[NeuronRecord],
) {
    let name = Oht::tier_name(tier);
    for (s, slot) in slots.iter_mut().enumerate() {
        log.cmpset(name, slot_base + s, 1);
        let hit = ct_eq(slot.bucket, b);
        for (dst, src) in slot.buffer.iter_mut().zip(bucket) {
            dst.cond_assign(hit, src);
        }
    }
}

#[inline]
fn visit_bin_write(
    log: &mut TraceLog,
    tier: usize,
    slot_base: usize,
    slots: &[RequestEntry],
    b: u64,
    bucket: &mut [NeuronRecord],
) {
    let name = Oht::tier_name(tier);
    for (s, slot) in slots.iter().enumerate() {
        log.cmpset(name, slot_base + s, 1);
        let hit = ct_eq(slot.bucket, b) & !slot.is_dummy;
        for (dst, src) in bucket.iter_mut().zip(&slot.buffer) {
            dst.cond_assign(hit, src);
        }
    }
}

fn scan(log: &mut TraceLog, view: TableView<'_>, oht: &mut Oht, sched: &BinScheduler, opts: &OptFlags) {
    let cfg = oht.cfg.clone();
    let num_buckets: usize = sched.tier_buckets[0].iter().map(Vec::len).sum();
    if opts.o2 {
        scan_parallel(log, view, oht, sched);
        return;
    }
    let cap = cfg.bin_cap;
    match view {
        TableView::Read(main, pad) => {
            for b in 0..num_buckets {
                log.read("LSH", b * pad, pad);
                let bucket = &main[b * pad..(b + 1) * pad];
                let (b1, b2) = cfg.bins_for(b as u64);
                for (tier, bin) in [(0, b1), (1, b2)] {
                    let range = oht.bin_range(tier, bin);
                    visit_bin_read(log, tier, bin * cap, &mut oht.slots[range], b as u64, bucket);
                }
            }
        }
        TableView::Write(main, pad) => {
            for b in 0..num_buckets {
                log.write("LSH", b * pad, pad);
                let bucket = &mut main[b * pad..(b + 1) * pad];
                let (b1, b2) = cfg.bins_for(b as u64);
                for (tier, bin) in [(0, b1), (1, b2)] {
                    let range = oht.bin_range(tier, bin);
                    visit_bin_write(log, tier, bin * cap, &oht.slots[range], b as u64, bucket);
                }
            }
        }
    }
}

/// One parallel phase per tier; worker `w` owns the bins of its scheduler
/// region and, in that tier, exactly the buckets hashing into them.
fn scan_parallel(log: &mut TraceLog, view: TableView<'_>, oht: &mut Oht, sched: &BinScheduler) {
    let cap = oht.cfg.bin_cap;
    let tier_slots = oht.cfg.tier_slots();
    let workers = sched.workers();
    let cfg = oht.cfg.clone();
    let bin_of = |tier: usize, b: usize| {
        let (b1, b2) = cfg.bins_for(b as u64);
        if tier == 0 {
            b1
        } else {
            b2
        }
    };
    match view {
        TableView::Read(main, pad) => {
            for tier in 0..2 {
                let tier_range = tier * tier_slots..(tier + 1) * tier_slots;
                let mut rest: &mut [RequestEntry] = &mut oht.slots[tier_range];
                let mut parts = Vec::with_capacity(workers);
                for region in &sched.regions {
                    let (head, tail) = rest.split_at_mut(region.len() * cap);
                    parts.push((region.start, head));
                    rest = tail;
                }
                let logs = run_workers(log, parts, |wlog, w, (first_bin, slots)| {
                    for b in sched.worker_buckets(tier, w) {
                        wlog.read("LSH", b * pad, pad);
                        let bin = bin_of(tier, b);
                        let local = (bin - first_bin) * cap;
                        let bucket = &main[b * pad..(b + 1) * pad];
                        visit_bin_read(wlog, tier, bin * cap, &mut slots[local..local + cap], b as u64, bucket);
                    }
                });
                log.absorb_parallel(logs).expect("no phase is open during a scan");
            }
        }
        TableView::Write(main, pad) => {
            let slots: &[RequestEntry] = &oht.slots;
            for tier in 0..2 {
                let mut owned: Vec<Option<&mut [NeuronRecord]>> = main.chunks_mut(pad).map(Some).collect();
                let parts: Vec<Vec<(usize, &mut [NeuronRecord])>> = (0..workers)
                    .map(|w| {
                        sched
                            .worker_buckets(tier, w)
                            .into_iter()
                            .map(|b| (b, owned[b].take().expect("bucket owned by one worker per tier")))
                            .collect()
                    })
                    .collect();
                let base = tier * tier_slots;
                let logs = run_workers(log, parts, |wlog, _w, buckets| {
                    for (b, bucket) in buckets {
                        wlog.write("LSH", b * pad, pad);
                        let bin = bin_of(tier, b);
                        let start = base + bin * cap;
                        visit_bin_write(wlog, tier, bin * cap, &slots[start..start + cap], b as u64, bucket);
                    }
                });
                log.absorb_parallel(logs).expect("no phase is open during a scan");
            }
        }
    }
}

fn run_workers<P: Send>(log: &TraceLog, parts: Vec<P>, body: impl Fn(&mut TraceLog, usize, P) + Sync) -> Vec<TraceLog> {
    if parts.len() == 1 {
        let mut wlog = log.worker_log(0);
        let part = parts.into_iter().next().expect("one part");
        body(&mut wlog, 0, part);
        return vec![wlog];
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = parts
            .into_iter()
            .enumerate()
            .map(|(w, part)| {
                let mut wlog = log.worker_log(w);
                let body = &body;
                s.spawn(move || {
                    body(&mut wlog, w, part);
                    wlog
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch worker panicked"))
            .collect()
    })
}

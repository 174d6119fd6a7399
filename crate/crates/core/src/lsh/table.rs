use crate::error::{Error, Result};
use crate::lsh::{encode_bucket, signature_top3, LshConfig, WtaFamily};
use crate::model::NeuronRecord;
use crate::obliv::{ct_eq, ct_gt, ct_select, obl_sort, OblRecord, Predicate};
use crate::trace::TraceLog;

/// `numLshBucs` buckets of exactly `PADSIZE` slots each, plus an overflow
/// region of public size. Every slot holds a record, real or dummy.
#[derive(Clone, Debug, PartialEq)]
pub struct LshTable {
    pub cfg: LshConfig,
    pub main: Vec<NeuronRecord>,
    pub overflow: Vec<NeuronRecord>,
    dim: usize,
    lanes: usize,
    sentinel: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefreshReport {
    /// Real neurons that did not fit their bucket and sit in the overflow
    /// region, where no fetch can reach them.
    pub real_overflow: u64,
}

impl LshTable {
    /// A table whose main region holds the freshly initialized reals
    /// back to back, ready for an initializing refresh.
    pub fn staged(cfg: LshConfig, reals: Vec<NeuronRecord>, dim: usize, lanes: usize, sentinel: u64) -> Result<Self> {
        cfg.validate()?;
        if let Some(r) = reals.iter().find(|r| r.dim() != dim || r.lanes() != lanes) {
            return Err(Error::InvalidConfig(format!(
                "neuron {} has shape ({}, {}), table expects ({dim}, {lanes})",
                r.id,
                r.dim(),
                r.lanes()
            )));
        }
        Ok(Self {
            cfg,
            main: reals,
            overflow: Vec::new(),
            dim,
            lanes,
            sentinel,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn sentinel(&self) -> u64 {
        self.sentinel
    }

    pub fn num_buckets(&self) -> usize {
        self.cfg.num_buckets()
    }

    pub fn bucket(&self, b: usize) -> &[NeuronRecord] {
        let p = self.cfg.pad_size;
        &self.main[b * p..(b + 1) * p]
    }

    /// Every real record in either region, ordered by id. Not oblivious;
    /// used for checkpoints, evaluation and tests.
    pub fn reals(&self) -> Vec<&NeuronRecord> {
        let mut out: Vec<&NeuronRecord> = self
            .main
            .iter()
            .chain(&self.overflow)
            .filter(|r| r.is_dummy == Predicate::FALSE)
            .collect();
        out.sort_by_key(|r| r.id);
        out
    }

    /// Bucket index of each real neuron in the main region, by id.
    pub fn assignment(&self) -> Vec<(u64, usize)> {
        let p = self.cfg.pad_size;
        let mut out: Vec<(u64, usize)> = self
            .main
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_dummy == Predicate::FALSE)
            .map(|(j, r)| (r.id, j / p))
            .collect();
        out.sort();
        out
    }
}

#[derive(Clone, Debug)]
struct RefreshItem {
    new_id: u64,
    overflow: Predicate,
    rec: NeuronRecord,
}

impl OblRecord for RefreshItem {
    fn cond_assign(&mut self, pred: Predicate, src: &Self) {
        self.new_id = ct_select(pred, src.new_id, self.new_id);
        self.overflow = ct_select(pred, src.overflow, self.overflow);
        self.rec.cond_assign(pred, &src.rec);
    }

    fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self) {
        let (x, y) = (a.new_id, b.new_id);
        a.new_id = ct_select(pred, y, x);
        b.new_id = ct_select(pred, x, y);
        let (x, y) = (a.overflow, b.overflow);
        a.overflow = ct_select(pred, y, x);
        b.overflow = ct_select(pred, x, y);
        NeuronRecord::cond_swap(pred, &mut a.rec, &mut b.rec);
    }

    fn fields(&self) -> Vec<crate::obliv::Field> {
        let mut f = vec![
            crate::obliv::Field::scalar("new_id"),
            crate::obliv::Field::scalar("is_overflow"),
        ];
        f.extend(self.rec.fields());
        f
    }
}

/// Overflow flags for an array sorted by bucket id: an entry is flagged when
/// more than `pad` entries of its bucket precede or include it.
/// One forward scan; one `CmpSet("RefreshArray", j, 1)` per entry.
pub fn capacity_flags(log: &mut TraceLog, sorted_ids: &[u64], pad: usize) -> Vec<Predicate> {
    let mut out = Vec::with_capacity(sorted_ids.len());
    let mut prev = u64::MAX;
    let mut count = 0u64;
    for (j, &id) in sorted_ids.iter().enumerate() {
        log.cmpset("RefreshArray", j, 1);
        let same = ct_eq(id, prev) & Predicate::public(j > 0);
        count = ct_select(same, count + 1, 1);
        out.push(ct_gt(count, pad as u64));
        prev = id;
    }
    out
}

/// Re-hashes every neuron from its current weights and rebuilds the padded
/// bucket layout. With `is_init`, the table must be staged and
/// `numLshBucs * PADSIZE` dummies pinned round-robin to buckets are added;
/// they are reused by every later refresh. The trace depends only on the table
/// size and the config.
pub fn refresh(log: &mut TraceLog, table: &mut LshTable, family: &WtaFamily, is_init: bool) -> Result<RefreshReport> {
    let nb = table.num_buckets();
    let pad = table.cfg.pad_size;
    if family.dim != table.dim || family.k() != table.cfg.k || family.m != table.cfg.m {
        return Err(Error::InvalidConfig(
            "hash family does not match the table shape".into(),
        ));
    }
    if is_init {
        if !table.overflow.is_empty() {
            return Err(Error::InvalidConfig(
                "initializing refresh needs an empty overflow region".into(),
            ));
        }
    } else if table.main.len() != nb * pad {
        return Err(Error::InvalidConfig(
            "refresh on a table that was never initialized".into(),
        ));
    }

    log.phase("Refresh");
    log.read("LSH", 0, table.main.len());
    log.read("LSH.overflow", 0, table.overflow.len());
    let mut items: Vec<RefreshItem> = table
        .main
        .drain(..)
        .chain(table.overflow.drain(..))
        .map(|rec| RefreshItem {
            new_id: 0,
            overflow: Predicate::FALSE,
            rec,
        })
        .collect();
    if is_init {
        for j in 0..nb * pad {
            let mut rec = NeuronRecord::dummy(table.dim, table.lanes, table.sentinel);
            rec.target = (j % nb) as u64;
            items.push(RefreshItem {
                new_id: 0,
                overflow: Predicate::FALSE,
                rec,
            });
        }
    }

    for it in items.iter_mut() {
        let top = signature_top3(log, it.rec.weights(), family);
        let bucket = encode_bucket(&top.h, family.m);
        it.new_id = ct_select(it.rec.is_dummy, it.rec.target, bucket);
    }

    let key1 = |it: &RefreshItem| [it.new_id, it.rec.is_dummy.bit() as u64, it.rec.id];
    obl_sort(log, "RefreshArray", &mut items, key1);

    let ids: Vec<u64> = items.iter().map(|it| it.new_id).collect();
    for (it, flag) in items.iter_mut().zip(capacity_flags(log, &ids, pad)) {
        it.overflow = flag;
    }

    let key2 = |it: &RefreshItem| {
        [
            it.overflow.bit() as u64,
            it.new_id,
            it.rec.is_dummy.bit() as u64,
            it.rec.id,
        ]
    };
    obl_sort(log, "RefreshArray", &mut items, key2);

    let mut real_overflow = 0u64;
    for it in &items {
        real_overflow += (it.overflow & !it.rec.is_dummy).bit() as u64;
    }

    let mut recs: Vec<NeuronRecord> = items.into_iter().map(|it| it.rec).collect();
    table.overflow = recs.split_off(nb * pad);
    table.main = recs;
    log.write("LSH", 0, table.main.len());
    log.write("LSH.overflow", 0, table.overflow.len());
    Ok(RefreshReport { real_overflow })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::assert_equal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_flags(ids: &[u64], pad: usize) -> Vec<Predicate> {
        let mut out = vec![];
        for j in 0..ids.len() {
            let seen = ids[..=j].iter().filter(|&&x| x == ids[j]).count();
            out.push(Predicate::public(seen > pad));
        }
        out
    }

    fn flags(ids: &[u64], pad: usize) -> Vec<u8> {
        capacity_flags(&mut TraceLog::disabled(), ids, pad)
            .into_iter()
            .map(|p| p.bit())
            .collect()
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(flags(&[0; 5], 4), vec![0, 0, 0, 0, 1]);
        assert_eq!(flags(&[0, 0, 1, 1], 4), vec![0; 4]);
        assert_eq!(flags(&[0, 0, 0, 0, 0, 0, 1, 1, 1], 4), vec![0, 0, 0, 0, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn capacity_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(0..40);
            let mut ids: Vec<u64> = (0..n).map(|_| rng.random_range(0..5)).collect();
            ids.sort();
            let pad = rng.random_range(1..6);
            let got = capacity_flags(&mut TraceLog::disabled(), &ids, pad);
            assert_eq!(got, brute_flags(&ids, pad));
        }
    }

    /// 4 neurons, every one hashing to bucket 0 of a 3-bucket table.
    #[test]
    fn init_places_reals_and_pads_with_dummies() {
        let cfg = LshConfig {
            k: 1,
            m: 3,
            r: 3,
            n_perturb: 1,
            pad_size: 4,
            rebuild_period: None,
            seed: 0,
        };
        // window covers features 0..3; the largest sits at position 0 -> bucket 0
        let fam = WtaFamily::from_orders(vec![vec![0, 1, 2]], 3).unwrap();
        let reals: Vec<NeuronRecord> = (0..4).map(|i| NeuronRecord::real(i, &[3.0, 1.0, 0.5], 1)).collect();
        let mut table = LshTable::staged(cfg, reals, 3, 1, 4).unwrap();
        let report = refresh(&mut TraceLog::disabled(), &mut table, &fam, true).unwrap();
        assert_eq!(report.real_overflow, 0);
        assert!(table.bucket(0).iter().all(|r| r.is_dummy == Predicate::FALSE));
        assert!(table.bucket(1).iter().all(|r| r.is_dummy == Predicate::TRUE));
        assert!(table.bucket(2).iter().all(|r| r.is_dummy == Predicate::TRUE));
        assert!(table.overflow.iter().all(|r| r.is_dummy == Predicate::TRUE));
        assert_eq!(table.overflow.len(), 4);
    }

    fn random_table(seed: u64, c: u64) -> (LshTable, WtaFamily) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LshConfig::new(2, 4, 24);
        let fam = WtaFamily::sample(2, 4, 6, 11).unwrap();
        let reals = (0..c)
            .map(|i| {
                let w: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                NeuronRecord::real(i, &w, 2)
            })
            .collect();
        (LshTable::staged(cfg, reals, 6, 2, c).unwrap(), fam)
    }

    #[test]
    fn refresh_is_idempotent_and_rehash_consistent() {
        let (mut table, fam) = random_table(1, 40);
        refresh(&mut TraceLog::disabled(), &mut table, &fam, true).unwrap();
        let first = table.assignment();
        assert_eq!(first.len(), 40);
        for (id, b) in &first {
            let rec = table.reals().into_iter().find(|r| r.id == *id).unwrap();
            let top = crate::lsh::top3_plain(rec.weights(), &fam);
            assert_eq!(encode_bucket(&top.h, 4) as usize, *b);
        }
        refresh(&mut TraceLog::disabled(), &mut table, &fam, false).unwrap();
        assert_eq!(table.assignment(), first);
        assert_eq!(table.main.len(), 16 * 24);
        assert_eq!(table.overflow.len(), 40);
    }

    #[test]
    fn refresh_trace_depends_on_shape_only() {
        let (mut a, fam) = random_table(1, 30);
        let (mut b, _) = random_table(2, 30);
        let mut la = TraceLog::new();
        let mut lb = TraceLog::new();
        refresh(&mut la, &mut a, &fam, true).unwrap();
        refresh(&mut lb, &mut b, &fam, true).unwrap();
        refresh(&mut la, &mut a, &fam, false).unwrap();
        refresh(&mut lb, &mut b, &fam, false).unwrap();
        assert!(assert_equal(&la, &lb).equal);
    }

    #[test]
    fn dummies_stay_zero_and_keep_targets() {
        let (mut table, fam) = random_table(4, 20);
        refresh(&mut TraceLog::disabled(), &mut table, &fam, true).unwrap();
        for b in 0..16 {
            for r in table.bucket(b) {
                if r.is_dummy == Predicate::TRUE {
                    assert!(r.is_all_zero());
                    assert_eq!(r.target, b as u64);
                }
            }
        }
    }
}

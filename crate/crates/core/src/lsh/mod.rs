//! Winner-take-all hashing, multi-probe sequences, and the padded LSH table.

mod probe;
mod table;
mod wta;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use probe::{len_seq, mp_wta_probes, pairwise_order, probe_schedule, Perturbation};
pub use table::{capacity_flags, refresh, LshTable, RefreshReport};
pub(crate) use wta::signature_top3;
pub use wta::{encode_bucket, top3_plain, wta_signature_top3, Top3, WtaFamily, WtaHashFn};

/// Public LSH shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LshConfigFile")]
pub struct LshConfig {
    /// Hash functions per signature.
    pub k: usize,
    /// Window size of each hash function.
    pub m: usize,
    /// Fallback depth: probes substitute the 2nd..r-th window winner.
    pub r: usize,
    /// Maximum number of perturbed positions per probe.
    pub n_perturb: usize,
    pub pad_size: usize,
    /// Batches between refreshes; `None` never refreshes after init.
    pub rebuild_period: Option<u64>,
    /// Public seed of the hash family.
    pub seed: u64,
}

/// On-disk form: `r` and `n_perturb` may be omitted.
#[derive(Deserialize)]
struct LshConfigFile {
    k: usize,
    m: usize,
    r: Option<usize>,
    n_perturb: Option<usize>,
    pad_size: usize,
    #[serde(default)]
    rebuild_period: Option<u64>,
    #[serde(default)]
    seed: u64,
}

impl From<LshConfigFile> for LshConfig {
    fn from(f: LshConfigFile) -> Self {
        let mut c = LshConfig::new(f.k, f.m, f.pad_size);
        c.r = f.r.unwrap_or(c.r);
        c.n_perturb = f.n_perturb.unwrap_or(c.n_perturb);
        c.rebuild_period = f.rebuild_period;
        c.seed = f.seed;
        c
    }
}

impl LshConfig {
    /// Config with `r = 3` and `N = min(3, K)`.
    pub fn new(k: usize, m: usize, pad_size: usize) -> Self {
        Self {
            k,
            m,
            r: 3,
            n_perturb: 3.min(k),
            pad_size,
            rebuild_period: None,
            seed: 0,
        }
    }

    pub fn num_buckets(&self) -> usize {
        self.m.pow(self.k as u32)
    }

    pub fn len_seq(&self) -> usize {
        len_seq(self.k, self.r, self.n_perturb)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.m < 3 {
            return bad(format!("window size M={} is below 3", self.m));
        }
        if !(2..=3).contains(&self.r) || self.r > self.m {
            return bad(format!("fallback depth r={} must be 2 or 3 and at most M", self.r));
        }
        if self.n_perturb == 0 || self.n_perturb > self.k {
            return bad(format!("N={} must lie in 1..=K", self.n_perturb));
        }
        if self.pad_size == 0 {
            return bad("PADSIZE must be at least 1".into());
        }
        if self.rebuild_period == Some(0) {
            return bad("rebuild period must be positive".into());
        }
        if self.m.checked_pow(self.k as u32).is_none_or(|nb| nb > 1 << 24) {
            return bad(format!("M^K = {}^{} buckets is too large", self.m, self.k));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omitted_probe_depths_follow_k() {
        let c: LshConfig = serde_json::from_str(r#"{"k": 2, "m": 4, "pad_size": 8}"#).unwrap();
        assert_eq!(c, LshConfig::new(2, 4, 8));
        let back: LshConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation() {
        assert!(LshConfig::new(2, 4, 8).validate().is_ok());
        assert!(LshConfig::new(2, 2, 8).validate().is_err());
        assert!(LshConfig::new(0, 4, 8).validate().is_err());
        assert!(LshConfig::new(2, 4, 0).validate().is_err());
        assert_eq!(LshConfig::new(2, 4, 8).num_buckets(), 16);
        assert_eq!(LshConfig::new(2, 4, 8).len_seq(), 9);
    }
}

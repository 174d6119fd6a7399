use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::LshConfig;
use crate::oht::OhtConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub d_input: usize,
    /// Width of the dense hidden layer.
    pub n0: usize,
    /// Number of output neurons (labels).
    pub c: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f32,
    #[serde(default = "default_beta1")]
    pub beta1: f32,
    #[serde(default = "default_beta2")]
    pub beta2: f32,
    #[serde(default = "default_eps")]
    pub eps: f32,
}

fn default_epochs() -> usize {
    1
}
fn default_lr() -> f32 {
    1e-3
}
fn default_beta1() -> f32 {
    0.9
}
fn default_beta2() -> f32 {
    0.999
}
fn default_eps() -> f32 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptFlags {
    /// Move only metadata while building the read-phase table.
    #[serde(default = "yes")]
    pub o1: bool,
    /// Parallel bin scans over scheduler regions.
    #[serde(default = "yes")]
    pub o2: bool,
    /// Rebuild the write-phase table from the read-phase layout.
    #[serde(default = "yes")]
    pub o3: bool,
    #[serde(default = "one")]
    pub workers: usize,
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

impl Default for OptFlags {
    fn default() -> Self {
        Self {
            o1: true,
            o2: true,
            o3: true,
            workers: 1,
        }
    }
}

/// Everything the adversary is assumed to know, apart from the per-input
/// shapes (non-zero feature indices and label counts) carried by the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicParams {
    pub network: NetworkParams,
    pub train: TrainParams,
    pub lsh: LshConfig,
    /// Seed of the two tier hash functions.
    #[serde(default)]
    pub oht_seed: u64,
    #[serde(default)]
    pub opts: OptFlags,
}

impl PublicParams {
    pub fn validate(&self) -> Result<()> {
        self.lsh.validate()?;
        let n = &self.network;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if n.d_input == 0 || n.n0 == 0 || n.c == 0 {
            return bad("network dimensions must be positive".into());
        }
        if n.n0 < self.lsh.m {
            return bad(format!(
                "hidden width {} is smaller than the WTA window {}",
                n.n0, self.lsh.m
            ));
        }
        if self.train.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.opts.workers == 0 {
            return bad("worker count must be positive".into());
        }
        let t = &self.train;
        // written to reject NaN as well
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(t.lr > 0.0) || !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || !(t.eps > 0.0) {
            return bad("optimizer hyper-parameters out of range".into());
        }
        Ok(())
    }

    pub fn len_seq(&self) -> usize {
        self.lsh.len_seq()
    }

    /// Requests per batch, `B * lenSeq`.
    pub fn requests(&self) -> usize {
        self.train.batch_size * self.len_seq()
    }

    /// Output slots per input, `lenSeq * PADSIZE`.
    pub fn active_slots(&self) -> usize {
        self.len_seq() * self.lsh.pad_size
    }

    pub fn oht_config(&self) -> Result<OhtConfig> {
        OhtConfig::for_workload(
            self.train.batch_size,
            self.len_seq(),
            self.lsh.num_buckets(),
            self.oht_seed,
        )
    }
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use oblivnet::engine::{NetworkParams, OptFlags, PublicParams, TrainParams};
use oblivnet::lsh::LshConfig;
use serde::{Deserialize, Serialize};

use crate::exit::{tag, Kind};

/// Synthetic data used when no dataset paths are configured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub nnz: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 64,
            n_test: 32,
            nnz: 6,
            clusters: 4,
            seed: 1,
        }
    }
}

/// Shape of one audited pipeline: batch steps, then refreshes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSpec {
    pub steps: usize,
    pub refreshes: usize,
    /// Upper bound on the public label count of an input.
    pub max_labels: usize,
    pub max_nnz: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            steps: 3,
            refreshes: 1,
            max_labels: 3,
            max_nnz: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub dim: usize,
    pub vectors: usize,
    pub queries: usize,
    /// Neighbors per query counted by recall.
    pub top_k: usize,
    pub k: usize,
    pub m: usize,
    pub tables: Vec<usize>,
    pub trials: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            vectors: 1000,
            queries: 50,
            top_k: 10,
            k: 3,
            m: 8,
            tables: vec![1, 2, 5, 10, 20, 50],
            trials: 3,
            clusters: 20,
            seed: 1,
        }
    }
}

/// Everything one invocation needs. Public parameters sit at the top level
/// under their own field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub params: PublicParams,
    /// Seed of the initial weights and the epoch shuffles.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub shuffle: bool,
    #[serde(default)]
    pub train_path: Option<PathBuf>,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub metrics_out: Option<PathBuf>,
    #[serde(default)]
    pub trace_out: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub bench: BenchSpec,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    /// The tiny network: D_input=50, N_0=8, C=64, K=2, M=4, PADSIZE=8, B=4.
    fn default() -> Self {
        let mut lsh = LshConfig::new(2, 4, 8);
        lsh.seed = 1;
        Self {
            params: PublicParams {
                network: NetworkParams {
                    d_input: 50,
                    n0: 8,
                    c: 64,
                },
                train: TrainParams {
                    batch_size: 4,
                    epochs: 1,
                    lr: 1e-3,
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-8,
                },
                lsh,
                oht_seed: 1,
                opts: OptFlags::default(),
            },
            seed: 0,
            shuffle: true,
            train_path: None,
            test_path: None,
            checkpoint: None,
            metrics_out: None,
            trace_out: None,
            synth: SynthSpec::default(),
            audit: AuditSpec::default(),
            bench: BenchSpec::default(),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub trace_out: Option<PathBuf>,
    pub o1: Option<bool>,
    pub o2: Option<bool>,
    pub o3: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        tag(serde_json::from_str(text).context("parsing config JSON"), Kind::Config)
    }

    /// Reads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = tag(
                    std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display())),
                    Kind::Config,
                )?;
                Self::from_json(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        let opts = &mut self.params.opts;
        if let Some(w) = o.workers {
            opts.workers = w;
        }
        if let Some(v) = o.o1 {
            opts.o1 = v;
        }
        if let Some(v) = o.o2 {
            opts.o2 = v;
        }
        if let Some(v) = o.o3 {
            opts.o3 = v;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.epochs {
            self.params.train.epochs = e;
        }
        if let Some(b) = o.batch_size {
            self.params.train.batch_size = b;
        }
        if o.trace_out.is_some() {
            self.trace_out.clone_from(&o.trace_out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        tag(
            self.params.validate().context("invalid public parameters"),
            Kind::Config,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the config next to an artifact as `<artifact>.run.json`.
    pub fn echo_beside(&self, artifact: &Path) -> Result<()> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".run.json");
        std::fs::write(PathBuf::from(name), self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn minimal_file_and_overrides() {
        let text = r#"{
            "network": {"d_input": 10, "n0": 4, "c": 8},
            "train": {"batch_size": 2, "epochs": 3},
            "lsh": {"k": 1, "m": 4, "pad_size": 4}
        }"#;
        let mut c = RunConfig::from_json(text).unwrap();
        assert!(c.params.opts.o1 && c.shuffle);
        c.apply(&Overrides {
            workers: Some(4),
            o2: Some(false),
            epochs: Some(0),
            ..Default::default()
        });
        assert_eq!(
            (c.params.opts.workers, c.params.opts.o2, c.params.train.epochs),
            (4, false, 0)
        );
    }
}

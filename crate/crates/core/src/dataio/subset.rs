//! Cover-and-fill subsetting of a large label space.
//!
//! Phase A greedily keeps training instances that bring many unseen labels,
//! preferring frequent ones, while the kept label set stays within budget.
//! Phase B fills the instance quota with instances whose labels are all
//! kept already. Test instances survive if any label is kept; other labels
//! are dropped. Kept labels are renumbered densely in ascending order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{write_xc, Dataset, SparseExample};

/// Reference corpus sizes the multiplier scales.
pub const BASE_INSTANCES: usize = 14_146;
pub const BASE_LABELS: usize = 30_938;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetTargets {
    pub instances: usize,
    pub labels: usize,
}

impl SubsetTargets {
    pub fn for_multiplier(multiplier: usize) -> Result<Self> {
        if !(2..=3).contains(&multiplier) {
            return Err(Error::InvalidConfig(format!(
                "multiplier must be 2 or 3, got {multiplier}"
            )));
        }
        Ok(Self {
            instances: multiplier * BASE_INSTANCES,
            labels: multiplier * BASE_LABELS,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub target_instances: usize,
    pub target_labels: usize,
    pub train_instances: usize,
    pub labels: usize,
    pub test_instances: usize,
    pub phase_a_instances: usize,
    pub phase_b_instances: usize,
    /// False when the source could not fill the instance target.
    pub budget_met: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// Source label id to new label id.
    pub label_map: BTreeMap<u32, u32>,
    /// Source indices of kept training instances, in output order.
    pub kept_train_idx: Vec<usize>,
    pub stats: SubsetStats,
}

impl SubsetOutput {
    pub const FILES: [&'static str; 5] = [
        "train.small.txt",
        "test.small.txt",
        "label_map.json",
        "kept_train_idx.txt",
        "stats.json",
    ];

    /// Writes the five output files into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_xc(dir.join(Self::FILES[0]), &self.train)?;
        write_xc(dir.join(Self::FILES[1]), &self.test)?;
        let map: BTreeMap<String, u32> = self.label_map.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        std::fs::write(dir.join(Self::FILES[2]), serde_json::to_string_pretty(&map)? + "\n")?;
        let idx: String = self.kept_train_idx.iter().map(|i| format!("{i}\n")).collect();
        std::fs::write(dir.join(Self::FILES[3]), idx)?;
        std::fs::write(
            dir.join(Self::FILES[4]),
            serde_json::to_string_pretty(&self.stats)? + "\n",
        )?;
        Ok(())
    }
}

/// Heap entry; larger is better.
struct Candidate {
    new_labels: usize,
    mean_rank: f64,
    order: usize,
    idx: usize,
}

impl Candidate {
    fn key(&self) -> (usize, std::cmp::Reverse<u64>, std::cmp::Reverse<usize>) {
        (
            self.new_labels,
            std::cmp::Reverse(self.mean_rank.to_bits()),
            std::cmp::Reverse(self.order),
        )
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

pub fn subset_cover_fill(train: &Dataset, test: &Dataset, multiplier: usize, seed: u64) -> Result<SubsetOutput> {
    subset_with_targets(train, test, SubsetTargets::for_multiplier(multiplier)?, seed)
}

pub fn subset_with_targets(train: &Dataset, test: &Dataset, targets: SubsetTargets, seed: u64) -> Result<SubsetOutput> {
    // Frequency rank: 0 for the most frequent label, ties by id.
    let mut freq: BTreeMap<u32, usize> = BTreeMap::new();
    for x in &train.examples {
        for &y in &x.labels {
            *freq.entry(y).or_default() += 1;
        }
    }
    let mut by_freq: Vec<(u32, usize)> = freq.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let rank: BTreeMap<u32, usize> = by_freq.iter().enumerate().map(|(r, &(y, _))| (y, r)).collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let position: Vec<usize> = {
        let mut p = vec![0; train.len()];
        for (o, &i) in order.iter().enumerate() {
            p[i] = o;
        }
        p
    };

    let mut kept: HashSet<u32> = HashSet::new();
    let score = |x: &SparseExample, kept: &HashSet<u32>| -> (usize, f64) {
        let new: Vec<usize> = x.labels.iter().filter(|y| !kept.contains(y)).map(|y| rank[y]).collect();
        let mean = if new.is_empty() {
            0.0
        } else {
            new.iter().sum::<usize>() as f64 / new.len() as f64
        };
        (new.len(), mean)
    };

    let mut heap: BinaryHeap<Candidate> = order
        .iter()
        .filter(|&&i| !train.examples[i].labels.is_empty())
        .map(|&i| {
            let (new_labels, mean_rank) = score(&train.examples[i], &kept);
            Candidate {
                new_labels,
                mean_rank,
                order: position[i],
                idx: i,
            }
        })
        .collect();

    let mut selected = vec![false; train.len()];
    let mut phase_a = Vec::new();
    while phase_a.len() < targets.instances {
        let Some(top) = heap.pop() else { break };
        let (new_labels, mean_rank) = score(&train.examples[top.idx], &kept);
        if new_labels == 0 {
            continue;
        }
        if new_labels != top.new_labels || mean_rank != top.mean_rank {
            heap.push(Candidate {
                new_labels,
                mean_rank,
                ..top
            });
            continue;
        }
        if kept.len() + new_labels > targets.labels {
            continue;
        }
        kept.extend(train.examples[top.idx].labels.iter().copied());
        selected[top.idx] = true;
        phase_a.push(top.idx);
    }

    let mut phase_b = Vec::new();
    for &i in &order {
        if phase_a.len() + phase_b.len() >= targets.instances {
            break;
        }
        let x = &train.examples[i];
        if !selected[i] && !x.labels.is_empty() && x.labels.iter().all(|y| kept.contains(y)) {
            selected[i] = true;
            phase_b.push(i);
        }
    }

    let mut kept_sorted: Vec<u32> = kept.into_iter().collect();
    kept_sorted.sort_unstable();
    let label_map: BTreeMap<u32, u32> = kept_sorted.iter().enumerate().map(|(n, &y)| (y, n as u32)).collect();
    let remap = |x: &SparseExample| -> SparseExample {
        let mut labels: Vec<u32> = x.labels.iter().filter_map(|y| label_map.get(y).copied()).collect();
        labels.sort_unstable();
        labels.dedup();
        SparseExample {
            labels,
            features: x.features.clone(),
        }
    };

    let mut kept_train_idx: Vec<usize> = phase_a.iter().chain(&phase_b).copied().collect();
    kept_train_idx.sort_unstable();
    let out_train = Dataset {
        num_features: train.num_features,
        num_labels: label_map.len(),
        examples: kept_train_idx.iter().map(|&i| remap(&train.examples[i])).collect(),
    };
    let out_test = Dataset {
        num_features: test.num_features,
        num_labels: label_map.len(),
        examples: test
            .examples
            .iter()
            .filter(|x| x.labels.iter().any(|y| label_map.contains_key(y)))
            .map(remap)
            .collect(),
    };

    let stats = SubsetStats {
        target_instances: targets.instances,
        target_labels: targets.labels,
        train_instances: out_train.len(),
        labels: label_map.len(),
        test_instances: out_test.len(),
        phase_a_instances: phase_a.len(),
        phase_b_instances: phase_b.len(),
        budget_met: out_train.len() == targets.instances,
        seed,
    };
    Ok(SubsetOutput {
        train: out_train,
        test: out_test,
        label_map,
        kept_train_idx,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(labels: &[u32]) -> SparseExample {
        SparseExample {
            labels: labels.to_vec(),
            features: vec![(0, 1.0)],
        }
    }

    fn toy() -> Dataset {
        Dataset {
            num_features: 4,
            num_labels: 8,
            examples: vec![
                ex(&[0, 1]),
                ex(&[2, 3, 4]),
                ex(&[0]),
                ex(&[1, 5]),
                ex(&[0, 1]),
                ex(&[6, 7]),
            ],
        }
    }

    #[test]
    fn toy_budget_three() {
        let targets = SubsetTargets {
            instances: 6,
            labels: 3,
        };
        for seed in 0..10 {
            let out = subset_with_targets(&toy(), &toy(), targets, seed).unwrap();
            assert!(out.stats.labels <= 3);
            let src = toy();
            let kept: HashSet<u32> = out.label_map.keys().copied().collect();
            for &i in &out.kept_train_idx {
                assert!(src.examples[i].labels.iter().all(|y| kept.contains(y)));
            }
            let ids: Vec<u32> = out.label_map.values().copied().collect();
            assert_eq!(ids, (0..kept.len() as u32).collect::<Vec<_>>());
            assert!(!out.stats.budget_met);
        }
    }

    #[test]
    fn greedy_prefers_more_new_labels() {
        let targets = SubsetTargets {
            instances: 1,
            labels: 10,
        };
        let out = subset_with_targets(&toy(), &toy(), targets, 0).unwrap();
        assert_eq!(out.kept_train_idx, vec![1]);
    }

    #[test]
    fn multiplier_targets() {
        let t = SubsetTargets::for_multiplier(2).unwrap();
        assert_eq!((t.instances, t.labels), (28_292, 61_876));
        assert!(SubsetTargets::for_multiplier(4).is_err());
    }

    #[test]
    fn test_split_uses_any_policy() {
        let targets = SubsetTargets {
            instances: 1,
            labels: 2,
        };
        let out = subset_with_targets(&toy(), &toy(), targets, 0).unwrap();
        // labels {0, 1} are kept: only rows touching them survive
        assert_eq!(out.test.len(), 4);
        assert!(out.test.examples.iter().all(|x| !x.labels.is_empty()));
    }
}

//! Extreme-classification datasets: the XC text format, synthetic data, and
//! cover-and-fill subsetting.

mod subset;
mod synth;
mod xc;

pub use subset::{
    subset_cover_fill, subset_with_targets, SubsetOutput, SubsetStats, SubsetTargets, BASE_INSTANCES, BASE_LABELS,
};
pub use synth::{block_of, cluster_block, synth_xc};
pub use xc::{parse_xc, parse_xc_str, write_xc, write_xc_string};

/// One sparse example: label ids and `(feature index, value)` pairs with
/// strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseExample {
    pub labels: Vec<u32>,
    pub features: Vec<(u32, f32)>,
}

impl SparseExample {
    pub fn nnz(&self) -> usize {
        self.features.len()
    }

    /// Same public shape (non-zero indices and label count).
    pub fn same_shape(&self, other: &SparseExample) -> bool {
        self.labels.len() == other.labels.len()
            && self.features.len() == other.features.len()
            && self.features.iter().zip(&other.features).all(|(a, b)| a.0 == b.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub num_features: usize,
    pub num_labels: usize,
    pub examples: Vec<SparseExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

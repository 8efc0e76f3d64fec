//! Sparse instances and labeled datasets.

mod libsvm;
mod normalize;
mod vector;

pub use libsvm::{load_libsvm, parse_libsvm, write_libsvm};
pub use normalize::{normalize_minmax, FeatureScaler};
pub use vector::{sparse_dot, SparseVector};

use crate::error::{Error, Result};

/// Which part of a train/validation/test split a dataset plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Labeled sparse instances sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<SparseVector>,
    labels: Vec<i64>,
    dimension: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        instances: Vec<SparseVector>,
        labels: Vec<i64>,
        dimension: usize,
        split: Split,
    ) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        for (n, x) in instances.iter().enumerate() {
            if let Some(&last) = x.indices().last() {
                if last >= dimension {
                    return Err(Error::InvalidDataset(format!(
                        "instance {n} has feature {last} but dimension is {dimension}"
                    )));
                }
            }
        }
        Ok(Dataset {
            instances,
            labels,
            dimension,
            split,
        })
    }

    pub fn instances(&self) -> &[SparseVector] {
        &self.instances
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn instance(&self, n: usize) -> &SparseVector {
        &self.instances[n]
    }

    pub fn label(&self, n: usize) -> i64 {
        self.labels[n]
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Re-declares the feature space size. Fails if an instance would fall outside it.
    pub fn with_dimension(self, dimension: usize) -> Result<Self> {
        Dataset::new(self.instances, self.labels, dimension, self.split)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<i64> {
        let mut classes = self.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Average number of nonzeros per instance.
    pub fn mean_nnz(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        let total: usize = self.instances.iter().map(SparseVector::nnz).sum();
        total as f64 / self.instances.len() as f64
    }

    pub(crate) fn into_parts(self) -> (Vec<SparseVector>, Vec<i64>, usize, Split) {
        (self.instances, self.labels, self.dimension, self.split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_label_count_mismatch() {
        let x = SparseVector::new(vec![0], vec![1.0]).unwrap();
        assert!(Dataset::new(vec![x], vec![], 3, Split::Train).is_err());
    }

    #[test]
    fn rejects_feature_beyond_dimension() {
        let x = SparseVector::new(vec![5], vec![1.0]).unwrap();
        assert!(Dataset::new(vec![x], vec![1], 5, Split::Train).is_err());
    }

    #[test]
    fn classes_are_sorted_and_distinct() {
        let e = SparseVector::empty();
        let ds = Dataset::new(vec![e.clone(), e.clone(), e], vec![3, -1, 3], 1, Split::Train)
            .unwrap();
        assert_eq!(ds.classes(), vec![-1, 3]);
    }
}

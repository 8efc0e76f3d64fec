//! Per-feature max scaling into `[0, 1]`.
//!
//! The minimum is taken to be zero so sparsity is preserved. Statistics come
//! from the training split only and are reused for every other split.

use log::warn;

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Per-feature maxima fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    max: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(train: &Dataset) -> Result<Self> {
        check_nonnegative(train)?;
        let mut max = vec![0.0f64; train.dimension()];
        for x in train.instances() {
            for (i, v) in x.iter() {
                max[i] = max[i].max(v);
            }
        }
        Ok(FeatureScaler { max })
    }

    pub fn dimension(&self) -> usize {
        self.max.len()
    }

    pub fn feature_max(&self, feature: usize) -> f64 {
        self.max[feature]
    }

    /// Divides every value by its training maximum. Features never seen in
    /// training are left untouched and reported once per call.
    pub fn transform(&self, dataset: Dataset) -> Result<Dataset> {
        if dataset.dimension() != self.max.len() {
            return Err(Error::InvalidDataset(format!(
                "dimension {} does not match scaler dimension {}",
                dataset.dimension(),
                self.max.len()
            )));
        }
        check_nonnegative(&dataset)?;
        let (mut instances, labels, dimension, split) = dataset.into_parts();
        let mut unseen = 0usize;
        for x in &mut instances {
            let indices = x.indices().to_vec();
            for (v, i) in x.values_mut().iter_mut().zip(indices) {
                let m = self.max[i];
                if m > 0.0 {
                    *v /= m;
                } else {
                    unseen += 1;
                }
            }
            x.prune_zeros();
        }
        if unseen > 0 {
            warn!(
                "{unseen} value(s) in the {split:?} split belong to features absent from training; left unscaled"
            );
        }
        Dataset::new(instances, labels, dimension, split)
    }
}

fn check_nonnegative(dataset: &Dataset) -> Result<()> {
    for (n, x) in dataset.instances().iter().enumerate() {
        if let Some((feature, value)) = x.iter().find(|&(_, v)| v < 0.0) {
            return Err(Error::NegativeValue {
                instance: n,
                feature,
                value,
            });
        }
    }
    Ok(())
}

/// Normalizes a train/validation/test group with statistics from its single
/// [`Split::Train`] member. Order of the group is preserved.
pub fn normalize_minmax(group: Vec<Dataset>) -> Result<Vec<Dataset>> {
    let mut trains = group.iter().filter(|d| d.split() == Split::Train);
    let train = trains
        .next()
        .ok_or_else(|| Error::InvalidDataset("no training split in group".into()))?;
    if trains.next().is_some() {
        return Err(Error::InvalidDataset("more than one training split in group".into()));
    }
    let dim = train.dimension();
    if let Some(d) = group.iter().find(|d| d.dimension() != dim) {
        return Err(Error::InvalidDataset(format!(
            "{:?} split has dimension {} but training split has {dim}",
            d.split(),
            d.dimension()
        )));
    }
    let scaler = FeatureScaler::fit(train)?;
    group.into_iter().map(|d| scaler.transform(d)).collect()
}

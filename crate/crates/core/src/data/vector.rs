use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A sparse real vector with strictly increasing feature indices and
/// nonzero stored values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from parallel index/value arrays. Indices must be
    /// strictly increasing; explicit zeros are dropped.
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidVector(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidVector(format!(
                "indices not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("non-finite value {v}")));
        }
        let mut out = SparseVector { indices, values };
        out.prune_zeros();
        Ok(out)
    }

    /// Builds a vector from unordered `(index, value)` pairs; duplicates are rejected.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|&(i, _)| i);
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(indices, values)
    }

    /// Dense-to-sparse conversion, keeping nonzero entries.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .unzip();
        SparseVector { indices, values }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at `feature`, zero when absent. O(log nnz).
    pub fn get(&self, feature: usize) -> f64 {
        match self.indices.binary_search(&feature) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        sparse_dot(self, other)
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseVector {
        let mut out = SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        };
        out.prune_zeros();
        out
    }

    /// Entrywise `self - other`; entries that cancel exactly are dropped.
    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut a, mut b) = (0, 0);
        while a < self.nnz() || b < other.nnz() {
            let ord = match (self.indices.get(a), other.indices.get(b)) {
                (Some(i), Some(j)) => i.cmp(j),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            let (idx, v) = match ord {
                Ordering::Less => {
                    a += 1;
                    (self.indices[a - 1], self.values[a - 1])
                }
                Ordering::Greater => {
                    b += 1;
                    (other.indices[b - 1], -other.values[b - 1])
                }
                Ordering::Equal => {
                    a += 1;
                    b += 1;
                    (self.indices[a - 1], self.values[a - 1] - other.values[b - 1])
                }
            };
            if v != 0.0 {
                indices.push(idx);
                values.push(v);
            }
        }
        SparseVector { indices, values }
    }

    /// Squared Euclidean distance, computed by a merge over both supports.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        self.sub(other).squared_norm()
    }

    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        let mut dense = vec![0.0; dimension];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut keep = 0;
        for n in 0..self.indices.len() {
            if self.values[n] != 0.0 {
                self.indices[keep] = self.indices[n];
                self.values[keep] = self.values[n];
                keep += 1;
            }
        }
        self.indices.truncate(keep);
        self.values.truncate(keep);
    }
}

/// `Σ_f a_f b_f`. Gallops through the longer vector with binary search when
/// the sizes are lopsided, otherwise merges.
pub fn sparse_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (short, long) = if a.nnz() <= b.nnz() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0.0;
    }
    if long.nnz() > 8 * short.nnz() {
        let mut sum = 0.0;
        let mut lo = 0;
        for (i, v) in short.iter() {
            match long.indices[lo..].binary_search(&i) {
                Ok(pos) => {
                    sum += v * long.values[lo + pos];
                    lo += pos + 1;
                }
                Err(pos) => lo += pos,
            }
            if lo >= long.nnz() {
                break;
            }
        }
        return sum;
    }
    let (mut p, mut q) = (0, 0);
    let mut sum = 0.0;
    while p < short.nnz() && q < long.nnz() {
        match short.indices[p].cmp(&long.indices[q]) {
            Ordering::Less => p += 1,
            Ordering::Greater => q += 1,
            Ordering::Equal => {
                sum += short.values[p] * long.values[q];
                p += 1;
                q += 1;
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.to_vec()).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(sparse_dot(&sv(&[(0, 1.0)]), &sv(&[(0, 2.0)])), 2.0);
        assert_eq!(sparse_dot(&sv(&[(0, 1.0)]), &sv(&[(1, 2.0)])), 0.0);
        assert_eq!(
            sparse_dot(&sv(&[(1, 0.5), (3, 1.0)]), &sv(&[(3, 2.0), (9, 1.0)])),
            2.0
        );
    }

    #[test]
    fn rejects_unsorted_and_duplicate_indices() {
        assert!(SparseVector::new(vec![3, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::new(vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::from_pairs(vec![(2, 1.0), (2, 3.0)]).is_err());
    }

    #[test]
    fn explicit_zeros_are_dropped() {
        let v = SparseVector::new(vec![0, 4, 7], vec![1.0, 0.0, 2.0]).unwrap();
        assert_eq!(v.indices(), &[0, 7]);
    }

    #[test]
    fn sub_cancels_exactly() {
        let a = sv(&[(1, 1.0), (2, 3.0)]);
        let b = sv(&[(2, 3.0), (5, 1.0)]);
        let d = a.sub(&b);
        assert_eq!(d.indices(), &[1, 5]);
        assert_eq!(d.values(), &[1.0, -1.0]);
    }

    #[test]
    fn galloping_path_matches_dense() {
        let long: Vec<(usize, f64)> = (0..200).map(|i| (i * 3, i as f64 + 1.0)).collect();
        let long = sv(&long);
        let short = sv(&[(3, 2.0), (300, 1.0), (597, 0.5), (1000, 4.0)]);
        let dense_a = short.to_dense(1001);
        let dense_b = long.to_dense(1001);
        let expect: f64 = dense_a.iter().zip(&dense_b).map(|(a, b)| a * b).sum();
        assert_eq!(sparse_dot(&short, &long), expect);
        assert_eq!(sparse_dot(&long, &short), expect);
    }

    fn arb_vector() -> impl Strategy<Value = SparseVector> {
        proptest::collection::btree_map(0usize..60, -5.0f64..5.0, 0..25).prop_map(|m| {
            SparseVector::from_pairs(m.into_iter().collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dot_is_symmetric_and_bilinear(a in arb_vector(), b in arb_vector(), s in -3.0f64..3.0) {
            let ab = sparse_dot(&a, &b);
            prop_assert_eq!(ab, sparse_dot(&b, &a));
            let scaled = sparse_dot(&a.scaled(s), &b);
            prop_assert!((scaled - s * ab).abs() <= 1e-12 * (1.0 + ab.abs()));
        }

        #[test]
        fn distance_matches_dense(a in arb_vector(), b in arb_vector()) {
            let (da, db) = (a.to_dense(60), b.to_dense(60));
            let expect: f64 = da.iter().zip(&db).map(|(x, y)| (x - y) * (x - y)).sum();
            prop_assert!((a.squared_distance(&b) - expect).abs() <= 1e-12 * (1.0 + expect));
        }
    }
}

//! kNN classification under a learned or fixed similarity, error rates and
//! the error-versus-dimension curve.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::data::{sparse_dot, Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::model::SimilarityModel;
use crate::optim::Snapshot;

/// A pairwise similarity usable for neighbor search.
pub trait Scorer: Sync {
    fn score(&self, a: &SparseVector, b: &SparseVector) -> f64;
}

/// The plain dot product, `M = I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityScorer;

impl Scorer for IdentityScorer {
    fn score(&self, a: &SparseVector, b: &SparseVector) -> f64 {
        sparse_dot(a, b)
    }
}

impl Scorer for SimilarityModel {
    fn score(&self, a: &SparseVector, b: &SparseVector) -> f64 {
        SimilarityModel::score(self, a, b)
    }
}

/// Majority vote among the `k` most similar training instances.
///
/// Neighbors are ranked by similarity, ties going to the smaller training
/// index. Vote ties go to the larger summed similarity, then to the smaller
/// class id.
pub fn knn_classify<S: Scorer + ?Sized>(train: &Dataset, queries: &Dataset, scorer: &S, k: usize) -> Result<Vec<i64>> {
    check_knn_args(train, k)?;
    Ok(classify_with(train, queries.len(), k, |q, n| {
        scorer.score(queries.instance(q), train.instance(n))
    }))
}

/// Same as [`knn_classify`] with the model's similarity, computed as dot
/// products of the embeddings `embed(x)`.
pub fn knn_classify_embedded(model: &SimilarityModel, train: &Dataset, queries: &Dataset, k: usize) -> Result<Vec<i64>> {
    check_knn_args(train, k)?;
    let train_emb: Vec<Vec<f64>> = train.instances().par_iter().map(|x| model.embed(x)).collect();
    let query_emb: Vec<Vec<f64>> = queries.instances().par_iter().map(|x| model.embed(x)).collect();
    Ok(classify_with(train, queries.len(), k, |q, n| {
        query_emb[q].iter().zip(&train_emb[n]).map(|(a, b)| a * b).sum()
    }))
}

fn check_knn_args(train: &Dataset, k: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidDataset("kNN needs a nonempty training set".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn classify_with<F>(train: &Dataset, n_queries: usize, k: usize, similarity: F) -> Vec<i64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..n_queries)
        .into_par_iter()
        .map(|q| {
            let sims: Vec<(f64, usize)> = (0..train.len()).map(|n| (similarity(q, n), n)).collect();
            vote(top_k(sims, k), train.labels())
        })
        .collect()
}

fn top_k(mut sims: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if sims.len() > k {
        sims.select_nth_unstable_by(k - 1, order);
        sims.truncate(k);
    }
    sims.sort_by(order);
    sims
}

fn vote(neighbors: Vec<(f64, usize)>, labels: &[i64]) -> i64 {
    let mut tally: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for (sim, n) in neighbors {
        let e = tally.entry(labels[n]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += sim;
    }
    let mut best: Option<(i64, usize, f64)> = None;
    for (label, (count, sum)) in tally {
        let wins = match best {
            None => true,
            Some((_, bc, bs)) => count > bc || (count == bc && sum > bs),
        };
        if wins {
            best = Some((label, count, sum));
        }
    }
    best.map(|(l, _, _)| l).expect("at least one neighbor")
}

/// Percentage of mismatched predictions.
pub fn error_rate(predictions: &[i64], truth: &[i64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::InvalidDataset(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(100.0 * wrong as f64 / truth.len() as f64)
}

/// kNN error (%) of `queries` under `model`, using embeddings.
pub fn knn_error(model: &SimilarityModel, train: &Dataset, queries: &Dataset, k: usize) -> Result<f64> {
    let pred = knn_classify_embedded(model, train, queries, k)?;
    error_rate(&pred, queries.labels())
}

/// kNN error (%) of `queries` under an arbitrary scorer.
pub fn knn_error_with<S: Scorer + ?Sized>(scorer: &S, train: &Dataset, queries: &Dataset, k: usize) -> Result<f64> {
    let pred = knn_classify(train, queries, scorer, k)?;
    error_rate(&pred, queries.labels())
}

/// One point of the error-versus-dimension curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    /// Embedding dimension, i.e. the number of atoms.
    pub dimension: usize,
    pub validation_error: f64,
    pub test_error: f64,
}

/// Evaluates every snapshot as a projection of dimension `n_atoms`.
pub fn emit_dimension_curve(
    snapshots: &[Snapshot],
    train: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    k: usize,
) -> Result<Vec<CurveRow>> {
    snapshots
        .iter()
        .map(|s| {
            Ok(CurveRow {
                iteration: s.iteration,
                dimension: s.model.n_atoms(),
                validation_error: knn_error(&s.model, train, validation, k)?,
                test_error: knn_error(&s.model, train, test, k)?,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> Result<()> {
    writeln!(out, "iteration,dimension,validation_error,test_error")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.dimension, r.validation_error, r.test_error)?;
    }
    Ok(())
}

/// `query_id,predicted,true` rows.
pub fn write_predictions_csv<W: Write>(predictions: &[i64], truth: &[i64], mut out: W) -> Result<()> {
    writeln!(out, "query_id,predicted,true")?;
    for (q, (p, t)) in predictions.iter().zip(truth).enumerate() {
        writeln!(out, "{q},{p},{t}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::BasisElement;

    fn ds(rows: &[(&[(usize, f64)], i64)]) -> Dataset {
        let (xs, ls): (Vec<_>, Vec<_>) = rows
            .iter()
            .map(|(p, l)| (SparseVector::from_pairs(p.to_vec()).unwrap(), *l))
            .unzip();
        Dataset::new(xs, ls, 10, Split::Train).unwrap()
    }

    #[test]
    fn one_nn_returns_matching_point() {
        let train = ds(&[(&[(0, 1.0)], 4), (&[(1, 1.0)], 7), (&[(2, 1.0)], 9)]);
        let q = ds(&[(&[(1, 1.0)], 0)]);
        assert_eq!(knn_classify(&train, &q, &IdentityScorer, 1).unwrap(), vec![7]);
    }

    #[test]
    fn majority_vote() {
        let train = ds(&[(&[(0, 3.0)], 1), (&[(0, 2.0)], 1), (&[(0, 2.5)], 2), (&[(5, 1.0)], 2)]);
        let q = ds(&[(&[(0, 1.0)], 0)]);
        assert_eq!(knn_classify(&train, &q, &IdentityScorer, 3).unwrap(), vec![1]);
    }

    #[test]
    fn vote_ties_use_summed_similarity_then_class() {
        let train = ds(&[(&[(0, 3.0)], 2), (&[(0, 1.0)], 1)]);
        let q = ds(&[(&[(0, 1.0)], 0)]);
        assert_eq!(knn_classify(&train, &q, &IdentityScorer, 2).unwrap(), vec![2]);
        let train = ds(&[(&[(0, 1.0)], 5), (&[(0, 1.0)], 3)]);
        assert_eq!(knn_classify(&train, &q, &IdentityScorer, 2).unwrap(), vec![3]);
    }

    #[test]
    fn similarity_ties_use_smaller_index() {
        let train = ds(&[(&[(0, 1.0)], 8), (&[(0, 1.0)], 6)]);
        let q = ds(&[(&[(0, 1.0)], 0)]);
        assert_eq!(knn_classify(&train, &q, &IdentityScorer, 1).unwrap(), vec![8]);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let empty = Dataset::new(vec![], vec![], 3, Split::Train).unwrap();
        let q = ds(&[(&[(0, 1.0)], 0)]);
        assert!(knn_classify(&empty, &q, &IdentityScorer, 3).is_err());
    }

    #[test]
    fn planted_clusters_are_separable_under_identity() {
        let mut rows: Vec<(Vec<(usize, f64)>, i64)> = Vec::new();
        for n in 0..20 {
            let v = 0.5 + 0.02 * n as f64;
            rows.push((vec![(0, v), (1, 1.0 - v / 2.0)], 0));
            rows.push((vec![(5, v), (6, 1.0 - v / 2.0)], 1));
        }
        let (xs, ls): (Vec<_>, Vec<_>) = rows
            .into_iter()
            .map(|(p, l)| (SparseVector::from_pairs(p).unwrap(), l))
            .unzip();
        let all = Dataset::new(xs, ls, 10, Split::Train).unwrap();
        let err = knn_error_with(&IdentityScorer, &all, &all, 3).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn error_rate_values() {
        assert_eq!(error_rate(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(error_rate(&[1, 2], &[2, 1]).unwrap(), 100.0);
        assert_eq!(error_rate(&[1, 2, 3, 4], &[1, 0, 3, 0]).unwrap(), 50.0);
        assert!(error_rate(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn curve_row_per_snapshot() {
        let model = SimilarityModel::single(1.0, BasisElement::positive(0, 1).unwrap()).unwrap();
        let train = ds(&[(&[(0, 1.0)], 1), (&[(2, 1.0)], 2)]);
        let rows = emit_dimension_curve(
            &[Snapshot { iteration: 0, model, validation_error: None }],
            &train,
            &train,
            &train,
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].dimension, 1);
    }

    #[test]
    fn predictions_csv_format() {
        let mut buf = Vec::new();
        write_predictions_csv(&[1, -1], &[1, 1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "query_id,predicted,true\n0,1,1\n1,-1,1\n");
    }
}

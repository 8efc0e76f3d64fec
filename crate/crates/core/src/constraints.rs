//! Triplet constraints "x is more similar to y than to z".
//!
//! Each constraint stands for the matrix `A = x (y - z)ᵀ`; the optimizer only
//! ever needs the scalars `⟨A, B⟩` for single bases and `⟨A, M⟩` for models,
//! both of which reduce to lookups in `x` and the stored difference `d = y - z`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{sparse_dot, Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::model::{BasisElement, SimilarityModel};

/// Indices of `(x, y, z)` into the point table of a [`ConstraintSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Triplet {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Triplet { x, y, z }
    }
}

/// Triplets plus the precomputed difference vectors `y - z`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    triplets: Vec<Triplet>,
    points: Vec<SparseVector>,
    diffs: Vec<SparseVector>,
    dimension: usize,
}

impl ConstraintSet {
    /// Constraints over the instances of `train`. Label invariants are
    /// checked; triplets whose difference vector is zero are dropped.
    pub fn from_triplets(train: &Dataset, triplets: Vec<Triplet>) -> Result<Self> {
        let n = train.len();
        for t in &triplets {
            if t.x >= n || t.y >= n || t.z >= n {
                return Err(Error::InvalidDataset(format!(
                    "triplet ({}, {}, {}) out of range for {n} instances",
                    t.x, t.y, t.z
                )));
            }
            if t.y == t.z {
                return Err(Error::InvalidDataset(format!("triplet ({}, {}, {}) has y == z", t.x, t.y, t.z)));
            }
            let (lx, ly, lz) = (train.label(t.x), train.label(t.y), train.label(t.z));
            if lx != ly || lx == lz {
                return Err(Error::InvalidDataset(format!(
                    "triplet ({}, {}, {}) has labels ({lx}, {ly}, {lz})",
                    t.x, t.y, t.z
                )));
            }
        }
        Ok(Self::assemble(train.instances().to_vec(), triplets, train.dimension()))
    }

    /// Constraints from explicit `(x, y, z)` vectors, with no label information.
    pub fn from_vectors(dimension: usize, triples: Vec<(SparseVector, SparseVector, SparseVector)>) -> Self {
        let mut points = Vec::with_capacity(3 * triples.len());
        let mut triplets = Vec::with_capacity(triples.len());
        for (x, y, z) in triples {
            let base = points.len();
            points.extend([x, y, z]);
            triplets.push(Triplet::new(base, base + 1, base + 2));
        }
        Self::assemble(points, triplets, dimension)
    }

    fn assemble(points: Vec<SparseVector>, triplets: Vec<Triplet>, dimension: usize) -> Self {
        let mut kept = Vec::with_capacity(triplets.len());
        let mut diffs = Vec::with_capacity(triplets.len());
        for t in triplets {
            let d = points[t.y].sub(&points[t.z]);
            if d.is_empty() {
                continue;
            }
            kept.push(t);
            diffs.push(d);
        }
        ConstraintSet {
            triplets: kept,
            points,
            diffs,
            dimension,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn triplet(&self, t: usize) -> Triplet {
        self.triplets[t]
    }

    pub fn x(&self, t: usize) -> &SparseVector {
        &self.points[self.triplets[t].x]
    }

    pub fn y(&self, t: usize) -> &SparseVector {
        &self.points[self.triplets[t].y]
    }

    pub fn z(&self, t: usize) -> &SparseVector {
        &self.points[self.triplets[t].z]
    }

    /// `y_t - z_t`.
    pub fn diff(&self, t: usize) -> &SparseVector {
        &self.diffs[t]
    }

    /// `⟨A_t, B⟩ = λ (x_i ± x_j)(d_i ± d_j)`.
    #[inline]
    pub fn basis_inner(&self, t: usize, basis: &BasisElement, lambda: f64) -> f64 {
        lambda * basis.project(self.x(t)) * basis.project(&self.diffs[t])
    }

    /// `⟨A_t, M⟩` rebuilt from the model's atoms.
    pub fn model_inner(&self, t: usize, model: &SimilarityModel) -> f64 {
        let (x, d) = (self.x(t), &self.diffs[t]);
        if x.is_empty() {
            return 0.0;
        }
        let lambda = model.lambda();
        model
            .atoms()
            .map(|(b, w)| w * lambda * b.project(x) * b.project(d))
            .sum()
    }

    /// Margin under the plain dot product: `x·(y - z)`.
    pub fn identity_margin(&self, t: usize) -> f64 {
        sparse_dot(self.x(t), &self.diffs[t])
    }

    /// `‖A_t‖²_F = ‖x‖² ‖y - z‖²`.
    pub fn squared_frobenius(&self, t: usize) -> f64 {
        self.x(t).squared_norm() * self.diffs[t].squared_norm()
    }

    /// Lipschitz constant of the objective's gradient, `(1/T) Σ ‖A_t‖²_F`.
    pub fn lipschitz(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len()).map(|t| self.squared_frobenius(t)).sum::<f64>() / self.len() as f64
    }

    /// Writes one `x y z` line per constraint.
    pub fn save_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.triplets {
            writeln!(out, "{} {} {}", t.x, t.y, t.z)?;
        }
        Ok(())
    }
}

/// Reads `x y z` lines written by [`ConstraintSet::save_triplets`].
pub fn load_triplets<R: BufRead>(source: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ids: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("expected three instance ids, got {line:?}"),
            })?;
        if ids.len() != 3 {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected three instance ids, got {line:?}"),
            });
        }
        out.push(Triplet::new(ids[0], ids[1], ids[2]));
    }
    Ok(out)
}

/// Target-neighbor / impostor triplets.
///
/// For every instance, its `n_targets` nearest same-label neighbors and
/// `n_impostors` nearest other-label neighbors under Euclidean distance are
/// found by brute force (ties go to the smaller index), and every
/// (target, impostor) pair becomes one constraint. Instances without enough
/// neighbors of either kind are skipped with a warning.
pub fn build_triplets_knn(train: &Dataset, n_targets: usize, n_impostors: usize) -> Result<ConstraintSet> {
    if n_targets == 0 || n_impostors == 0 {
        return Err(Error::Config("target and impostor counts must be at least 1".into()));
    }
    let norms: Vec<f64> = train.instances().iter().map(SparseVector::squared_norm).collect();
    let per_instance: Vec<Option<Vec<Triplet>>> = (0..train.len())
        .into_par_iter()
        .map(|a| {
            let xa = train.instance(a);
            let label = train.label(a);
            let mut same = Vec::new();
            let mut other = Vec::new();
            for b in 0..train.len() {
                if b == a {
                    continue;
                }
                let dist = (norms[a] + norms[b] - 2.0 * sparse_dot(xa, train.instance(b))).max(0.0);
                if train.label(b) == label {
                    same.push((dist, b));
                } else {
                    other.push((dist, b));
                }
            }
            if same.len() < n_targets || other.len() < n_impostors {
                return None;
            }
            let targets = nearest(same, n_targets);
            let impostors = nearest(other, n_impostors);
            Some(
                targets
                    .iter()
                    .flat_map(|&y| impostors.iter().map(move |&z| Triplet::new(a, y, z)))
                    .collect(),
            )
        })
        .collect();

    let skipped = per_instance.iter().filter(|p| p.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} instance(s) skipped: not enough same-label or other-label neighbors");
    }
    let triplets = per_instance.into_iter().flatten().flatten().collect();
    let set = ConstraintSet::from_triplets(train, triplets)?;
    Ok(set)
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn nearest(mut candidates: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, by_distance_then_index);
        candidates.truncate(k);
    }
    candidates.sort_by(by_distance_then_index);
    candidates.into_iter().map(|(_, b)| b).collect()
}

/// Random triplets: for each instance, `per_instance` draws of `y` uniformly
/// from its own class (excluding itself) and `z` uniformly from the other
/// classes. Deterministic for a given seed.
pub fn build_triplets_random(train: &Dataset, per_instance: usize, seed: u64) -> Result<ConstraintSet> {
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (n, &l) in train.labels().iter().enumerate() {
        by_class.entry(l).or_default().push(n);
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidDataset("random triplets need at least two classes".into()));
    }
    let others: BTreeMap<i64, Vec<usize>> = by_class
        .keys()
        .map(|&c| {
            let rest = (0..train.len()).filter(|&n| train.label(n) != c).collect();
            (c, rest)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(per_instance * train.len());
    let mut skipped = 0usize;
    for x in 0..train.len() {
        let label = train.label(x);
        let same = &by_class[&label];
        if same.len() < 2 {
            skipped += 1;
            continue;
        }
        let other = &others[&label];
        let pos = same.binary_search(&x).expect("instance listed in its own class");
        for _ in 0..per_instance {
            let mut r = rng.random_range(0..same.len() - 1);
            if r >= pos {
                r += 1;
            }
            let z = other[rng.random_range(0..other.len())];
            triplets.push(Triplet::new(x, same[r], z));
        }
    }
    if skipped > 0 {
        warn!("{skipped} instance(s) skipped: singleton class");
    }
    ConstraintSet::from_triplets(train, triplets)
}

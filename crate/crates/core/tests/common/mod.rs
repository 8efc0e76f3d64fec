#![allow(dead_code)]

use hdsl_core::data::SparseVector;
use hdsl_core::optim::loss::smoothed_hinge;
use hdsl_core::{BasisElement, ConstraintSet, Dataset, SimilarityModel, Split};
use rand::Rng;

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize, density: f64) -> SparseVector {
    let dense: Vec<f64> = (0..dim)
        .map(|_| if rng.random_bool(density) { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    SparseVector::from_dense(&dense)
}

/// Random triplets on nonnegative sparse vectors, every one with a nonzero difference.
pub fn random_problem<R: Rng>(rng: &mut R, dim: usize, n: usize, density: f64) -> ConstraintSet {
    let mut triples = Vec::with_capacity(n);
    while triples.len() < n {
        let (x, y, z) = (
            random_vector(rng, dim, density),
            random_vector(rng, dim, density),
            random_vector(rng, dim, density),
        );
        if x.nnz() > 0 && y != z {
            triples.push((x, y, z));
        }
    }
    ConstraintSet::from_vectors(dim, triples)
}

pub fn all_bases(dim: usize) -> Vec<BasisElement> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            out.push(BasisElement::positive(i, j).unwrap());
            out.push(BasisElement::negative(i, j).unwrap());
        }
    }
    out
}

/// Dense `λ(e_i ± e_j)(e_i ± e_j)ᵀ`.
pub fn dense_basis(b: &BasisElement, dim: usize, lambda: f64) -> Vec<Vec<f64>> {
    let mut u = vec![0.0; dim];
    u[b.i()] = 1.0;
    u[b.j()] = b.sign().factor();
    (0..dim).map(|r| (0..dim).map(|c| lambda * u[r] * u[c]).collect()).collect()
}

pub fn dense_model(model: &SimilarityModel, dim: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; dim]; dim];
    for (b, w) in model.atoms() {
        let d = dense_basis(&b, dim, model.lambda());
        for r in 0..dim {
            for c in 0..dim {
                m[r][c] += w * d[r][c];
            }
        }
    }
    m
}

pub fn bilinear(a: &[f64], m: &[Vec<f64>], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (r, row) in m.iter().enumerate() {
        if a[r] == 0.0 {
            continue;
        }
        for (c, v) in row.iter().enumerate() {
            s += a[r] * v * b[c];
        }
    }
    s
}

/// Dense `xᵀ M (y - z)` for every constraint.
pub fn dense_margins(set: &ConstraintSet, m: &[Vec<f64>]) -> Vec<f64> {
    let dim = set.dimension();
    (0..set.len())
        .map(|t| {
            let x = set.x(t).to_dense(dim);
            let y = set.y(t).to_dense(dim);
            let z = set.z(t).to_dense(dim);
            let d: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
            bilinear(&x, m, &d)
        })
        .collect()
}

pub fn dense_objective(set: &ConstraintSet, m: &[Vec<f64>]) -> f64 {
    let margins = dense_margins(set, m);
    margins.iter().map(|&s| smoothed_hinge(s)).sum::<f64>() / margins.len() as f64
}

/// Dense gradient `(1/T) Σ ℓ'(m_t) x_t d_tᵀ`.
pub fn dense_gradient(set: &ConstraintSet, m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = set.dimension();
    let margins = dense_margins(set, m);
    let mut g = vec![vec![0.0; dim]; dim];
    for (t, &mt) in margins.iter().enumerate() {
        let c = hdsl_core::optim::loss::smoothed_hinge_deriv(mt) / set.len() as f64;
        if c == 0.0 {
            continue;
        }
        let x = set.x(t).to_dense(dim);
        let d = set.diff(t).to_dense(dim);
        for r in 0..dim {
            for s in 0..dim {
                g[r][s] += c * x[r] * d[s];
            }
        }
    }
    g
}

pub fn frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>()).sum()
}

/// Random model with `n_atoms` distinct atoms and weights summing to one.
pub fn random_model<R: Rng>(rng: &mut R, dim: usize, n_atoms: usize, lambda: f64) -> SimilarityModel {
    let mut atoms = std::collections::BTreeMap::new();
    while atoms.len() < n_atoms {
        let i = rng.random_range(0..dim);
        let j = rng.random_range(0..dim);
        if i == j {
            continue;
        }
        let b = if rng.random_bool(0.5) {
            BasisElement::positive(i, j).unwrap()
        } else {
            BasisElement::negative(i, j).unwrap()
        };
        atoms.insert(b, rng.random_range(0.1..1.0));
    }
    let total: f64 = atoms.values().sum();
    SimilarityModel::from_atoms(lambda, atoms.into_iter().map(|(b, w)| (b, w / total))).unwrap()
}

/// Two-class planted data: each class owns five informative features, every
/// instance carries three of them plus heavy shared noise.
pub fn planted_dataset<R: Rng>(rng: &mut R, n: usize, split: Split) -> Dataset {
    const DIM: usize = 1000;
    const POOL: usize = 30;
    let mut instances = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let class = (k % 2) as i64;
        let mut pairs = Vec::new();
        let base = 5 * class as usize;
        let picks = rand::seq::index::sample(rng, 5, 3);
        for p in picks.iter() {
            pairs.push((base + p, rng.random_range(0.15..0.5)));
        }
        for p in rand::seq::index::sample(rng, POOL, 15).iter() {
            pairs.push((10 + p, rng.random_range(0.5..1.0)));
        }
        for p in rand::seq::index::sample(rng, DIM - 10 - POOL, 10).iter() {
            pairs.push((10 + POOL + p, rng.random_range(0.0..1.0)));
        }
        instances.push(SparseVector::from_pairs(pairs).unwrap());
        labels.push(class);
    }
    Dataset::new(instances, labels, DIM, split).unwrap()
}

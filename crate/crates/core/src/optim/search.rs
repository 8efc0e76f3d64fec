//! Linear minimization over the basis dictionary (forward direction) and
//! maximization over the active set (away direction).
//!
//! The utility of a basis is `⟨B, ∇f⟩`. With `G = (1/|batch|) Σ c_t x_t d_tᵀ`
//! it equals `λ (G_ii + G_jj ± (G_ij + G_ji))`, so only the diagonal of `G` and
//! the symmetrized off-diagonal sums `S_ij = G_ij + G_ji` are needed.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::constraints::ConstraintSet;
use crate::model::{BasisElement, Sign, SimilarityModel};

/// Constraints per parallel accumulation chunk. Fixed so the merge order,
/// and therefore the floating-point result, does not depend on thread count.
const CHUNK: usize = 256;

/// The constraints a search step looks at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Option<Vec<usize>>,
    total: usize,
}

impl Batch {
    /// Every constraint.
    pub fn full(total: usize) -> Self {
        Batch { indices: None, total }
    }

    /// `size` constraints drawn uniformly without replacement, kept in
    /// increasing order. A full-size draw is the full batch.
    pub fn sample<R: Rng + ?Sized>(total: usize, size: usize, rng: &mut R) -> Self {
        let size = size.clamp(1, total.max(1));
        if size >= total {
            return Batch::full(total);
        }
        let mut idx = sample(rng, total, size).into_vec();
        idx.sort_unstable();
        Batch {
            indices: Some(idx),
            total,
        }
    }

    pub fn from_indices(total: usize, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Batch {
            indices: Some(indices),
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.as_ref().map_or(self.total, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.indices.is_none()
    }

    pub fn get(&self, pos: usize) -> usize {
        match &self.indices {
            Some(idx) => idx[pos],
            None => pos,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).map(move |p| self.get(p))
    }
}

/// A basis together with its (batch-estimated) utility `⟨B, ∇f⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub basis: BasisElement,
    pub utility: f64,
}

/// Lower utility first; ties go to the positive sign, then to the smaller `(i, j)`.
fn better(a: &Candidate, b: &Candidate) -> bool {
    let ord = a
        .utility
        .total_cmp(&b.utility)
        .then(a.basis.sign().cmp(&b.basis.sign()))
        .then((a.basis.i(), a.basis.j()).cmp(&(b.basis.i(), b.basis.j())));
    ord == Ordering::Less
}

fn keep_best(best: &mut Option<Candidate>, cand: Candidate) {
    if best.as_ref().is_none_or(|b| better(&cand, b)) {
        *best = Some(cand);
    }
}

/// `(1/|batch|) Σ c_t ⟨A_t, B⟩` over the active constraints of the batch.
pub fn basis_utility(
    basis: &BasisElement,
    coeffs: &[f64],
    constraints: &ConstraintSet,
    lambda: f64,
    batch: &Batch,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let sum: f64 = batch
        .iter()
        .filter(|&t| coeffs[t] != 0.0)
        .map(|t| coeffs[t] * constraints.basis_inner(t, basis, lambda))
        .sum();
    sum / batch.len() as f64
}

/// Sparse accumulation of `Σ c_t x_t d_tᵀ` restricted to the batch.
#[derive(Debug, Default, Clone)]
pub struct GradientSurrogate {
    diag: FxHashMap<usize, f64>,
    /// Keyed by `(i, j)` with `i < j`; holds `G_ij + G_ji` before scaling.
    off: FxHashMap<(usize, usize), f64>,
}

impl GradientSurrogate {
    pub fn accumulate(coeffs: &[f64], constraints: &ConstraintSet, batch: &Batch) -> Self {
        let positions: Vec<usize> = (0..batch.len()).collect();
        let partials: Vec<GradientSurrogate> = positions
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut part = GradientSurrogate::default();
                for &p in chunk {
                    let t = batch.get(p);
                    let c = coeffs[t];
                    if c != 0.0 {
                        part.add_constraint(c, constraints, t);
                    }
                }
                part
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_default();
        for part in iter {
            for (k, v) in part.diag {
                *total.diag.entry(k).or_insert(0.0) += v;
            }
            for (k, v) in part.off {
                *total.off.entry(k).or_insert(0.0) += v;
            }
        }
        total
    }

    fn add_constraint(&mut self, c: f64, constraints: &ConstraintSet, t: usize) {
        let d = constraints.diff(t);
        for (a, xa) in constraints.x(t).iter() {
            let cx = c * xa;
            for (b, db) in d.iter() {
                let v = cx * db;
                match a.cmp(&b) {
                    Ordering::Equal => *self.diag.entry(a).or_insert(0.0) += v,
                    Ordering::Less => *self.off.entry((a, b)).or_insert(0.0) += v,
                    Ordering::Greater => *self.off.entry((b, a)).or_insert(0.0) += v,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.diag.values().all(|&v| v == 0.0) && self.off.values().all(|&v| v == 0.0)
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag.get(&i).copied().unwrap_or(0.0)
    }

    pub fn off(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.off.get(&key).copied().unwrap_or(0.0)
    }

    /// Best basis over the whole dictionary of a `dimension`-feature space.
    ///
    /// A pair with `S_ij ≠ 0` is scored with the sign that makes `±S_ij`
    /// negative. Any other pair scores `G_ii + G_jj`, which is minimized by
    /// the two smallest diagonal entries (implicit zeros included), so those
    /// two plus the nonzero off-diagonal pairs cover every possible minimizer.
    pub fn best_basis(&self, dimension: usize, lambda: f64, scale: f64) -> Option<Candidate> {
        if self.is_zero() || dimension < 2 {
            return None;
        }
        let factor = lambda * scale;
        let mut best = None;
        for (&(i, j), &s) in &self.off {
            if s != 0.0 {
                keep_best(&mut best, self.pair_candidate(i, j, factor));
            }
        }
        let low = smallest_diagonals(&self.diag, dimension, 2, None);
        if let [a, b] = low[..] {
            keep_best(&mut best, self.pair_candidate(a, b, factor));
        }
        best
    }

    fn pair_candidate(&self, i: usize, j: usize, factor: f64) -> Candidate {
        pair_candidate(self.diag(i) + self.diag(j), self.off(i, j), i, j, factor)
    }
}

fn pair_candidate(diag_sum: f64, s: f64, i: usize, j: usize, factor: f64) -> Candidate {
    let sign = if s > 0.0 { Sign::Negative } else { Sign::Positive };
    let value = diag_sum + sign.factor() * s;
    Candidate {
        basis: BasisElement::canonical(i, j, sign),
        utility: factor * value,
    }
}

/// The `count` features with the smallest diagonal value, ordered by
/// `(value, index)`, treating features absent from `diag` as zero.
fn smallest_diagonals(
    diag: &FxHashMap<usize, f64>,
    dimension: usize,
    count: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut negatives: Vec<(f64, usize)> = diag
        .iter()
        .filter(|&(&i, &v)| v < 0.0 && Some(i) != exclude)
        .map(|(&i, &v)| (v, i))
        .collect();
    negatives.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = negatives.into_iter().take(count).map(|(_, i)| i).collect();
    // zeros next, lowest index first
    let mut f = 0;
    while out.len() < count && f < dimension {
        if Some(f) != exclude && diag.get(&f).is_none_or(|&v| v == 0.0) {
            out.push(f);
        }
        f += 1;
    }
    if out.len() < count {
        let mut positives: Vec<(f64, usize)> = diag
            .iter()
            .filter(|&(&i, &v)| v > 0.0 && Some(i) != exclude)
            .map(|(&i, &v)| (v, i))
            .collect();
        positives.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(positives.into_iter().take(count - out.len()).map(|(_, i)| i));
    }
    out
}

/// Exact forward search over all `2·C(d, 2)` bases using every constraint.
/// `None` means the gradient is zero.
pub fn find_forward_exact(coeffs: &[f64], constraints: &ConstraintSet, lambda: f64) -> Option<Candidate> {
    find_forward_on(coeffs, constraints, lambda, &Batch::full(constraints.len()))
}

/// Forward search with the gradient estimated on a uniform mini-batch of
/// `batch_size` constraints drawn without replacement.
pub fn find_forward_minibatch<R: Rng + ?Sized>(
    coeffs: &[f64],
    constraints: &ConstraintSet,
    lambda: f64,
    batch_size: usize,
    rng: &mut R,
) -> Option<Candidate> {
    let batch = Batch::sample(constraints.len(), batch_size, rng);
    find_forward_on(coeffs, constraints, lambda, &batch)
}

/// Exact forward search on an explicit batch.
pub fn find_forward_on(
    coeffs: &[f64],
    constraints: &ConstraintSet,
    lambda: f64,
    batch: &Batch,
) -> Option<Candidate> {
    if batch.is_empty() {
        return None;
    }
    let surrogate = GradientSurrogate::accumulate(coeffs, constraints, batch);
    surrogate.best_basis(constraints.dimension(), lambda, 1.0 / batch.len() as f64)
}

/// Intermediate results of the two-stage heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicTrace {
    /// Feature drawn at random.
    pub first_feature: usize,
    /// Best basis containing `first_feature`.
    pub stage_one: Candidate,
    /// Best basis containing the partner found in stage one.
    pub result: Candidate,
}

/// Per-batch diagonal of `G` and rows of `S`, computed in O(|batch|·D).
struct BatchGradient<'a> {
    coeffs: &'a [f64],
    constraints: &'a ConstraintSet,
    active: Vec<usize>,
    diag: FxHashMap<usize, f64>,
}

impl<'a> BatchGradient<'a> {
    fn new(coeffs: &'a [f64], constraints: &'a ConstraintSet, batch: &Batch) -> Self {
        let active: Vec<usize> = batch
            .iter()
            .filter(|&t| coeffs[t] != 0.0 && !constraints.x(t).is_empty())
            .collect();
        let mut diag = FxHashMap::default();
        for &t in &active {
            let (x, d) = (constraints.x(t), constraints.diff(t));
            let (short, long) = if x.nnz() <= d.nnz() { (x, d) } else { (d, x) };
            for (f, v) in short.iter() {
                let w = long.get(f);
                if w != 0.0 {
                    *diag.entry(f).or_insert(0.0) += coeffs[t] * v * w;
                }
            }
        }
        BatchGradient {
            coeffs,
            constraints,
            active,
            diag,
        }
    }

    fn support_union(&self) -> Vec<usize> {
        let mut feats: Vec<usize> = self
            .active
            .iter()
            .flat_map(|&t| {
                self.constraints
                    .x(t)
                    .indices()
                    .iter()
                    .chain(self.constraints.diff(t).indices())
                    .copied()
            })
            .collect();
        feats.sort_unstable();
        feats.dedup();
        feats
    }

    /// `S_ij` for every `j ≠ i`, unscaled. Each constraint contributes
    /// `c (x_i d_j + x_j d_i)` as one term, so `row(i)[j]` and `row(j)[i]`
    /// are bitwise equal.
    fn row(&self, i: usize) -> FxHashMap<usize, f64> {
        let mut row = FxHashMap::default();
        for &t in &self.active {
            let (x, d) = (self.constraints.x(t), self.constraints.diff(t));
            let (xi, di) = (x.get(i), d.get(i));
            if xi == 0.0 && di == 0.0 {
                continue;
            }
            let c = self.coeffs[t];
            merge_supports(x, d, |f, xf, df| {
                if f != i {
                    let v = xi * df + xf * di;
                    if v != 0.0 {
                        *row.entry(f).or_insert(0.0) += c * v;
                    }
                }
            });
        }
        row
    }

    fn diag_at(&self, i: usize) -> f64 {
        self.diag.get(&i).copied().unwrap_or(0.0)
    }

    /// Best basis among `{P(i, j), N(i, j) : j ≠ i}`.
    fn best_partner(&self, i: usize, dimension: usize, factor: f64) -> Option<Candidate> {
        let row = self.row(i);
        let gi = self.diag_at(i);
        let mut best = None;
        for (&j, &s) in &row {
            keep_best(&mut best, pair_candidate(gi + self.diag_at(j), s, i, j, factor));
        }
        for (&j, _) in self.diag.iter().filter(|(&j, _)| j != i && !row.contains_key(&j)) {
            keep_best(&mut best, pair_candidate(gi + self.diag_at(j), 0.0, i, j, factor));
        }
        // lowest-index feature with zero diagonal and zero interaction
        let untouched = (0..dimension).find(|&j| j != i && !row.contains_key(&j) && self.diag_at(j) == 0.0);
        if let Some(j) = untouched {
            keep_best(&mut best, pair_candidate(gi, 0.0, i, j, factor));
        }
        best
    }
}

fn merge_supports(
    x: &crate::data::SparseVector,
    d: &crate::data::SparseVector,
    mut visit: impl FnMut(usize, f64, f64),
) {
    let (xi, xv, di, dv) = (x.indices(), x.values(), d.indices(), d.values());
    let (mut p, mut q) = (0, 0);
    while p < xi.len() || q < di.len() {
        match (xi.get(p), di.get(q)) {
            (Some(&a), Some(&b)) if a == b => {
                visit(a, xv[p], dv[q]);
                p += 1;
                q += 1;
            }
            (Some(&a), Some(&b)) if a < b => {
                visit(a, xv[p], 0.0);
                p += 1;
            }
            (Some(&a), None) => {
                visit(a, xv[p], 0.0);
                p += 1;
            }
            (_, Some(&b)) => {
                visit(b, 0.0, dv[q]);
                q += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

/// Two-stage heuristic: draw a feature `i` from the supports of the active
/// batch constraints, find its best partner `j`, then re-optimize the other
/// end with `j` fixed. `None` when the batch gradient is zero.
pub fn heuristic_search<R: Rng + ?Sized>(
    coeffs: &[f64],
    constraints: &ConstraintSet,
    lambda: f64,
    batch: &Batch,
    rng: &mut R,
) -> Option<HeuristicTrace> {
    if batch.is_empty() || constraints.dimension() < 2 {
        return None;
    }
    let grad = BatchGradient::new(coeffs, constraints, batch);
    let support = grad.support_union();
    if support.is_empty() {
        return None;
    }
    let factor = lambda / batch.len() as f64;
    let first = support[rng.random_range(0..support.len())];
    let stage_one = grad.best_partner(first, constraints.dimension(), factor)?;
    let partner = if stage_one.basis.i() == first {
        stage_one.basis.j()
    } else {
        stage_one.basis.i()
    };
    let mut result = grad.best_partner(partner, constraints.dimension(), factor)?;
    if better(&stage_one, &result) {
        result = stage_one;
    }
    Some(HeuristicTrace {
        first_feature: first,
        stage_one,
        result,
    })
}

/// Fast approximate forward search; see [`heuristic_search`].
pub fn find_forward_heuristic<R: Rng + ?Sized>(
    coeffs: &[f64],
    constraints: &ConstraintSet,
    lambda: f64,
    batch: &Batch,
    rng: &mut R,
) -> Option<Candidate> {
    heuristic_search(coeffs, constraints, lambda, batch, rng).map(|h| h.result)
}

/// Result of the away scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AwayScan {
    /// Active atom with the largest utility.
    pub candidate: Candidate,
    /// Its current weight.
    pub weight: f64,
    /// `⟨M, ∇f⟩ = Σ α_B ⟨B, ∇f⟩` on the same batch.
    pub model_utility: f64,
}

/// Scans the active atoms for the largest utility, O(|batch|·k).
pub fn find_away(
    model: &SimilarityModel,
    coeffs: &[f64],
    constraints: &ConstraintSet,
    batch: &Batch,
) -> Option<AwayScan> {
    let lambda = model.lambda();
    let mut best: Option<(Candidate, f64)> = None;
    let mut model_utility = 0.0;
    for (basis, weight) in model.atoms() {
        let utility = basis_utility(&basis, coeffs, constraints, lambda, batch);
        model_utility += weight * utility;
        if best.as_ref().is_none_or(|(b, _)| utility > b.utility) {
            best = Some((Candidate { basis, utility }, weight));
        }
    }
    best.map(|(candidate, weight)| AwayScan {
        candidate,
        weight,
        model_utility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.to_vec()).unwrap()
    }

    fn random_vector(rng: &mut ChaCha8Rng, dim: usize, nnz: usize) -> SparseVector {
        let idx = sample(rng, dim, nnz).into_vec();
        SparseVector::from_pairs(idx.into_iter().map(|i| (i, rng.random_range(0.05..1.0))).collect()).unwrap()
    }

    fn random_problem(seed: u64, dim: usize, t: usize) -> (ConstraintSet, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = (0..t)
            .map(|_| {
                (
                    random_vector(&mut rng, dim, 4),
                    random_vector(&mut rng, dim, 3),
                    random_vector(&mut rng, dim, 3),
                )
            })
            .collect();
        let set = ConstraintSet::from_vectors(dim, triples);
        let coeffs = (0..set.len())
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                1 => -1.0,
                _ => rng.random_range(-1.0..0.0),
            })
            .collect();
        (set, coeffs)
    }

    fn brute_force_min(set: &ConstraintSet, coeffs: &[f64], lambda: f64, batch: &Batch) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..set.dimension() {
            for j in i + 1..set.dimension() {
                for sign in [Sign::Positive, Sign::Negative] {
                    let b = BasisElement::new(i, j, sign).unwrap();
                    best = best.min(basis_utility(&b, coeffs, set, lambda, batch));
                }
            }
        }
        best
    }

    #[test]
    fn exact_search_matches_enumeration() {
        for seed in 0..10 {
            let (set, coeffs) = random_problem(seed, 10, 30);
            let found = find_forward_exact(&coeffs, &set, 2.0).unwrap();
            let full = Batch::full(set.len());
            let brute = brute_force_min(&set, &coeffs, 2.0, &full);
            assert!((found.utility - brute).abs() < 1e-10, "seed {seed}: {} vs {brute}", found.utility);
            let direct = basis_utility(&found.basis, &coeffs, &set, 2.0, &full);
            assert!((found.utility - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_follows_off_diagonal() {
        // G_12 = c x_1 d_2 = -1 → S < 0 → positive basis
        let set = ConstraintSet::from_vectors(4, vec![(sv(&[(1, 1.0)]), sv(&[(2, 1.0)]), SparseVector::empty())]);
        let found = find_forward_exact(&[-1.0], &set, 1.0).unwrap();
        assert_eq!(found.basis, BasisElement::positive(1, 2).unwrap());
        assert_eq!(found.utility, -1.0);
        let found = find_forward_exact(&[1.0], &set, 1.0).unwrap();
        assert_eq!(found.basis, BasisElement::negative(1, 2).unwrap());
    }

    #[test]
    fn zero_gradient_signals_convergence() {
        let (set, _) = random_problem(1, 8, 10);
        let zeros = vec![0.0; set.len()];
        assert!(find_forward_exact(&zeros, &set, 1.0).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(find_forward_heuristic(&zeros, &set, 1.0, &Batch::full(set.len()), &mut rng).is_none());
    }

    #[test]
    fn single_negative_diagonal_pairs_with_zero_feature() {
        // only G_33 < 0; the best pair is (3, lowest untouched feature)
        let set = ConstraintSet::from_vectors(6, vec![(sv(&[(3, 1.0)]), sv(&[(3, 1.0)]), SparseVector::empty())]);
        let found = find_forward_exact(&[-1.0], &set, 1.0).unwrap();
        assert_eq!(found.utility, -1.0);
        assert_eq!(found.basis, BasisElement::positive(0, 3).unwrap());
        let brute = brute_force_min(&set, &[-1.0], 1.0, &Batch::full(1));
        assert_eq!(brute, -1.0);
    }

    #[test]
    fn full_minibatch_is_exact() {
        let (set, coeffs) = random_problem(4, 12, 40);
        let exact = find_forward_exact(&coeffs, &set, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mb = find_forward_minibatch(&coeffs, &set, 1.0, set.len(), &mut rng);
        assert_eq!(exact, mb);
    }

    #[test]
    fn minibatch_is_deterministic_under_seed() {
        let (set, coeffs) = random_problem(5, 12, 40);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            find_forward_minibatch(&coeffs, &set, 1.0, 10, &mut rng)
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn sampled_batch_is_sorted_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Batch::sample(100, 10, &mut rng);
        let v: Vec<usize> = b.iter().collect();
        assert_eq!(v.len(), 10);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(Batch::sample(5, 50, &mut rng).is_full());
    }

    #[test]
    fn heuristic_second_stage_is_optimal_on_its_row() {
        for seed in 0..10 {
            let (set, coeffs) = random_problem(seed + 20, 10, 25);
            let batch = Batch::full(set.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = heuristic_search(&coeffs, &set, 1.5, &batch, &mut rng).unwrap();
            assert!(trace.result.utility <= trace.stage_one.utility);
            let b = trace.stage_one.basis;
            let partner = if b.i() == trace.first_feature { b.j() } else { b.i() };
            let mut row_best = f64::INFINITY;
            let mut first_best = f64::INFINITY;
            for k in 0..set.dimension() {
                for sign in [Sign::Positive, Sign::Negative] {
                    if k != partner {
                        let cand = BasisElement::new(k, partner, sign).unwrap();
                        row_best = row_best.min(basis_utility(&cand, &coeffs, &set, 1.5, &batch));
                    }
                    if k != trace.first_feature {
                        let cand = BasisElement::new(k, trace.first_feature, sign).unwrap();
                        first_best = first_best.min(basis_utility(&cand, &coeffs, &set, 1.5, &batch));
                    }
                }
            }
            assert!((trace.result.utility - row_best).abs() < 1e-12, "seed {seed}");
            assert!((trace.stage_one.utility - first_best).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn heuristic_single_interaction() {
        let set = ConstraintSet::from_vectors(5, vec![(sv(&[(1, 1.0)]), sv(&[(2, 1.0)]), SparseVector::empty())]);
        let batch = Batch::full(1);
        for seed in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let found = find_forward_heuristic(&[-1.0], &set, 1.0, &batch, &mut rng).unwrap();
            assert_eq!(found.basis, BasisElement::positive(1, 2).unwrap());
        }
    }

    #[test]
    fn heuristic_is_deterministic_under_seed() {
        let (set, coeffs) = random_problem(8, 15, 30);
        let batch = Batch::full(set.len());
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            heuristic_search(&coeffs, &set, 1.0, &batch, &mut rng)
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn away_picks_largest_utility() {
        let set = ConstraintSet::from_vectors(
            6,
            vec![(sv(&[(0, 1.0), (2, 1.0)]), sv(&[(1, 1.0), (3, 2.0)]), SparseVector::empty())],
        );
        let a = BasisElement::positive(0, 1).unwrap(); // inner = 1·1 = 1 → utility -1
        let b = BasisElement::negative(2, 3).unwrap(); // inner = 1·(-2) = -2 → utility +2
        let model = SimilarityModel::from_atoms(1.0, [(a, 0.5), (b, 0.5)]).unwrap();
        let scan = find_away(&model, &[-1.0], &set, &Batch::full(1)).unwrap();
        assert_eq!(scan.candidate.basis, b);
        assert_eq!(scan.candidate.utility, 2.0);
        assert_eq!(scan.model_utility, 0.5);
        let single = SimilarityModel::single(1.0, a).unwrap();
        assert_eq!(find_away(&single, &[-1.0], &set, &Batch::full(1)).unwrap().candidate.basis, a);
    }

    #[test]
    fn away_matches_enumeration() {
        let (set, coeffs) = random_problem(31, 12, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut atoms = Vec::new();
        while atoms.len() < 10 {
            let i = rng.random_range(0..12);
            let j = rng.random_range(0..12);
            if i == j {
                continue;
            }
            let sign = if rng.random_bool(0.5) { Sign::Positive } else { Sign::Negative };
            let b = BasisElement::new(i, j, sign).unwrap();
            if !atoms.iter().any(|(a, _)| *a == b) {
                atoms.push((b, 0.1));
            }
        }
        let model = SimilarityModel::from_atoms(3.0, atoms.clone()).unwrap();
        let full = Batch::full(set.len());
        let scan = find_away(&model, &coeffs, &set, &full).unwrap();
        let brute = atoms
            .iter()
            .map(|(b, _)| basis_utility(b, &coeffs, &set, 3.0, &full))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(scan.candidate.utility, brute);
    }
}

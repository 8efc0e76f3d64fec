//! The learned similarity matrix `M = Σ α_B B` over signed pair bases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use crate::data::SparseVector;
use crate::error::{Error, Result};

/// Tolerance on `Σ α = 1` accepted when loading or validating a model.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Largest dimension [`SimilarityModel::to_dense`] will materialize.
pub const MAX_DENSE_DIM: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    /// `λ (e_i + e_j)(e_i + e_j)ᵀ`: rewards co-occurrence of `i` and `j`.
    Positive,
    /// `λ (e_i - e_j)(e_i - e_j)ᵀ`: penalizes co-occurrence of `i` and `j`.
    Negative,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Sign::Positive => "P",
            Sign::Negative => "N",
        }
    }
}

/// One rank-one, 4-sparse basis matrix. Always stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisElement {
    i: usize,
    j: usize,
    sign: Sign,
}

impl BasisElement {
    /// Canonicalizes the pair so that `i < j`; both bases are symmetric in the pair.
    pub fn new(a: usize, b: usize, sign: Sign) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidModel(format!("basis needs two distinct features, got ({a}, {a})")));
        }
        Ok(BasisElement {
            i: a.min(b),
            j: a.max(b),
            sign,
        })
    }

    pub(crate) fn canonical(a: usize, b: usize, sign: Sign) -> Self {
        debug_assert_ne!(a, b);
        BasisElement {
            i: a.min(b),
            j: a.max(b),
            sign,
        }
    }

    pub fn positive(a: usize, b: usize) -> Result<Self> {
        Self::new(a, b, Sign::Positive)
    }

    pub fn negative(a: usize, b: usize) -> Result<Self> {
        Self::new(a, b, Sign::Negative)
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// `u_i ± u_j`, the projection of `u` onto `e_i ± e_j`.
    #[inline]
    pub fn project(&self, u: &SparseVector) -> f64 {
        self.combine(u.get(self.i), u.get(self.j))
    }

    #[inline]
    pub(crate) fn combine(&self, ui: f64, uj: f64) -> f64 {
        match self.sign {
            Sign::Positive => ui + uj,
            Sign::Negative => ui - uj,
        }
    }

    /// `aᵀ B b` for this basis at scale `λ`.
    pub fn bilinear(&self, a: &SparseVector, b: &SparseVector, lambda: f64) -> f64 {
        lambda * self.project(a) * self.project(b)
    }
}

impl fmt::Display for BasisElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.sign.tag(), self.i, self.j)
    }
}

/// Structural summary of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureStats {
    /// Distinct features touched by any atom.
    pub active_features: usize,
    /// Nonzero entries of `M` after cancellation between atoms.
    pub nnz_entries: usize,
    pub n_atoms: usize,
}

/// A convex combination of bases at a common scale `λ`.
///
/// Weights are strictly positive and sum to one, which makes `M` symmetric
/// positive semi-definite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    lambda: f64,
    atoms: BTreeMap<BasisElement, f64>,
}

impl SimilarityModel {
    /// The model `M = B`.
    pub fn single(lambda: f64, basis: BasisElement) -> Result<Self> {
        Self::from_atoms(lambda, [(basis, 1.0)])
    }

    /// Builds and validates a model from explicit atoms.
    pub fn from_atoms<I>(lambda: f64, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BasisElement, f64)>,
    {
        let mut map = BTreeMap::new();
        for (b, w) in atoms {
            if map.insert(b, w).is_some() {
                return Err(Error::InvalidModel(format!("duplicate atom {b}")));
            }
        }
        let model = SimilarityModel { lambda, atoms: map };
        model.validate()?;
        Ok(model)
    }

    /// Checks `λ > 0`, `α > 0` for every atom and `|Σ α - 1| ≤ 1e-9`.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidModel(format!("scale must be positive, got {}", self.lambda)));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidModel("model has no atoms".into()));
        }
        for (b, &w) in &self.atoms {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidModel(format!("atom {b} has non-positive weight {w}")));
            }
        }
        let sum = self.weight_sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = (BasisElement, f64)> + '_ {
        self.atoms.iter().map(|(&b, &w)| (b, w))
    }

    pub fn weight(&self, basis: &BasisElement) -> Option<f64> {
        self.atoms.get(basis).copied()
    }

    pub fn weight_sum(&self) -> f64 {
        self.atoms.values().sum()
    }

    /// `xᵀ M x'`.
    pub fn score(&self, x: &SparseVector, x_prime: &SparseVector) -> f64 {
        if x.is_empty() || x_prime.is_empty() {
            return 0.0;
        }
        self.atoms
            .iter()
            .map(|(b, &w)| w * b.bilinear(x, x_prime, self.lambda))
            .sum()
    }

    /// Coordinates of `x` in the space spanned by the atoms, one per atom,
    /// such that `embed(x) · embed(x') = score(x, x')`.
    pub fn embed(&self, x: &SparseVector) -> Vec<f64> {
        self.atoms
            .iter()
            .map(|(b, &w)| (w * self.lambda).sqrt() * b.project(x))
            .collect()
    }

    /// Materializes `M` as a dense row-major matrix. Test and inspection use only.
    pub fn to_dense(&self, dimension: usize) -> Result<Vec<Vec<f64>>> {
        if dimension > MAX_DENSE_DIM {
            return Err(Error::DenseLimit {
                requested: dimension,
                limit: MAX_DENSE_DIM,
            });
        }
        if let Some((b, _)) = self.atoms.iter().find(|(b, _)| b.j >= dimension) {
            return Err(Error::InvalidModel(format!("atom {b} outside dimension {dimension}")));
        }
        let mut m = vec![vec![0.0; dimension]; dimension];
        for ((i, j), v) in self.entry_map() {
            m[i][j] = v;
        }
        Ok(m)
    }

    /// Nonzero entries of `M` as `(row, col, value)`, sorted by `(row, col)`.
    /// Both triangles are listed.
    pub fn nonzero_entries(&self) -> Vec<(usize, usize, f64)> {
        self.entry_map()
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect()
    }

    fn entry_map(&self) -> BTreeMap<(usize, usize), f64> {
        let mut entries = BTreeMap::new();
        for (b, &w) in &self.atoms {
            let v = w * self.lambda;
            let off = b.sign.factor() * v;
            *entries.entry((b.i, b.i)).or_insert(0.0) += v;
            *entries.entry((b.j, b.j)).or_insert(0.0) += v;
            *entries.entry((b.i, b.j)).or_insert(0.0) += off;
            *entries.entry((b.j, b.i)).or_insert(0.0) += off;
        }
        entries
    }

    /// Sorted distinct features used by the atoms.
    pub fn active_features(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.atoms.keys().flat_map(|b| [b.i, b.j]).collect();
        set.into_iter().collect()
    }

    pub fn structure_stats(&self) -> StructureStats {
        StructureStats {
            active_features: self.active_features().len(),
            nnz_entries: self.nonzero_entries().len(),
            n_atoms: self.atoms.len(),
        }
    }

    /// Writes the text format: a `hdsl 1 λ=<scale>` header, then one
    /// `<P|N> <i> <j> <weight>` line per atom.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "hdsl 1 λ={}", self.lambda)?;
        for (b, w) in &self.atoms {
            writeln!(out, "{} {} {} {}", b.sign.tag(), b.i, b.j, w)?;
        }
        Ok(())
    }

    /// Reads the format written by [`save`](Self::save) and validates the result.
    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let lambda = loop {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::InvalidModel("empty model file".into()))?;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            break parse_header(&line, n + 1)?;
        };
        let mut atoms = Vec::new();
        for (n, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            atoms.push(parse_atom(line, n + 1)?);
        }
        Self::from_atoms(lambda, atoms)
    }

    // Mutation hooks for the optimizer. Callers restore the invariants.

    pub(crate) fn scale_weights(&mut self, factor: f64) {
        for w in self.atoms.values_mut() {
            *w *= factor;
        }
    }

    pub(crate) fn add_weight(&mut self, basis: BasisElement, delta: f64) {
        *self.atoms.entry(basis).or_insert(0.0) += delta;
    }

    /// Removes atoms with weight below `tol`, returning them.
    pub(crate) fn drain_small(&mut self, tol: f64) -> Vec<(BasisElement, f64)> {
        let small: Vec<(BasisElement, f64)> = self
            .atoms
            .iter()
            .filter(|(_, &w)| w < tol)
            .map(|(&b, &w)| (b, w))
            .collect();
        for (b, _) in &small {
            self.atoms.remove(b);
        }
        small
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<f64> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.first() != Some(&"hdsl") {
        return Err(Error::InvalidModel(format!("line {line_no}: not an hdsl model header")));
    }
    match tokens.get(1) {
        Some(&"1") => {}
        Some(v) => return Err(Error::Version((*v).to_string())),
        None => return Err(Error::Version("missing".into())),
    }
    let scale = tokens
        .get(2)
        .and_then(|t| t.strip_prefix("λ=").or_else(|| t.strip_prefix("lambda=")))
        .ok_or_else(|| Error::InvalidModel(format!("line {line_no}: missing λ=<scale>")))?;
    scale
        .parse()
        .map_err(|_| Error::InvalidModel(format!("line {line_no}: invalid scale {scale:?}")))
}

fn parse_atom(line: &str, line_no: usize) -> Result<(BasisElement, f64)> {
    let bad = || Error::InvalidModel(format!("line {line_no}: expected `<P|N> i j weight`, got {line:?}"));
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(bad());
    }
    let sign = match tokens[0] {
        "P" => Sign::Positive,
        "N" => Sign::Negative,
        _ => return Err(bad()),
    };
    let i: usize = tokens[1].parse().map_err(|_| bad())?;
    let j: usize = tokens[2].parse().map_err(|_| bad())?;
    let w: f64 = tokens[3].parse().map_err(|_| bad())?;
    Ok((BasisElement::new(i, j, sign)?, w))
}

//! Diagonal similarity `S(x, x') = Σ_f w_f x_f x'_f` learned with the same
//! smoothed hinge loss, regularized by `λ‖w‖²₂` (gradient descent) or
//! `λ‖w‖₁` (proximal gradient), both with backtracking step sizes.

use std::io::{BufRead, Write};

use log::debug;
use rayon::prelude::*;

use crate::constraints::ConstraintSet;
use crate::data::SparseVector;
use crate::error::{Error, Result};
use crate::eval::{knn_error_with, Scorer};
use crate::optim::loss::{smoothed_hinge, smoothed_hinge_deriv};
use crate::optim::Validation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    L1,
    L2,
}

impl Regularizer {
    fn tag(self) -> &'static str {
        match self {
            Regularizer::L1 => "l1",
            Regularizer::L2 => "l2",
        }
    }
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Regularizer::L1),
            "l2" => Ok(Regularizer::L2),
            other => Err(Error::Config(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagModel {
    pub weights: Vec<f64>,
    pub regularizer: Regularizer,
    pub reg_weight: f64,
}

impl DiagModel {
    /// `w = 1`, i.e. the identity similarity.
    pub fn identity(dimension: usize, regularizer: Regularizer, reg_weight: f64) -> Self {
        DiagModel {
            weights: vec![1.0; dimension],
            regularizer,
            reg_weight,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Features with nonzero weight.
    pub fn n_nonzero(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    fn weight(&self, f: usize) -> f64 {
        self.weights.get(f).copied().unwrap_or(0.0)
    }

    /// Header `diag 1 reg=<l1|l2> λ=<value>`, then `index value` per nonzero weight.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "diag 1 reg={} λ={}", self.regularizer.tag(), self.reg_weight)?;
        for (f, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                writeln!(out, "{f} {w}")?;
            }
        }
        Ok(())
    }

    /// Loads a saved model. Without `dimension` the weight vector ends at the
    /// largest stored index; missing features score zero either way.
    pub fn load<R: BufRead>(source: R, dimension: Option<usize>) -> Result<Self> {
        let mut lines = source.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::InvalidModel("empty diag model file".into())),
            }
        };
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.first() != Some(&"diag") {
            return Err(Error::InvalidModel("not a diag model header".into()));
        }
        if tokens.get(1) != Some(&"1") {
            return Err(Error::Version(tokens.get(1).unwrap_or(&"missing").to_string()));
        }
        let mut regularizer = None;
        let mut reg_weight = None;
        for tok in &tokens[2..] {
            if let Some(r) = tok.strip_prefix("reg=") {
                regularizer = Some(r.parse()?);
            } else if let Some(v) = tok.strip_prefix("λ=").or_else(|| tok.strip_prefix("lambda=")) {
                reg_weight = Some(
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidModel(format!("invalid λ {v:?}")))?,
                );
            }
        }
        let (Some(regularizer), Some(reg_weight)) = (regularizer, reg_weight) else {
            return Err(Error::InvalidModel("diag header needs reg= and λ=".into()));
        };
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::InvalidModel(format!("line {}: expected `index value`, got {line:?}", n + 2));
            let (f, w) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
            let f: usize = f.parse().map_err(|_| bad())?;
            let w: f64 = w.trim().parse().map_err(|_| bad())?;
            if !w.is_finite() {
                return Err(bad());
            }
            entries.push((f, w));
        }
        let needed = entries.iter().map(|&(f, _)| f + 1).max().unwrap_or(0);
        let dim = dimension.unwrap_or(needed);
        if needed > dim {
            return Err(Error::InvalidModel(format!("weight index {} beyond dimension {dim}", needed - 1)));
        }
        let mut weights = vec![0.0; dim];
        for (f, w) in entries {
            weights[f] = w;
        }
        Ok(DiagModel {
            weights,
            regularizer,
            reg_weight,
        })
    }
}

impl Scorer for DiagModel {
    fn score(&self, a: &SparseVector, b: &SparseVector) -> f64 {
        let (short, long) = if a.nnz() <= b.nnz() { (a, b) } else { (b, a) };
        short
            .iter()
            .map(|(f, v)| {
                let u = long.get(f);
                if u == 0.0 {
                    0.0
                } else {
                    self.weight(f) * v * u
                }
            })
            .sum()
    }
}

/// `⟨A_t, diag(w)⟩ = Σ_f w_f x_f d_f`.
pub fn diag_margin(constraints: &ConstraintSet, t: usize, weights: &[f64]) -> f64 {
    let (x, d) = (constraints.x(t), constraints.diff(t));
    x.iter()
        .map(|(f, v)| {
            let dv = d.get(f);
            if dv == 0.0 {
                0.0
            } else {
                weights.get(f).copied().unwrap_or(0.0) * v * dv
            }
        })
        .sum()
}

/// Soft-thresholding, the proximal map of `threshold·|·|`.
pub fn prox_l1(weights: &[f64], threshold: f64) -> Vec<f64> {
    weights
        .iter()
        .map(|&w| w.signum() * (w.abs() - threshold).max(0.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagConfig {
    pub regularizer: Regularizer,
    pub reg_weight: f64,
    pub max_iterations: usize,
    /// First trial step size; later iterations start from twice the last accepted one.
    pub initial_step: f64,
    /// Stop when the objective decreases by less than this (relative).
    pub tol: f64,
    pub validation_every: usize,
    pub knn_k: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            regularizer: Regularizer::L2,
            reg_weight: 0.0,
            max_iterations: 500,
            initial_step: 1.0,
            tol: 1e-10,
            validation_every: 10,
            knn_k: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagTrainResult {
    /// Best-validation iterate, or the last one without validation data.
    pub model: DiagModel,
    pub objective_history: Vec<f64>,
    pub best_iteration: usize,
    pub best_validation_error: Option<f64>,
}

const CHUNK: usize = 256;

/// Elementwise `x ⊙ (y - z)` per constraint, so that margins are `w · p_t`.
struct Products {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Products {
    fn new(constraints: &ConstraintSet) -> Self {
        let rows = (0..constraints.len())
            .map(|t| {
                let d = constraints.diff(t);
                constraints
                    .x(t)
                    .iter()
                    .filter_map(|(f, v)| {
                        let dv = d.get(f);
                        (dv != 0.0).then_some((f, v * dv))
                    })
                    .collect()
            })
            .collect();
        Products { rows }
    }

    fn margins(&self, w: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|r| r.iter().map(|&(f, p)| w[f] * p).sum())
            .collect()
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let m = self.margins(w);
        m.iter().map(|&s| smoothed_hinge(s)).sum::<f64>() / m.len() as f64
    }

    /// Per-chunk partial sums merged in chunk order, so the result does not
    /// depend on the thread count.
    fn loss_gradient(&self, w: &[f64]) -> Vec<f64> {
        let scale = 1.0 / self.rows.len() as f64;
        let partials: Vec<Vec<(usize, f64)>> = self
            .rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut part = Vec::new();
                for r in chunk {
                    let m: f64 = r.iter().map(|&(f, p)| w[f] * p).sum();
                    let c = smoothed_hinge_deriv(m);
                    if c != 0.0 {
                        part.extend(r.iter().map(|&(f, p)| (f, scale * c * p)));
                    }
                }
                part
            })
            .collect();
        let mut g = vec![0.0; w.len()];
        for part in partials {
            for (f, v) in part {
                g[f] += v;
            }
        }
        g
    }
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn sq(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

/// Full objective `loss(w) + λ Ω(w)`.
pub fn diag_objective(constraints: &ConstraintSet, model: &DiagModel) -> f64 {
    let p = Products::new(constraints);
    objective_with(&p, &model.weights, model.regularizer, model.reg_weight)
}

fn objective_with(p: &Products, w: &[f64], reg: Regularizer, lambda: f64) -> f64 {
    let penalty = match reg {
        Regularizer::L1 => l1(w),
        Regularizer::L2 => sq(w),
    };
    p.loss(w) + lambda * penalty
}

/// Trains a diagonal similarity starting from `w = 1`.
pub fn train_diag(
    constraints: &ConstraintSet,
    config: &DiagConfig,
    validation: Option<Validation<'_>>,
) -> Result<DiagTrainResult> {
    if constraints.is_empty() {
        return Err(Error::InvalidDataset("no constraints to train on".into()));
    }
    if !(config.reg_weight >= 0.0) || !(config.initial_step > 0.0) {
        return Err(Error::Config("regularization weight must be ≥ 0 and step > 0".into()));
    }
    let products = Products::new(constraints);
    let (reg, lambda) = (config.regularizer, config.reg_weight);
    let mut model = DiagModel::identity(constraints.dimension(), reg, lambda);
    let mut objective = objective_with(&products, &model.weights, reg, lambda);
    let mut history = vec![objective];
    let mut step = config.initial_step;

    let every = config.validation_every.max(1);
    let validate = |m: &DiagModel| -> Result<Option<f64>> {
        validation
            .map(|v| knn_error_with(m, v.train, v.validation, config.knn_k))
            .transpose()
    };
    let mut best = (model.clone(), 0usize, validate(&model)?);

    for it in 1..=config.max_iterations {
        let w = &model.weights;
        let smooth = |u: &[f64]| match reg {
            Regularizer::L2 => products.loss(u) + lambda * sq(u),
            Regularizer::L1 => products.loss(u),
        };
        let mut grad = products.loss_gradient(w);
        if reg == Regularizer::L2 {
            for (g, &wi) in grad.iter_mut().zip(w) {
                *g += 2.0 * lambda * wi;
            }
        }
        let f_smooth = smooth(w);
        step *= 2.0;
        let mut next;
        loop {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, g)| wi - step * g).collect();
            next = match reg {
                Regularizer::L2 => trial,
                Regularizer::L1 => prox_l1(&trial, step * lambda),
            };
            let diff: Vec<f64> = next.iter().zip(w).map(|(a, b)| a - b).collect();
            let bound = f_smooth
                + grad.iter().zip(&diff).map(|(g, d)| g * d).sum::<f64>()
                + sq(&diff) / (2.0 * step);
            if smooth(&next) <= bound || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let new_objective = objective_with(&products, &next, reg, lambda);
        if !new_objective.is_finite() {
            return Err(Error::Diverged(format!("objective became {new_objective} at iteration {it}")));
        }
        let decrease = objective - new_objective;
        if new_objective <= objective {
            model.weights = next;
            objective = new_objective;
        }
        history.push(objective);

        if it % every == 0 || it == config.max_iterations {
            let err = validate(&model)?;
            if let (Some(e), Some(b)) = (err, best.2) {
                if e < b {
                    best = (model.clone(), it, err);
                }
            } else if validation.is_none() {
                best = (model.clone(), it, None);
            }
        }
        if decrease <= config.tol * objective.abs().max(1e-300) {
            debug!("diag training converged after {it} iterations");
            if validation.is_none() {
                best = (model.clone(), it, None);
            }
            break;
        }
    }
    if validation.is_none() {
        best = (model.clone(), history.len() - 1, None);
    }
    Ok(DiagTrainResult {
        model: best.0,
        objective_history: history,
        best_iteration: best.1,
        best_validation_error: best.2,
    })
}

//! The training loop: forward/away choice, line search, convex-combination
//! updates, cache maintenance, diagnostics and early stopping.

use std::fmt;
use std::io::Write;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cache::MarginCache;
use super::line_search::line_search;
use super::loss::{gradient_coefficients, objective};
use super::search::{basis_utility, find_away, find_forward_heuristic, find_forward_on, Batch, Candidate};
use super::{OptimizerConfig, Strategy};
use crate::constraints::ConstraintSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::knn_error;
use crate::model::{BasisElement, SimilarityModel, StructureStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Init,
    Forward,
    Away,
    /// Away step that hit `γ_max` and removed its atom.
    Drop,
    /// No admissible descent this iteration.
    Null,
}

impl StepKind {
    pub fn code(self) -> &'static str {
        match self {
            StepKind::Init => "I",
            StepKind::Forward => "F",
            StepKind::Away => "A",
            StepKind::Drop => "D",
            StepKind::Null => "-",
        }
    }
}

/// A move of the iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// `M ← (1 - γ) M + γ B`.
    Forward(BasisElement),
    /// `M ← (1 + γ) M - γ B` for an active atom `B`.
    Away(BasisElement),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    /// Exact duality gap below tolerance.
    GapTolerance,
    /// Every constraint satisfied with margin, or the gradient vanished.
    ZeroGradient,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gap: Option<f64>,
    pub n_atoms: usize,
    pub n_features: usize,
    pub nnz: usize,
    pub step: StepKind,
    pub gamma: f64,
    pub validation_error: Option<f64>,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "k,objective,gap,n_atoms,n_features,nnz,step,gamma,validation_error";

    pub fn write_csv<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in records {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.objective,
            opt(self.gap),
            self.n_atoms,
            self.n_features,
            self.nnz,
            self.step.code(),
            self.gamma,
            opt(self.validation_error)
        )
    }
}

/// A copy of the iterate at some iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub model: SimilarityModel,
    pub validation_error: Option<f64>,
}

/// Data used for early stopping: neighbors come from `train`, errors are
/// measured on `validation`.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub model: SimilarityModel,
    pub cache: MarginCache,
    pub iteration: usize,
    /// `f(M^(k))` for every iterate, starting at `k = 0`.
    pub objective_history: Vec<f64>,
    /// Exact duality gap per iteration, when the strategy provides it.
    pub gap_history: Vec<Option<f64>>,
    /// `(1/T) Σ ‖A_t‖²_F`.
    pub lipschitz: f64,
    /// Iterate with the lowest validation error seen.
    pub best: Option<Snapshot>,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<IterationRecord>,
    /// Largest cache drift observed at a scheduled rebuild.
    pub max_cache_drift: f64,
    pub stop_reason: StopReason,
}

impl TrainerState {
    /// The early-stopped model when validation data was used, else the last iterate.
    pub fn best_model(&self) -> &SimilarityModel {
        self.best.as_ref().map_or(&self.model, |s| &s.model)
    }

    pub fn objective(&self) -> f64 {
        objective(self.cache.margins())
    }

    fn record(&mut self, step: StepKind, gamma: f64, gap: Option<f64>) {
        let StructureStats {
            active_features,
            nnz_entries,
            n_atoms,
        } = self.model.structure_stats();
        debug_assert!(n_atoms <= self.iteration + 1);
        debug_assert!(active_features <= 2 * (self.iteration + 1));
        debug_assert!(nnz_entries <= 4 * (self.iteration + 1));
        self.log.push(IterationRecord {
            iteration: self.iteration,
            objective: self.objective(),
            gap,
            n_atoms,
            n_features: active_features,
            nnz: nnz_entries,
            step,
            gamma,
            validation_error: None,
        });
    }
}

/// `M^(0)`: the forward-search answer at `M = 0`, where every constraint has
/// gradient weight `-1`.
pub fn initial_state(
    config: &OptimizerConfig,
    constraints: &ConstraintSet,
    rng: &mut ChaCha8Rng,
) -> Result<TrainerState> {
    let zero = vec![0.0; constraints.len()];
    let coeffs = gradient_coefficients(&zero);
    let batch = draw_batch(config, constraints.len(), rng);
    let first = forward_search(config, &coeffs, constraints, &batch, rng)
        .ok_or_else(|| Error::InvalidDataset("constraints carry no gradient at M = 0".into()))?;
    let model = SimilarityModel::single(config.lambda, first.basis)?;
    let cache = MarginCache::rebuild(constraints, &model);
    let mut state = TrainerState {
        model,
        cache,
        iteration: 0,
        objective_history: Vec::new(),
        gap_history: vec![None],
        lipschitz: constraints.lipschitz(),
        best: None,
        snapshots: Vec::new(),
        log: Vec::new(),
        max_cache_drift: 0.0,
        stop_reason: StopReason::MaxIterations,
    };
    state.objective_history.push(state.objective());
    state.record(StepKind::Init, 1.0, None);
    Ok(state)
}

fn draw_batch(config: &OptimizerConfig, total: usize, rng: &mut ChaCha8Rng) -> Batch {
    match config.strategy {
        Strategy::Exact => Batch::full(total),
        Strategy::MiniBatch | Strategy::Heuristic => match config.batch_size {
            Some(m) => Batch::sample(total, m, rng),
            None => Batch::full(total),
        },
    }
}

fn forward_search(
    config: &OptimizerConfig,
    coeffs: &[f64],
    constraints: &ConstraintSet,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    match config.strategy {
        Strategy::Exact | Strategy::MiniBatch => find_forward_on(coeffs, constraints, config.lambda, batch),
        Strategy::Heuristic => find_forward_heuristic(coeffs, constraints, config.lambda, batch, rng),
    }
}

/// Frank-Wolfe gap `⟨M - B_F, ∇f⟩` on the full constraint set.
pub fn duality_gap(
    model: &SimilarityModel,
    coeffs: &[f64],
    constraints: &ConstraintSet,
    forward_utility: f64,
) -> f64 {
    let full = Batch::full(constraints.len());
    let model_utility: f64 = model
        .atoms()
        .map(|(b, w)| w * basis_utility(&b, coeffs, constraints, model.lambda(), &full))
        .sum();
    model_utility - forward_utility
}

fn inner_products(constraints: &ConstraintSet, basis: &BasisElement, lambda: f64) -> Vec<f64> {
    (0..constraints.len())
        .map(|t| constraints.basis_inner(t, basis, lambda))
        .collect()
}

/// Largest admissible step for `step` at the current weights.
fn gamma_max(model: &SimilarityModel, step: &Step) -> Result<f64> {
    match step {
        Step::Forward(_) => Ok(1.0),
        Step::Away(b) => {
            let alpha = model
                .weight(b)
                .ok_or_else(|| Error::Internal(format!("away atom {b} is not active")))?;
            Ok(alpha / (1.0 - alpha))
        }
    }
}

/// Applies a forward or away step of size `γ`, keeping the margin cache in
/// sync, dropping atoms whose weight falls under `drop_tol` and restoring
/// `Σ α = 1`.
pub fn apply_step(
    state: &mut TrainerState,
    constraints: &ConstraintSet,
    step: Step,
    gamma: f64,
    drop_tol: f64,
) -> Result<StepKind> {
    let basis = match step {
        Step::Forward(b) | Step::Away(b) => b,
    };
    let inner = inner_products(constraints, &basis, state.model.lambda());
    apply_step_with(state, constraints, step, gamma, drop_tol, &inner)
}

fn apply_step_with(
    state: &mut TrainerState,
    constraints: &ConstraintSet,
    step: Step,
    gamma: f64,
    drop_tol: f64,
    inner: &[f64],
) -> Result<StepKind> {
    let limit = gamma_max(&state.model, &step)?;
    if !(gamma >= 0.0 && gamma <= limit * (1.0 + 1e-12)) {
        return Err(Error::Internal(format!("step size {gamma} outside [0, {limit}]")));
    }
    let lambda = state.model.lambda();
    let mut kind = match step {
        Step::Forward(b) => {
            state.model.scale_weights(1.0 - gamma);
            state.model.add_weight(b, gamma);
            state.cache.blend(1.0 - gamma, gamma, inner);
            StepKind::Forward
        }
        Step::Away(b) => {
            state.model.scale_weights(1.0 + gamma);
            state.model.add_weight(b, -gamma);
            state.cache.blend(1.0 + gamma, -gamma, inner);
            let left = state.model.weight(&b).unwrap_or(0.0);
            if left < -drop_tol {
                return Err(Error::Internal(format!("away step left atom {b} with weight {left}")));
            }
            if gamma >= limit {
                // remove exactly, folding the rounding residue out of the cache
                state.model.add_weight(b, -left);
                state.cache.blend(1.0, -left, inner);
                StepKind::Drop
            } else {
                StepKind::Away
            }
        }
    };

    let dropped = state.model.drain_small(drop_tol.max(f64::MIN_POSITIVE));
    for (b, w) in &dropped {
        if w.abs() == 0.0 {
            continue;
        }
        let removed = inner_products(constraints, b, lambda);
        state.cache.blend(1.0, -w, &removed);
    }
    if !dropped.is_empty() && kind == StepKind::Away {
        kind = StepKind::Drop;
    }

    let sum = state.model.weight_sum();
    if !(sum > 0.0) {
        return Err(Error::Internal("all weight removed from the model".into()));
    }
    if sum != 1.0 {
        state.model.scale_weights(1.0 / sum);
        state.cache.scale(1.0 / sum);
    }
    Ok(kind)
}

/// Runs Frank-Wolfe with away steps.
///
/// Stops after `max_iterations`, when the exact duality gap drops below
/// `gap_tol`, or when the gradient vanishes. With validation data, the kNN
/// error is measured every `validation_every` iterations and the best iterate
/// is kept in [`TrainerState::best`].
pub fn train(
    config: &OptimizerConfig,
    constraints: &ConstraintSet,
    validation: Option<Validation<'_>>,
) -> Result<TrainerState> {
    if constraints.is_empty() {
        return Err(Error::InvalidDataset("no constraints to train on".into()));
    }
    config.validate(constraints.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = initial_state(config, constraints, &mut rng)?;
    let lambda = config.lambda;
    let every = config.validation_every.max(1);
    evaluate(config, &mut state, validation)?;

    while state.iteration < config.max_iterations {
        let coeffs = gradient_coefficients(state.cache.margins());
        if coeffs.iter().all(|&c| c == 0.0) {
            state.stop_reason = StopReason::ZeroGradient;
            break;
        }
        let batch = draw_batch(config, constraints.len(), &mut rng);
        let forward = forward_search(config, &coeffs, constraints, &batch, &mut rng);
        let Some(forward) = forward else {
            if config.strategy == Strategy::Exact {
                state.stop_reason = StopReason::ZeroGradient;
                break;
            }
            advance(config, &mut state, constraints, StepKind::Null, 0.0, None, every, validation)?;
            continue;
        };
        let away = find_away(&state.model, &coeffs, constraints, &batch)
            .ok_or_else(|| Error::Internal("model has no atoms".into()))?;

        let gap = (config.strategy == Strategy::Exact).then(|| away.model_utility - forward.utility);
        if let Some(g) = gap {
            if g <= config.gap_tol {
                *state.gap_history.last_mut().expect("initial entry") = Some(g);
                if let Some(rec) = state.log.last_mut() {
                    rec.gap = Some(g);
                }
                state.stop_reason = StopReason::GapTolerance;
                break;
            }
        }

        // ⟨D_F, ∇f⟩ versus ⟨D_A, ∇f⟩
        let forward_slope = forward.utility - away.model_utility;
        let away_slope = away.model_utility - away.candidate.utility;
        let away_possible = away.weight < 1.0;
        let step = if forward_slope <= away_slope || !away_possible {
            Step::Forward(forward.basis)
        } else {
            Step::Away(away.candidate.basis)
        };
        let basis = match step {
            Step::Forward(b) | Step::Away(b) => b,
        };
        let inner = inner_products(constraints, &basis, lambda);
        let margins = state.cache.margins();
        let directions: Vec<f64> = match step {
            Step::Forward(_) => inner.iter().zip(margins).map(|(b, m)| b - m).collect(),
            Step::Away(_) => margins.iter().zip(&inner).map(|(m, b)| m - b).collect(),
        };
        let limit = gamma_max(&state.model, &step)?;
        let mut gamma = line_search(margins, &directions, limit, config.line_search_tol);

        let before = objective(margins);
        let mut halvings = 0;
        while gamma > 0.0 && trial_objective(margins, &directions, gamma) > before {
            gamma *= 0.5;
            halvings += 1;
            if halvings > 60 {
                gamma = 0.0;
            }
        }
        if halvings > 0 {
            debug!("iteration {}: line search step halved {halvings} time(s)", state.iteration + 1);
        }

        let kind = if gamma > 0.0 {
            apply_step_with(&mut state, constraints, step, gamma, config.drop_tol, &inner)?
        } else {
            StepKind::Null
        };
        advance(config, &mut state, constraints, kind, gamma, gap, every, validation)?;
    }

    if state.log.last().is_some_and(|r| r.validation_error.is_none()) {
        evaluate(config, &mut state, validation)?;
    }
    debug!(
        "training stopped after {} iterations ({:?}), objective {}",
        state.iteration,
        state.stop_reason,
        state.objective()
    );
    Ok(state)
}

fn trial_objective(margins: &[f64], directions: &[f64], gamma: f64) -> f64 {
    let moved: Vec<f64> = margins.iter().zip(directions).map(|(m, b)| m + gamma * b).collect();
    objective(&moved)
}

#[allow(clippy::too_many_arguments)]
fn advance(
    config: &OptimizerConfig,
    state: &mut TrainerState,
    constraints: &ConstraintSet,
    kind: StepKind,
    gamma: f64,
    gap: Option<f64>,
    every: usize,
    validation: Option<Validation<'_>>,
) -> Result<()> {
    // gap belongs to the iterate it was measured at
    if let Some(slot) = state.gap_history.last_mut() {
        *slot = gap;
    }
    if let Some(rec) = state.log.last_mut() {
        rec.gap = gap;
    }
    state.iteration += 1;
    if config.rebuild_every > 0 && state.iteration % config.rebuild_every == 0 {
        let drift = state.cache.max_drift(constraints, &state.model);
        state.max_cache_drift = state.max_cache_drift.max(drift);
        state.cache = MarginCache::rebuild(constraints, &state.model);
    }
    state.objective_history.push(state.objective());
    state.gap_history.push(None);
    state.record(kind, gamma, None);
    if state.iteration % every == 0 {
        evaluate(config, state, validation)?;
    }
    Ok(())
}

fn evaluate(config: &OptimizerConfig, state: &mut TrainerState, validation: Option<Validation<'_>>) -> Result<()> {
    let error = match validation {
        Some(v) => Some(knn_error(&state.model, v.train, v.validation, config.knn_k)?),
        None => None,
    };
    if let Some(rec) = state.log.last_mut() {
        rec.validation_error = error;
    }
    let snapshot = || Snapshot {
        iteration: state.iteration,
        model: state.model.clone(),
        validation_error: error,
    };
    if let Some(e) = error {
        if state.best.as_ref().is_none_or(|b| e < b.validation_error.unwrap_or(f64::INFINITY)) {
            state.best = Some(snapshot());
        }
    }
    if config.keep_snapshots {
        let s = snapshot();
        state.snapshots.push(s);
    }
    Ok(())
}

//! Frank-Wolfe with away steps over the signed pair-basis dictionary.

mod cache;
mod line_search;
pub mod loss;
pub mod search;
mod trainer;

pub use cache::MarginCache;
pub use line_search::{directional_slope, line_search};
pub use loss::{gradient_coefficients, objective, smoothed_hinge, smoothed_hinge_deriv};
pub use search::{
    basis_utility, find_away, find_forward_exact, find_forward_heuristic, find_forward_minibatch, find_forward_on,
    heuristic_search, AwayScan, Batch, Candidate, GradientSurrogate, HeuristicTrace,
};
pub use trainer::{
    apply_step, duality_gap, initial_state, train, IterationRecord, Snapshot, Step, StepKind, StopReason,
    TrainerState, Validation,
};

use crate::error::{Error, Result};

/// How the forward direction is searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Full gradient, full dictionary.
    Exact,
    /// Gradient estimated on a random mini-batch, full dictionary.
    MiniBatch,
    /// Mini-batch gradient with the two-stage restricted search.
    Heuristic,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Strategy::Exact),
            "minibatch" | "mini-batch" => Ok(Strategy::MiniBatch),
            "heuristic" => Ok(Strategy::Heuristic),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Scale of the bases.
    pub lambda: f64,
    pub strategy: Strategy,
    /// Mini-batch size for the approximate strategies; `None` uses every constraint.
    pub batch_size: Option<usize>,
    pub max_iterations: usize,
    /// Bisection tolerance on the line-search slope.
    pub line_search_tol: f64,
    /// Iterations between validation evaluations.
    pub validation_every: usize,
    pub seed: u64,
    /// Atoms whose weight falls below this are removed.
    pub drop_tol: f64,
    /// Stop once the exact duality gap falls below this.
    pub gap_tol: f64,
    /// Iterations between exact margin rebuilds; 0 disables them.
    pub rebuild_every: usize,
    /// Neighbors used by the validation kNN classifier.
    pub knn_k: usize,
    /// Keep a copy of the model at every validation point.
    pub keep_snapshots: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda: 1.0,
            strategy: Strategy::Heuristic,
            batch_size: None,
            max_iterations: 1000,
            line_search_tol: 1e-6,
            validation_every: 50,
            seed: 0,
            drop_tol: 1e-12,
            gap_tol: 1e-8,
            rebuild_every: 500,
            knn_k: 3,
            keep_snapshots: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, n_constraints: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("λ must be positive, got {}", self.lambda)));
        }
        if let Some(m) = self.batch_size {
            if m == 0 || m > n_constraints {
                return Err(Error::Config(format!(
                    "batch size {m} outside 1..={n_constraints}"
                )));
            }
        }
        if !(self.line_search_tol > 0.0) {
            return Err(Error::Config("line-search tolerance must be positive".into()));
        }
        if !(self.drop_tol >= 0.0 && self.drop_tol < 1e-3) {
            return Err(Error::Config(format!("drop tolerance {} out of range", self.drop_tol)));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("kNN k must be at least 1".into()));
        }
        Ok(())
    }
}

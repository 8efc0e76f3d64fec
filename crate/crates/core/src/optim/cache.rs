use crate::constraints::ConstraintSet;
use crate::model::SimilarityModel;

/// Cached margins `⟨A_t, M⟩`, updated in O(T) per step instead of rebuilt.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginCache {
    margins: Vec<f64>,
}

impl MarginCache {
    pub fn zeros(n: usize) -> Self {
        MarginCache { margins: vec![0.0; n] }
    }

    /// Exact margins recomputed from the model's atoms.
    pub fn rebuild(constraints: &ConstraintSet, model: &SimilarityModel) -> Self {
        MarginCache {
            margins: (0..constraints.len())
                .map(|t| constraints.model_inner(t, model))
                .collect(),
        }
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    /// Largest absolute difference against an exact rebuild.
    pub fn max_drift(&self, constraints: &ConstraintSet, model: &SimilarityModel) -> f64 {
        self.margins
            .iter()
            .enumerate()
            .map(|(t, &m)| (m - constraints.model_inner(t, model)).abs())
            .fold(0.0, f64::max)
    }

    /// `m ← keep·m + add·inner`.
    pub(crate) fn blend(&mut self, keep: f64, add: f64, inner: &[f64]) {
        debug_assert_eq!(inner.len(), self.margins.len());
        for (m, &b) in self.margins.iter_mut().zip(inner) {
            *m = keep * *m + add * b;
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for m in &mut self.margins {
            *m *= factor;
        }
    }
}

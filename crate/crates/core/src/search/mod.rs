//! Hidden-layer combination search.
//!
//! Two strategies share one evaluation interface, [`ComboEvaluator`]:
//!
//! - **Grid** ([`run_method1`]): cross-validate every combination in
//!   `[1, n_max_input]^N`, then refit the best one and score it on the test split.
//! - **Heuristic** ([`run_method2`]): cross-validate only the diagonal
//!   `(1,..,1) .. (m,..,m)`, then grow a window of neuron counts around the winner
//!   with [`heuristic_search`], fitting only combinations not tried before.
//!
//! The evaluator is a trait so the heuristic's control flow can be driven by a
//! fixed lookup table (see [`LookupEvaluator`]) as well as by real training.

mod evaluator;
mod heuristic;

pub use evaluator::{evaluate_combo, CvRecord, LookupEntry, LookupEvaluator, MlpEvaluator};
pub use heuristic::{heuristic_search, HeuristicOutcome, IterationRecord, SearchTrace, StopReason};

use crate::datasets::{DataError, Dataset};
use crate::mlp::TrainingSettings;
use crate::LayerCombo;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid neuron range {n_min}..={n_max}")]
    InvalidRange { n_min: usize, n_max: usize },
    #[error("heuristic needs exactly one starting combination, got {0}")]
    EmptyInput(usize),
    #[error("no candidates to search")]
    EmptyCandidates,
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("lookup table: {0}")]
    Lookup(String),
}

/// Loop-guard comparison used by [`heuristic_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    /// Keep going while `Δ >= α` and `RMSE_curr > RMSE_prev`.
    PaperFaithful,
    /// Keep going while `Δ >= α` and `RMSE_curr < RMSE_prev` once two real
    /// iterations have been compared; the two sentinel-driven checks before that
    /// pass as in [`StoppingRule::PaperFaithful`].
    ImprovementMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Minimum relative RMSE change required to keep iterating.
    pub alpha: f64,
    pub n_layers: usize,
    pub n_max_input: usize,
    /// Starting RMSE sentinel `K`.
    pub initial_threshold: f64,
    pub cv_folds: usize,
    pub model: TrainingSettings,
    pub split_seed: u64,
    pub stopping_rule: StoppingRule,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_layers: 1,
            n_max_input: 10,
            initial_threshold: 1e6,
            cv_folds: 5,
            model: TrainingSettings::default(),
            split_seed: 0,
            stopping_rule: StoppingRule::PaperFaithful,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.n_layers == 0 || self.n_max_input == 0 {
            return bad("n_layers and n_max_input must be at least 1");
        }
        if !(self.initial_threshold > 1.0) {
            return bad("initial threshold K must exceed 1");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        Ok(())
    }
}

/// Duplicate-free, lexicographically sorted combinations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet(Vec<LayerCombo>);

impl CandidateSet {
    pub fn new(mut combos: Vec<LayerCombo>) -> Self {
        combos.sort();
        combos.dedup();
        Self(combos)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LayerCombo> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[LayerCombo] {
        &self.0
    }

    pub fn contains(&self, combo: &LayerCombo) -> bool {
        self.0.binary_search(combo).is_ok()
    }

    /// Smallest and largest neuron count over every layer of every combination.
    pub fn neuron_bounds(&self) -> Option<(usize, usize)> {
        let lo = self.0.iter().map(LayerCombo::min_size).min()?;
        let hi = self.0.iter().map(LayerCombo::max_size).max()?;
        Some((lo, hi))
    }

    pub fn retain(&mut self, keep: impl FnMut(&LayerCombo) -> bool) {
        self.0.retain(keep);
    }
}

impl<'a> IntoIterator for &'a CandidateSet {
    type Item = &'a LayerCombo;
    type IntoIter = std::slice::Iter<'a, LayerCombo>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Every combination of `n_layers` sizes drawn from `n_min..=n_max`, in
/// lexicographic order.
pub fn combinations(n_min: usize, n_max: usize, n_layers: usize) -> Result<CandidateSet, SearchError> {
    if n_min == 0 || n_min > n_max || n_layers == 0 {
        return Err(SearchError::InvalidRange { n_min, n_max });
    }
    let width = n_max - n_min + 1;
    let total = width.pow(n_layers as u32);
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![n_min; n_layers];
    for _ in 0..total {
        out.push(LayerCombo::new(digits.clone()).expect("sizes >= 1"));
        // odometer increment, last layer fastest
        for d in digits.iter_mut().rev() {
            if *d < n_max {
                *d += 1;
                break;
            }
            *d = n_min;
        }
    }
    Ok(CandidateSet(out))
}

/// `{(1,..,1), (2,..,2), .., (m,..,m)}`.
pub fn diagonal_init(n_max_input: usize, n_layers: usize) -> CandidateSet {
    CandidateSet((1..=n_max_input).map(|w| LayerCombo::uniform(w, n_layers)).collect())
}

/// Neuron range for iteration `i >= 1`: the previous window's smallest count minus
/// `i` (at least 1) up to its largest count plus one (at most `n_max_input`).
pub fn next_window(previous: &CandidateSet, i: usize, n_max_input: usize) -> (usize, usize) {
    let (lo, hi) = previous
        .neuron_bounds()
        .expect("window is computed from a non-empty set");
    (lo.saturating_sub(i).max(1), (hi + 1).min(n_max_input))
}

/// One trained (or looked-up) candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub combo: LayerCombo,
    #[serde(with = "crate::floats::opt_f64_lossless", default)]
    pub cv_score: Option<f64>,
    #[serde(with = "crate::floats::opt_f64_lossless", default)]
    pub test_score: Option<f64>,
    #[serde(with = "crate::floats::opt_f64_lossless", default)]
    pub test_rmse: Option<f64>,
    pub wall_time_s: f64,
    pub failed: bool,
}

impl FitRecord {
    pub fn failed(combo: LayerCombo, wall_time_s: f64) -> Self {
        Self {
            combo,
            cv_score: None,
            test_score: None,
            test_rmse: Some(f64::INFINITY),
            wall_time_s,
            failed: true,
        }
    }

    /// Test RMSE, `+inf` for failed fits.
    pub fn rmse(&self) -> f64 {
        match (self.failed, self.test_rmse) {
            (false, Some(r)) if !r.is_nan() => r,
            _ => f64::INFINITY,
        }
    }
}

/// Scores candidates by cross-validation (`cv_score`, higher is better) and by a
/// full train/test fit (`evaluate`).
pub trait ComboEvaluator: Sync {
    fn cv_score(&self, combo: &LayerCombo) -> CvRecord;
    fn evaluate(&self, combo: &LayerCombo) -> FitRecord;
    /// Model trainings performed by one `cv_score` call.
    fn folds_per_cv(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_combo: LayerCombo,
    #[serde(with = "crate::floats::f64_lossless")]
    pub best_cv_score: f64,
    /// One entry per candidate, in candidate order.
    pub scores: Vec<CvRecord>,
}

/// Cross-validates every candidate and returns the best mean score. Ties go to the
/// earlier (lexicographically smaller) candidate; failed candidates score `-inf`.
pub fn grid_search_cv<E: ComboEvaluator + ?Sized>(
    candidates: &CandidateSet,
    evaluator: &E,
) -> Result<GridResult, SearchError> {
    if candidates.is_empty() {
        return Err(SearchError::EmptyCandidates);
    }
    let scores: Vec<CvRecord> = candidates
        .as_slice()
        .par_iter()
        .map(|c| evaluator.cv_score(c))
        .collect();
    let mut best = 0;
    for (i, r) in scores.iter().enumerate() {
        if r.cv_score > scores[best].cv_score {
            best = i;
        }
    }
    Ok(GridResult {
        best_combo: scores[best].combo.clone(),
        best_cv_score: scores[best].cv_score,
        scores,
    })
}

/// Fits every candidate (in parallel) and returns records in candidate order.
pub(crate) fn evaluate_all<E: ComboEvaluator + ?Sized>(candidates: &CandidateSet, evaluator: &E) -> Vec<FitRecord> {
    candidates
        .as_slice()
        .par_iter()
        .map(|c| evaluator.evaluate(c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method1Outcome {
    pub best: FitRecord,
    pub grid: GridResult,
    pub elapsed_s: f64,
    /// Distinct combinations cross-validated.
    pub n_candidates: usize,
    /// Individual model trainings, final refit included.
    pub model_fits: usize,
}

/// Exhaustive grid over `[1, n_max_input]^N`, then a test-set evaluation of the
/// winner. `elapsed_s` covers both.
pub fn run_method1_with<E: ComboEvaluator + ?Sized>(
    evaluator: &E,
    config: &SearchConfig,
) -> Result<Method1Outcome, SearchError> {
    config.validate()?;
    let start = Instant::now();
    let candidates = combinations(1, config.n_max_input, config.n_layers)?;
    let grid = grid_search_cv(&candidates, evaluator)?;
    let best = evaluator.evaluate(&grid.best_combo);
    Ok(Method1Outcome {
        n_candidates: candidates.len(),
        model_fits: candidates.len() * evaluator.folds_per_cv() + 1,
        best,
        grid,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run_method1(train: &Dataset, test: &Dataset, config: &SearchConfig) -> Result<Method1Outcome, SearchError> {
    let evaluator = MlpEvaluator::new(train, test, config)?;
    run_method1_with(&evaluator, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method2Outcome {
    /// Test-set record of the heuristic's returned combination.
    pub best: FitRecord,
    #[serde(with = "crate::floats::f64_lossless")]
    pub final_rmse: f64,
    /// Cross-validated diagonal initialization that picked the starting combination.
    pub init_grid: GridResult,
    pub trace: SearchTrace,
    /// Diagonal grid plus heuristic.
    pub elapsed_s: f64,
    /// Distinct combinations fitted across initialization and heuristic.
    pub distinct_combos: usize,
    pub model_fits: usize,
}

/// Cross-validated diagonal initialization followed by [`heuristic_search`].
pub fn run_method2_with<E: ComboEvaluator + ?Sized>(
    evaluator: &E,
    config: &SearchConfig,
) -> Result<Method2Outcome, SearchError> {
    config.validate()?;
    let start = Instant::now();
    let diagonal = diagonal_init(config.n_max_input, config.n_layers);
    let init_grid = grid_search_cv(&diagonal, evaluator)?;
    let h0 = CandidateSet::new(vec![init_grid.best_combo.clone()]);
    let outcome = heuristic_search(&h0, evaluator, config)?;
    let elapsed_s = start.elapsed().as_secs_f64();

    let mut distinct: Vec<&LayerCombo> = diagonal.iter().chain(&outcome.trace.fitted_so_far).collect();
    distinct.sort();
    distinct.dedup();
    let best = outcome
        .best
        .clone()
        .unwrap_or_else(|| FitRecord::failed(init_grid.best_combo.clone(), 0.0));
    Ok(Method2Outcome {
        best,
        final_rmse: outcome.final_rmse,
        distinct_combos: distinct.len(),
        model_fits: diagonal.len() * evaluator.folds_per_cv() + outcome.trace.fitted_so_far.len(),
        init_grid,
        trace: outcome.trace,
        elapsed_s,
    })
}

pub fn run_method2(train: &Dataset, test: &Dataset, config: &SearchConfig) -> Result<Method2Outcome, SearchError> {
    let evaluator = MlpEvaluator::new(train, test, config)?;
    run_method2_with(&evaluator, config)
}

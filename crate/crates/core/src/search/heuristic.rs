//! Windowed heuristic search.
//!
//! ```text
//! RMSE_prev <- K, RMSE_curr <- K², i <- 0
//! while Δ >= α and guard(RMSE_curr, RMSE_prev):
//!     RMSE_prev <- RMSE_curr
//!     H(i+1) <- H(0)                                  if i = 0
//!               Combinations(window(H(i), i)) \ fitted otherwise
//!     stop if H(i+1) is empty
//!     fit H(i+1); best <- lowest test RMSE of this iteration
//!     if i = 0: RMSE_prev <- RMSE_model / 2
//!     RMSE_curr <- RMSE_model; i <- i + 1
//! ```
//!
//! `Δ = |RMSE_curr - RMSE_prev| / RMSE_prev` is re-evaluated before every check.
//! The halving at `i = 0` makes `Δ = 1` and `RMSE_curr = 2·RMSE_prev`, which forces
//! a second iteration. The window for iteration `i` is taken over the full
//! `Combinations` output of the previous iteration (before removing combinations
//! already fitted), so its bounds only ever widen.

use super::{
    combinations, evaluate_all, next_window, CandidateSet, ComboEvaluator, FitRecord, SearchConfig, SearchError,
    StoppingRule,
};
use crate::LayerCombo;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Neuron range `(n_min, n_max)`; `None` on the first iteration.
    pub window: Option<(usize, usize)>,
    /// Combinations fitted in this iteration (never fitted before).
    pub candidates: CandidateSet,
    pub fits: Vec<FitRecord>,
    /// Lowest-RMSE fit of this iteration, if any succeeded.
    pub best: Option<FitRecord>,
    #[serde(with = "crate::floats::f64_lossless")]
    pub rmse_prev: f64,
    #[serde(with = "crate::floats::f64_lossless")]
    pub rmse_curr: f64,
    /// Relative change checked by the next loop guard.
    #[serde(with = "crate::floats::f64_lossless")]
    pub delta: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GuardFailed,
    NoNewCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub iterations: Vec<IterationRecord>,
    /// Every combination fitted, in fitting order.
    pub fitted_so_far: Vec<LayerCombo>,
    /// Returned combination: the best of the last iteration that fitted anything.
    pub best: Option<LayerCombo>,
    /// Lowest RMSE seen in any iteration. Diagnostic only; does not affect `best`.
    pub global_best: Option<FitRecord>,
    pub stop_reason: StopReason,
    pub total_time_s: f64,
}

impl SearchTrace {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn fits(&self) -> impl Iterator<Item = (usize, &FitRecord)> {
        self.iterations
            .iter()
            .flat_map(|it| it.fits.iter().map(move |f| (it.index, f)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicOutcome {
    pub final_rmse: f64,
    pub best: Option<FitRecord>,
    pub trace: SearchTrace,
}

fn guard(rule: StoppingRule, completed: usize, prev: f64, curr: f64, alpha: f64) -> bool {
    let delta = ((curr - prev) / prev).abs();
    if !(delta >= alpha) {
        return false;
    }
    match rule {
        StoppingRule::PaperFaithful => curr > prev,
        // the first two checks compare against the K sentinel and the halved RMSE
        StoppingRule::ImprovementMode if completed < 2 => curr > prev,
        StoppingRule::ImprovementMode => curr < prev,
    }
}

/// Lowest RMSE among successful fits, earliest candidate on ties.
fn iteration_best(fits: &[FitRecord]) -> Option<&FitRecord> {
    fits.iter()
        .filter(|f| !f.failed && f.rmse().is_finite())
        .fold(None, |best: Option<&FitRecord>, f| match best {
            Some(b) if b.rmse() <= f.rmse() => Some(b),
            _ => Some(f),
        })
}

pub fn heuristic_search<E: ComboEvaluator + ?Sized>(
    h0: &CandidateSet,
    evaluator: &E,
    config: &SearchConfig,
) -> Result<HeuristicOutcome, SearchError> {
    if h0.len() != 1 {
        return Err(SearchError::EmptyInput(h0.len()));
    }
    config.validate()?;
    let start = Instant::now();
    let k = config.initial_threshold;
    let (mut rmse_prev, mut rmse_curr) = (k, k * k);
    let mut fitted: Vec<LayerCombo> = Vec::new();
    let mut fitted_set: BTreeSet<LayerCombo> = BTreeSet::new();
    let mut window_source = h0.clone();
    let mut best: Option<FitRecord> = None;
    let mut global_best: Option<FitRecord> = None;
    let mut iterations = Vec::new();
    let mut i = 0;

    let stop_reason = loop {
        if !guard(config.stopping_rule, i, rmse_prev, rmse_curr, config.alpha) {
            break StopReason::GuardFailed;
        }
        let iter_start = Instant::now();
        rmse_prev = rmse_curr;
        let (window, candidates) = if i == 0 {
            (None, h0.clone())
        } else {
            let (lo, hi) = next_window(&window_source, i, config.n_max_input);
            let full = combinations(lo, hi, config.n_layers)?;
            let mut fresh = full.clone();
            fresh.retain(|c| !fitted_set.contains(c));
            window_source = full;
            (Some((lo, hi)), fresh)
        };

        if candidates.is_empty() {
            iterations.push(IterationRecord {
                index: i,
                window,
                candidates,
                fits: Vec::new(),
                best: None,
                rmse_prev,
                rmse_curr,
                delta: ((rmse_curr - rmse_prev) / rmse_prev).abs(),
                wall_time_s: iter_start.elapsed().as_secs_f64(),
            });
            break StopReason::NoNewCandidates;
        }

        let fits = evaluate_all(&candidates, evaluator);
        let iter_best = iteration_best(&fits).cloned();
        for c in &candidates {
            fitted_set.insert(c.clone());
            fitted.push(c.clone());
        }
        best = iter_best.clone();
        let rmse_model = iter_best.as_ref().map_or(f64::INFINITY, FitRecord::rmse);
        if i == 0 {
            rmse_prev = 0.5 * rmse_model;
        }
        rmse_curr = rmse_model;
        if let Some(b) = &iter_best {
            if global_best.as_ref().is_none_or(|g| b.rmse() < g.rmse()) {
                global_best = Some(b.clone());
            }
        }
        log::debug!(
            "iteration {i}: {} candidates, best {:?}, rmse {rmse_curr}",
            candidates.len(),
            iter_best.as_ref().map(|b| b.combo.to_string())
        );
        iterations.push(IterationRecord {
            index: i,
            window,
            candidates,
            fits,
            best: iter_best,
            rmse_prev,
            rmse_curr,
            delta: ((rmse_curr - rmse_prev) / rmse_prev).abs(),
            wall_time_s: iter_start.elapsed().as_secs_f64(),
        });
        i += 1;
    };

    Ok(HeuristicOutcome {
        final_rmse: rmse_curr,
        trace: SearchTrace {
            iterations,
            fitted_so_far: fitted,
            best: best.as_ref().map(|b| b.combo.clone()),
            global_best,
            stop_reason,
            total_time_s: start.elapsed().as_secs_f64(),
        },
        best,
    })
}

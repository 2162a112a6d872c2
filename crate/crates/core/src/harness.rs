//! Experiment plans and result aggregation.
//!
//! [`run_plan`] executes every `(method, layers, alpha, repeat)` cell of an
//! [`ExperimentPlan`] in sequence, writes one JSON trace per run, then summarizes
//! medians per cell and emits `runs.csv`, `fits.csv`, `summary.csv` and
//! `summary.txt` into the plan's output directory.

use crate::datasets::{self, DataError, Dataset, Task};
use crate::search::{self, ComboEvaluator, LookupEvaluator, Method1Outcome, Method2Outcome, MlpEvaluator, SearchError};
use crate::{LayerCombo, SearchConfig, StoppingRule, TrainingSettings};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Target column of the Boston housing CSV.
pub const BOSTON_TARGET: &str = "MEDV";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("trace document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no successful runs in cell {method} N={n_layers} alpha={}", fmt_alpha(*alpha))]
    EmptyCell {
        method: Method,
        n_layers: usize,
        alpha: Option<f64>,
    },
    #[error("no run records to emit")]
    EmptyRecords,
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    /// True for problems with the input data rather than with the computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Data(_) | HarnessError::Search(SearchError::Data(_) | SearchError::Lookup(_))
        )
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
        move |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn fmt_alpha(alpha: Option<f64>) -> String {
    alpha.map_or_else(|| "-".to_string(), |a| a.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exhaustive cross-validated grid (Method 1).
    Grid,
    /// Diagonal initialization followed by the windowed heuristic (Method 2).
    Heuristic,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Grid => "grid",
            Method::Heuristic => "heuristic",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "grid" => Ok(Method::Grid),
            "heuristic" => Ok(Method::Heuristic),
            other => Err(format!("unknown method {other:?} (expected grid or heuristic)")),
        }
    }
}

/// The four files of the MNIST distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    /// Standard uncompressed file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    BostonCsv(PathBuf),
    Mnist(MnistPaths),
    /// CSV table `combo,rmse[,score][,cv_score]` evaluated without training.
    SyntheticLookup(PathBuf),
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::BostonCsv(_) => "boston",
            DatasetSpec::Mnist(_) => "mnist",
            DatasetSpec::SyntheticLookup(_) => "lookup",
        }
    }

    pub fn files(&self) -> Vec<PathBuf> {
        match self {
            DatasetSpec::BostonCsv(p) | DatasetSpec::SyntheticLookup(p) => vec![p.clone()],
            DatasetSpec::Mnist(m) => vec![
                m.train_images.clone(),
                m.train_labels.clone(),
                m.test_images.clone(),
                m.test_labels.clone(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    pub layer_counts: Vec<usize>,
    pub alphas: Vec<f64>,
    pub repeats: usize,
    /// Repeat `r` uses split seed `base_seed + r`.
    pub base_seed: u64,
    /// Stratified `(train_n, test_n)` draw from the MNIST train and test files.
    pub mnist_subsample: Option<(usize, usize)>,
    pub max_neurons: usize,
    pub cv_folds: usize,
    /// Held-out fraction for datasets without an official split.
    pub test_fraction: f64,
    pub stopping_rule: StoppingRule,
    pub initial_threshold: f64,
    pub model: TrainingSettings,
    /// Thread cap for fits inside one grid or heuristic iteration; 0 = all cores.
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn new(dataset: DatasetSpec, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            methods: vec![Method::Grid, Method::Heuristic],
            layer_counts: vec![1, 2, 3],
            alphas: vec![0.01, 0.05, 0.10],
            repeats: 10,
            base_seed: 0,
            mnist_subsample: None,
            max_neurons: 10,
            cv_folds: 5,
            test_fraction: 0.2,
            stopping_rule: StoppingRule::PaperFaithful,
            initial_threshold: 1e6,
            model: TrainingSettings::default(),
            workers: 0,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidPlan(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.layer_counts.is_empty() {
            return bad("at least one layer count is required".into());
        }
        if let Some(n) = self.layer_counts.iter().find(|n| !(1..=3).contains(*n)) {
            return bad(format!("layer count {n} outside 1..=3"));
        }
        if self.methods.contains(&Method::Heuristic) && self.alphas.is_empty() {
            return bad("the heuristic needs at least one alpha".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} outside (0, 1)"));
        }
        if let Some((tr, te)) = self.mnist_subsample {
            if tr == 0 || te == 0 {
                return bad("MNIST subsample sizes must be positive".into());
            }
        }
        self.search_config(self.layer_counts[0], 0, self.alphas.first().copied().unwrap_or(0.05))
            .validate()?;
        Ok(())
    }

    /// Search configuration of one cell.
    pub fn search_config(&self, n_layers: usize, repeat: usize, alpha: f64) -> SearchConfig {
        SearchConfig {
            alpha,
            n_layers,
            n_max_input: self.max_neurons,
            initial_threshold: self.initial_threshold,
            cv_folds: self.cv_folds,
            model: self.model,
            split_seed: self.split_seed(repeat),
            stopping_rule: self.stopping_rule,
        }
    }

    pub fn split_seed(&self, repeat: usize) -> u64 {
        self.base_seed.wrapping_add(repeat as u64)
    }

    /// Number of runs the plan executes.
    pub fn n_runs(&self) -> usize {
        let per_repeat: usize = self
            .methods
            .iter()
            .map(|m| match m {
                Method::Grid => 1,
                Method::Heuristic => self.alphas.len(),
            })
            .sum();
        per_repeat * self.layer_counts.len() * self.repeats
    }
}

/// A dataset loaded and validated once per plan.
#[derive(Debug, Clone)]
pub enum LoadedData {
    /// Split per repeat into train/test by `test_fraction`.
    Tabular(Dataset),
    /// Official train/test files, optionally subsampled per repeat.
    Presplit {
        train: Dataset,
        test: Dataset,
        subsample: Option<(usize, usize)>,
    },
    Lookup(LookupEvaluator),
}

impl LoadedData {
    pub fn load(spec: &DatasetSpec, mnist_subsample: Option<(usize, usize)>) -> Result<Self, HarnessError> {
        Ok(match spec {
            DatasetSpec::BostonCsv(path) => LoadedData::Tabular(datasets::load_csv_regression(path, BOSTON_TARGET)?),
            DatasetSpec::Mnist(p) => LoadedData::Presplit {
                train: datasets::load_mnist(&p.train_images, &p.train_labels)?,
                test: datasets::load_mnist(&p.test_images, &p.test_labels)?,
                subsample: mnist_subsample,
            },
            DatasetSpec::SyntheticLookup(path) => LoadedData::Lookup(LookupEvaluator::load(path)?),
        })
    }

    /// Train/test datasets for one split seed; `None` for lookup tables.
    pub fn split(&self, seed: u64, test_fraction: f64) -> Result<Option<(Dataset, Dataset)>, HarnessError> {
        Ok(match self {
            LoadedData::Tabular(full) => {
                let labels = match full.task() {
                    Task::Classification => full.targets().labels(),
                    Task::Regression => None,
                };
                let s = datasets::train_test_split(full.n_samples(), test_fraction, seed, labels)?;
                Some((full.select(&s.train_idx), full.select(&s.test_idx)))
            }
            LoadedData::Presplit { train, test, subsample } => match subsample {
                None => Some((train.clone(), test.clone())),
                Some((train_n, test_n)) => {
                    let pick = |d: &Dataset, n: usize| {
                        let labels = d.targets().labels().expect("presplit data is labelled");
                        d.select(&datasets::stratified_subsample(labels, n, seed))
                    };
                    Some((pick(train, *train_n), pick(test, *test_n)))
                }
            },
            LoadedData::Lookup(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset: String,
    pub method: Method,
    pub n_layers: usize,
    /// `None` for grid runs, which do not depend on alpha.
    pub alpha: Option<f64>,
    pub repeat: usize,
    pub split_seed: u64,
    pub failed: bool,
    /// Test R² (regression) or accuracy (classification).
    pub score: Option<f64>,
    pub rmse: Option<f64>,
    pub elapsed_s: f64,
    pub best_combo: LayerCombo,
    pub distinct_combos: usize,
    pub model_fits: usize,
    /// Relative to the output directory.
    pub trace_path: String,
}

/// One fitted combination inside one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub run_id: String,
    pub method: Method,
    /// `cv` for cross-validation, `test` for a train/test fit.
    pub stage: String,
    /// Heuristic iteration; empty outside the heuristic loop.
    pub iteration: Option<usize>,
    pub combo: LayerCombo,
    pub cv_score: Option<f64>,
    pub test_score: Option<f64>,
    pub test_rmse: Option<f64>,
    pub fit_seconds: f64,
}

/// Full outcome of one run, written to `traces/<run_id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum RunDocument {
    Grid { run_id: String, outcome: Method1Outcome },
    Heuristic { run_id: String, outcome: Method2Outcome },
}

impl RunDocument {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub dataset: String,
    pub method: Method,
    pub n_layers: usize,
    pub alpha: Option<f64>,
    /// Runs that entered the medians.
    pub runs: usize,
    pub failed: usize,
    pub median_score: f64,
    pub median_rmse: f64,
    pub median_elapsed_s: f64,
    pub median_distinct_combos: f64,
    pub median_model_fits: f64,
    /// Best combination of every run in repeat order, `;`-separated.
    pub best_combos: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub cells: Vec<SummaryCell>,
}

impl SummaryTable {
    pub fn cell(&self, method: Method, n_layers: usize, alpha: Option<f64>) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.n_layers == n_layers && c.alpha == alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub records: Vec<RunRecord>,
    pub fits: Vec<FitRow>,
    pub summary: SummaryTable,
}

/// Middle order statistic, averaging the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Groups records by `(method, n_layers, alpha)` and takes medians over the
/// non-failed runs of each group.
pub fn summarize(records: &[RunRecord]) -> Result<SummaryTable, HarnessError> {
    type Key = (Method, usize, Option<u64>);
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.method, r.n_layers, r.alpha.map(f64::to_bits)))
            .or_default()
            .push(r);
    }
    let mut cells = Vec::with_capacity(groups.len());
    for ((method, n_layers, alpha_bits), mut group) in groups {
        let alpha = alpha_bits.map(f64::from_bits);
        group.sort_by_key(|r| r.repeat);
        let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| !r.failed).collect();
        let n_failed = group.len() - ok.len();
        if n_failed > 0 {
            log::warn!(
                "{method} N={n_layers} alpha={}: {n_failed} failed run(s) excluded from medians",
                fmt_alpha(alpha)
            );
        }
        let med = |f: &dyn Fn(&RunRecord) -> f64| median(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let Some(median_elapsed_s) = med(&|r| r.elapsed_s) else {
            return Err(HarnessError::EmptyCell {
                method,
                n_layers,
                alpha,
            });
        };
        cells.push(SummaryCell {
            dataset: group[0].dataset.clone(),
            method,
            n_layers,
            alpha,
            runs: ok.len(),
            failed: n_failed,
            median_score: med(&|r| r.score.unwrap_or(f64::NAN)).unwrap_or(f64::NAN),
            median_rmse: med(&|r| r.rmse.unwrap_or(f64::NAN)).unwrap_or(f64::NAN),
            median_elapsed_s,
            median_distinct_combos: med(&|r| r.distinct_combos as f64).unwrap_or(f64::NAN),
            median_model_fits: med(&|r| r.model_fits as f64).unwrap_or(f64::NAN),
            best_combos: group
                .iter()
                .map(|r| r.best_combo.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    Ok(SummaryTable { cells })
}

/// Loads the data, executes every cell, writes traces, summarizes and emits.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutcome, HarnessError> {
    plan.validate()?;
    let data = LoadedData::load(&plan.dataset, plan.mnist_subsample)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let traces_dir = plan.output_dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(HarnessError::io(&traces_dir))?;

    let (records, fits) = pool.install(|| execute(plan, &data))?;
    write_csv(&plan.output_dir.join("runs.csv"), &records)?;
    write_csv(&plan.output_dir.join("fits.csv"), &fits)?;
    let summary = summarize(&records)?;
    emit(&summary, &records, &plan.output_dir)?;
    Ok(PlanOutcome { records, fits, summary })
}

fn execute(plan: &ExperimentPlan, data: &LoadedData) -> Result<(Vec<RunRecord>, Vec<FitRow>), HarnessError> {
    let total = plan.n_runs();
    let mut records = Vec::with_capacity(total);
    let mut fits = Vec::new();
    for &n_layers in &plan.layer_counts {
        for repeat in 0..plan.repeats {
            let seed = plan.split_seed(repeat);
            let split = data.split(seed, plan.test_fraction)?;
            let base = plan.search_config(n_layers, repeat, plan.alphas.first().copied().unwrap_or(0.05));
            let mlp_eval = match &split {
                Some((train, test)) => Some(MlpEvaluator::new(train, test, &base)?),
                None => None,
            };
            let evaluator: &dyn ComboEvaluator = match (&mlp_eval, data) {
                (Some(e), _) => e,
                (None, LoadedData::Lookup(l)) => l,
                (None, _) => unreachable!("only lookup data has no split"),
            };
            for &method in &plan.methods {
                let alphas: Vec<Option<f64>> = match method {
                    Method::Grid => vec![None],
                    Method::Heuristic => plan.alphas.iter().copied().map(Some).collect(),
                };
                for alpha in alphas {
                    let config = SearchConfig {
                        alpha: alpha.unwrap_or(base.alpha),
                        ..base.clone()
                    };
                    let run_id = run_id(method, n_layers, alpha, repeat);
                    let (record, rows) = run_one(plan, evaluator, &config, method, alpha, repeat, &run_id)?;
                    log::info!(
                        "[{}/{}] {run_id}: best {} score {} rmse {} in {:.2}s",
                        records.len() + 1,
                        total,
                        record.best_combo,
                        fmt_opt(record.score),
                        fmt_opt(record.rmse),
                        record.elapsed_s
                    );
                    records.push(record);
                    fits.extend(rows);
                }
            }
        }
    }
    Ok((records, fits))
}

fn run_id(method: Method, n_layers: usize, alpha: Option<f64>, repeat: usize) -> String {
    match alpha {
        None => format!("{method}-n{n_layers}-r{repeat}"),
        Some(a) => format!("{method}-n{n_layers}-a{a}-r{repeat}"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn run_one(
    plan: &ExperimentPlan,
    evaluator: &dyn ComboEvaluator,
    config: &SearchConfig,
    method: Method,
    alpha: Option<f64>,
    repeat: usize,
    run_id: &str,
) -> Result<(RunRecord, Vec<FitRow>), HarnessError> {
    let trace_path = format!("traces/{run_id}.json");
    let row = |stage: &str, iteration: Option<usize>, f: &crate::FitRecord| FitRow {
        run_id: run_id.to_string(),
        method,
        stage: stage.to_string(),
        iteration,
        combo: f.combo.clone(),
        cv_score: f.cv_score,
        test_score: f.test_score,
        test_rmse: f.test_rmse,
        fit_seconds: f.wall_time_s,
    };
    let cv_row = |c: &search::CvRecord| FitRow {
        run_id: run_id.to_string(),
        method,
        stage: "cv".to_string(),
        iteration: None,
        combo: c.combo.clone(),
        cv_score: Some(c.cv_score),
        test_score: None,
        test_rmse: None,
        fit_seconds: c.wall_time_s,
    };
    let (record, rows, document) = match method {
        Method::Grid => {
            let out = search::run_method1_with(evaluator, config)?;
            let mut rows: Vec<FitRow> = out.grid.scores.iter().map(cv_row).collect();
            rows.push(row("test", None, &out.best));
            let record = RunRecord {
                run_id: run_id.to_string(),
                dataset: plan.dataset.name().to_string(),
                method,
                n_layers: config.n_layers,
                alpha,
                repeat,
                split_seed: config.split_seed,
                failed: out.best.failed,
                score: out.best.test_score,
                rmse: out.best.test_rmse,
                elapsed_s: out.elapsed_s,
                best_combo: out.best.combo.clone(),
                distinct_combos: out.n_candidates,
                model_fits: out.model_fits,
                trace_path: trace_path.clone(),
            };
            let doc = RunDocument::Grid {
                run_id: run_id.to_string(),
                outcome: out,
            };
            (record, rows, doc)
        }
        Method::Heuristic => {
            let out = search::run_method2_with(evaluator, config)?;
            let mut rows: Vec<FitRow> = out.init_grid.scores.iter().map(cv_row).collect();
            rows.extend(out.trace.fits().map(|(i, f)| row("test", Some(i), f)));
            let record = RunRecord {
                run_id: run_id.to_string(),
                dataset: plan.dataset.name().to_string(),
                method,
                n_layers: config.n_layers,
                alpha,
                repeat,
                split_seed: config.split_seed,
                failed: out.best.failed,
                score: out.best.test_score,
                rmse: out.best.test_rmse,
                elapsed_s: out.elapsed_s,
                best_combo: out.best.combo.clone(),
                distinct_combos: out.distinct_combos,
                model_fits: out.model_fits,
                trace_path: trace_path.clone(),
            };
            let doc = RunDocument::Heuristic {
                run_id: run_id.to_string(),
                outcome: out,
            };
            (record, rows, doc)
        }
    };
    let path = plan.output_dir.join(&trace_path);
    fs::write(&path, serde_json::to_string_pretty(&document)?).map_err(HarnessError::io(&path))?;
    Ok((record, rows))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(HarnessError::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(HarnessError::csv(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(HarnessError::csv(path))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryCell>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(HarnessError::csv(path))
}

/// Writes `summary.csv`, `runs.csv` and `summary.txt`. Nothing is written when
/// `records` is empty.
pub fn emit(summary: &SummaryTable, records: &[RunRecord], output_dir: &Path) -> Result<(), HarnessError> {
    if records.is_empty() || summary.cells.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    fs::create_dir_all(output_dir).map_err(HarnessError::io(output_dir))?;
    write_csv(&output_dir.join("summary.csv"), &summary.cells)?;
    write_csv(&output_dir.join("runs.csv"), records)?;
    let path = output_dir.join("summary.txt");
    let mut f = fs::File::create(&path).map_err(HarnessError::io(&path))?;
    f.write_all(render_text(summary).as_bytes())
        .map_err(HarnessError::io(&path))
}

/// One table per `(method, alpha)` with a column per layer count.
type CellFormat = Box<dyn Fn(&SummaryCell) -> String>;

pub fn render_text(summary: &SummaryTable) -> String {
    let mut blocks: Vec<(Method, Option<u64>)> = summary
        .cells
        .iter()
        .map(|c| (c.method, c.alpha.map(f64::to_bits)))
        .collect();
    blocks.sort_by(|a, b| a.0.cmp(&b.0).then(cmp_alpha(a.1, b.1)));
    blocks.dedup();

    let mut out = String::new();
    for (method, alpha_bits) in blocks {
        let alpha = alpha_bits.map(f64::from_bits);
        let cells: Vec<&SummaryCell> = summary
            .cells
            .iter()
            .filter(|c| c.method == method && c.alpha == alpha)
            .collect();
        let title = match method {
            Method::Grid => "Method 1 (grid search)".to_string(),
            Method::Heuristic => format!("Method 2 (heuristic), alpha = {}", fmt_alpha(alpha)),
        };
        out.push_str(&format!("{title} [{}]\n", cells[0].dataset));
        let rows: [(&str, CellFormat); 5] = [
            ("Median Score", Box::new(|c| format!("{:.2}", c.median_score))),
            ("Median RMSE", Box::new(|c| format!("{:.2}", c.median_rmse))),
            (
                "Median Time Elapsed (s)",
                Box::new(|c| format!("{:.2}", c.median_elapsed_s)),
            ),
            (
                "Median Distinct Combos",
                Box::new(|c| format!("{}", c.median_distinct_combos)),
            ),
            ("Runs (failed)", Box::new(|c| format!("{} ({})", c.runs, c.failed))),
        ];
        let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let header: Vec<String> = cells.iter().map(|c| format!("N={}", c.n_layers)).collect();
        let body: Vec<Vec<String>> = rows.iter().map(|(_, f)| cells.iter().map(|c| f(c)).collect()).collect();
        let col_w = header
            .iter()
            .chain(body.iter().flatten())
            .map(String::len)
            .max()
            .unwrap_or(0);
        out.push_str(&format!("{:label_w$}", ""));
        for h in &header {
            out.push_str(&format!("  {h:>col_w$}"));
        }
        out.push('\n');
        for ((label, _), values) in rows.iter().zip(&body) {
            out.push_str(&format!("{label:label_w$}"));
            for v in values {
                out.push_str(&format!("  {v:>col_w$}"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn cmp_alpha(a: Option<u64>, b: Option<u64>) -> std::cmp::Ordering {
    let key = |x: Option<u64>| x.map_or(f64::NEG_INFINITY, f64::from_bits);
    key(a).total_cmp(&key(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: Method, n: usize, alpha: Option<f64>, repeat: usize, score: f64) -> RunRecord {
        RunRecord {
            run_id: run_id(method, n, alpha, repeat),
            dataset: "lookup".into(),
            method,
            n_layers: n,
            alpha,
            repeat,
            split_seed: repeat as u64,
            failed: false,
            score: Some(score),
            rmse: Some(1.0 - score),
            elapsed_s: score * 10.0,
            best_combo: LayerCombo::uniform(repeat + 1, n),
            distinct_combos: 3,
            model_fits: 7,
            trace_path: format!("traces/{}.json", run_id(method, n, alpha, repeat)),
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[10.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn summarize_excludes_failed_runs() {
        let mut rs: Vec<RunRecord> = (0..3)
            .map(|r| record(Method::Grid, 1, None, r, 0.5 + r as f64 * 0.1))
            .collect();
        rs[2].failed = true;
        let t = summarize(&rs).unwrap();
        let c = t.cell(Method::Grid, 1, None).unwrap();
        assert_eq!((c.runs, c.failed), (2, 1));
        assert!((c.median_score - 0.55).abs() < 1e-12);
        assert_eq!(c.best_combos, "1;2;3");
    }

    #[test]
    fn summarize_reports_empty_cell() {
        let mut r = record(Method::Heuristic, 2, Some(0.05), 0, 0.5);
        r.failed = true;
        assert!(matches!(
            summarize(&[r]),
            Err(HarnessError::EmptyCell { n_layers: 2, .. })
        ));
    }

    #[test]
    fn emit_refuses_empty_records() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(matches!(
            emit(&SummaryTable::default(), &[], &out),
            Err(HarnessError::EmptyRecords)
        ));
        assert!(!out.exists());
    }

    #[test]
    fn one_cell_summary_has_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let rs = vec![record(Method::Grid, 1, None, 0, 0.8)];
        emit(&summarize(&rs).unwrap(), &rs, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(fs::read_to_string(dir.path().join("summary.txt"))
            .unwrap()
            .contains("Median Score"));
    }

    #[test]
    fn runs_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rs = vec![
            record(Method::Grid, 1, None, 0, 0.8),
            record(Method::Heuristic, 3, Some(0.1), 1, 0.7),
        ];
        rs[1].failed = true;
        rs[1].score = None;
        rs[1].rmse = None;
        let t = summarize(&rs[..1]).unwrap();
        emit(&t, &rs, dir.path()).unwrap();
        assert_eq!(read_runs_csv(&dir.path().join("runs.csv")).unwrap(), rs);
        assert_eq!(read_summary_csv(&dir.path().join("summary.csv")).unwrap(), t.cells);
    }

    #[test]
    fn plan_validation() {
        let mut p = ExperimentPlan::new(DatasetSpec::SyntheticLookup("x.csv".into()), "out");
        assert!(p.validate().is_ok());
        p.repeats = 0;
        assert!(p.validate().is_err());
        p.repeats = 1;
        p.alphas = vec![0.0];
        assert!(p.validate().is_err());
        p.alphas = vec![0.05];
        p.layer_counts = vec![4];
        assert!(p.validate().is_err());
    }

    #[test]
    fn run_counts() {
        let mut p = ExperimentPlan::new(DatasetSpec::SyntheticLookup("x.csv".into()), "out");
        p.repeats = 5;
        assert_eq!(p.n_runs(), 5 * 3 + 5 * 3 * 3);
        p.methods = vec![Method::Grid];
        p.layer_counts = vec![1];
        p.repeats = 1;
        assert_eq!(p.n_runs(), 1);
    }

    #[test]
    fn lookup_plan_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("table.csv");
        fs::write(&table, "combo,rmse\n1,5.0\n2,4.0\n3,3.0\n").unwrap();
        let mut p = ExperimentPlan::new(DatasetSpec::SyntheticLookup(table), dir.path().join("out"));
        p.layer_counts = vec![1];
        p.alphas = vec![0.01];
        p.repeats = 2;
        p.max_neurons = 3;
        p.workers = 1;
        let out = run_plan(&p).unwrap();
        assert_eq!(out.records.len(), 4);
        let grid = out.summary.cell(Method::Grid, 1, None).unwrap();
        assert_eq!(grid.best_combos, "3;3");
        assert_eq!(grid.median_rmse, 3.0);
        for r in &out.records {
            assert!(p.output_dir.join(&r.trace_path).is_file());
            assert!(RunDocument::load(&p.output_dir.join(&r.trace_path)).is_ok());
        }
        for name in ["runs.csv", "fits.csv", "summary.csv", "summary.txt"] {
            assert!(p.output_dir.join(name).is_file(), "{name}");
        }
    }

    #[test]
    fn missing_data_aborts_before_any_run() {
        let dir = tempfile::tempdir().unwrap();
        let p = ExperimentPlan::new(
            DatasetSpec::BostonCsv(dir.path().join("missing.csv")),
            dir.path().join("out"),
        );
        let err = run_plan(&p).unwrap_err();
        assert!(err.is_data_error(), "{err}");
        assert!(!p.output_dir.exists());
    }
}

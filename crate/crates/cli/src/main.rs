//! `bench`: run hidden-layer size search experiments from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

mod settings;

use clap::{Args, Parser, Subcommand};
use hls_core::harness::{self, HarnessError, LoadedData, Method};
use hls_core::lbfgs::write_trace_csv;
use hls_core::mlp::{self, MlpConfig};
use hls_core::LayerCombo;
use settings::Settings;
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bench", version, about = "Hidden-layer size search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a full experiment plan and write runs, traces and summaries.
    Run(PlanArgs),
    /// Run a single search and print the best combination.
    Search(SearchArgs),
    /// Validate dataset files and print their SHA-256 checksums.
    VerifyData(DataArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// boston, mnist or lookup.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the dataset files (or the lookup CSV itself).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Stratified MNIST subsample as TRAIN,TEST, or `full`.
    #[arg(long)]
    mnist_subsample: Option<String>,
    /// Flat key=value file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_neurons: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// paper or improve.
    #[arg(long)]
    stopping_rule: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    l2_alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated subset of grid,heuristic.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated hidden-layer counts.
    #[arg(long)]
    layers: Option<String>,
    /// Comma-separated alpha values.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// grid or heuristic.
    #[arg(long, default_value = "heuristic")]
    method: Method,
    /// Number of hidden layers.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also retrain the best combination and write its per-iteration optimizer trace.
    #[arg(long)]
    lbfgs_trace: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidPlan(m) => Failure::Usage(m),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Search(a) => search(a),
        Command::VerifyData(a) => verify_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("data error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn base_settings(data: &DataArgs, model: Option<&ModelArgs>) -> Result<Settings, Failure> {
    let mut s = match &data.config {
        Some(p) => Settings::load(p).map_err(Failure::Usage)?,
        None => Settings::default(),
    };
    s.set("dataset", data.dataset.as_ref());
    s.set("data-dir", data.data_dir.as_ref().map(|p| p.display()));
    s.set("mnist-subsample", data.mnist_subsample.as_ref());
    if let Some(m) = model {
        s.set("seed", m.seed);
        s.set("max-neurons", m.max_neurons);
        s.set("cv-folds", m.cv_folds);
        s.set("test-fraction", m.test_fraction);
        s.set("stopping-rule", m.stopping_rule.as_ref());
        s.set("workers", m.workers);
        s.set("max-iter", m.max_iter);
        s.set("l2-alpha", m.l2_alpha);
        s.set("out", m.out.as_ref().map(|p| p.display()));
    }
    Ok(s)
}

fn run(a: PlanArgs) -> Result<(), Failure> {
    let mut s = base_settings(&a.data, Some(&a.model))?;
    s.set("methods", a.methods.as_ref());
    s.set("layers", a.layers.as_ref());
    s.set("alphas", a.alphas.as_ref());
    s.set("repeats", a.repeats);
    let plan = s.plan().map_err(Failure::Usage)?;
    plan.validate()?;
    let out = harness::run_plan(&plan)?;
    print!("{}", harness::render_text(&out.summary));
    println!("{} runs written to {}", out.records.len(), plan.output_dir.display());
    Ok(())
}

fn search(a: SearchArgs) -> Result<(), Failure> {
    let s = base_settings(&a.data, Some(&a.model))?;
    let mut plan = s.plan().map_err(Failure::Usage)?;
    plan.methods = vec![a.method];
    plan.layer_counts = vec![a.layers];
    plan.alphas = vec![a.alpha];
    plan.repeats = 1;
    plan.validate()?;
    let out = harness::run_plan(&plan)?;
    let r = &out.records[0];
    println!("best combo: {}", r.best_combo);
    println!("score: {}", r.score.map_or("-".into(), |v| v.to_string()));
    println!("rmse: {}", r.rmse.map_or("-".into(), |v| v.to_string()));
    println!("distinct combos fitted: {}", r.distinct_combos);
    println!("elapsed: {:.3} s", r.elapsed_s);
    println!("trace: {}", plan.output_dir.join(&r.trace_path).display());

    if let Some(path) = a.lbfgs_trace {
        write_optimizer_trace(&plan, &r.best_combo, &path)?;
        println!("optimizer trace: {}", path.display());
    }
    Ok(())
}

fn write_optimizer_trace(
    plan: &harness::ExperimentPlan,
    combo: &LayerCombo,
    path: &std::path::Path,
) -> Result<(), Failure> {
    let data = LoadedData::load(&plan.dataset, plan.mnist_subsample)?;
    let Some((train, _)) = data.split(plan.split_seed(0), plan.test_fraction)? else {
        return Err(Failure::Usage("lookup tables have no optimizer to trace".into()));
    };
    let config = MlpConfig::new(combo.clone(), train.task(), &plan.model);
    let mut rows = Vec::new();
    mlp::train_observed(&config, &train, |info| rows.push(*info)).map_err(|e| Failure::Runtime(e.to_string()))?;
    let file = std::fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    write_trace_csv(std::io::BufWriter::new(file), &rows)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn verify_data(a: DataArgs) -> Result<(), Failure> {
    let s = base_settings(&a, None)?;
    let spec = s.dataset().map_err(Failure::Usage)?;
    for path in spec.files() {
        let digest = sha256_file(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        println!("{digest}  {}", path.display());
    }
    let plan = s.plan().map_err(Failure::Usage)?;
    match LoadedData::load(&spec, plan.mnist_subsample)? {
        LoadedData::Tabular(d) => println!(
            "ok: {} samples, {} features, {:?}",
            d.n_samples(),
            d.n_features(),
            d.task()
        ),
        LoadedData::Presplit { train, test, .. } => println!(
            "ok: {} train / {} test samples, {} features, {} classes",
            train.n_samples(),
            test.n_samples(),
            train.n_features(),
            train.n_outputs()
        ),
        LoadedData::Lookup(t) => println!("ok: lookup table with {} combos", t.len()),
    }
    Ok(())
}

fn sha256_file(path: &std::path::Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

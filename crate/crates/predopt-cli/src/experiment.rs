//! Experiment execution: data generation, per-method training/evaluation,
//! CSV result rows, and the worker-scaling timing report.
//!
//! # Determinism contract
//!
//! Metric columns of a result row depend only on the config fingerprint and
//! the base seed — not on the worker count and not on wall-clock state.
//! Only the two trailing timing columns (`seconds_per_epoch`,
//! `total_seconds`) vary between equal-seed runs.
//!
//! Each repetition `r` draws its data and model initialization from
//! `derive_seed(base_seed, r)`, so repetitions are independent and a run
//! can be reproduced rep-by-rep.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use predopt::datagen::{gen_knapsack, gen_shortest_path, gen_tsp, GenError, GenParams};
use predopt::dataset::{build_dataset, DatasetError, DecisionDataset};
use predopt::learn::{train, TrainConfig, TrainError};
use predopt::losses::PerturbationConfig;
use predopt::metrics::{evaluate, EvaluationReport, MetricsError};
use predopt::seeding::derive_seed;
use predopt::solvers::{
    GridOracle, GridSpec, KnapsackOracle, KnapsackSpec, TspOracle, TspSpec,
};
use predopt::Oracle;
use thiserror::Error;

use crate::config::{ExperimentConfig, ProblemSpec, CONFIG_SCHEMA};

/// Column header of `results.csv`. The final [`TIMING_COLUMNS`] columns are
/// wall-clock measurements; everything before them is deterministic given
/// the config fingerprint and seed.
pub const CSV_HEADER: &str = "schema,config,problem,method,repetition,seed,n_train,n_test,\
p,deg,noise,epochs,normalized_regret,normalized_unambiguous_regret,mse,solution_accuracy,\
unambiguous_fallbacks,seconds_per_epoch,total_seconds";

/// Trailing columns of [`CSV_HEADER`] that measure wall-clock time.
pub const TIMING_COLUMNS: usize = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("data generation failed: {0}")]
    Generation(#[from] GenError),
    #[error("dataset build failed: {0}")]
    Dataset(#[from] DatasetError),
    #[error("training `{method}` (repetition {repetition}) failed: {source}")]
    Train { method: String, repetition: usize, source: TrainError },
    #[error("evaluating `{method}` (repetition {repetition}) failed: {source}")]
    Evaluate { method: String, repetition: usize, source: MetricsError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(
        "{path} exists with a different column header; refusing to append \
         mismatched rows (move the file aside or pass a fresh --out directory)"
    )]
    HeaderMismatch { path: PathBuf },
    #[error("worker pool construction failed: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Execution settings that are not part of the experiment's identity.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directory receiving `results.csv` (and datasets with `save_data`).
    pub out_dir: PathBuf,
    /// Persist each repetition's train/test datasets next to the results.
    pub save_data: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out_dir: PathBuf::from("."), save_data: false }
    }
}

/// Outcome of one (repetition, method) cell.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    pub repetition: usize,
    pub seed: u64,
    pub report: EvaluationReport,
    pub seconds_per_epoch: f64,
    pub total_seconds: f64,
}

/// Outcome of a whole run: every cell, in (repetition, method) order.
#[derive(Debug)]
pub struct RunSummary {
    pub fingerprint: String,
    pub results: Vec<MethodResult>,
    pub csv_path: PathBuf,
}

struct RepData {
    oracle: Box<dyn Oracle>,
    train: DecisionDataset,
    test: DecisionDataset,
    seed: u64,
}

/// Generates one repetition's data and solves it into train/test datasets.
fn prepare_repetition(cfg: &ExperimentConfig, repetition: usize) -> Result<RepData, RunError> {
    let seed = derive_seed(cfg.seed, repetition as u64);
    let params = GenParams {
        n: cfg.n_train + cfg.n_test,
        p: cfg.p,
        deg: cfg.deg,
        noise_halfwidth: cfg.noise,
        seed,
    };
    let (generated, oracle): (_, Box<dyn Oracle>) = match &cfg.problem {
        ProblemSpec::ShortestPath { height, width } => {
            let spec = GridSpec::new(*height, *width);
            let generated = gen_shortest_path(&params, &spec)?;
            (generated, Box::new(GridOracle::new(spec)))
        }
        ProblemSpec::Knapsack { items, resources, capacity } => {
            let generated = gen_knapsack(&params, *items, *resources)?;
            let weights = generated
                .weights
                .clone()
                .expect("knapsack generator always emits weights");
            let spec = KnapsackSpec::new(weights, vec![*capacity; *resources]);
            (generated, Box::new(KnapsackOracle::new(spec)))
        }
        ProblemSpec::Tsp { nodes, formulation } => {
            let generated = gen_tsp(&params, *nodes)?;
            let oracle = TspOracle::new(TspSpec::new(*nodes)).with_formulation(*formulation);
            (generated, Box::new(oracle))
        }
    };
    let mut full = build_dataset(generated.features, generated.costs, oracle.as_ref())?;
    full.provenance = format!(
        "config {} repetition {repetition} seed {seed}",
        cfg.fingerprint()
    );
    let (train, test) = full.split_front(cfg.n_train);
    Ok(RepData { oracle, train, test, seed })
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch,
        learning_rate: cfg.lr,
        momentum: cfg.momentum,
        dbb_lambda: cfg.lambda,
        perturbation: PerturbationConfig { samples: cfg.samples, sigma: cfg.sigma },
        dpo_strict_scaling: cfg.dpo_strict,
        knn_neighbors: cfg.knn,
        seed,
        shuffle: true,
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Runs every repetition × method cell of `cfg` inside a dedicated worker
/// pool and appends one CSV row per cell to `results.csv` in the output
/// directory. Fails atomically per cell: the first error aborts the run
/// (rows already written stay on disk and say so by their presence).
pub fn execute_run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    pool.install(|| execute_run_inner(cfg, opts))
}

fn execute_run_inner(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunSummary, RunError> {
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let fingerprint = cfg.fingerprint();
    let mut results = Vec::with_capacity(cfg.repetitions * cfg.methods.len());
    let mut rows = Vec::new();

    for repetition in 0..cfg.repetitions {
        let rep = prepare_repetition(cfg, repetition)?;
        if opts.save_data {
            for (split, ds) in [("train", &rep.train), ("test", &rep.test)] {
                let path = opts.out_dir.join(format!("rep{repetition}-{split}.dfld"));
                ds.save(&path).map_err(|e| match e {
                    DatasetError::Io(source) => RunError::Io { path: path.clone(), source },
                    other => RunError::Dataset(other),
                })?;
            }
        }
        for method in &cfg.methods {
            let name = method.name();
            let started = std::time::Instant::now();
            let output = train(method, &rep.train, rep.oracle.as_ref(), &train_config(cfg, rep.seed))
                .map_err(|source| RunError::Train {
                    method: name.clone(),
                    repetition,
                    source,
                })?;
            let report = evaluate(&output.model, rep.oracle.as_ref(), &rep.test, cfg.unambiguous)
                .map_err(|source| RunError::Evaluate {
                    method: name.clone(),
                    repetition,
                    source,
                })?;
            let result = MethodResult {
                method: name,
                repetition,
                seed: rep.seed,
                report,
                seconds_per_epoch: mean(&output.epoch_seconds),
                total_seconds: started.elapsed().as_secs_f64(),
            };
            rows.push(csv_row(cfg, &fingerprint, &result));
            results.push(result);
        }
    }

    let csv_path = opts.out_dir.join("results.csv");
    append_rows(&csv_path, &rows)?;
    Ok(RunSummary { fingerprint, results, csv_path })
}

/// One CSV data row. Numbers use Rust's shortest round-trip `f64`
/// formatting, so equal values produce byte-identical text.
fn csv_row(cfg: &ExperimentConfig, fingerprint: &str, r: &MethodResult) -> String {
    let unambiguous = r
        .report
        .normalized_unambiguous_regret
        .map(|v| v.to_string())
        .unwrap_or_default();
    format!(
        "{schema},{fingerprint},{problem},{method},{rep},{seed},{n_train},{n_test},{p},{deg},\
         {noise},{epochs},{regret},{unambiguous},{mse},{accuracy},{fallbacks},{spe},{total}",
        schema = CONFIG_SCHEMA,
        problem = cfg.problem.label(),
        method = r.method,
        rep = r.repetition,
        seed = r.seed,
        n_train = cfg.n_train,
        n_test = cfg.n_test,
        p = cfg.p,
        deg = cfg.deg,
        noise = cfg.noise,
        epochs = cfg.epochs,
        regret = r.report.normalized_regret,
        mse = r.report.mse,
        accuracy = r.report.solution_accuracy,
        fallbacks = r.report.unambiguous_fallbacks,
        spe = r.seconds_per_epoch,
        total = r.total_seconds,
    )
}

fn append_rows(path: &Path, rows: &[String]) -> Result<(), RunError> {
    let mut body = String::new();
    if path.exists() {
        let existing = fs::read_to_string(path).map_err(io_err(path))?;
        match existing.lines().next() {
            Some(first) if first == CSV_HEADER => {}
            Some(_) => return Err(RunError::HeaderMismatch { path: path.to_path_buf() }),
            // Zero-length file: claim it with a header.
            None => body.push_str(&format!("{CSV_HEADER}\n")),
        }
    } else {
        body.push_str(&format!("{CSV_HEADER}\n"));
    }
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(body.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

/// Measures per-epoch training time of the first configured method across
/// worker-pool sizes 1, 2, 4, and 8 on repetition 0's data. Returns a
/// human-readable table (also written to `timing.txt` in the output
/// directory).
pub fn timing_report(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<String, RunError> {
    let method = cfg
        .methods
        .first()
        .expect("validated configs name at least one method");
    let rep = {
        // Build the data in a throwaway pool of the configured size so the
        // timed sections below measure only training.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
        pool.install(|| prepare_repetition(cfg, 0))?
    };
    let mut table = String::new();
    table.push_str(&format!(
        "timing: method `{}` on {}, n_train = {}, {} epochs\n",
        method.name(),
        cfg.problem.label(),
        cfg.n_train,
        cfg.epochs,
    ));
    table.push_str("workers  mean s/epoch  sd s/epoch\n");
    for workers in [1usize, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        let output = pool
            .install(|| train(method, &rep.train, rep.oracle.as_ref(), &train_config(cfg, rep.seed)))
            .map_err(|source| RunError::Train {
                method: method.name(),
                repetition: 0,
                source,
            })?;
        table.push_str(&format!(
            "{workers:>7}  {:>12.6}  {:>10.6}\n",
            mean(&output.epoch_seconds),
            std_dev(&output.epoch_seconds),
        ));
    }
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let path = opts.out_dir.join("timing.txt");
    fs::write(&path, &table).map_err(io_err(&path))?;
    Ok(table)
}

/// Strips the trailing timing columns off a data row, leaving only the
/// deterministic columns (used by reproducibility checks).
pub fn strip_timing_columns(row: &str) -> String {
    let fields: Vec<&str> = row.split(',').collect();
    let keep = fields.len().saturating_sub(TIMING_COLUMNS);
    fields[..keep].join(",")
}

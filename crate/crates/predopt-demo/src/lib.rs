//! Browser demo for the predopt toolkit.
//!
//! Three interactive operations, each exported to JavaScript through
//! `wasm-bindgen` and returning a JSON string the page renders directly:
//!
//! * [`random_grid`] / [`solve_grid`] — generate benchmark-style costs for a
//!   grid and find the cheapest source→sink path, including for costs the
//!   visitor has edited by hand.
//! * [`training_race`] — train a two-stage regression and two decision-aware
//!   methods on a small synthetic dataset and report their test regret.
//! * [`dpo_curve`] — sample the Monte-Carlo smoothed solution of the 1-D
//!   two-point problem across a sweep of predicted costs.
//!
//! Every function is deterministic in its `seed` argument, and all of them
//! compile and run on native targets too, which is how the test suite
//! exercises them.

use predopt::datagen::{gen_shortest_path, GenParams};
use predopt::dataset::build_dataset;
use predopt::learn::{train, LossKind, MethodSpec, TrainConfig};
use predopt::losses::{dpo_forward, PerturbationConfig, SolveMode};
use predopt::metrics::evaluate;
use predopt::seeding::substream;
use predopt::solvers::{grid_shortest_path_solve, GridOracle, GridSpec};
use predopt::{HypercubeOracle, ModelSense};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Largest grid side the page offers; keeps every solve instant.
const MAX_SIDE: usize = 8;
/// Epoch cap for the in-browser training race.
const MAX_EPOCHS: usize = 300;
/// Monte-Carlo sample cap for the smoothing curve.
const MAX_SAMPLES: usize = 20_000;

#[derive(Serialize)]
struct GridView {
    height: usize,
    width: usize,
    /// Arc endpoints as row-major node indices, in cost order.
    arcs: Vec<(usize, usize)>,
    costs: Vec<f64>,
    /// 0/1 incidence of the optimal path over `arcs`.
    path: Vec<f64>,
    objective: f64,
}

#[derive(Serialize)]
struct RaceEntry {
    name: String,
    /// Normalized decision regret on held-out data (lower is better).
    regret: f64,
    /// Plain prediction error on the same data.
    mse: f64,
    /// Mean training loss per epoch (one entry for the closed-form baseline).
    loss_curve: Vec<f64>,
}

#[derive(Serialize)]
struct RaceView {
    n_train: usize,
    n_test: usize,
    epochs: usize,
    entries: Vec<RaceEntry>,
}

#[derive(Serialize)]
struct CurveView {
    sigma: f64,
    samples: usize,
    /// Predicted-cost sweep.
    chats: Vec<f64>,
    /// Monte-Carlo estimate of the smoothed solution at each sweep point.
    means: Vec<f64>,
}

fn err_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn ok_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| err_json(&e.to_string()))
}

fn check_side(height: usize, width: usize) -> Result<GridSpec, String> {
    if !(2..=MAX_SIDE).contains(&height) || !(2..=MAX_SIDE).contains(&width) {
        return Err(format!("grid sides must lie in 2..={MAX_SIDE}"));
    }
    Ok(GridSpec::new(height, width))
}

/// Generates one benchmark-style cost draw for a `height × width` grid and
/// solves it. `deg` bends the feature→cost map (1 = linear), `noise` is the
/// multiplicative half-width in [0, 1). Returns a JSON [`GridView`].
#[wasm_bindgen]
pub fn random_grid(height: usize, width: usize, seed: u64, deg: u32, noise: f64) -> String {
    let spec = match check_side(height, width) {
        Ok(s) => s,
        Err(e) => return err_json(&e),
    };
    if !(0.0..1.0).contains(&noise) {
        return err_json("noise must lie in [0, 1)");
    }
    if !(1..=16).contains(&deg) {
        return err_json("deg must lie in 1..=16");
    }
    let params = GenParams { n: 1, p: 5, deg, noise_halfwidth: noise, seed };
    let generated = match gen_shortest_path(&params, &spec) {
        Ok(g) => g,
        Err(e) => return err_json(&e.to_string()),
    };
    let costs = generated.costs.into_iter().next().unwrap();
    solve_grid_inner(&spec, costs)
}

/// Solves the grid for caller-supplied arc costs (a JSON array matching the
/// arc order of [`random_grid`]). Returns a JSON [`GridView`].
#[wasm_bindgen]
pub fn solve_grid(height: usize, width: usize, costs_json: &str) -> String {
    let spec = match check_side(height, width) {
        Ok(s) => s,
        Err(e) => return err_json(&e),
    };
    let costs: Vec<f64> = match serde_json::from_str(costs_json) {
        Ok(c) => c,
        Err(e) => return err_json(&format!("costs must be a JSON number array: {e}")),
    };
    if costs.len() != spec.arc_count() {
        return err_json(&format!(
            "expected {} arc costs, got {}",
            spec.arc_count(),
            costs.len()
        ));
    }
    solve_grid_inner(&spec, costs)
}

fn solve_grid_inner(spec: &GridSpec, costs: Vec<f64>) -> String {
    match grid_shortest_path_solve(spec, &costs) {
        Ok(sol) => ok_json(&GridView {
            height: spec.height,
            width: spec.width,
            arcs: spec.arcs(),
            costs,
            path: sol.values,
            objective: sol.objective,
        }),
        Err(e) => err_json(&e.to_string()),
    }
}

/// Trains three predictors on a small 3×3 shortest-path dataset (degree-4
/// features, 50% noise) and evaluates them on held-out data: the closed-form
/// two-stage regression, SPO+, and the perturbed Fenchel-Young loss. Returns
/// a JSON [`RaceView`] with one loss curve and final metrics per method.
#[wasm_bindgen]
pub fn training_race(seed: u64, epochs: usize) -> String {
    if !(1..=MAX_EPOCHS).contains(&epochs) {
        return err_json(&format!("epochs must lie in 1..={MAX_EPOCHS}"));
    }
    let n_train = 120;
    let n_test = 80;
    let spec = GridSpec::new(3, 3);
    let oracle = GridOracle::new(spec.clone());
    let params = GenParams { n: n_train + n_test, p: 5, deg: 4, noise_halfwidth: 0.5, seed };
    let generated = match gen_shortest_path(&params, &spec) {
        Ok(g) => g,
        Err(e) => return err_json(&e.to_string()),
    };
    let full = match build_dataset(generated.features, generated.costs, &oracle) {
        Ok(d) => d,
        Err(e) => return err_json(&e.to_string()),
    };
    let (train_ds, test_ds) = full.split_front(n_train);

    let methods = [
        MethodSpec::new(LossKind::TwoStageLeastSquares),
        MethodSpec::new(LossKind::SpoPlus),
        MethodSpec::new(LossKind::Pfyl),
    ];
    let cfg = TrainConfig {
        epochs,
        batch_size: 16,
        momentum: 0.0,
        seed,
        ..TrainConfig::default()
    };
    let mut entries = Vec::new();
    for method in &methods {
        let output = match train(method, &train_ds, &oracle, &cfg) {
            Ok(o) => o,
            Err(e) => return err_json(&e.to_string()),
        };
        let report = match evaluate(&output.model, &oracle, &test_ds, false) {
            Ok(r) => r,
            Err(e) => return err_json(&e.to_string()),
        };
        entries.push(RaceEntry {
            name: method.name(),
            regret: report.normalized_regret,
            mse: report.mse,
            loss_curve: output.epoch_losses,
        });
    }
    ok_json(&RaceView { n_train, n_test, epochs, entries })
}

/// Monte-Carlo smoothing of the 1-D two-point problem: for each predicted
/// cost ĉ in a fixed sweep, estimates the expected minimizer of
/// `(ĉ + σξ)·w` over `w ∈ {0, 1}` from `samples` Gaussian draws. Returns a
/// JSON [`CurveView`]; the page overlays the exact normal-CDF curve.
#[wasm_bindgen]
pub fn dpo_curve(sigma: f64, samples: usize, seed: u64) -> String {
    if !(0.05..=5.0).contains(&sigma) {
        return err_json("sigma must lie in [0.05, 5]");
    }
    if !(1..=MAX_SAMPLES).contains(&samples) {
        return err_json(&format!("samples must lie in 1..={MAX_SAMPLES}"));
    }
    let oracle = HypercubeOracle::new(1, ModelSense::Minimize);
    let cfg = PerturbationConfig::new(samples, sigma);
    let mut chats = Vec::new();
    let mut means = Vec::new();
    let mut step = 0u64;
    let mut chat = -3.0f64;
    while chat <= 3.0 + 1e-9 {
        let mut rng = substream(seed.wrapping_add(step), 11);
        match dpo_forward(&[chat], &cfg, &oracle, &mut rng, SolveMode::Exact) {
            Ok((mean, _)) => {
                chats.push(chat);
                means.push(mean[0]);
            }
            Err(e) => return err_json(&e.to_string()),
        }
        chat += 0.25;
        step += 1;
    }
    ok_json(&CurveView { sigma, samples, chats, means })
}

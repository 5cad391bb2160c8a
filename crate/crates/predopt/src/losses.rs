//! End-to-end gradient mechanisms that differentiate decision quality with
//! respect to predicted costs, each as a forward/backward pair around one or
//! more black-box oracle solves:
//!
//! * **SPO+** — convex surrogate upper-bounding regret; the backward pass
//!   reuses the forward's single solve at cost `2ĉ − c`.
//! * **DBB** — differentiable black-box: interpolates a gradient from one
//!   extra solve at `ĉ + λ·∂l/∂w`.
//! * **DPO** — differentiable perturbed optimizer: Monte-Carlo expectation of
//!   solutions under Gaussian-perturbed costs, with a sampled Jacobian.
//! * **PFYL** — perturbed Fenchel-Young loss: gradient is the true solution
//!   minus the mean perturbed argmin.
//!
//! plus evaluation-only regret and the pluggable downstream losses DBB/DPO
//! compose with.
//!
//! All internal arithmetic uses the minimization convention; maximization
//! oracles are normalized at entry and gradient signs flipped at exit, so
//! callers always receive `∂loss/∂ĉ` in the oracle's native cost space.
//! Every function here is a pure per-sample kernel: batching fans these out
//! across a worker pool (see [`crate::learn`]) and per-sample noise streams
//! keep results independent of scheduling.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::oracle::{ModelSense, Oracle, OracleError, Solution};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Hamming loss requires binary solutions; got a fractional entry")]
    FractionalHamming,
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
}

/// Whether a loss's internal solves use the exact oracle or its relaxation
/// (the "Rel" method variants train against the relaxation to cut solve
/// cost; evaluation always uses exact solves).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Exact,
    Relaxed,
}

fn solve_with(oracle: &dyn Oracle, cost: &[f64], mode: SolveMode) -> Result<Solution, OracleError> {
    match mode {
        SolveMode::Exact => oracle.solve(cost),
        SolveMode::Relaxed => oracle.solve_relaxed(cost),
    }
}

fn sense_sign(sense: ModelSense) -> f64 {
    match sense {
        ModelSense::Minimize => 1.0,
        ModelSense::Maximize => -1.0,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// --------------------------------------------------------------------- SPO+

/// Forward state cached for [`spo_plus_grad`]: the solution of the shifted
/// problem and the true optimum, already in value space.
#[derive(Debug, Clone)]
pub struct SpoPlusState {
    w_true: Vec<f64>,
    w_shifted: Vec<f64>,
    sign: f64,
}

/// SPO+ surrogate loss
/// `−min_w (2ĉ−c)ᵀw + 2ĉᵀw*(c) − z*(c)` (in minimization convention).
///
/// Costs one oracle solve, at the shifted cost `2ĉ − c`. Requires the true
/// optimum `(w_true, z_true)` as precomputed by the dataset. The loss is a
/// convex upper bound on regret and vanishes at `ĉ = c`.
pub fn spo_plus_loss(
    predicted: &[f64],
    true_cost: &[f64],
    w_true: &[f64],
    z_true: f64,
    oracle: &dyn Oracle,
    mode: SolveMode,
) -> Result<(f64, SpoPlusState), LossError> {
    let d = oracle.decision_dim();
    if predicted.len() != d || true_cost.len() != d || w_true.len() != d {
        return Err(LossError::DimensionMismatch(format!(
            "expected dimension {d}, got ĉ {}, c {}, w {}",
            predicted.len(),
            true_cost.len(),
            w_true.len()
        )));
    }
    let s = sense_sign(oracle.sense());
    // Shifted cost in native space: oracle solves its own sense, so the
    // min-space vector 2c̃ − c̃_true equals s·(2ĉ − c) seen natively.
    let shifted_native: Vec<f64> = predicted
        .iter()
        .zip(true_cost)
        .map(|(&ch, &c)| 2.0 * ch - c)
        .collect();
    let sol = solve_with(oracle, &shifted_native, mode)?;
    let shifted_min_obj = s * dot(&shifted_native, &sol.values);
    let loss = -shifted_min_obj + 2.0 * s * dot(predicted, w_true) - s * z_true;
    Ok((
        loss,
        SpoPlusState { w_true: w_true.to_vec(), w_shifted: sol.values, sign: s },
    ))
}

/// SPO+ subgradient `2·(w*(c) − w*(2ĉ−c))`, returned in native cost space.
pub fn spo_plus_grad(state: &SpoPlusState) -> Vec<f64> {
    state
        .w_true
        .iter()
        .zip(&state.w_shifted)
        .map(|(&wt, &ws)| state.sign * 2.0 * (wt - ws))
        .collect()
}

// ---------------------------------------------------------------------- DBB

/// Forward state cached for [`dbb_backward`]: the predicted cost and its
/// solution.
#[derive(Debug, Clone)]
pub struct DbbState {
    predicted: Vec<f64>,
    w_hat: Vec<f64>,
}

/// Differentiable black-box forward pass: one oracle solve at `ĉ`.
pub fn dbb_forward(
    predicted: &[f64],
    oracle: &dyn Oracle,
    mode: SolveMode,
) -> Result<(Solution, DbbState), LossError> {
    let sol = solve_with(oracle, predicted, mode)?;
    Ok((
        sol.clone(),
        DbbState { predicted: predicted.to_vec(), w_hat: sol.values },
    ))
}

/// Differentiable black-box backward pass: solves once more at the
/// interpolated cost `c′ = ĉ + λ·∂l/∂w` (in minimization space) and returns
/// the cost-space gradient `(1/λ)(w*(c′) − w*(ĉ))`, sign-adjusted to the
/// native sense.
///
/// `incoming_grad` is `∂l/∂w` from a downstream loss; it lives in solution
/// space and needs no sense adjustment.
pub fn dbb_backward(
    state: &DbbState,
    incoming_grad: &[f64],
    lambda: f64,
    oracle: &dyn Oracle,
    mode: SolveMode,
) -> Result<Vec<f64>, LossError> {
    if lambda <= 0.0 {
        return Err(LossError::NonPositiveLambda(lambda));
    }
    if incoming_grad.len() != state.w_hat.len() {
        return Err(LossError::DimensionMismatch(format!(
            "incoming gradient has length {}, solutions have {}",
            incoming_grad.len(),
            state.w_hat.len()
        )));
    }
    let s = sense_sign(oracle.sense());
    // Native perturbed cost: s·(c̃ + λg) = ĉ + s·λ·g.
    let perturbed: Vec<f64> = state
        .predicted
        .iter()
        .zip(incoming_grad)
        .map(|(&c, &g)| c + s * lambda * g)
        .collect();
    let sol = solve_with(oracle, &perturbed, mode)?;
    Ok(sol
        .values
        .iter()
        .zip(&state.w_hat)
        .map(|(&wp, &wh)| s * (wp - wh) / lambda)
        .collect())
}

// ---------------------------------------------------------------------- DPO

/// Monte-Carlo configuration for the perturbation methods: `K` Gaussian
/// samples of amplitude `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationConfig {
    pub samples: usize,
    pub sigma: f64,
}

impl PerturbationConfig {
    pub fn new(samples: usize, sigma: f64) -> Self {
        assert!(samples >= 1, "need at least one perturbation sample");
        assert!(sigma > 0.0, "perturbation amplitude must be positive");
        PerturbationConfig { samples, sigma }
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        // The benchmark harness default: a single sample of unit amplitude.
        PerturbationConfig { samples: 1, sigma: 1.0 }
    }
}

/// Forward state cached for [`dpo_backward`]: all noise draws and perturbed
/// solutions.
#[derive(Debug, Clone)]
pub struct DpoState {
    noises: Vec<Vec<f64>>,
    solutions: Vec<Vec<f64>>,
    sigma: f64,
    sign: f64,
}

/// Differentiable perturbed optimizer forward pass: returns the Monte-Carlo
/// expectation `(1/K) Σ_κ w*(ĉ + σξ_κ)` (entries lie in the convex hull of
/// solutions) plus the state for the backward pass. Costs `K` oracle solves.
pub fn dpo_forward(
    predicted: &[f64],
    cfg: &PerturbationConfig,
    oracle: &dyn Oracle,
    rng: &mut impl Rng,
    mode: SolveMode,
) -> Result<(Vec<f64>, DpoState), LossError> {
    let d = oracle.decision_dim();
    if predicted.len() != d {
        return Err(LossError::DimensionMismatch(format!(
            "expected dimension {d}, got {}",
            predicted.len()
        )));
    }
    let s = sense_sign(oracle.sense());
    let mut mean = vec![0.0; d];
    let mut noises = Vec::with_capacity(cfg.samples);
    let mut solutions = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let xi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // Perturb in min space: c̃ + σξ natively reads ĉ + s·σξ.
        let perturbed: Vec<f64> = predicted
            .iter()
            .zip(&xi)
            .map(|(&c, &x)| c + s * cfg.sigma * x)
            .collect();
        let sol = solve_with(oracle, &perturbed, mode)?;
        for (m, &w) in mean.iter_mut().zip(&sol.values) {
            *m += w / cfg.samples as f64;
        }
        noises.push(xi);
        solutions.push(sol.values);
    }
    Ok((mean, DpoState { noises, solutions, sigma: cfg.sigma, sign: s }))
}

/// Differentiable perturbed optimizer backward pass: contracts the sampled
/// Jacobian `(1/(K·σ)) Σ_κ w_κ ξ_κᵀ` with `incoming_grad` (`∂l/∂E[w]`),
/// with no further solves.
///
/// `strict_scaling = false` (the default used by training) includes the
/// `1/σ` factor that makes the estimator consistent for the Gaussian-smoothed
/// solution map; `strict_scaling = true` reproduces the plain `(1/K) Σ w_κ
/// ξ_κᵀ` estimator without it. Both are exposed because the two conventions
/// circulate; they differ only by the constant factor `1/σ`.
pub fn dpo_backward(state: &DpoState, incoming_grad: &[f64], strict_scaling: bool) -> Vec<f64> {
    let d = incoming_grad.len();
    let k = state.solutions.len() as f64;
    let scale = if strict_scaling { 1.0 / k } else { 1.0 / (k * state.sigma) };
    let mut grad = vec![0.0; d];
    for (xi, w) in state.noises.iter().zip(&state.solutions) {
        let gw = dot(incoming_grad, w);
        for (g, &x) in grad.iter_mut().zip(xi) {
            *g += scale * gw * x;
        }
    }
    // ∂/∂ĉ = s·∂/∂c̃.
    for g in grad.iter_mut() {
        *g *= state.sign;
    }
    grad
}

// --------------------------------------------------------------------- PFYL

/// Perturbed Fenchel-Young loss and gradient in one pass (`K` solves).
///
/// Gradient: `w*(c) − (1/K) Σ_κ argmin_w (ĉ+σξ_κ)ᵀw`, sign-adjusted to
/// native space. Loss: `ĉᵀw*(c) − (1/K) Σ_κ (ĉ+σξ_κ)ᵀw_κ` in minimization
/// convention — the regularization dual term, constant in `ĉ`, is omitted,
/// so reported losses are meaningful up to an additive constant (gradients
/// are unaffected).
pub fn pfyl_loss_and_grad(
    predicted: &[f64],
    w_true: &[f64],
    cfg: &PerturbationConfig,
    oracle: &dyn Oracle,
    rng: &mut impl Rng,
    mode: SolveMode,
) -> Result<(f64, Vec<f64>), LossError> {
    let d = oracle.decision_dim();
    if predicted.len() != d || w_true.len() != d {
        return Err(LossError::DimensionMismatch(format!(
            "expected dimension {d}, got ĉ {}, w {}",
            predicted.len(),
            w_true.len()
        )));
    }
    let s = sense_sign(oracle.sense());
    let mut mean_w = vec![0.0; d];
    let mut mean_perturbed_obj = 0.0;
    for _ in 0..cfg.samples {
        let xi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let perturbed: Vec<f64> = predicted
            .iter()
            .zip(&xi)
            .map(|(&c, &x)| c + s * cfg.sigma * x)
            .collect();
        let sol = solve_with(oracle, &perturbed, mode)?;
        // Perturbed objective in min space.
        mean_perturbed_obj += s * dot(&perturbed, &sol.values) / cfg.samples as f64;
        for (m, &w) in mean_w.iter_mut().zip(&sol.values) {
            *m += w / cfg.samples as f64;
        }
    }
    let loss = s * dot(predicted, w_true) - mean_perturbed_obj;
    let grad: Vec<f64> = w_true
        .iter()
        .zip(&mean_w)
        .map(|(&wt, &wm)| s * (wt - wm))
        .collect();
    Ok((loss, grad))
}

// ------------------------------------------------------------------- regret

/// Decision regret `cᵀw*(ĉ) − z*(c)`, sense-adjusted so it is nonnegative
/// (up to solver tolerance) for both senses. One exact oracle solve.
pub fn regret_eval(
    predicted: &[f64],
    true_cost: &[f64],
    z_true: f64,
    oracle: &dyn Oracle,
) -> Result<f64, LossError> {
    let sol = oracle.solve(predicted)?;
    let s = sense_sign(oracle.sense());
    Ok(s * (dot(true_cost, &sol.values) - z_true))
}

// -------------------------------------------------------------- downstream

/// Downstream losses `l(w, reference)` that DBB and DPO backpropagate
/// through. Each evaluates to `(value, ∂l/∂w)`.
#[derive(Debug, Clone)]
pub enum DownstreamLoss {
    /// `l = c̃ᵀw − z̃*` against minimization-normalized true costs; the
    /// gradient is `c̃` itself.
    Regret { min_cost: Vec<f64>, min_z: f64 },
    /// `l = Σ_i |w_i − w̄_i|` for binary vectors, with the binary-convention
    /// gradient `∂l/∂w_i = 1 − 2w̄_i`.
    Hamming { reference: Vec<f64> },
    /// `l = ‖w − w̄‖²` with gradient `2(w − w̄)`.
    SquaredError { reference: Vec<f64> },
}

impl DownstreamLoss {
    pub fn eval(&self, w: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
        match self {
            DownstreamLoss::Regret { min_cost, min_z } => {
                if w.len() != min_cost.len() {
                    return Err(LossError::DimensionMismatch(format!(
                        "solution length {} vs cost length {}",
                        w.len(),
                        min_cost.len()
                    )));
                }
                Ok((dot(min_cost, w) - min_z, min_cost.clone()))
            }
            DownstreamLoss::Hamming { reference } => {
                if w.len() != reference.len() {
                    return Err(LossError::DimensionMismatch(format!(
                        "solution length {} vs reference length {}",
                        w.len(),
                        reference.len()
                    )));
                }
                let binary = |x: f64| (x - 0.0).abs() <= 1e-6 || (x - 1.0).abs() <= 1e-6;
                if !w.iter().all(|&x| binary(x)) || !reference.iter().all(|&x| binary(x)) {
                    return Err(LossError::FractionalHamming);
                }
                let value = w.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum();
                let grad = reference.iter().map(|&r| 1.0 - 2.0 * r.round()).collect();
                Ok((value, grad))
            }
            DownstreamLoss::SquaredError { reference } => {
                if w.len() != reference.len() {
                    return Err(LossError::DimensionMismatch(format!(
                        "solution length {} vs reference length {}",
                        w.len(),
                        reference.len()
                    )));
                }
                let value = w.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
                let grad = w.iter().zip(reference).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok((value, grad))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::HypercubeOracle;
    use crate::seeding::substream;
    use crate::solvers::{GridOracle, GridSpec, KnapsackOracle, KnapsackSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng as _, SeedableRng};

    fn one_dim() -> HypercubeOracle {
        HypercubeOracle::new(1, ModelSense::Minimize)
    }

    #[test]
    fn spo_plus_vanishes_at_truth() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let c = [1.0, 5.0, 1.0, 5.0];
        let w = oracle.solve(&c).unwrap();
        let (loss, state) =
            spo_plus_loss(&c, &c, &w.values, w.objective, &oracle, SolveMode::Exact).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-9);
        let grad = spo_plus_grad(&state);
        assert!(grad.iter().all(|&g| g.abs() <= 1e-9));
    }

    #[test]
    fn spo_plus_one_dimensional_example() {
        // Feasible set {0,1}, c = 1 (so w* = 0, z* = 0), ĉ = −1:
        // shifted cost 2ĉ−c = −3, min over {0,1} is −3, loss = 3.
        let oracle = one_dim();
        let (loss, state) =
            spo_plus_loss(&[-1.0], &[1.0], &[0.0], 0.0, &oracle, SolveMode::Exact).unwrap();
        assert_abs_diff_eq!(loss, 3.0, epsilon = 1e-12);
        assert_eq!(spo_plus_grad(&state), vec![-2.0]);
        // The loss upper-bounds the regret of deciding under ĉ.
        let r = regret_eval(&[-1.0], &[1.0], 0.0, &oracle).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        assert!(loss >= r);
    }

    #[test]
    fn spo_plus_dominates_regret_on_maximization() {
        // Sense handling: on a maximization oracle both quantities must stay
        // nonnegative and ordered.
        let oracle = KnapsackOracle::new(KnapsackSpec::new(
            vec![vec![3.0, 4.0, 5.0, 6.0]],
            vec![10.0],
        ));
        let mut rng = substream(99, 1);
        for _ in 0..300 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..6.0)).collect();
            let chat: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..6.0)).collect();
            let w = oracle.solve(&c).unwrap();
            let (loss, _) =
                spo_plus_loss(&chat, &c, &w.values, w.objective, &oracle, SolveMode::Exact)
                    .unwrap();
            let r = regret_eval(&chat, &c, w.objective, &oracle).unwrap();
            assert!(r >= -1e-9, "negative regret {r}");
            assert!(loss >= r - 1e-9, "loss {loss} below regret {r}");
        }
    }

    #[test]
    fn spo_plus_subgradient_inequality() {
        // Convexity: l(ĉ+δ) ≥ l(ĉ) + gᵀδ for the subgradient g.
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let mut rng = substream(7, 2);
        for _ in 0..100 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..4.0)).collect();
            let chat: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..4.0)).collect();
            let w = oracle.solve(&c).unwrap();
            let (l0, state) =
                spo_plus_loss(&chat, &c, &w.values, w.objective, &oracle, SolveMode::Exact)
                    .unwrap();
            let g = spo_plus_grad(&state);
            let delta: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
            let shifted: Vec<f64> = chat.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let (l1, _) =
                spo_plus_loss(&shifted, &c, &w.values, w.objective, &oracle, SolveMode::Exact)
                    .unwrap();
            let linear: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
            assert!(l1 >= l0 + linear - 1e-7, "subgradient inequality violated");
        }
    }

    #[test]
    fn dbb_forward_is_plain_solve() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let chat = [1.0, 5.0, 1.0, 5.0];
        let (sol, state) = dbb_forward(&chat, &oracle, SolveMode::Exact).unwrap();
        assert_eq!(sol.values, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(state.w_hat, sol.values);
    }

    #[test]
    fn dbb_backward_hand_examples() {
        // 1-D set {0,1}, ĉ = 1 (w*(ĉ) = 0), incoming grad −1.
        let oracle = one_dim();
        let (_, state) = dbb_forward(&[1.0], &oracle, SolveMode::Exact).unwrap();
        // λ = 2 → c′ = −1 → w*(c′) = 1 → gradient (1/2)(1 − 0) = 0.5.
        let g = dbb_backward(&state, &[-1.0], 2.0, &oracle, SolveMode::Exact).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-12);
        // λ = 0.5 → c′ = 0.5 → w*(c′) = 0 → gradient 0.
        let g = dbb_backward(&state, &[-1.0], 0.5, &oracle, SolveMode::Exact).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-12);
        // Non-positive λ rejected.
        assert!(dbb_backward(&state, &[-1.0], 0.0, &oracle, SolveMode::Exact).is_err());
    }

    #[test]
    fn dbb_finite_difference_identity() {
        // The backward vector must equal (1/λ)(w*(ĉ+λg) − w*(ĉ)) recomputed
        // independently — and be zero when the perturbed argmin is unchanged.
        let oracle = GridOracle::new(GridSpec::new(3, 3));
        let d = oracle.decision_dim();
        let mut rng = substream(15, 3);
        let lambda = 15.0;
        for _ in 0..100 {
            let chat: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..4.0)).collect();
            let g_in: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let (_, state) = dbb_forward(&chat, &oracle, SolveMode::Exact).unwrap();
            let grad = dbb_backward(&state, &g_in, lambda, &oracle, SolveMode::Exact).unwrap();

            let perturbed: Vec<f64> =
                chat.iter().zip(&g_in).map(|(c, g)| c + lambda * g).collect();
            let w_p = oracle.solve(&perturbed).unwrap();
            let w_0 = oracle.solve(&chat).unwrap();
            for i in 0..d {
                let expect = (w_p.values[i] - w_0.values[i]) / lambda;
                assert_abs_diff_eq!(grad[i], expect, epsilon = 1e-12);
            }
            if w_p.values == w_0.values {
                assert!(grad.iter().all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn dpo_tiny_sigma_recovers_argmin() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let chat = [1.0, 5.0, 1.0, 5.0];
        let cfg = PerturbationConfig::new(64, 1e-6);
        let mut rng = substream(1, 4);
        let (mean, _) = dpo_forward(&chat, &cfg, &oracle, &mut rng, SolveMode::Exact).unwrap();
        let exact = oracle.solve(&chat).unwrap();
        for (m, w) in mean.iter().zip(&exact.values) {
            assert_abs_diff_eq!(*m, *w, epsilon = 1e-9);
        }
    }

    #[test]
    fn dpo_expectation_matches_gaussian_probability() {
        // 1-D set {0,1}, ĉ = 0, σ = 1: E[w] = P(ξ < 0) = 0.5.
        let oracle = one_dim();
        let k = 100_000;
        let cfg = PerturbationConfig::new(k, 1.0);
        let mut rng = substream(2, 5);
        let (mean, _) = dpo_forward(&[0.0], &cfg, &oracle, &mut rng, SolveMode::Exact).unwrap();
        // Bernoulli(1/2) standard error over K draws.
        let se = (0.25f64 / k as f64).sqrt();
        assert!((mean[0] - 0.5).abs() <= 3.0 * se, "mean {} off 0.5", mean[0]);
    }

    #[test]
    fn dpo_single_sample_is_vertex_and_exact_formula() {
        let oracle = one_dim();
        let cfg = PerturbationConfig::new(1, 1.0);
        let mut rng = substream(3, 6);
        let (mean, state) =
            dpo_forward(&[0.2], &cfg, &oracle, &mut rng, SolveMode::Exact).unwrap();
        assert!(mean[0] == 0.0 || mean[0] == 1.0);
        // K = 1 backward is exactly (w₁ξ₁/σ)·g.
        let g = dpo_backward(&state, &[2.0], false);
        let expect = 2.0 * state.solutions[0][0] * state.noises[0][0] / 1.0;
        assert_abs_diff_eq!(g[0], expect, epsilon = 1e-12);
        // Strict scaling drops the 1/σ factor (identical here since σ = 1).
        let g2 = dpo_backward(&state, &[2.0], true);
        assert_abs_diff_eq!(g[0], g2[0], epsilon = 1e-12);
    }

    #[test]
    fn dpo_zero_incoming_gradient_gives_zero() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let cfg = PerturbationConfig::new(8, 1.0);
        let mut rng = substream(4, 7);
        let (_, state) =
            dpo_forward(&[1.0, 2.0, 3.0, 4.0], &cfg, &oracle, &mut rng, SolveMode::Exact)
                .unwrap();
        let g = dpo_backward(&state, &[0.0; 4], false);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dpo_jacobian_matches_gaussian_derivative() {
        // 1-D: the σ-scaled Jacobian estimate converges to
        // d/dĉ Φ(−ĉ/σ) = −φ(ĉ/σ)/σ. At ĉ=0, σ=1: −φ(0) ≈ −0.39894.
        let oracle = one_dim();
        let k = 100_000;
        let cfg = PerturbationConfig::new(k, 1.0);
        let mut rng = substream(5, 8);
        let (_, state) = dpo_forward(&[0.0], &cfg, &oracle, &mut rng, SolveMode::Exact).unwrap();
        let g = dpo_backward(&state, &[1.0], false);
        // Var(wξ) = E[ξ²1{ξ<0}] = 1/2 ⇒ sd ≈ 0.707.
        let se = (0.5f64 / k as f64).sqrt();
        let expect = -0.398942280401;
        assert!((g[0] - expect).abs() <= 3.0 * se, "estimate {} vs {expect}", g[0]);
    }

    #[test]
    fn pfyl_separated_optimum_has_vanishing_gradient() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let c = [1.0, 5.0, 1.0, 5.0];
        let w = oracle.solve(&c).unwrap();
        let cfg = PerturbationConfig::new(32, 1e-6);
        let mut rng = substream(6, 9);
        let (_, grad) =
            pfyl_loss_and_grad(&c, &w.values, &cfg, &oracle, &mut rng, SolveMode::Exact)
                .unwrap();
        assert!(grad.iter().all(|&g| g.abs() <= 1e-9));
    }

    #[test]
    fn pfyl_gradient_matches_gaussian_closed_form() {
        // 1-D set {0,1}, w_true = 1, σ = 1: E[grad] = 1 − Φ(−ĉ).
        // At ĉ = 0: 0.5.
        let oracle = one_dim();
        let k = 100_000;
        let cfg = PerturbationConfig::new(k, 1.0);
        let mut rng = substream(8, 10);
        let (_, grad) =
            pfyl_loss_and_grad(&[0.0], &[1.0], &cfg, &oracle, &mut rng, SolveMode::Exact)
                .unwrap();
        let se = (0.25f64 / k as f64).sqrt();
        assert!((grad[0] - 0.5).abs() <= 3.0 * se, "grad {} off 0.5", grad[0]);
    }

    #[test]
    fn regret_scale_invariance_and_hand_value() {
        let oracle = one_dim();
        assert_abs_diff_eq!(
            regret_eval(&[-1.0], &[1.0], 0.0, &oracle).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let c = [1.0, 5.0, 1.0, 5.0];
        let z = oracle.solve(&c).unwrap().objective;
        assert_abs_diff_eq!(regret_eval(&c, &c, z, &oracle).unwrap(), 0.0, epsilon = 1e-12);
        let scaled: Vec<f64> = c.iter().map(|x| 2.5 * x).collect();
        assert_abs_diff_eq!(
            regret_eval(&scaled, &c, z, &oracle).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn downstream_losses_evaluate_examples() {
        let sq = DownstreamLoss::SquaredError { reference: vec![1.0, 0.0] };
        let (v, g) = sq.eval(&[1.0, 0.0]).unwrap();
        assert_eq!((v, g), (0.0, vec![0.0, 0.0]));

        let ham = DownstreamLoss::Hamming { reference: vec![0.0, 1.0] };
        let (v, g) = ham.eval(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        assert_eq!(g, vec![1.0, -1.0]);
        assert!(ham.eval(&[0.5, 0.5]).is_err());

        let reg = DownstreamLoss::Regret { min_cost: vec![1.0, 1.0], min_z: 0.0 };
        let (v, g) = reg.eval(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        assert_eq!(g, vec![1.0, 1.0]);
    }
}

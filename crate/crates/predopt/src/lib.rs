//! # predopt — decision-focused learning for linear and integer programs
//!
//! This crate trains cost-prediction models *through* optimization problems:
//! instead of fitting predicted costs to true costs and hoping the decisions
//! work out (the two-stage approach), it backpropagates decision quality
//! itself through an embedded solver.
//!
//! The pieces:
//!
//! * [`oracle`] — the black-box optimization interface every loss talks to.
//! * [`solvers`] — built-in oracles: grid shortest path, multi-dimensional
//!   knapsack, symmetric TSP, their LP relaxations, and a dense two-phase
//!   simplex engine.
//! * [`losses`] — the four end-to-end gradient mechanisms (SPO+, DBB, DPO,
//!   PFYL), evaluation-only regret, and pluggable downstream losses.
//! * [`learn`] — linear cost predictors with manual backpropagation, SGD with
//!   momentum, prediction-space regularization, and the training loop.
//! * [`datagen`] — seeded synthetic benchmark generators for the three
//!   problems.
//! * [`dataset`] — features + costs bound to precomputed optimal solutions,
//!   with mini-batch iteration and a binary file format.
//! * [`metrics`] — normalized (unambiguous) regret, MSE, solution accuracy.
//!
//! Determinism is a design contract throughout: fixed seeds produce
//! bit-identical datasets, training trajectories, and evaluation reports,
//! independent of worker count.

pub mod datagen;
pub mod dataset;
pub mod learn;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod seeding;
pub mod solvers;

pub use oracle::{
    check_cost, normalize_to_min, CostVector, HypercubeOracle, ModelSense, Oracle,
    OracleCapabilities, OracleError, Solution,
};

/// Monotonic wall-clock shim: real timings on native targets, zeros on
/// `wasm32` (which has no `Instant`), so timing fields are advisory there
/// and everything else behaves identically.
#[cfg(not(target_arch = "wasm32"))]
pub(crate) mod clock {
    pub type Stamp = std::time::Instant;

    pub fn now() -> Stamp {
        std::time::Instant::now()
    }

    pub fn seconds_since(start: &Stamp) -> f64 {
        start.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
pub(crate) mod clock {
    pub type Stamp = ();

    pub fn now() -> Stamp {}

    pub fn seconds_since(_start: &Stamp) -> f64 {
        0.0
    }
}

/// Maps `f` over `indices`, fanning the work out to the rayon pool when the
/// `parallel` feature is enabled. Results come back in index order either
/// way, so callers reduce deterministically regardless of worker count.
pub(crate) fn par_map_indices<T, E, F>(indices: &[usize], f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        indices.par_iter().map(|&i| f(i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        indices.iter().map(|&i| f(i)).collect()
    }
}

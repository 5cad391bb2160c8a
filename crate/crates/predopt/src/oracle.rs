//! Solver-agnostic optimization oracle abstraction.
//!
//! Every loss in this crate talks to an optimizer only through the [`Oracle`]
//! trait: a black box that knows its model sense, its decision dimension, and
//! how to solve `min/max cᵀw` over a fixed feasible set. Built-in oracles live
//! in [`crate::solvers`]; third-party problems plug in by implementing the
//! trait.
//!
//! All loss math in this crate assumes minimization. Maximization oracles are
//! handled once at the boundary by negating costs ([`normalize_to_min`]) and
//! flipping gradient signs; solutions are always reported in the oracle's
//! native sense.

use thiserror::Error;

/// Optimization direction of an oracle. Immutable per oracle instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSense {
    Minimize,
    Maximize,
}

/// Objective coefficient vector of fixed dimension `d` — the quantity being
/// predicted by the learning side of the crate.
pub type CostVector = Vec<f64>;

/// A solution returned by an oracle: decision values plus the objective they
/// attain under the cost vector that was solved.
///
/// For integer oracles every entry is within 1e-6 of an integer; `objective`
/// always equals `dot(cost, values)` for the solved cost (within 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
}

impl Solution {
    pub fn new(values: Vec<f64>, objective: f64) -> Self {
        Solution { values, objective }
    }

    /// True if every entry is within `tol` of an integer.
    pub fn is_integral(&self, tol: f64) -> bool {
        self.values.iter().all(|v| (v - v.round()).abs() <= tol)
    }
}

/// What an oracle can do beyond plain exact solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCapabilities {
    /// Supports `solve_relaxed` (a continuous relaxation distinct from the
    /// exact problem).
    pub has_relaxation: bool,
    /// Supports `enumerate_optimal_set` on small instances.
    pub has_optimal_set_enumeration: bool,
    /// Length of the cost vectors accepted by `solve`.
    pub decision_dim: usize,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cost vector has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("cost vector entry {index} is not finite ({value})")]
    InvalidCost { index: usize, value: f64 },
    #[error("oracle does not support {0}")]
    UnsupportedCapability(&'static str),
    #[error("instance too large for {op}: {detail}")]
    SizeLimit { op: &'static str, detail: String },
    #[error("model is infeasible")]
    Infeasible,
    #[error("model is unbounded")]
    Unbounded,
}

/// Validates that `cost` is finite and matches the expected dimension.
pub fn check_cost(cost: &[f64], expected_dim: usize) -> Result<(), OracleError> {
    if cost.len() != expected_dim {
        return Err(OracleError::DimensionMismatch {
            got: cost.len(),
            expected: expected_dim,
        });
    }
    for (i, &v) in cost.iter().enumerate() {
        if !v.is_finite() {
            return Err(OracleError::InvalidCost { index: i, value: v });
        }
    }
    Ok(())
}

/// Converts a cost vector to the internal minimization convention: identity
/// for minimization oracles, elementwise negation for maximization oracles.
///
/// Loss modules operate exclusively on the normalized form; solutions are
/// reported back in the oracle's original sense.
pub fn normalize_to_min(cost: &[f64], sense: ModelSense) -> Result<CostVector, OracleError> {
    for (i, &v) in cost.iter().enumerate() {
        if !v.is_finite() {
            return Err(OracleError::InvalidCost { index: i, value: v });
        }
    }
    Ok(match sense {
        ModelSense::Minimize => cost.to_vec(),
        ModelSense::Maximize => cost.iter().map(|v| -v).collect(),
    })
}

/// Black-box optimization oracle over a fixed feasible set.
///
/// Implementations must be deterministic: a fixed cost vector always yields
/// the same solution, with ties broken by a documented, stable rule
/// (built-in solvers return the lexicographically smallest value vector their
/// algorithm can produce deterministically).
///
/// Oracles must be replicable: the harness clones one independent instance
/// per worker, so `Clone + Send` is required while `&self` solves need not be
/// re-entrant on a single instance.
pub trait Oracle: Send + Sync {
    fn sense(&self) -> ModelSense;

    fn decision_dim(&self) -> usize;

    /// Stable textual identifier of the problem: its kind plus every
    /// parameter that determines the feasible set. Datasets persist this
    /// string so a file can only be loaded against a matching oracle.
    fn fingerprint(&self) -> String;

    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            has_relaxation: false,
            has_optimal_set_enumeration: false,
            decision_dim: self.decision_dim(),
        }
    }

    /// Solves the oracle's problem under `cost`, honoring the oracle's sense.
    fn solve(&self, cost: &[f64]) -> Result<Solution, OracleError>;

    /// Solves a continuous relaxation of the problem, if one is available.
    fn solve_relaxed(&self, _cost: &[f64]) -> Result<Solution, OracleError> {
        Err(OracleError::UnsupportedCapability("relaxation"))
    }

    /// Returns every optimal solution (objective within 1e-9 of the optimum).
    /// Only available on oracles with enumeration capability, and only for
    /// instances below an oracle-specific size limit.
    fn enumerate_optimal_set(&self, _cost: &[f64]) -> Result<Vec<Solution>, OracleError> {
        Err(OracleError::UnsupportedCapability("optimal-set enumeration"))
    }

    /// Feasibility predicate for a candidate decision vector (used by tests
    /// and invariant checks, not by the hot solve path).
    fn is_feasible(&self, values: &[f64]) -> bool;

    /// Boxed clone, so trait objects can be replicated across workers.
    fn clone_box(&self) -> Box<dyn Oracle>;
}

impl Clone for Box<dyn Oracle> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Reference oracle over the hypercube `{0,1}^d` with independent coordinates:
/// under minimization, `w_j = 1` exactly when `c_j < 0` (ties at zero take 0,
/// the lexicographically smaller choice).
///
/// This is the simplest possible integer oracle — useful as an implementation
/// template and as the 1-D two-point problem whose perturbation losses have
/// Gaussian closed forms.
#[derive(Debug, Clone)]
pub struct HypercubeOracle {
    dim: usize,
    sense: ModelSense,
}

impl HypercubeOracle {
    pub fn new(dim: usize, sense: ModelSense) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        HypercubeOracle { dim, sense }
    }
}

impl Oracle for HypercubeOracle {
    fn sense(&self) -> ModelSense {
        self.sense
    }

    fn decision_dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        let sense = match self.sense {
            ModelSense::Minimize => "min",
            ModelSense::Maximize => "max",
        };
        format!("hypercube d={} sense={sense}", self.dim)
    }

    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            has_relaxation: false,
            has_optimal_set_enumeration: true,
            decision_dim: self.dim,
        }
    }

    fn solve(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        check_cost(cost, self.dim)?;
        let min_cost = normalize_to_min(cost, self.sense)?;
        let values: Vec<f64> = min_cost
            .iter()
            .map(|&c| if c < 0.0 { 1.0 } else { 0.0 })
            .collect();
        let objective: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
        Ok(Solution::new(values, objective))
    }

    fn enumerate_optimal_set(&self, cost: &[f64]) -> Result<Vec<Solution>, OracleError> {
        check_cost(cost, self.dim)?;
        let min_cost = normalize_to_min(cost, self.sense)?;
        // Coordinates with c_j = 0 are free; every assignment of them is
        // optimal. Cap the blow-up to keep enumeration bounded.
        let free: Vec<usize> = (0..self.dim).filter(|&j| min_cost[j] == 0.0).collect();
        if free.len() > 20 {
            return Err(OracleError::SizeLimit {
                op: "enumerate_optimal_set",
                detail: format!("{} zero-cost coordinates", free.len()),
            });
        }
        let base: Vec<f64> = min_cost
            .iter()
            .map(|&c| if c < 0.0 { 1.0 } else { 0.0 })
            .collect();
        let mut out = Vec::new();
        for mask in 0..(1u64 << free.len()) {
            let mut values = base.clone();
            for (b, &j) in free.iter().enumerate() {
                values[j] = ((mask >> b) & 1) as f64;
            }
            let objective: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
            out.push(Solution::new(values, objective));
        }
        Ok(out)
    }

    fn is_feasible(&self, values: &[f64]) -> bool {
        values.len() == self.dim
            && values.iter().all(|&v| (v - 0.0).abs() <= 1e-6 || (v - 1.0).abs() <= 1e-6)
    }

    fn clone_box(&self) -> Box<dyn Oracle> {
        Box::new(self.clone())
    }
}

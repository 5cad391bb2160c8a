//! Built-in exact solvers and LP relaxations for the three benchmark
//! problems — grid shortest path, multi-dimensional knapsack, symmetric TSP —
//! plus the general dense-simplex LP engine they share.
//!
//! All solvers are pure functions of their inputs; the oracle wrappers
//! ([`GridOracle`], [`KnapsackOracle`], [`TspOracle`]) carry only their
//! problem specs, so replicating one per worker is a cheap clone.

pub mod grid;
pub mod knapsack;
pub mod simplex;
pub mod tsp;
pub mod tsp_relax;

pub use grid::{grid_all_paths, grid_shortest_path_solve, GridOracle, GridSpec};
pub use knapsack::{knapsack_lp_relax, knapsack_solve, KnapsackOracle, KnapsackSpec};
pub use simplex::{simplex_solve, LpOutcome, LpProblem, SimplexError};
pub use tsp::{tsp_brute_force, tsp_solve, TspOracle, TspSpec, TSP_EXACT_NODE_LIMIT};
pub use tsp_relax::{tsp_lp_relax, TspFormulation, TSP_RELAX_NODE_LIMIT};

//! Linear relaxations of two directed TSP formulations.
//!
//! Both formulations use directed arc variables `x_ij ∈ [0,1]` with unit in-
//! and out-degree at every node, and differ in how subtours are excluded:
//!
//! * **MTZ** adds order variables `u_i ∈ [1, v−1]` for the non-depot nodes
//!   with `u_i − u_j + (v−1)·x_ij ≤ v−2` for all non-depot pairs.
//! * **GG** adds a single-commodity flow `y_ij ≥ 0` on arcs not entering the
//!   depot: the depot ships `v−1` units, every other node consumes one, and
//!   flow may only travel on selected arcs (`y_ij ≤ (v−1)·x_ij`).
//!
//! GG's relaxation is at least as tight as MTZ's, so for any cost vector
//! `z(MTZ-LP) ≤ z(GG-LP) ≤ z(exact tour)`.
//!
//! The relaxed solution is projected back to the undirected edge indexing by
//! summing the two directed values per pair and clamping to `[0,1]`. The
//! reported objective is the LP bound itself, which can fall below
//! `dot(cost, projected)` when both directions of a pair carry weight; it is
//! the quantity that lower-bounds the exact tour cost.

use crate::oracle::{check_cost, ModelSense, OracleError, Solution};
use crate::solvers::simplex::{simplex_solve, LpOutcome, LpProblem};
use crate::solvers::tsp::TspSpec;

/// Which subtour-elimination style the relaxation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TspFormulation {
    Mtz,
    Gg,
}

impl std::fmt::Display for TspFormulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TspFormulation::Mtz => write!(f, "mtz"),
            TspFormulation::Gg => write!(f, "gg"),
        }
    }
}

/// LP builders keep the dense tableau manageable: beyond 12 nodes the row
/// count grows past what the simplex engine should be asked to chew.
pub const TSP_RELAX_NODE_LIMIT: usize = 12;

/// Solves the chosen formulation's LP relaxation and projects the directed
/// arc values onto the undirected edge indexing.
pub fn tsp_lp_relax(
    spec: &TspSpec,
    cost: &[f64],
    formulation: TspFormulation,
) -> Result<Solution, OracleError> {
    check_cost(cost, spec.edge_count())?;
    let v = spec.nodes;
    if v > TSP_RELAX_NODE_LIMIT {
        return Err(OracleError::SizeLimit {
            op: "tsp_lp_relax",
            detail: format!("{v} nodes exceed the LP-builder limit {TSP_RELAX_NODE_LIMIT}"),
        });
    }

    // Directed arcs (i, j), i ≠ j, i-major order.
    let arcs: Vec<(usize, usize)> =
        (0..v).flat_map(|i| (0..v).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let na = arcs.len();
    let arc_idx = |i: usize, j: usize| -> usize {
        // Row i holds v−1 arcs; arcs to j > i are shifted down by one slot.
        i * (v - 1) + if j < i { j } else { j - 1 }
    };

    let (nvar, flow_off) = match formulation {
        TspFormulation::Mtz => (na + (v - 1), 0),
        TspFormulation::Gg => (na + na - (v - 1), na), // flow arcs: all with j ≠ 0
    };
    // GG flow variable index for arc (i, j), j ≠ 0.
    let flow_idx = |i: usize, j: usize| -> usize {
        debug_assert!(j != 0);
        let mut count = 0;
        for ii in 0..v {
            for jj in 0..v {
                if jj != ii && jj != 0 {
                    if ii == i && jj == j {
                        return flow_off + count;
                    }
                    count += 1;
                }
            }
        }
        unreachable!("arc ({i}, {j}) not found");
    };

    let mut c_obj = vec![0.0; nvar];
    for &(i, j) in &arcs {
        c_obj[arc_idx(i, j)] = cost[spec.edge_index(i, j)];
    }

    let mut bounds = vec![(0.0, 1.0); na];
    match formulation {
        TspFormulation::Mtz => bounds.extend(vec![(1.0, (v - 1) as f64); v - 1]),
        TspFormulation::Gg => bounds.extend(vec![(0.0, f64::INFINITY); nvar - na]),
    }

    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let push_eq = |row: Vec<f64>, rhs: f64, a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>| {
        let neg: Vec<f64> = row.iter().map(|x| -x).collect();
        a.push(row);
        b.push(rhs);
        a.push(neg);
        b.push(-rhs);
    };

    // Unit out-degree and in-degree at every node.
    for i in 0..v {
        let mut row = vec![0.0; nvar];
        for j in 0..v {
            if j != i {
                row[arc_idx(i, j)] = 1.0;
            }
        }
        push_eq(row, 1.0, &mut a, &mut b);
    }
    for j in 0..v {
        let mut row = vec![0.0; nvar];
        for i in 0..v {
            if i != j {
                row[arc_idx(i, j)] = 1.0;
            }
        }
        push_eq(row, 1.0, &mut a, &mut b);
    }

    match formulation {
        TspFormulation::Mtz => {
            // u_i − u_j + (v−1) x_ij ≤ v − 2 for non-depot i ≠ j.
            let u_off = na;
            for i in 1..v {
                for j in 1..v {
                    if i == j {
                        continue;
                    }
                    let mut row = vec![0.0; nvar];
                    row[u_off + i - 1] = 1.0;
                    row[u_off + j - 1] = -1.0;
                    row[arc_idx(i, j)] = (v - 1) as f64;
                    a.push(row);
                    b.push((v - 2) as f64);
                }
            }
        }
        TspFormulation::Gg => {
            // Depot ships v−1 units.
            let mut row = vec![0.0; nvar];
            for j in 1..v {
                row[flow_idx(0, j)] = 1.0;
            }
            push_eq(row, (v - 1) as f64, &mut a, &mut b);
            // Every non-depot node consumes one unit.
            for j in 1..v {
                let mut row = vec![0.0; nvar];
                for i in 0..v {
                    if i != j {
                        row[flow_idx(i, j)] = 1.0;
                    }
                }
                for k in 1..v {
                    if k != j {
                        row[flow_idx(j, k)] = -1.0;
                    }
                }
                push_eq(row, 1.0, &mut a, &mut b);
            }
            // Flow only on selected arcs: y_ij − (v−1) x_ij ≤ 0.
            for i in 0..v {
                for j in 1..v {
                    if i == j {
                        continue;
                    }
                    let mut row = vec![0.0; nvar];
                    row[flow_idx(i, j)] = 1.0;
                    row[arc_idx(i, j)] = -((v - 1) as f64);
                    a.push(row);
                    b.push(0.0);
                }
            }
        }
    }

    let lp = LpProblem { a, b, c: c_obj, sense: ModelSense::Minimize, bounds };
    let solved = simplex_solve(&lp)
        .map_err(|e| OracleError::SizeLimit { op: "tsp_lp_relax", detail: e.to_string() })?;
    let LpOutcome::Optimal(directed) = solved else {
        // Degree constraints always admit the uniform doubly-stochastic
        // point, so the LP can be neither infeasible nor unbounded.
        return Err(OracleError::Infeasible);
    };

    let mut values = vec![0.0; spec.edge_count()];
    for (e, &(i, j)) in spec.edges().iter().enumerate() {
        let sum = directed.values[arc_idx(i, j)] + directed.values[arc_idx(j, i)];
        values[e] = sum.clamp(0.0, 1.0);
    }
    Ok(Solution::new(values, directed.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::tsp::{tsp_brute_force, tsp_solve};
    use approx::assert_abs_diff_eq;

    #[test]
    fn three_nodes_relax_to_the_unique_tour() {
        let spec = TspSpec::new(3);
        let cost = [1.0, 2.0, 3.0];
        for f in [TspFormulation::Mtz, TspFormulation::Gg] {
            let sol = tsp_lp_relax(&spec, &cost, f).unwrap();
            assert_abs_diff_eq!(sol.objective, 6.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn frozen_six_node_bounds() {
        // Expected LP bounds computed with an independent solver on this
        // instance: MTZ 27.84, GG 27.88; exact tour 27.9.
        let spec = TspSpec::new(6);
        let cost = [
            8.0, 4.9, 8.7, 7.3, 1.8, 9.8, 7.9, 8.1, 2.2, 5.1, 4.3, 9.3, 6.8, 8.4, 5.0,
        ];
        let mtz = tsp_lp_relax(&spec, &cost, TspFormulation::Mtz).unwrap();
        let gg = tsp_lp_relax(&spec, &cost, TspFormulation::Gg).unwrap();
        let exact = tsp_solve(&spec, &cost).unwrap();
        assert_abs_diff_eq!(mtz.objective, 27.84, epsilon = 1e-6);
        assert_abs_diff_eq!(gg.objective, 27.88, epsilon = 1e-6);
        assert_abs_diff_eq!(exact.objective, 27.9, epsilon = 1e-9);
    }

    #[test]
    fn bound_ordering_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        for _ in 0..15 {
            let v = rng.random_range(4..8);
            let spec = TspSpec::new(v);
            let cost: Vec<f64> =
                (0..spec.edge_count()).map(|_| rng.random_range(1.0..10.0)).collect();
            let mtz = tsp_lp_relax(&spec, &cost, TspFormulation::Mtz).unwrap().objective;
            let gg = tsp_lp_relax(&spec, &cost, TspFormulation::Gg).unwrap().objective;
            let ip = tsp_brute_force(&spec, &cost).unwrap().objective;
            assert!(mtz <= gg + 1e-6, "MTZ {mtz} > GG {gg}");
            assert!(gg <= ip + 1e-6, "GG {gg} > IP {ip}");
        }
    }

    #[test]
    fn projected_values_stay_in_unit_range() {
        let spec = TspSpec::new(5);
        let cost = [2.0, 5.0, 3.0, 4.0, 1.5, 2.5, 3.5, 2.2, 4.4, 1.1];
        for f in [TspFormulation::Mtz, TspFormulation::Gg] {
            let sol = tsp_lp_relax(&spec, &cost, f).unwrap();
            assert_eq!(sol.values.len(), spec.edge_count());
            for &x in &sol.values {
                assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn node_limit_is_enforced() {
        let spec = TspSpec::new(13);
        let cost = vec![1.0; spec.edge_count()];
        assert!(matches!(
            tsp_lp_relax(&spec, &cost, TspFormulation::Gg),
            Err(OracleError::SizeLimit { .. })
        ));
    }
}

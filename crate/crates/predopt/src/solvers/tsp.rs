//! Symmetric traveling salesman on a complete graph.
//!
//! Edge indexing convention (relied on by data generation and cost vectors):
//! the `v(v−1)/2` undirected pairs `(i, j)` with `i < j` in lexicographic
//! order, so for `v = 4`: `(0,1), (0,2), (0,3), (1,2), (1,3), (2,3)`.
//!
//! The exact solver is Held–Karp dynamic programming over vertex subsets —
//! equal to the subtour-formulation integer optimum by definition, with no
//! cut separation needed at the instance sizes this crate targets (`v ≤ 18`).

use itertools::Itertools;

use crate::oracle::{
    check_cost, ModelSense, Oracle, OracleCapabilities, OracleError, Solution,
};
use crate::solvers::tsp_relax::{tsp_lp_relax, TspFormulation};

/// Node count for a symmetric TSP instance; the cost dimension is
/// `v(v−1)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TspSpec {
    pub nodes: usize,
}

/// Held–Karp holds a table of `2^(v−1) · (v−1)` floats; beyond 18 nodes the
/// memory and time budgets are unreasonable for this crate.
pub const TSP_EXACT_NODE_LIMIT: usize = 18;

impl TspSpec {
    /// At least 3 nodes.
    pub fn new(nodes: usize) -> Self {
        assert!(nodes >= 3, "TSP needs at least 3 nodes");
        TspSpec { nodes }
    }

    pub fn edge_count(&self) -> usize {
        self.nodes * (self.nodes - 1) / 2
    }

    /// Index of undirected pair `(i, j)`, `i ≠ j`, in the fixed ordering.
    pub fn edge_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j && i < self.nodes && j < self.nodes);
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.nodes - i * (i + 1) / 2 + (j - i - 1)
    }

    /// The edge list in index order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let v = self.nodes;
        (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect()
    }

    /// Edge-incidence vector of a tour given as a node sequence.
    pub fn tour_to_values(&self, tour: &[usize]) -> Vec<f64> {
        let mut values = vec![0.0; self.edge_count()];
        for a in 0..tour.len() {
            let b = (a + 1) % tour.len();
            values[self.edge_index(tour[a], tour[b])] = 1.0;
        }
        values
    }
}

/// Exact tour via Held–Karp dynamic programming. Ties are broken by the
/// first minimum found in the fixed iteration order (subsets ascending,
/// nodes ascending), which is deterministic.
pub fn tsp_solve(spec: &TspSpec, cost: &[f64]) -> Result<Solution, OracleError> {
    check_cost(cost, spec.edge_count())?;
    let v = spec.nodes;
    if v > TSP_EXACT_NODE_LIMIT {
        return Err(OracleError::SizeLimit {
            op: "tsp_solve",
            detail: format!("{v} nodes exceed the exact-solver limit {TSP_EXACT_NODE_LIMIT}"),
        });
    }
    let m = v - 1; // nodes 1..v, bit t ↔ node t+1
    let full = (1usize << m) - 1;
    let c = |a: usize, b: usize| cost[spec.edge_index(a, b)];

    let mut dp = vec![f64::INFINITY; (full + 1) * m];
    let mut parent = vec![u8::MAX; (full + 1) * m];
    for t in 0..m {
        dp[(1 << t) * m + t] = c(0, t + 1);
    }
    for mask in 1..=full {
        for t in 0..m {
            if mask & (1 << t) == 0 {
                continue;
            }
            let cur = dp[mask * m + t];
            if !cur.is_finite() {
                continue;
            }
            for s in 0..m {
                if mask & (1 << s) != 0 {
                    continue;
                }
                let nm = mask | (1 << s);
                let cand = cur + c(t + 1, s + 1);
                if cand < dp[nm * m + s] {
                    dp[nm * m + s] = cand;
                    parent[nm * m + s] = t as u8;
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut last = 0usize;
    for t in 0..m {
        let cand = dp[full * m + t] + c(t + 1, 0);
        if cand < best {
            best = cand;
            last = t;
        }
    }

    let mut tour = Vec::with_capacity(v);
    let mut mask = full;
    let mut t = last;
    loop {
        tour.push(t + 1);
        let p = parent[mask * m + t];
        mask &= !(1 << t);
        if p == u8::MAX {
            break;
        }
        t = p as usize;
    }
    tour.push(0);
    tour.reverse();

    let values = spec.tour_to_values(&tour);
    let objective: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
    Ok(Solution::new(values, objective))
}

/// Brute force over all `(v−1)!/2` distinct tours; used for cross-checks and
/// optimal-set enumeration on small instances.
pub fn tsp_brute_force(spec: &TspSpec, cost: &[f64]) -> Result<Solution, OracleError> {
    check_cost(cost, spec.edge_count())?;
    let v = spec.nodes;
    if v > 10 {
        return Err(OracleError::SizeLimit {
            op: "tsp_brute_force",
            detail: format!("{v} nodes is too many for permutation enumeration"),
        });
    }
    let mut best = f64::INFINITY;
    let mut best_values: Option<Vec<f64>> = None;
    for perm in (1..v).permutations(v - 1) {
        // Each undirected tour appears twice; keep the orientation whose
        // first inner node is smaller than its last.
        if perm[0] > perm[v - 2] {
            continue;
        }
        let mut tour = Vec::with_capacity(v);
        tour.push(0);
        tour.extend(&perm);
        let values = spec.tour_to_values(&tour);
        let obj: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
        if obj < best - 1e-15 {
            best = obj;
            best_values = Some(values);
        }
    }
    let values = best_values.expect("v ≥ 3 always has a tour");
    Ok(Solution::new(values, best))
}

/// Symmetric TSP oracle (minimization). `solve_relaxed` solves the linear
/// relaxation of the configured formulation (GG by default, the tighter of
/// the two); enumeration brute-forces tours on instances with `v ≤ 9`.
#[derive(Debug, Clone)]
pub struct TspOracle {
    spec: TspSpec,
    formulation: TspFormulation,
}

impl TspOracle {
    pub fn new(spec: TspSpec) -> Self {
        TspOracle { spec, formulation: TspFormulation::Gg }
    }

    pub fn with_formulation(mut self, formulation: TspFormulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn spec(&self) -> &TspSpec {
        &self.spec
    }

    pub fn formulation(&self) -> TspFormulation {
        self.formulation
    }
}

impl Oracle for TspOracle {
    fn sense(&self) -> ModelSense {
        ModelSense::Minimize
    }

    fn decision_dim(&self) -> usize {
        self.spec.edge_count()
    }

    fn fingerprint(&self) -> String {
        // The relaxation formulation is a solve-time choice, not part of the
        // feasible set, so it is deliberately left out.
        format!("tsp v={}", self.spec.nodes)
    }

    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            has_relaxation: true,
            has_optimal_set_enumeration: self.spec.nodes <= 9,
            decision_dim: self.decision_dim(),
        }
    }

    fn solve(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        tsp_solve(&self.spec, cost)
    }

    fn solve_relaxed(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        tsp_lp_relax(&self.spec, cost, self.formulation)
    }

    fn enumerate_optimal_set(&self, cost: &[f64]) -> Result<Vec<Solution>, OracleError> {
        check_cost(cost, self.decision_dim())?;
        let v = self.spec.nodes;
        if v > 9 {
            return Err(OracleError::SizeLimit {
                op: "enumerate_optimal_set",
                detail: format!("{v} nodes exceed the enumeration limit 9"),
            });
        }
        let mut sols: Vec<Solution> = Vec::new();
        let mut best = f64::INFINITY;
        for perm in (1..v).permutations(v - 1) {
            if perm[0] > perm[v - 2] {
                continue;
            }
            let mut tour = Vec::with_capacity(v);
            tour.push(0);
            tour.extend(&perm);
            let values = self.spec.tour_to_values(&tour);
            let obj: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
            if obj < best - 1e-9 {
                best = obj;
            }
            sols.push(Solution::new(values, obj));
        }
        sols.retain(|s| s.objective <= best + 1e-9);
        Ok(sols)
    }

    fn is_feasible(&self, values: &[f64]) -> bool {
        let v = self.spec.nodes;
        if values.len() != self.decision_dim() {
            return false;
        }
        if values.iter().any(|&x| (x - 0.0).abs() > 1e-6 && (x - 1.0).abs() > 1e-6) {
            return false;
        }
        // Degree 2 everywhere and a single cycle covering all nodes.
        let edges = self.spec.edges();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); v];
        for (e, &(i, j)) in edges.iter().enumerate() {
            if values[e].round() == 1.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        if adj.iter().any(|nbrs| nbrs.len() != 2) {
            return false;
        }
        let mut seen = vec![false; v];
        let (mut prev, mut cur) = (0usize, adj[0][0]);
        seen[0] = true;
        let mut count = 1usize;
        while cur != 0 {
            if seen[cur] {
                return false;
            }
            seen[cur] = true;
            count += 1;
            let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
            prev = cur;
            cur = next;
        }
        count == v
    }

    fn clone_box(&self) -> Box<dyn Oracle> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn edge_indexing_is_lexicographic() {
        let spec = TspSpec::new(4);
        assert_eq!(spec.edges(), vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for (idx, &(i, j)) in spec.edges().iter().enumerate() {
            assert_eq!(spec.edge_index(i, j), idx);
            assert_eq!(spec.edge_index(j, i), idx);
        }
        assert_eq!(TspSpec::new(20).edge_count(), 190);
    }

    #[test]
    fn three_nodes_have_unique_tour() {
        let spec = TspSpec::new(3);
        let sol = tsp_solve(&spec, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sol.values, vec![1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(sol.objective, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_square_takes_perimeter() {
        // Nodes at (0,0), (1,0), (1,1), (0,1); expected optimum computed by
        // brute force over the three distinct tours: the perimeter, cost 4.
        let spec = TspSpec::new(4);
        let s2 = std::f64::consts::SQRT_2;
        let cost = [1.0, s2, 1.0, 1.0, s2, 1.0];
        let sol = tsp_solve(&spec, &cost).unwrap();
        assert_abs_diff_eq!(sol.objective, 4.0, epsilon = 1e-12);
        assert_eq!(sol.values, vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn frozen_eight_node_instance() {
        // Expected optimum computed by independent permutation brute force:
        // objective 26.7.
        let spec = TspSpec::new(8);
        let cost = [
            3.0, 6.0, 1.6, 8.4, 6.7, 7.8, 4.2, 9.7, 9.0, 8.0, 2.8, 5.2, 1.4, 2.4, 7.1, 7.7,
            9.7, 3.9, 4.3, 5.2, 2.7, 2.2, 5.3, 3.0, 7.0, 4.9, 8.5, 7.3,
        ];
        let sol = tsp_solve(&spec, &cost).unwrap();
        assert_abs_diff_eq!(sol.objective, 26.7, epsilon = 1e-9);
        let brute = tsp_brute_force(&spec, &cost).unwrap();
        assert_abs_diff_eq!(brute.objective, 26.7, epsilon = 1e-9);
        assert_eq!(sol.values, brute.values);
    }

    #[test]
    fn held_karp_matches_brute_force_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        for _ in 0..60 {
            let v = rng.random_range(4..9);
            let spec = TspSpec::new(v);
            let cost: Vec<f64> =
                (0..spec.edge_count()).map(|_| rng.random_range(0.5..10.0)).collect();
            let a = tsp_solve(&spec, &cost).unwrap();
            let b = tsp_brute_force(&spec, &cost).unwrap();
            assert_abs_diff_eq!(a.objective, b.objective, epsilon = 1e-9);
        }
    }

    #[test]
    fn oracle_solution_is_feasible() {
        use rand::{Rng, SeedableRng};
        let oracle = TspOracle::new(TspSpec::new(7));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let cost: Vec<f64> =
                (0..oracle.decision_dim()).map(|_| rng.random_range(0.5..10.0)).collect();
            let sol = oracle.solve(&cost).unwrap();
            assert!(oracle.is_feasible(&sol.values));
        }
    }

    #[test]
    fn feasibility_rejects_subtours() {
        let oracle = TspOracle::new(TspSpec::new(6));
        let spec = oracle.spec();
        // Two triangles (0,1,2) and (3,4,5): degree 2 everywhere but not one
        // cycle.
        let mut values = vec![0.0; spec.edge_count()];
        for &(i, j) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            values[spec.edge_index(i, j)] = 1.0;
        }
        assert!(!oracle.is_feasible(&values));
    }

    #[test]
    fn size_limit_is_enforced() {
        let spec = TspSpec::new(19);
        let cost = vec![1.0; spec.edge_count()];
        assert!(matches!(
            tsp_solve(&spec, &cost),
            Err(OracleError::SizeLimit { .. })
        ));
    }

    #[test]
    fn enumeration_collects_all_tied_tours() {
        // All edges cost 1: every tour has objective v, so all distinct tours
        // are optimal. v=4 has 3 distinct tours.
        let oracle = TspOracle::new(TspSpec::new(4));
        let set = oracle.enumerate_optimal_set(&[1.0; 6]).unwrap();
        assert_eq!(set.len(), 3);
    }
}

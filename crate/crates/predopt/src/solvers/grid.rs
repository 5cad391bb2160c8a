//! Shortest path on an h×w grid from the northwest corner to the southeast
//! corner, moving only right or down.
//!
//! Arc ordering convention (relied on by data generation, file formats, and
//! every cost vector touching grid problems): for each row top to bottom,
//! first the row's horizontal arcs left to right, then — except for the last
//! row — the row's vertical arcs left to right. A 2×2 grid therefore has arcs
//! `[(0,1), (0,2), (1,3), (2,3)]`.
//!
//! The solver is dynamic programming over this arc order (which is
//! topological), not Dijkstra: predicted costs can be negative, and on a DAG
//! the DP stays exact for any sign pattern.

use crate::oracle::{
    check_cost, ModelSense, Oracle, OracleCapabilities, OracleError, Solution,
};

/// Grid dimensions for the shortest-path problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
}

impl GridSpec {
    /// Both dimensions must be at least 2.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 2 && width >= 2, "grid must be at least 2×2");
        GridSpec { height, width }
    }

    /// Number of arcs: `h(w−1) + (h−1)w`. This is the cost dimension.
    pub fn arc_count(&self) -> usize {
        self.height * (self.width - 1) + (self.height - 1) * self.width
    }

    /// Number of grid nodes, `h·w`; node ids are row-major.
    pub fn node_count(&self) -> usize {
        self.height * self.width
    }

    /// The arc list in the fixed ordering described at module level.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let (h, w) = (self.height, self.width);
        let mut arcs = Vec::with_capacity(self.arc_count());
        for i in 0..h {
            for j in 0..w - 1 {
                let v = i * w + j;
                arcs.push((v, v + 1));
            }
            if i == h - 1 {
                continue;
            }
            for j in 0..w {
                let v = i * w + j;
                arcs.push((v, v + w));
            }
        }
        arcs
    }

    /// Total number of monotone source→sink paths, `C(h+w−2, h−1)`, saturating
    /// at `usize::MAX` for large grids.
    pub fn path_count(&self) -> usize {
        let (n, k) = (self.height + self.width - 2, self.height - 1);
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc * (n - i) as u128 / (i + 1) as u128;
            if acc > usize::MAX as u128 {
                return usize::MAX;
            }
        }
        acc as usize
    }
}

/// Solves the grid shortest-path problem by DP in arc (topological) order.
///
/// Ties are broken by preferring the lexicographically earlier arc index:
/// a relaxation only replaces the incumbent on strict improvement, so the
/// first arc attaining the minimum wins.
pub fn grid_shortest_path_solve(spec: &GridSpec, cost: &[f64]) -> Result<Solution, OracleError> {
    check_cost(cost, spec.arc_count())?;
    let arcs = spec.arcs();
    let n = spec.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    dist[0] = 0.0;
    for (idx, &(u, v)) in arcs.iter().enumerate() {
        let cand = dist[u] + cost[idx];
        if cand < dist[v] {
            dist[v] = cand;
            pred[v] = Some(idx);
        }
    }
    let sink = n - 1;
    let mut values = vec![0.0; arcs.len()];
    let mut node = sink;
    while node != 0 {
        let idx = pred[node].expect("every node below the source is reachable");
        values[idx] = 1.0;
        node = arcs[idx].0;
    }
    let objective: f64 = cost.iter().zip(&values).map(|(c, w)| c * w).sum();
    Ok(Solution::new(values, objective))
}

/// Enumerates every monotone source→sink path as an arc-incidence vector,
/// in lexicographic order of the move sequence (right before down).
pub fn grid_all_paths(spec: &GridSpec) -> Vec<Vec<f64>> {
    let arcs = spec.arcs();
    let mut arc_idx = std::collections::HashMap::new();
    for (i, &a) in arcs.iter().enumerate() {
        arc_idx.insert(a, i);
    }
    let (h, w) = (spec.height, spec.width);
    let sink = spec.node_count() - 1;
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    fn rec(
        node: usize,
        sink: usize,
        h: usize,
        w: usize,
        arc_idx: &std::collections::HashMap<(usize, usize), usize>,
        stack: &mut Vec<usize>,
        d: usize,
        out: &mut Vec<Vec<f64>>,
    ) {
        if node == sink {
            let mut vec = vec![0.0; d];
            for &i in stack.iter() {
                vec[i] = 1.0;
            }
            out.push(vec);
            return;
        }
        let (r, c) = (node / w, node % w);
        if c + 1 < w {
            stack.push(arc_idx[&(node, node + 1)]);
            rec(node + 1, sink, h, w, arc_idx, stack, d, out);
            stack.pop();
        }
        if r + 1 < h {
            stack.push(arc_idx[&(node, node + w)]);
            rec(node + w, sink, h, w, arc_idx, stack, d, out);
            stack.pop();
        }
    }

    rec(0, sink, h, w, &arc_idx, &mut stack, arcs.len(), &mut out);
    out
}

/// Grid shortest-path oracle (minimization). No distinct relaxation is
/// offered: the underlying flow polytope is integral, so the LP relaxation
/// coincides with the exact problem.
#[derive(Debug, Clone)]
pub struct GridOracle {
    spec: GridSpec,
    /// Maximum number of paths `enumerate_optimal_set` will visit.
    enumeration_budget: usize,
}

impl GridOracle {
    pub fn new(spec: GridSpec) -> Self {
        GridOracle { spec, enumeration_budget: 100_000 }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Caps how many paths `enumerate_optimal_set` may visit (default 10⁵);
    /// grids whose path count exceeds the budget report a size-limit error
    /// instead of enumerating.
    pub fn with_enumeration_budget(mut self, budget: usize) -> Self {
        self.enumeration_budget = budget;
        self
    }
}

impl Oracle for GridOracle {
    fn sense(&self) -> ModelSense {
        ModelSense::Minimize
    }

    fn decision_dim(&self) -> usize {
        self.spec.arc_count()
    }

    fn fingerprint(&self) -> String {
        format!("grid-shortest-path h={} w={}", self.spec.height, self.spec.width)
    }

    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            has_relaxation: false,
            has_optimal_set_enumeration: true,
            decision_dim: self.decision_dim(),
        }
    }

    fn solve(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        grid_shortest_path_solve(&self.spec, cost)
    }

    fn enumerate_optimal_set(&self, cost: &[f64]) -> Result<Vec<Solution>, OracleError> {
        check_cost(cost, self.decision_dim())?;
        if self.spec.path_count() > self.enumeration_budget {
            return Err(OracleError::SizeLimit {
                op: "enumerate_optimal_set",
                detail: format!(
                    "{} paths exceed budget {}",
                    self.spec.path_count(),
                    self.enumeration_budget
                ),
            });
        }
        let mut best = f64::INFINITY;
        let mut sols: Vec<Solution> = Vec::new();
        for path in grid_all_paths(&self.spec) {
            let obj: f64 = cost.iter().zip(&path).map(|(c, w)| c * w).sum();
            if obj < best - 1e-9 {
                best = obj;
            }
            sols.push(Solution::new(path, obj));
        }
        sols.retain(|s| s.objective <= best + 1e-9);
        Ok(sols)
    }

    fn is_feasible(&self, values: &[f64]) -> bool {
        if values.len() != self.decision_dim() {
            return false;
        }
        if values.iter().any(|&v| (v - 0.0).abs() > 1e-6 && (v - 1.0).abs() > 1e-6) {
            return false;
        }
        // Unit flow conservation: +1 out of the source, −1 into the sink,
        // balanced elsewhere. On a DAG this certifies exactly one path.
        let arcs = self.spec.arcs();
        let n = self.spec.node_count();
        let mut net = vec![0.0f64; n];
        for (idx, &(u, v)) in arcs.iter().enumerate() {
            let x = values[idx].round();
            net[u] += x;
            net[v] -= x;
        }
        let ok_source = (net[0] - 1.0).abs() <= 1e-6;
        let ok_sink = (net[n - 1] + 1.0).abs() <= 1e-6;
        let ok_inner = net[1..n - 1].iter().all(|&x| x.abs() <= 1e-6);
        ok_source && ok_sink && ok_inner
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
    fn arc_ordering_matches_convention() {
        assert_eq!(GridSpec::new(2, 2).arcs(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(
            GridSpec::new(3, 3).arcs(),
            vec![
                (0, 1),
                (1, 2),
                (0, 3),
                (1, 4),
                (2, 5),
                (3, 4),
                (4, 5),
                (3, 6),
                (4, 7),
                (5, 8),
                (6, 7),
                (7, 8),
            ]
        );
    }

    #[test]
    fn arc_counts() {
        assert_eq!(GridSpec::new(2, 2).arc_count(), 4);
        assert_eq!(GridSpec::new(3, 3).arc_count(), 12);
        assert_eq!(GridSpec::new(5, 5).arc_count(), 40);
    }

    #[test]
    fn two_by_two_picks_cheap_path() {
        let spec = GridSpec::new(2, 2);
        let sol = grid_shortest_path_solve(&spec, &[1.0, 5.0, 1.0, 5.0]).unwrap();
        assert_eq!(sol.values, vec![1.0, 0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_costs_are_exact() {
        let spec = GridSpec::new(2, 2);
        let sol = grid_shortest_path_solve(&spec, &[-1.0, -1.0, -1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(sol.objective, -2.0, epsilon = 1e-12);
        let oracle = GridOracle::new(spec);
        assert!(oracle.is_feasible(&sol.values));
    }

    #[test]
    fn tie_prefers_earlier_arcs() {
        // All-ones costs: both 2×2 paths cost 2; the right-then-down path
        // uses arcs {0, 2}, the earliest possible.
        let spec = GridSpec::new(2, 2);
        let sol = grid_shortest_path_solve(&spec, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(sol.values, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn path_counts_match_enumeration() {
        for (h, w) in [(2, 2), (3, 3), (2, 4), (5, 5)] {
            let spec = GridSpec::new(h, w);
            assert_eq!(grid_all_paths(&spec).len(), spec.path_count());
        }
        assert_eq!(GridSpec::new(3, 3).path_count(), 6);
        assert_eq!(GridSpec::new(5, 5).path_count(), 70);
    }

    #[test]
    fn dp_matches_exhaustive_enumeration() {
        use rand::{Rng, SeedableRng};
        let spec = GridSpec::new(3, 3);
        let paths = grid_all_paths(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let cost: Vec<f64> =
                (0..spec.arc_count()).map(|_| rng.random_range(-2.0..5.0)).collect();
            let sol = grid_shortest_path_solve(&spec, &cost).unwrap();
            let brute = paths
                .iter()
                .map(|p| cost.iter().zip(p).map(|(c, w)| c * w).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(sol.objective, brute, epsilon = 1e-9);
        }
    }

    #[test]
    fn enumerate_optimal_set_finds_both_tied_paths() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        let set = oracle.enumerate_optimal_set(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(set.len(), 2);
        for sol in &set {
            assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn feasibility_rejects_broken_flows() {
        let oracle = GridOracle::new(GridSpec::new(2, 2));
        assert!(!oracle.is_feasible(&[1.0, 1.0, 1.0, 1.0])); // two paths at once
        assert!(!oracle.is_feasible(&[1.0, 0.0, 0.0, 1.0])); // disconnected
        assert!(!oracle.is_feasible(&[0.5, 0.0, 0.5, 0.0])); // fractional
        assert!(oracle.is_feasible(&[0.0, 1.0, 0.0, 1.0]));
    }

    #[test]
    fn scale_invariance_of_argmin() {
        use rand::{Rng, SeedableRng};
        let oracle = GridOracle::new(GridSpec::new(3, 3));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let cost: Vec<f64> =
                (0..oracle.decision_dim()).map(|_| rng.random_range(-1.0..4.0)).collect();
            let scaled: Vec<f64> = cost.iter().map(|c| 3.25 * c).collect();
            let a = oracle.solve(&cost).unwrap();
            let b = oracle.solve(&scaled).unwrap();
            assert_eq!(a.values, b.values);
        }
    }
}

//! Multi-dimensional 0/1 knapsack: select items maximizing total value
//! subject to `W x ≤ b` across `k` resource constraints.
//!
//! The exact solver is depth-first branch-and-bound. Branching follows
//! decreasing value / aggregate-weight ratio with include-first descent, so
//! the first leaf reached is the greedy solution and the incumbent only
//! changes on strict improvement — making the returned optimum deterministic.
//! Nodes are pruned with a two-tier upper bound: a free single-resource
//! fractional bound (the minimum over resources of the one-constraint
//! fractional knapsack optimum) first, and the full LP-relaxation bound via
//! the simplex engine only when the cheap bound fails to prune.

use crate::oracle::{
    check_cost, ModelSense, Oracle, OracleCapabilities, OracleError, Solution,
};
use crate::solvers::simplex::{simplex_solve, LpOutcome, LpProblem};

/// Weights and capacities of a multi-dimensional knapsack instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSpec {
    /// `k × d` nonnegative weight matrix.
    pub weights: Vec<Vec<f64>>,
    /// `k` positive capacities.
    pub capacities: Vec<f64>,
}

impl KnapsackSpec {
    pub fn new(weights: Vec<Vec<f64>>, capacities: Vec<f64>) -> Self {
        assert!(!weights.is_empty(), "need at least one resource");
        assert_eq!(weights.len(), capacities.len(), "one capacity per resource");
        let d = weights[0].len();
        assert!(d >= 1, "need at least one item");
        for row in &weights {
            assert_eq!(row.len(), d, "ragged weight matrix");
            assert!(row.iter().all(|&w| w >= 0.0), "weights must be nonnegative");
        }
        assert!(capacities.iter().all(|&b| b > 0.0), "capacities must be positive");
        KnapsackSpec { weights, capacities }
    }

    pub fn item_count(&self) -> usize {
        self.weights[0].len()
    }

    pub fn resource_count(&self) -> usize {
        self.weights.len()
    }

    fn fits(&self, used: &[f64], item: usize) -> bool {
        self.weights
            .iter()
            .zip(used)
            .zip(&self.capacities)
            .all(|((row, &u), &cap)| u + row[item] <= cap + 1e-9)
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

struct BranchState<'a> {
    spec: &'a KnapsackSpec,
    value: &'a [f64],
    /// Candidate items (value > 0) in branch order.
    order: Vec<usize>,
    /// Per-resource candidate orderings by decreasing value/weight ratio.
    resource_order: Vec<Vec<usize>>,
    decided: Vec<bool>,
    chosen: Vec<bool>,
    used: Vec<f64>,
    best_value: f64,
    best_set: Vec<bool>,
    have_incumbent: bool,
}

impl BranchState<'_> {
    /// Minimum over resources of the single-constraint fractional optimum of
    /// the undecided items — a valid upper bound on any completion.
    fn cheap_bound(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for (u, order_u) in self.resource_order.iter().enumerate() {
            let cap = self.spec.capacities[u] - self.used[u];
            let mut room = cap.max(0.0);
            let mut total = 0.0;
            for &j in order_u {
                if self.decided[j] {
                    continue;
                }
                let w = self.spec.weights[u][j];
                if w <= room {
                    total += self.value[j];
                    room -= w;
                } else {
                    if w > 0.0 && room > 0.0 {
                        total += self.value[j] * room / w;
                    }
                    // Zero-weight items sort first (infinite ratio), so once
                    // the bag is full no free value remains beyond this point.
                    break;
                }
            }
            bound = bound.min(total);
        }
        bound
    }

    /// LP-relaxation bound over the undecided items with remaining capacity.
    fn lp_bound(&self) -> f64 {
        let undecided: Vec<usize> =
            (0..self.value.len()).filter(|&j| !self.decided[j] && self.value[j] > 0.0).collect();
        if undecided.is_empty() {
            return 0.0;
        }
        let a: Vec<Vec<f64>> = self
            .spec
            .weights
            .iter()
            .map(|row| undecided.iter().map(|&j| row[j]).collect())
            .collect();
        let b: Vec<f64> = self
            .spec
            .capacities
            .iter()
            .zip(&self.used)
            .map(|(&cap, &u)| (cap - u).max(0.0))
            .collect();
        let c: Vec<f64> = undecided.iter().map(|&j| self.value[j]).collect();
        let lp = LpProblem {
            a,
            b,
            c,
            sense: ModelSense::Maximize,
            bounds: vec![(0.0, 1.0); undecided.len()],
        };
        match simplex_solve(&lp) {
            Ok(LpOutcome::Optimal(s)) => s.objective,
            // x = 0 is always feasible here; fall back to the cheap bound on
            // any unexpected outcome rather than mis-pruning.
            _ => self.cheap_bound(),
        }
    }

    fn dfs(&mut self, pos: usize, current: f64) {
        if pos == self.order.len() {
            if !self.have_incumbent || current > self.best_value + 1e-9 {
                self.best_value = current;
                self.best_set = self.chosen.clone();
                self.have_incumbent = true;
            }
            return;
        }
        if self.have_incumbent {
            let cheap = self.cheap_bound();
            if current + cheap <= self.best_value + 1e-9 {
                return;
            }
            if current + self.lp_bound() <= self.best_value + 1e-9 {
                return;
            }
        }
        let item = self.order[pos];
        self.decided[item] = true;
        if self.spec.fits(&self.used, item) {
            self.chosen[item] = true;
            for (u, row) in self.spec.weights.iter().enumerate() {
                self.used[u] += row[item];
            }
            self.dfs(pos + 1, current + self.value[item]);
            for (u, row) in self.spec.weights.iter().enumerate() {
                self.used[u] -= row[item];
            }
            self.chosen[item] = false;
        }
        self.dfs(pos + 1, current);
        self.decided[item] = false;
    }
}

/// Exact maximization over binary selections. Items with value ≤ 0 are never
/// selected (they cannot improve a maximization with nonnegative weights).
pub fn knapsack_solve(spec: &KnapsackSpec, value: &[f64]) -> Result<Solution, OracleError> {
    let d = spec.item_count();
    check_cost(value, d)?;
    let k = spec.resource_count();

    let ratio = |j: usize| -> f64 {
        let agg: f64 = spec.weights.iter().map(|row| row[j]).sum();
        if agg > 0.0 {
            value[j] / agg
        } else {
            f64::INFINITY
        }
    };
    let mut order: Vec<usize> = (0..d).filter(|&j| value[j] > 0.0).collect();
    order.sort_by(|&a, &b| ratio(b).partial_cmp(&ratio(a)).unwrap().then(a.cmp(&b)));

    let mut resource_order = Vec::with_capacity(k);
    for u in 0..k {
        let r = |j: usize| {
            let w = spec.weights[u][j];
            if w > 0.0 {
                value[j] / w
            } else {
                f64::INFINITY
            }
        };
        let mut ord = order.clone();
        ord.sort_by(|&a, &b| r(b).partial_cmp(&r(a)).unwrap().then(a.cmp(&b)));
        resource_order.push(ord);
    }

    let mut state = BranchState {
        spec,
        value,
        order,
        resource_order,
        decided: vec![false; d],
        chosen: vec![false; d],
        used: vec![0.0; k],
        best_value: 0.0,
        best_set: vec![false; d],
        have_incumbent: false,
    };
    state.dfs(0, 0.0);

    let values: Vec<f64> = state.best_set.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let objective: f64 = value.iter().zip(&values).map(|(v, x)| v * x).sum();
    Ok(Solution::new(values, objective))
}

/// LP relaxation (0 ≤ x ≤ 1) of the knapsack. Its objective is always ≥ the
/// integer optimum.
///
/// Solved with a bounded-variable simplex over only the `k` resource rows:
/// box bounds are handled implicitly (nonbasic variables rest at 0 or 1 and
/// may flip), so the working basis stays `k × k` instead of growing by one
/// row per item as in the generic tableau. With nonnegative capacities the
/// all-slack basis is feasible and no phase 1 is needed; other inputs fall
/// back to the generic engine.
pub fn knapsack_lp_relax(spec: &KnapsackSpec, value: &[f64]) -> Result<Solution, OracleError> {
    check_cost(value, spec.item_count())?;
    if spec.capacities.iter().all(|&b| b >= 0.0) {
        return bounded_simplex_max(spec, value);
    }
    let lp = LpProblem {
        a: spec.weights.clone(),
        b: spec.capacities.clone(),
        c: value.to_vec(),
        sense: ModelSense::Maximize,
        bounds: vec![(0.0, 1.0); spec.item_count()],
    };
    match simplex_solve(&lp) {
        Ok(LpOutcome::Optimal(s)) => Ok(s),
        Ok(LpOutcome::Infeasible) => Err(OracleError::Infeasible),
        Ok(LpOutcome::Unbounded) => Err(OracleError::Unbounded),
        Err(e) => Err(OracleError::SizeLimit { op: "knapsack_lp_relax", detail: e.to_string() }),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Bounded-variable simplex for `max vᵀx : Wx ≤ b, 0 ≤ x ≤ 1` with `b ≥ 0`.
///
/// Variables are the `d` items plus one slack per resource (slacks bounded
/// `[0, ∞)`). The basis holds exactly `k` variables; everything else sits at
/// a bound. Entering uses Dantzig pricing with smallest-index ties, falling
/// back to Bland's rule after an iteration allowance to rule out cycling.
/// Fully deterministic for a given input.
fn bounded_simplex_max(spec: &KnapsackSpec, value: &[f64]) -> Result<Solution, OracleError> {
    let d = spec.item_count();
    let k = spec.resource_count();
    let n = d + k;
    let eps = 1e-9;

    // Column-major copy of the weights so one item's column is contiguous;
    // the ratio test and rhs bookkeeping read columns, pricing reads rows.
    let mut wcol = vec![0.0; d * k];
    for (u, row) in spec.weights.iter().enumerate() {
        for (j, &wv) in row.iter().enumerate() {
            wcol[j * k + u] = wv;
        }
    }
    let obj = |j: usize| -> f64 { if j < d { value[j] } else { 0.0 } };
    let upper = |j: usize| -> f64 { if j < d { 1.0 } else { f64::INFINITY } };

    let mut status = vec![VarStatus::AtLower; n];
    let mut basis: Vec<usize> = (d..n).collect();
    for &j in &basis {
        status[j] = VarStatus::Basic;
    }

    // rhs = b − Σ_{j at upper} A_j, maintained incrementally as statuses
    // change. Only structural variables can rest at an upper bound.
    let mut rhs = spec.capacities.clone();

    // Crash start: greedily park profitable items at their upper bound in
    // value-per-weight order while every residual capacity stays nonnegative.
    // The all-slack basis remains feasible and the simplex usually needs only
    // a few patch-up pivots afterwards.
    let ratios: Vec<f64> = (0..d)
        .map(|j| {
            let total: f64 = wcol[j * k..(j + 1) * k].iter().sum();
            if total > 0.0 { value[j] / total } else { f64::INFINITY }
        })
        .collect();
    let mut order: Vec<usize> = (0..d).filter(|&j| value[j] > 0.0).collect();
    order.sort_by(|&a, &b| ratios[b].partial_cmp(&ratios[a]).unwrap().then(a.cmp(&b)));
    for j in order {
        let column = &wcol[j * k..(j + 1) * k];
        if rhs.iter().zip(column).all(|(r, wv)| r - wv >= 0.0) {
            status[j] = VarStatus::AtUpper;
            for (r, wv) in rhs.iter_mut().zip(column) {
                *r -= wv;
            }
        }
    }

    let max_iters = 200 + 50 * n;
    let bland_after = 100 + 25 * n;
    // All working storage is allocated once; the pivot loop itself is
    // allocation-free, which matters when this runs per training sample.
    let width = 2 * k;
    let mut aug = vec![0.0; k * width];
    let mut binv = vec![0.0; k * k];
    let mut x_basic = vec![0.0; k];
    let mut y = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut reduced = vec![0.0; d];
    for iter in 0..max_iters {
        // Refactor the basis inverse (k is small, so direct Gauss-Jordan on
        // [B | I] is cheap and avoids stale-update drift).
        aug.fill(0.0);
        for r in 0..k {
            for (pos, &j) in basis.iter().enumerate() {
                aug[r * width + pos] =
                    if j < d { wcol[j * k + r] } else if j - d == r { 1.0 } else { 0.0 };
            }
            aug[r * width + k + r] = 1.0;
        }
        for p in 0..k {
            let pivot_row = (p..k)
                .max_by(|&a, &b| {
                    aug[a * width + p].abs().partial_cmp(&aug[b * width + p].abs()).unwrap()
                })
                .unwrap();
            if aug[pivot_row * width + p].abs() < 1e-12 {
                return Err(OracleError::SizeLimit {
                    op: "knapsack_lp_relax",
                    detail: "singular working basis".into(),
                });
            }
            if pivot_row != p {
                for cidx in 0..width {
                    aug.swap(p * width + cidx, pivot_row * width + cidx);
                }
            }
            let piv = aug[p * width + p];
            for cidx in 0..width {
                aug[p * width + cidx] /= piv;
            }
            for r in 0..k {
                if r != p {
                    let f = aug[r * width + p];
                    if f != 0.0 {
                        for cidx in 0..width {
                            aug[r * width + cidx] -= f * aug[p * width + cidx];
                        }
                    }
                }
            }
        }
        for r in 0..k {
            binv[r * k..(r + 1) * k].copy_from_slice(&aug[r * width + k..r * width + 2 * k]);
        }

        // Basic values x_B = B⁻¹ rhs and multipliers y = c_B B⁻¹.
        for r in 0..k {
            x_basic[r] = binv[r * k..(r + 1) * k].iter().zip(&rhs).map(|(bv, rv)| bv * rv).sum();
        }
        for (u, yu) in y.iter_mut().enumerate() {
            *yu = (0..k).map(|r| obj(basis[r]) * binv[r * k + u]).sum();
        }

        // Price structural columns with row sweeps (reduced = v − Wᵀy), then
        // scan for the entering variable; slack j = d + u has reduced −y_u.
        reduced.copy_from_slice(value);
        for (u, row) in spec.weights.iter().enumerate() {
            let yu = y[u];
            if yu != 0.0 {
                for (rc, &wv) in reduced.iter_mut().zip(row) {
                    *rc -= yu * wv;
                }
            }
        }
        let bland = iter >= bland_after;
        let mut entering: Option<(usize, f64)> = None; // (var, score)
        'price: {
            for j in 0..d {
                let improvement = match status[j] {
                    VarStatus::Basic => continue,
                    VarStatus::AtLower => reduced[j],
                    VarStatus::AtUpper => -reduced[j],
                };
                if improvement > eps {
                    if bland {
                        entering = Some((j, improvement));
                        break 'price;
                    }
                    if entering.is_none_or(|(_, best)| improvement > best) {
                        entering = Some((j, improvement));
                    }
                }
            }
            for (u, &yu) in y.iter().enumerate() {
                // Slacks never sit at an upper bound, so only −y_u matters.
                if status[d + u] == VarStatus::AtLower && -yu > eps {
                    if bland {
                        entering = Some((d + u, -yu));
                        break 'price;
                    }
                    if entering.is_none_or(|(_, best)| -yu > best) {
                        entering = Some((d + u, -yu));
                    }
                }
            }
        }
        let Some((e, _)) = entering else {
            // Optimal: read structural values off the basis/status.
            let mut x = vec![0.0; d];
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = match status[j] {
                    VarStatus::AtLower => 0.0,
                    VarStatus::AtUpper => 1.0,
                    VarStatus::Basic => {
                        let pos = basis.iter().position(|&b| b == j).unwrap();
                        x_basic[pos].clamp(0.0, 1.0)
                    }
                };
            }
            let objective = value.iter().zip(&x).map(|(v, xi)| v * xi).sum();
            return Ok(Solution::new(x, objective));
        };

        // Entering direction: +1 leaving its lower bound, −1 leaving upper.
        let dir = if status[e] == VarStatus::AtLower { 1.0 } else { -1.0 };
        for (r, wr) in w.iter_mut().enumerate() {
            *wr = if e < d {
                binv[r * k..(r + 1) * k]
                    .iter()
                    .zip(&wcol[e * k..(e + 1) * k])
                    .map(|(bv, wv)| bv * wv)
                    .sum()
            } else {
                binv[r * k + (e - d)]
            };
        }

        // Ratio test: the entering variable stops at its own far bound or
        // when a basic variable hits one of its bounds, whichever is first.
        let mut t_star = upper(e);
        let mut leave: Option<(usize, bool)> = None; // (basis pos, exits at upper)
        for (pos, &wp) in w.iter().enumerate() {
            let delta = -dir * wp; // basic change per unit of t
            let (t, at_upper) = if delta < -eps {
                ((x_basic[pos] / -delta).max(0.0), false)
            } else if delta > eps && upper(basis[pos]).is_finite() {
                (((upper(basis[pos]) - x_basic[pos]) / delta).max(0.0), true)
            } else {
                continue;
            };
            let replaces = match leave {
                _ if t < t_star - eps => true,
                Some((cur, _)) if t <= t_star + eps => basis[pos] < basis[cur],
                None if t <= t_star + eps => true,
                _ => false,
            };
            if replaces {
                t_star = t.min(t_star);
                leave = Some((pos, at_upper));
            }
        }
        if t_star.is_infinite() {
            return Err(OracleError::Unbounded);
        }
        // Keep rhs in sync with upper-bound membership changes (flips and
        // pivots both only ever move structural columns in or out).
        match leave {
            None => {
                // Bound flip: the entering variable crosses to its far bound
                // without changing the basis.
                let column = &wcol[e * k..(e + 1) * k];
                if status[e] == VarStatus::AtLower {
                    status[e] = VarStatus::AtUpper;
                    for (r, wv) in rhs.iter_mut().zip(column) {
                        *r -= wv;
                    }
                } else {
                    status[e] = VarStatus::AtLower;
                    for (r, wv) in rhs.iter_mut().zip(column) {
                        *r += wv;
                    }
                }
            }
            Some((pos, at_upper)) => {
                let out = basis[pos];
                if at_upper {
                    status[out] = VarStatus::AtUpper;
                    for (r, wv) in rhs.iter_mut().zip(&wcol[out * k..(out + 1) * k]) {
                        *r -= wv;
                    }
                } else {
                    status[out] = VarStatus::AtLower;
                }
                if status[e] == VarStatus::AtUpper {
                    for (r, wv) in rhs.iter_mut().zip(&wcol[e * k..(e + 1) * k]) {
                        *r += wv;
                    }
                }
                status[e] = VarStatus::Basic;
                basis[pos] = e;
            }
        }
    }
    Err(OracleError::SizeLimit {
        op: "knapsack_lp_relax",
        detail: "iteration limit exceeded".into(),
    })
}

/// Multi-dimensional knapsack oracle (maximization) with LP relaxation and
/// exhaustive optimal-set enumeration on small instances.
#[derive(Debug, Clone)]
pub struct KnapsackOracle {
    spec: KnapsackSpec,
    /// Exhaustive enumeration is limited to this many items.
    enumeration_item_limit: usize,
}

impl KnapsackOracle {
    pub fn new(spec: KnapsackSpec) -> Self {
        KnapsackOracle { spec, enumeration_item_limit: 20 }
    }

    pub fn spec(&self) -> &KnapsackSpec {
        &self.spec
    }
}

impl Oracle for KnapsackOracle {
    fn sense(&self) -> ModelSense {
        ModelSense::Maximize
    }

    fn decision_dim(&self) -> usize {
        self.spec.item_count()
    }

    fn fingerprint(&self) -> String {
        // Weights and capacities define the feasible set, so both enter the
        // identifier verbatim (shortest round-trip float formatting).
        let mut s = format!(
            "knapsack d={} k={} caps=",
            self.spec.item_count(),
            self.spec.resource_count()
        );
        s.push_str(&join_floats(&self.spec.capacities));
        s.push_str(" weights=");
        for (r, row) in self.spec.weights.iter().enumerate() {
            if r > 0 {
                s.push(';');
            }
            s.push_str(&join_floats(row));
        }
        s
    }

    fn capabilities(&self) -> OracleCapabilities {
        OracleCapabilities {
            has_relaxation: true,
            has_optimal_set_enumeration: self.spec.item_count() <= self.enumeration_item_limit,
            decision_dim: self.decision_dim(),
        }
    }

    fn solve(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        knapsack_solve(&self.spec, cost)
    }

    fn solve_relaxed(&self, cost: &[f64]) -> Result<Solution, OracleError> {
        knapsack_lp_relax(&self.spec, cost)
    }

    fn enumerate_optimal_set(&self, cost: &[f64]) -> Result<Vec<Solution>, OracleError> {
        let d = self.decision_dim();
        check_cost(cost, d)?;
        if d > self.enumeration_item_limit {
            return Err(OracleError::SizeLimit {
                op: "enumerate_optimal_set",
                detail: format!("{d} items exceed limit {}", self.enumeration_item_limit),
            });
        }
        let mut best = f64::NEG_INFINITY;
        let mut sols: Vec<Solution> = Vec::new();
        for mask in 0u64..(1 << d) {
            let values: Vec<f64> =
                (0..d).map(|j| ((mask >> j) & 1) as f64).collect();
            let feasible = self
                .spec
                .weights
                .iter()
                .zip(&self.spec.capacities)
                .all(|(row, &cap)| {
                    row.iter().zip(&values).map(|(w, x)| w * x).sum::<f64>() <= cap + 1e-9
                });
            if !feasible {
                continue;
            }
            let obj: f64 = cost.iter().zip(&values).map(|(c, x)| c * x).sum();
            if obj > best + 1e-9 {
                best = obj;
            }
            sols.push(Solution::new(values, obj));
        }
        sols.retain(|s| s.objective >= best - 1e-9);
        Ok(sols)
    }

    fn is_feasible(&self, values: &[f64]) -> bool {
        values.len() == self.decision_dim()
            && values
                .iter()
                .all(|&v| (v - 0.0).abs() <= 1e-6 || (v - 1.0).abs() <= 1e-6)
            && self
                .spec
                .weights
                .iter()
                .zip(&self.spec.capacities)
                .all(|(row, &cap)| {
                    row.iter().zip(values).map(|(w, x)| w * x.round()).sum::<f64>() <= cap + 1e-7
                })
    }

    fn clone_box(&self) -> Box<dyn Oracle> {
        Box::new(self.clone())
    }
}

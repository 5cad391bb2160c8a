//! Seeded synthetic benchmark generators for the three built-in problems.
//!
//! All three share the same polynomial cost pipeline: features are standard
//! Gaussian, a per-dataset random projection maps them toward cost space,
//! and each cost entry passes through a degree-`deg` polynomial kernel with
//! optional multiplicative uniform noise `ε ~ U(1−ε̄, 1+ε̄)`.
//!
//! For shortest path and knapsack the kernel is
//! `c = [ (1/3.5^deg) · ((1/√p)(Bx))_j + 3)^deg + 1 ] · ε`
//! with `B ∈ {0,1}^{d×p}` Bernoulli(0.5), and the noise multiplies the whole
//! bracket including the `+1` term. For TSP the cost of an edge is the
//! Euclidean distance between its endpoints plus
//! `(1/3^{deg−1}) · ((1/√p)(Bx))_e + 3)^deg · ε`, where `B`'s entries are a
//! Bernoulli(0.5) coin times `U(−2,2)` and node coordinates come from a
//! per-node fair-coin mixture of `N(0, I)` and `U(−2,2)`.
//!
//! Determinism: every random ingredient draws from its own seeded substream
//! (see [`crate::seeding`]), so regenerating with the same seed is
//! bit-identical and changing the sample count never perturbs the projection
//! matrix, weights, or coordinates.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seeding::{
    substream, STREAM_COIN, STREAM_COORDS, STREAM_FEATURES, STREAM_NOISE, STREAM_PROJECTION,
    STREAM_WEIGHTS,
};
use crate::solvers::{GridSpec, TspSpec};

/// Parameters shared by all generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    /// Sample count.
    pub n: usize,
    /// Feature dimension.
    pub p: usize,
    /// Polynomial degree of the feature→cost map (the benchmark sweeps use
    /// 1, 2, 4, 6; any degree ≥ 1 is accepted).
    pub deg: u32,
    /// Half-width ε̄ of the multiplicative noise, in [0, 1); 0 disables noise.
    pub noise_halfwidth: f64,
    /// Base seed for all substreams.
    pub seed: u64,
}

/// Generator output: row-major features and costs, plus knapsack weights
/// when applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    /// `n × p` feature rows.
    pub features: Vec<Vec<f64>>,
    /// `n × d` cost rows.
    pub costs: Vec<Vec<f64>>,
    /// Knapsack only: `k × d` weight matrix drawn from the one-decimal
    /// lattice {3.0, 3.1, …, 8.0}.
    pub weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

fn validate_params(p: &GenParams) -> Result<(), GenError> {
    let mut problems = Vec::new();
    if p.n < 1 {
        problems.push("n must be ≥ 1".to_string());
    }
    if p.p < 1 {
        problems.push("p must be ≥ 1".to_string());
    }
    if p.deg < 1 {
        problems.push("deg must be ≥ 1".to_string());
    }
    if !(0.0..1.0).contains(&p.noise_halfwidth) {
        problems.push(format!("noise half-width {} outside [0, 1)", p.noise_halfwidth));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(GenError::InvalidSpec(problems.join("; ")))
    }
}

/// The shortest-path / knapsack cost kernel before noise:
/// `(1/3.5^deg)·(proj + 3)^deg + 1` where `proj = (1/√p)(Bx)_j`.
pub fn polynomial_kernel(proj: f64, deg: u32) -> f64 {
    (proj + 3.0).powi(deg as i32) / 3.5f64.powi(deg as i32) + 1.0
}

/// The TSP cost kernel before noise: `(1/3^{deg−1})·(proj + 3)^deg`.
pub fn tsp_kernel(proj: f64, deg: u32) -> f64 {
    (proj + 3.0).powi(deg as i32) / 3.0f64.powi(deg as i32 - 1)
}

fn draw_features(params: &GenParams) -> Vec<Vec<f64>> {
    let mut rng = substream(params.seed, STREAM_FEATURES);
    (0..params.n)
        .map(|_| (0..params.p).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Draws one ε per cost entry, or exactly 1.0 when ε̄ = 0 (no stream draws,
/// as the noiseless data contract promises `ε ≡ 1`).
fn noise_factor(rng: &mut impl Rng, halfwidth: f64) -> f64 {
    if halfwidth == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - halfwidth..1.0 + halfwidth)
    }
}

/// Generates shortest-path data for the given grid: `X: n×p`,
/// `C: n×(arc count)`.
pub fn gen_shortest_path(
    params: &GenParams,
    grid: &GridSpec,
) -> Result<GeneratedData, GenError> {
    let d = grid.arc_count();
    gen_polynomial(params, d).map(|(features, costs)| GeneratedData {
        features,
        costs,
        weights: None,
    })
}

/// Generates knapsack data: `X: n×p`, `C: n×d`, `W: k×d` on the one-decimal
/// lattice. Capacities are the harness's concern, not the generator's.
pub fn gen_knapsack(
    params: &GenParams,
    items: usize,
    resources: usize,
) -> Result<GeneratedData, GenError> {
    if items < 1 || resources < 1 {
        return Err(GenError::InvalidSpec(
            "knapsack needs ≥ 1 item and ≥ 1 resource".to_string(),
        ));
    }
    let (features, costs) = gen_polynomial(params, items)?;
    let mut rng = substream(params.seed, STREAM_WEIGHTS);
    let weights = (0..resources)
        .map(|_| {
            (0..items)
                .map(|_| {
                    // 51-point lattice 3.0..8.0; drawing lattice indices (not
                    // rounding continuous draws) avoids boundary bias.
                    let t: u32 = rng.random_range(0..=50);
                    (30 + t) as f64 / 10.0
                })
                .collect()
        })
        .collect();
    Ok(GeneratedData { features, costs, weights: Some(weights) })
}

/// Shared polynomial pipeline for shortest path and knapsack.
fn gen_polynomial(
    params: &GenParams,
    d: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), GenError> {
    validate_params(params)?;
    let features = draw_features(params);

    let mut rng_b = substream(params.seed, STREAM_PROJECTION);
    let projection: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..params.p).map(|_| if rng_b.random_bool(0.5) { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut rng_noise = substream(params.seed, STREAM_NOISE);
    let inv_sqrt_p = 1.0 / (params.p as f64).sqrt();
    let costs = features
        .iter()
        .map(|x| {
            (0..d)
                .map(|j| {
                    let bx: f64 = projection[j].iter().zip(x).map(|(b, xi)| b * xi).sum();
                    let eps = noise_factor(&mut rng_noise, params.noise_halfwidth);
                    polynomial_kernel(inv_sqrt_p * bx, params.deg) * eps
                })
                .collect()
        })
        .collect();
    Ok((features, costs))
}

/// Generates symmetric-TSP data: `X: n×p`, `C: n×(edge count)`, where each
/// cost is endpoint distance plus the polynomial kernel term.
pub fn gen_tsp(params: &GenParams, nodes: usize) -> Result<GeneratedData, GenError> {
    if nodes < 3 {
        return Err(GenError::InvalidSpec("TSP needs at least 3 nodes".to_string()));
    }
    validate_params(params)?;
    let spec = TspSpec::new(nodes);
    let d = spec.edge_count();
    let features = draw_features(params);

    // Per-node coordinates: a fair coin picks N(0, I) or U(−2, 2) for the
    // node; both branches consume the same number of coordinate draws so the
    // stream stays aligned regardless of coin outcomes.
    let mut rng_coin = substream(params.seed, STREAM_COIN);
    let mut rng_coords = substream(params.seed, STREAM_COORDS);
    let coords: Vec<(f64, f64)> = (0..nodes)
        .map(|_| {
            let gaussian = rng_coin.random_bool(0.5);
            let g1: f64 = rng_coords.sample(StandardNormal);
            let g2: f64 = rng_coords.sample(StandardNormal);
            let u1: f64 = rng_coords.random_range(-2.0..2.0);
            let u2: f64 = rng_coords.random_range(-2.0..2.0);
            if gaussian {
                (g1, g2)
            } else {
                (u1, u2)
            }
        })
        .collect();

    // Projection entries: Bernoulli(0.5) coin times U(−2, 2); both draws are
    // always consumed to keep the stream aligned.
    let mut rng_b = substream(params.seed, STREAM_PROJECTION);
    let projection: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..params.p)
                .map(|_| {
                    let on = rng_b.random_bool(0.5);
                    let scale: f64 = rng_b.random_range(-2.0..2.0);
                    if on {
                        scale
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let edges = spec.edges();
    let distance: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| {
            let (xi, yi) = coords[i];
            let (xj, yj) = coords[j];
            ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()
        })
        .collect();

    let mut rng_noise = substream(params.seed, STREAM_NOISE);
    let inv_sqrt_p = 1.0 / (params.p as f64).sqrt();
    let costs = features
        .iter()
        .map(|x| {
            (0..d)
                .map(|e| {
                    let bx: f64 = projection[e].iter().zip(x).map(|(b, xi)| b * xi).sum();
                    let eps = noise_factor(&mut rng_noise, params.noise_halfwidth);
                    distance[e] + tsp_kernel(inv_sqrt_p * bx, params.deg) * eps
                })
                .collect()
        })
        .collect();
    Ok(GeneratedData { features, costs, weights: None })
}

//! Prediction models and the training loop.
//!
//! The trainable model is a linear map `ĉ = Θ_W x + Θ_b` from feature vectors
//! to cost vectors, optimized with minibatch SGD (momentum) against any of
//! the end-to-end losses in [`crate::losses`], optionally with an
//! `ℓ1`/`ℓ2` prediction-error regularizer mixed into the cost gradient.
//! Two decision-blind baselines are included: closed-form least-squares
//! regression and k-nearest-neighbors cost averaging.
//!
//! Per-sample gradient work inside a batch is fanned out across a worker
//! pool when the `parallel` feature is on; gradients are then reduced in
//! batch order, so trained weights are bitwise identical for any worker
//! count. All perturbation noise comes from per-sample seeded streams, not
//! from a shared generator.

use thiserror::Error;

use crate::dataset::DecisionDataset;
use crate::losses::{
    dbb_backward, dbb_forward, dpo_backward, dpo_forward, pfyl_loss_and_grad, spo_plus_grad,
    spo_plus_loss, DownstreamLoss, LossError, PerturbationConfig, SolveMode,
};
use crate::oracle::{ModelSense, Oracle};
use crate::seeding::{derive_seed, substream, PERTURBATION_BASE, STREAM_MODEL_INIT};
use rand::Rng as _;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

// -------------------------------------------------------------------- model

/// Linear cost predictor `ĉ = Θ_W x + Θ_b` with `Θ_W ∈ R^{d×p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    /// Row `j` holds the feature weights for cost component `j`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearPredictor {
    /// Fresh model with weights drawn uniformly from `±1/√p` (a standard
    /// fan-in scaling) and zero bias, deterministically from `seed`.
    pub fn init(cost_dim: usize, feature_dim: usize, seed: u64) -> Self {
        assert!(cost_dim >= 1 && feature_dim >= 1);
        let bound = 1.0 / (feature_dim as f64).sqrt();
        let mut rng = substream(seed, STREAM_MODEL_INIT);
        let weights = (0..cost_dim)
            .map(|_| (0..feature_dim).map(|_| rng.random_range(-bound..bound)).collect())
            .collect();
        LinearPredictor { weights, bias: vec![0.0; cost_dim] }
    }

    pub fn cost_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Predicted cost vector for one feature vector.
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.feature_dim());
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| {
                b + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Parameter gradient for one sample by the chain rule: a cost-space
    /// gradient `g = ∂l/∂ĉ` becomes `∂l/∂W = g xᵀ` and `∂l/∂b = g`.
    /// Returns `(weight_grad, bias_grad)` with the same shapes as the model.
    pub fn backprop(&self, features: &[f64], cost_grad: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acc = ParamGrad::zeros(self.cost_dim(), self.feature_dim());
        self.accumulate_backprop(features, cost_grad, &mut acc);
        (acc.weights, acc.bias)
    }

    /// Chain rule through the linear map: a cost-space gradient `g = ∂l/∂ĉ`
    /// becomes the parameter gradient `∂l/∂Θ_W = g xᵀ`, `∂l/∂Θ_b = g`,
    /// accumulated into `acc`.
    fn accumulate_backprop(&self, features: &[f64], cost_grad: &[f64], acc: &mut ParamGrad) {
        for (j, &g) in cost_grad.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (q, &x) in features.iter().enumerate() {
                acc.weights[j][q] += g * x;
            }
            acc.bias[j] += g;
        }
    }
}

#[derive(Debug, Clone)]
struct ParamGrad {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl ParamGrad {
    fn zeros(cost_dim: usize, feature_dim: usize) -> Self {
        ParamGrad {
            weights: vec![vec![0.0; feature_dim]; cost_dim],
            bias: vec![0.0; cost_dim],
        }
    }

    fn scale(&mut self, factor: f64) {
        for row in &mut self.weights {
            for w in row {
                *w *= factor;
            }
        }
        for b in &mut self.bias {
            *b *= factor;
        }
    }
}

/// Minibatch SGD with classical momentum: `v ← μv + g`, `θ ← θ − ηv`.
#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<ParamGrad>,
}

impl SgdOptimizer {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&momentum), "momentum must lie in [0, 1)");
        SgdOptimizer { learning_rate, momentum, velocity: None }
    }

    fn step(&mut self, model: &mut LinearPredictor, grad: &ParamGrad) {
        let v = self.velocity.get_or_insert_with(|| {
            ParamGrad::zeros(model.cost_dim(), model.feature_dim())
        });
        for j in 0..model.cost_dim() {
            for q in 0..model.feature_dim() {
                let vel = self.momentum * v.weights[j][q] + grad.weights[j][q];
                v.weights[j][q] = vel;
                model.weights[j][q] -= self.learning_rate * vel;
            }
            let vel = self.momentum * v.bias[j] + grad.bias[j];
            v.bias[j] = vel;
            model.bias[j] -= self.learning_rate * vel;
        }
    }
}

// ----------------------------------------------------------- regularization

/// Prediction-error regularizer added to a decision loss:
/// `φ₁·(1/d)‖ĉ−c‖₁ + φ₂·(1/(2d))‖ĉ−c‖₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Regularization {
    pub l1: f64,
    pub l2: f64,
}

impl Regularization {
    pub const NONE: Regularization = Regularization { l1: 0.0, l2: 0.0 };

    pub fn is_active(&self) -> bool {
        self.l1 != 0.0 || self.l2 != 0.0
    }

    /// Penalty value and its gradient with respect to `ĉ`.
    pub fn eval(&self, predicted: &[f64], true_cost: &[f64]) -> (f64, Vec<f64>) {
        let d = predicted.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; predicted.len()];
        for (i, (&ch, &c)) in predicted.iter().zip(true_cost).enumerate() {
            let diff = ch - c;
            value += self.l1 * diff.abs() / d + self.l2 * diff * diff / (2.0 * d);
            grad[i] = self.l1 * diff.signum() / d + self.l2 * diff / d;
            if diff == 0.0 {
                // signum(0) = 0 under f64, but make the subgradient choice
                // explicit.
                grad[i] = 0.0 + self.l2 * diff / d;
            }
        }
        (value, grad)
    }
}

// ------------------------------------------------------------------ methods

/// Core gradient mechanism a method trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Closed-form least-squares cost regression (decision-blind baseline).
    TwoStageLeastSquares,
    /// k-nearest-neighbors cost averaging (decision-blind baseline).
    TwoStageKnn,
    SpoPlus,
    Dbb,
    Dpo,
    Pfyl,
}

/// A full method: core loss, exact vs. relaxed inner solves, and optional
/// regularization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub loss: LossKind,
    pub relaxed: bool,
    pub reg: Regularization,
}

impl MethodSpec {
    pub fn new(loss: LossKind) -> Self {
        MethodSpec { loss, relaxed: false, reg: Regularization::NONE }
    }

    pub fn relaxed(mut self) -> Self {
        self.relaxed = true;
        self
    }

    pub fn with_reg(mut self, l1: f64, l2: f64) -> Self {
        self.reg = Regularization { l1, l2 };
        self
    }

    /// Canonical lowercase name, e.g. `spo+ rel` or `pfyl l1`.
    pub fn name(&self) -> String {
        let base = match self.loss {
            LossKind::TwoStageLeastSquares => "2s-lr",
            LossKind::TwoStageKnn => "2s-knn",
            LossKind::SpoPlus => "spo+",
            LossKind::Dbb => "dbb",
            LossKind::Dpo => "dpo",
            LossKind::Pfyl => "pfyl",
        };
        let mut name = String::from(base);
        if self.relaxed {
            name.push_str(" rel");
        }
        if self.reg.l1 != 0.0 {
            name.push_str(" l1");
        }
        if self.reg.l2 != 0.0 {
            name.push_str(" l2");
        }
        name
    }
}

// ----------------------------------------------------------------- training

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Interpolation step of the black-box gradient.
    pub dbb_lambda: f64,
    pub perturbation: PerturbationConfig,
    /// Drop the `1/σ` factor from the perturbed-optimizer Jacobian.
    pub dpo_strict_scaling: bool,
    pub knn_neighbors: usize,
    pub seed: u64,
    /// Reshuffle sample order every epoch (seeded; off means fixed order).
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            dbb_lambda: 15.0,
            perturbation: PerturbationConfig::default(),
            dpo_strict_scaling: false,
            knn_neighbors: 5,
            seed: 0,
            shuffle: true,
        }
    }
}

/// A trained cost predictor of either family.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Linear(LinearPredictor),
    Knn(KnnModel),
}

impl TrainedModel {
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        match self {
            TrainedModel::Linear(m) => m.predict(features),
            TrainedModel::Knn(m) => m.predict(features),
        }
    }
}

/// Training result: the model plus the mean per-sample training loss
/// recorded at each epoch (surrogate loss for end-to-end methods, mean
/// squared error for the regression baseline; includes any regularization
/// penalty) and each epoch's wall-clock time in seconds.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: TrainedModel,
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

struct SampleGrad {
    cost_grad: Vec<f64>,
    loss: f64,
}

fn min_space(cost: &[f64], z: f64, sense: ModelSense) -> (Vec<f64>, f64) {
    match sense {
        ModelSense::Minimize => (cost.to_vec(), z),
        ModelSense::Maximize => (cost.iter().map(|c| -c).collect(), -z),
    }
}

/// One sample's cost-space gradient and recorded loss under `method`.
#[allow(clippy::too_many_arguments)]
fn sample_gradient(
    method: &MethodSpec,
    model: &LinearPredictor,
    data: &DecisionDataset,
    oracle: &dyn Oracle,
    cfg: &TrainConfig,
    epoch: usize,
    i: usize,
) -> Result<SampleGrad, TrainError> {
    let mode = if method.relaxed { SolveMode::Relaxed } else { SolveMode::Exact };
    let chat = model.predict(&data.features[i]);
    let (mut grad, mut loss) = match method.loss {
        LossKind::SpoPlus => {
            let (l, state) = spo_plus_loss(
                &chat,
                &data.costs[i],
                &data.solutions[i],
                data.objectives[i],
                oracle,
                mode,
            )?;
            (spo_plus_grad(&state), l)
        }
        LossKind::Dbb => {
            let (sol, state) = dbb_forward(&chat, oracle, mode)?;
            let (min_cost, min_z) = min_space(&data.costs[i], data.objectives[i], oracle.sense());
            let (l, g_in) = DownstreamLoss::Regret { min_cost, min_z }.eval(&sol.values)?;
            let g = dbb_backward(&state, &g_in, cfg.dbb_lambda, oracle, mode)?;
            (g, l)
        }
        LossKind::Dpo => {
            let mut rng = substream(
                derive_seed(cfg.seed, PERTURBATION_BASE + i as u64),
                epoch as u64,
            );
            let (mean_w, state) =
                dpo_forward(&chat, &cfg.perturbation, oracle, &mut rng, mode)?;
            let (min_cost, min_z) = min_space(&data.costs[i], data.objectives[i], oracle.sense());
            let (l, g_in) = DownstreamLoss::Regret { min_cost, min_z }.eval(&mean_w)?;
            (dpo_backward(&state, &g_in, cfg.dpo_strict_scaling), l)
        }
        LossKind::Pfyl => {
            let mut rng = substream(
                derive_seed(cfg.seed, PERTURBATION_BASE + i as u64),
                epoch as u64,
            );
            let (l, g) = pfyl_loss_and_grad(
                &chat,
                &data.solutions[i],
                &cfg.perturbation,
                oracle,
                &mut rng,
                mode,
            )?;
            (g, l)
        }
        LossKind::TwoStageLeastSquares | LossKind::TwoStageKnn => {
            return Err(TrainError::InvalidConfig(
                "two-stage baselines do not use the SGD loop".into(),
            ))
        }
    };
    if method.reg.is_active() {
        let (penalty, reg_grad) = method.reg.eval(&chat, &data.costs[i]);
        loss += penalty;
        for (g, r) in grad.iter_mut().zip(&reg_grad) {
            *g += r;
        }
    }
    Ok(SampleGrad { cost_grad: grad, loss })
}

/// Trains a model for `method` on `data` against `oracle`.
///
/// End-to-end methods run minibatch SGD from a seeded initialization; the
/// two-stage baselines bypass the loop (least squares is solved in closed
/// form, k-NN just memorizes the data). The result is deterministic given
/// `cfg.seed` and independent of the worker-pool size.
pub fn train(
    method: &MethodSpec,
    data: &DecisionDataset,
    oracle: &dyn Oracle,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    let n = data.len();
    if n == 0 {
        return Err(TrainError::InvalidConfig("empty dataset".into()));
    }
    if data.features[0].is_empty() {
        return Err(TrainError::InvalidConfig("empty feature vectors".into()));
    }
    match method.loss {
        LossKind::TwoStageLeastSquares => {
            let start = crate::clock::now();
            let model = fit_least_squares(&data.features, &data.costs)?;
            let elapsed = crate::clock::seconds_since(&start);
            let mse = mean_squared_error(&model, data);
            return Ok(TrainOutput {
                model: TrainedModel::Linear(model),
                epoch_losses: vec![mse],
                epoch_seconds: vec![elapsed],
            });
        }
        LossKind::TwoStageKnn => {
            if cfg.knn_neighbors == 0 {
                return Err(TrainError::InvalidConfig("k-NN needs k >= 1".into()));
            }
            let model = KnnModel {
                features: data.features.clone(),
                costs: data.costs.clone(),
                neighbors: cfg.knn_neighbors.min(n),
            };
            return Ok(TrainOutput {
                model: TrainedModel::Knn(model),
                epoch_losses: vec![],
                epoch_seconds: vec![],
            });
        }
        _ => {}
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be positive".into()));
    }

    let d = oracle.decision_dim();
    let p = data.features[0].len();
    let mut model = LinearPredictor::init(d, p, cfg.seed);
    let mut opt = SgdOptimizer::new(cfg.learning_rate, cfg.momentum);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let start = crate::clock::now();
        if cfg.shuffle {
            crate::dataset::shuffle_in_place(&mut order, cfg.seed, epoch as u64);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let grads = crate::par_map_indices(batch, |i| {
                sample_gradient(method, &model, data, oracle, cfg, epoch, i)
            })?;
            let mut acc = ParamGrad::zeros(d, p);
            for (&i, sg) in batch.iter().zip(&grads) {
                model.accumulate_backprop(&data.features[i], &sg.cost_grad, &mut acc);
                epoch_loss += sg.loss;
            }
            acc.scale(1.0 / batch.len() as f64);
            opt.step(&mut model, &acc);
        }
        epoch_losses.push(epoch_loss / n as f64);
        epoch_seconds.push(crate::clock::seconds_since(&start));
    }
    Ok(TrainOutput { model: TrainedModel::Linear(model), epoch_losses, epoch_seconds })
}

fn mean_squared_error(model: &LinearPredictor, data: &DecisionDataset) -> f64 {
    let d = data.costs[0].len() as f64;
    let n = data.len() as f64;
    data.features
        .iter()
        .zip(&data.costs)
        .map(|(x, c)| {
            let chat = model.predict(x);
            chat.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d
        })
        .sum::<f64>()
        / n
}

// -------------------------------------------------------- two-stage: LR

/// Ordinary least squares `min_Θ Σᵢ ‖Θ_W xᵢ + Θ_b − cᵢ‖²` via the normal
/// equations, one shared factorization for all cost components.
pub fn fit_least_squares(
    features: &[Vec<f64>],
    costs: &[Vec<f64>],
) -> Result<LinearPredictor, TrainError> {
    let n = features.len();
    if n == 0 || costs.len() != n {
        return Err(TrainError::InvalidConfig("features/costs length mismatch".into()));
    }
    let p = features[0].len();
    let d = costs[0].len();
    let m = p + 1; // augmented with the intercept column
    // Gram matrix AᵀA and right-hand sides AᵀC for A = [X | 1].
    let mut gram = vec![vec![0.0; m]; m];
    let mut rhs = vec![vec![0.0; d]; m];
    for (x, c) in features.iter().zip(costs) {
        debug_assert_eq!(x.len(), p);
        for q in 0..m {
            let aq = if q < p { x[q] } else { 1.0 };
            for r in q..m {
                let ar = if r < p { x[r] } else { 1.0 };
                gram[q][r] += aq * ar;
            }
            for (j, &cj) in c.iter().enumerate() {
                rhs[q][j] += aq * cj;
            }
        }
    }
    for q in 0..m {
        for r in 0..q {
            gram[q][r] = gram[r][q];
        }
    }
    let beta = match solve_multi_rhs(gram.clone(), rhs.clone()) {
        Some(b) => b,
        None => {
            // Degenerate design matrix: fall back to a tiny ridge.
            let mut ridged = gram;
            for (q, row) in ridged.iter_mut().enumerate() {
                row[q] += 1e-8;
            }
            solve_multi_rhs(ridged, rhs)
                .ok_or_else(|| TrainError::Numerical("singular normal equations".into()))?
        }
    };
    let weights = (0..d).map(|j| (0..p).map(|q| beta[q][j]).collect()).collect();
    let bias = (0..d).map(|j| beta[p][j]).collect();
    Ok(LinearPredictor { weights, bias })
}

/// Gaussian elimination with partial pivoting for `M B = R`, `R` holding
/// one column per output. Returns `None` if a pivot collapses.
fn solve_multi_rhs(mut m: Vec<Vec<f64>>, mut r: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let nvars = m.len();
    for col in 0..nvars {
        let pivot_row = (col..nvars)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        if m[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot_row);
        r.swap(col, pivot_row);
        for row in 0..nvars {
            if row == col {
                continue;
            }
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..nvars {
                m[row][k] -= factor * m[col][k];
            }
            for k in 0..r[0].len() {
                r[row][k] -= factor * r[col][k];
            }
        }
    }
    for row in 0..nvars {
        let pivot = m[row][row];
        for k in 0..r[0].len() {
            r[row][k] /= pivot;
        }
    }
    Some(r)
}

// -------------------------------------------------------- two-stage: k-NN

/// Memorized training set; prediction averages the costs of the `neighbors`
/// nearest feature vectors (Euclidean metric, index order breaking ties).
#[derive(Debug, Clone)]
pub struct KnnModel {
    pub features: Vec<Vec<f64>>,
    pub costs: Vec<Vec<f64>>,
    pub neighbors: usize,
}

impl KnnModel {
    pub fn predict(&self, query: &[f64]) -> Vec<f64> {
        let mut ranked: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let d2 = x.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                (d2, i)
            })
            .collect();
        ranked.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let k = self.neighbors.min(ranked.len()).max(1);
        let d = self.costs[0].len();
        let mut mean = vec![0.0; d];
        for &(_, idx) in ranked.iter().take(k) {
            for (m, &c) in mean.iter_mut().zip(&self.costs[idx]) {
                *m += c / k as f64;
            }
        }
        mean
    }
}

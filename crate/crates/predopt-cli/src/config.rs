//! Declarative experiment configs: a plain key-value text format (one
//! experiment per file), parsed and statically validated with **every**
//! violation reported, not just the first.
//!
//! # Format
//!
//! ```text
//! schema = 1
//! problem = shortest_path     # shortest_path | knapsack | tsp
//! height = 5                  # shortest_path only
//! width = 5
//! n_train = 1000
//! n_test = 1000
//! p = 5
//! deg = 4
//! noise = 0.5
//! methods = 2s-lr, spo+, pfyl
//! repetitions = 5
//! seed = 42
//! ```
//!
//! `#` starts a comment; blank lines are ignored; keys may appear once.
//! Problem-specific keys: `height`/`width` (shortest_path),
//! `items`/`resources`/`capacity` (knapsack), `nodes`/`formulation` (tsp).
//! Optional hyperparameters (with defaults): `epochs` 20, `batch` 32,
//! `lr` 0.01, `momentum` 0.9, `lambda` 15, `samples` 1, `sigma` 1.0,
//! `phi1` 0, `phi2` 0, `knn` 5, `dpo_strict` false, `unambiguous` false,
//! `workers` 0 (auto), `n_test` 1000.
//!
//! Methods are comma-separated; each is a base name — `2s-lr`, `2s-knn`,
//! `spo+`, `dbb`, `dpo`, `pfyl` — optionally followed by the modifiers
//! `rel`, `l1`, `l2` (e.g. `spo+ rel`, `dbb l1`). The two-stage baselines
//! and `dpo` take no modifiers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use predopt::learn::{LossKind, MethodSpec, Regularization};
use predopt::solvers::TspFormulation;
use sha2::{Digest, Sha256};

pub const CONFIG_SCHEMA: u64 = 1;

/// Optimization problem an experiment runs on, with its size parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    ShortestPath { height: usize, width: usize },
    Knapsack { items: usize, resources: usize, capacity: f64 },
    Tsp { nodes: usize, formulation: TspFormulation },
}

impl ProblemSpec {
    /// Short label used in CSV rows and file names (no commas).
    pub fn label(&self) -> String {
        match self {
            ProblemSpec::ShortestPath { height, width } => {
                format!("shortest_path {height}x{width}")
            }
            ProblemSpec::Knapsack { items, resources, .. } => {
                format!("knapsack d={items} k={resources}")
            }
            ProblemSpec::Tsp { nodes, .. } => format!("tsp v={nodes}"),
        }
    }

    pub fn has_relaxation(&self) -> bool {
        // The grid flow polytope is integral, so its LP relaxation is the
        // problem itself — not a cheaper stand-in worth training against.
        !matches!(self, ProblemSpec::ShortestPath { .. })
    }

    pub fn supports_enumeration(&self) -> bool {
        match self {
            ProblemSpec::ShortestPath { .. } => true,
            ProblemSpec::Knapsack { items, .. } => *items <= 20,
            ProblemSpec::Tsp { nodes, .. } => *nodes <= 9,
        }
    }
}

/// One experiment: problem, generator parameters, methods, hyperparameters,
/// and execution settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub deg: u32,
    pub noise: f64,
    pub methods: Vec<MethodSpec>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub samples: usize,
    pub sigma: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub knn: usize,
    pub dpo_strict: bool,
    pub unambiguous: bool,
    pub repetitions: usize,
    pub seed: u64,
    /// Worker-pool size; 0 means one thread per available core.
    pub workers: usize,
}

impl ExperimentConfig {
    /// Canonical key-value rendering: fixed key order, normalized values.
    /// `workers` is execution machinery, not experiment identity, so it is
    /// excluded — see [`ExperimentConfig::fingerprint`].
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "schema = {CONFIG_SCHEMA}");
        match &self.problem {
            ProblemSpec::ShortestPath { height, width } => {
                let _ = writeln!(out, "problem = shortest_path");
                let _ = writeln!(out, "height = {height}");
                let _ = writeln!(out, "width = {width}");
            }
            ProblemSpec::Knapsack { items, resources, capacity } => {
                let _ = writeln!(out, "problem = knapsack");
                let _ = writeln!(out, "items = {items}");
                let _ = writeln!(out, "resources = {resources}");
                let _ = writeln!(out, "capacity = {capacity}");
            }
            ProblemSpec::Tsp { nodes, formulation } => {
                let _ = writeln!(out, "problem = tsp");
                let _ = writeln!(out, "nodes = {nodes}");
                let _ = writeln!(out, "formulation = {formulation}");
            }
        }
        let _ = writeln!(out, "n_train = {}", self.n_train);
        let _ = writeln!(out, "n_test = {}", self.n_test);
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "deg = {}", self.deg);
        let _ = writeln!(out, "noise = {}", self.noise);
        let names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        let _ = writeln!(out, "methods = {}", names.join(", "));
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch = {}", self.batch);
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "momentum = {}", self.momentum);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "sigma = {}", self.sigma);
        let _ = writeln!(out, "phi1 = {}", self.phi1);
        let _ = writeln!(out, "phi2 = {}", self.phi2);
        let _ = writeln!(out, "knn = {}", self.knn);
        let _ = writeln!(out, "dpo_strict = {}", self.dpo_strict);
        let _ = writeln!(out, "unambiguous = {}", self.unambiguous);
        let _ = writeln!(out, "repetitions = {}", self.repetitions);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    /// 16-hex-digit digest of the canonical form; identifies the experiment
    /// in result rows. Configs differing only in `workers` (or comments,
    /// ordering, formatting) share a fingerprint, so determinism checks
    /// across pool sizes compare equal rows.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

// ------------------------------------------------------------------ parsing

struct RawConfig {
    values: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl RawConfig {
    fn from_text(text: &str) -> Self {
        let mut values = BTreeMap::new();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ));
                continue;
            };
            let key = key.trim().to_lowercase();
            let value = value.trim().to_string();
            if values.insert(key.clone(), value).is_some() {
                errors.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }
        RawConfig { values, errors }
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    /// Removes and parses `key`; a missing key yields `default`, and `None`
    /// as the default marks the key required.
    fn take<T: FromStr>(&mut self, key: &str, default: Option<T>) -> Option<T> {
        match self.values.remove(key) {
            Some(text) => match text.parse() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.errors.push(format!("key `{key}`: cannot parse `{text}`"));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.errors.push(format!("missing required key `{key}`"));
                }
                default
            }
        }
    }

    /// Rejects a problem-specific key that doesn't belong to the selected
    /// problem (catches misconfigured experiments early).
    fn forbid(&mut self, key: &str, reason: &str) {
        if self.values.remove(key).is_some() {
            self.errors.push(format!("key `{key}` is only valid for {reason}"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ParsedMethod {
    loss: LossKind,
    rel: bool,
    l1: bool,
    l2: bool,
}

fn parse_method(token: &str) -> Result<ParsedMethod, String> {
    let lower = token.to_lowercase();
    let mut parts = lower.split_whitespace();
    let base = parts.next().ok_or_else(|| "empty method name".to_string())?;
    let loss = match base {
        "2s-lr" => LossKind::TwoStageLeastSquares,
        "2s-knn" => LossKind::TwoStageKnn,
        "spo+" => LossKind::SpoPlus,
        "dbb" => LossKind::Dbb,
        "dpo" => LossKind::Dpo,
        "pfyl" => LossKind::Pfyl,
        other => {
            return Err(format!(
                "unknown method `{other}` (expected 2s-lr, 2s-knn, spo+, dbb, dpo, or pfyl)"
            ))
        }
    };
    let mut m = ParsedMethod { loss, rel: false, l1: false, l2: false };
    for modifier in parts {
        let flag = match modifier {
            "rel" => &mut m.rel,
            "l1" => &mut m.l1,
            "l2" => &mut m.l2,
            other => {
                return Err(format!(
                    "unknown modifier `{other}` on method `{base}` (expected rel, l1, or l2)"
                ))
            }
        };
        if *flag {
            return Err(format!("modifier `{modifier}` repeated on method `{base}`"));
        }
        *flag = true;
    }
    let takes_modifiers =
        matches!(loss, LossKind::SpoPlus | LossKind::Dbb | LossKind::Pfyl);
    if !takes_modifiers && (m.rel || m.l1 || m.l2) {
        return Err(format!("method `{base}` takes no variant modifiers"));
    }
    Ok(m)
}

/// Parses and fully validates a config; on failure, returns **all**
/// violations found, one message per line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let mut raw = RawConfig::from_text(text);

    match raw.take::<u64>("schema", None) {
        Some(CONFIG_SCHEMA) | None => {}
        Some(v) => raw
            .errors
            .push(format!("unsupported schema version {v} (this build reads {CONFIG_SCHEMA})")),
    }

    let problem_kind = raw.take_raw("problem");
    let problem = match problem_kind.as_deref() {
        Some("shortest_path") => {
            raw.forbid("items", "problem = knapsack");
            raw.forbid("resources", "problem = knapsack");
            raw.forbid("capacity", "problem = knapsack");
            raw.forbid("nodes", "problem = tsp");
            raw.forbid("formulation", "problem = tsp");
            let height = raw.take::<usize>("height", None);
            let width = raw.take::<usize>("width", None);
            match (height, width) {
                (Some(height), Some(width)) => {
                    for (name, v) in [("height", height), ("width", width)] {
                        if !(2..=100).contains(&v) {
                            raw.errors.push(format!("`{name}` must be in 2..=100, got {v}"));
                        }
                    }
                    Some(ProblemSpec::ShortestPath { height, width })
                }
                _ => None,
            }
        }
        Some("knapsack") => {
            raw.forbid("height", "problem = shortest_path");
            raw.forbid("width", "problem = shortest_path");
            raw.forbid("nodes", "problem = tsp");
            raw.forbid("formulation", "problem = tsp");
            let items = raw.take::<usize>("items", None);
            let resources = raw.take::<usize>("resources", None);
            let capacity = raw.take::<f64>("capacity", None);
            match (items, resources, capacity) {
                (Some(items), Some(resources), Some(capacity)) => {
                    if items < 1 || items > 10_000 {
                        raw.errors.push(format!("`items` must be in 1..=10000, got {items}"));
                    }
                    if resources < 1 || resources > 100 {
                        raw.errors
                            .push(format!("`resources` must be in 1..=100, got {resources}"));
                    }
                    if !(capacity > 0.0) {
                        raw.errors.push(format!("`capacity` must be positive, got {capacity}"));
                    }
                    Some(ProblemSpec::Knapsack { items, resources, capacity })
                }
                _ => None,
            }
        }
        Some("tsp") => {
            raw.forbid("height", "problem = shortest_path");
            raw.forbid("width", "problem = shortest_path");
            raw.forbid("items", "problem = knapsack");
            raw.forbid("resources", "problem = knapsack");
            raw.forbid("capacity", "problem = knapsack");
            let nodes = raw.take::<usize>("nodes", None);
            let formulation = match raw.take_raw("formulation").as_deref() {
                None | Some("gg") => Some(TspFormulation::Gg),
                Some("mtz") => Some(TspFormulation::Mtz),
                Some(other) => {
                    raw.errors
                        .push(format!("`formulation` must be gg or mtz, got `{other}`"));
                    None
                }
            };
            match (nodes, formulation) {
                (Some(nodes), Some(formulation)) => {
                    if !(3..=18).contains(&nodes) {
                        raw.errors.push(format!(
                            "`nodes` must be in 3..=18 (exact-solver limit), got {nodes}"
                        ));
                    }
                    Some(ProblemSpec::Tsp { nodes, formulation })
                }
                _ => None,
            }
        }
        Some(other) => {
            raw.errors.push(format!(
                "unknown problem `{other}` (expected shortest_path, knapsack, or tsp)"
            ));
            None
        }
        None => {
            raw.errors.push("missing required key `problem`".to_string());
            None
        }
    };

    let n_train = raw.take::<usize>("n_train", None);
    let n_test = raw.take::<usize>("n_test", Some(1000));
    let p = raw.take::<usize>("p", None);
    let deg = raw.take::<u32>("deg", None);
    let noise = raw.take::<f64>("noise", None);
    let epochs = raw.take::<usize>("epochs", Some(20));
    let batch = raw.take::<usize>("batch", Some(32));
    let lr = raw.take::<f64>("lr", Some(0.01));
    let momentum = raw.take::<f64>("momentum", Some(0.9));
    let lambda = raw.take::<f64>("lambda", Some(15.0));
    let samples = raw.take::<usize>("samples", Some(1));
    let sigma = raw.take::<f64>("sigma", Some(1.0));
    let phi1 = raw.take::<f64>("phi1", Some(0.0));
    let phi2 = raw.take::<f64>("phi2", Some(0.0));
    let knn = raw.take::<usize>("knn", Some(5));
    let dpo_strict = raw.take::<bool>("dpo_strict", Some(false));
    let unambiguous = raw.take::<bool>("unambiguous", Some(false));
    let repetitions = raw.take::<usize>("repetitions", None);
    let seed = raw.take::<u64>("seed", None);
    let workers = raw.take::<usize>("workers", Some(0));

    let mut parsed_methods = Vec::new();
    match raw.take_raw("methods") {
        Some(list) => {
            let mut seen = Vec::new();
            for token in list.split(',') {
                let token = token.trim();
                if token.is_empty() {
                    raw.errors.push("empty entry in `methods` list".to_string());
                    continue;
                }
                match parse_method(token) {
                    Ok(m) => {
                        if seen.contains(&m) {
                            raw.errors.push(format!("method `{token}` listed twice"));
                        } else {
                            seen.push(m);
                            parsed_methods.push(m);
                        }
                    }
                    Err(e) => raw.errors.push(e),
                }
            }
            if parsed_methods.is_empty() && raw.errors.is_empty() {
                raw.errors.push("`methods` must name at least one method".to_string());
            }
        }
        None => raw.errors.push("missing required key `methods`".to_string()),
    }

    for key in raw.values.keys() {
        raw.errors.push(format!("unknown key `{key}`"));
    }

    let mut errors = raw.errors;

    // Range checks on scalars that parsed.
    for (name, value, ok) in [
        ("n_train", n_train.map(|v| v as f64), n_train.is_none_or(|v| v >= 1)),
        ("n_test", n_test.map(|v| v as f64), n_test.is_none_or(|v| v >= 1)),
        ("p", p.map(|v| v as f64), p.is_none_or(|v| v >= 1)),
        ("deg", deg.map(|v| v as f64), deg.is_none_or(|v| (1..=16).contains(&v))),
        ("epochs", epochs.map(|v| v as f64), epochs.is_none_or(|v| v >= 1)),
        ("batch", batch.map(|v| v as f64), batch.is_none_or(|v| v >= 1)),
        ("samples", samples.map(|v| v as f64), samples.is_none_or(|v| v >= 1)),
        ("knn", knn.map(|v| v as f64), knn.is_none_or(|v| v >= 1)),
        (
            "repetitions",
            repetitions.map(|v| v as f64),
            repetitions.is_none_or(|v| v >= 1),
        ),
    ] {
        if let Some(v) = value {
            if !ok {
                errors.push(format!("`{name}` out of range: {v}"));
            }
        }
    }
    if let Some(v) = noise {
        if !(0.0..1.0).contains(&v) {
            errors.push(format!("`noise` must lie in [0, 1), got {v}"));
        }
    }
    if let Some(v) = lr {
        if !(v > 0.0) {
            errors.push(format!("`lr` must be positive, got {v}"));
        }
    }
    if let Some(v) = momentum {
        if !(0.0..1.0).contains(&v) {
            errors.push(format!("`momentum` must lie in [0, 1), got {v}"));
        }
    }
    if let Some(v) = sigma {
        if !(v > 0.0) {
            errors.push(format!("`sigma` must be positive, got {v}"));
        }
    }
    for (name, v) in [("phi1", phi1), ("phi2", phi2)] {
        if let Some(v) = v {
            if v < 0.0 {
                errors.push(format!("`{name}` must be nonnegative, got {v}"));
            }
        }
    }

    // Cross-field rules: method requirements against the chosen problem and
    // hyperparameters.
    let uses = |pred: &dyn Fn(&ParsedMethod) -> bool| parsed_methods.iter().any(pred);
    if uses(&|m| m.loss == LossKind::Dbb) {
        if let Some(l) = lambda {
            if !(l > 0.0) {
                errors.push(format!("lambda must be positive for dbb methods, got {l}"));
            }
        }
    }
    for m in &parsed_methods {
        let name = method_display(m, phi1.unwrap_or(0.0), phi2.unwrap_or(0.0));
        if m.rel {
            match &problem {
                Some(ProblemSpec::ShortestPath { .. }) => errors.push(format!(
                    "method `{name}` is invalid for shortest_path: the grid flow LP is \
                     integral, so there is no distinct relaxation to train against"
                )),
                Some(ProblemSpec::Tsp { nodes, .. }) if *nodes > 12 => errors.push(format!(
                    "method `{name}` needs the TSP LP relaxation, which supports at most \
                     12 nodes (got {nodes})"
                )),
                _ => {}
            }
        }
        if m.l1 && phi1 == Some(0.0) {
            errors.push(format!("method `{name}` requires phi1 > 0"));
        }
        if m.l2 && phi2 == Some(0.0) {
            errors.push(format!("method `{name}` requires phi2 > 0"));
        }
    }
    if unambiguous == Some(true) {
        if let Some(pr) = &problem {
            if !pr.supports_enumeration() {
                errors.push(format!(
                    "unambiguous regret needs optimal-set enumeration, unavailable for {} \
                     (knapsack ≤ 20 items, tsp ≤ 9 nodes)",
                    pr.label()
                ));
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    // All Options are Some past this point: any None pushed an error above.
    let phi1 = phi1.unwrap();
    let phi2 = phi2.unwrap();
    let methods = parsed_methods
        .into_iter()
        .map(|m| {
            let mut spec = MethodSpec::new(m.loss);
            if m.rel {
                spec = spec.relaxed();
            }
            spec.reg = Regularization {
                l1: if m.l1 { phi1 } else { 0.0 },
                l2: if m.l2 { phi2 } else { 0.0 },
            };
            spec
        })
        .collect();
    Ok(ExperimentConfig {
        problem: problem.unwrap(),
        n_train: n_train.unwrap(),
        n_test: n_test.unwrap(),
        p: p.unwrap(),
        deg: deg.unwrap(),
        noise: noise.unwrap(),
        methods,
        epochs: epochs.unwrap(),
        batch: batch.unwrap(),
        lr: lr.unwrap(),
        momentum: momentum.unwrap(),
        lambda: lambda.unwrap(),
        samples: samples.unwrap(),
        sigma: sigma.unwrap(),
        phi1,
        phi2,
        knn: knn.unwrap(),
        dpo_strict: dpo_strict.unwrap(),
        unambiguous: unambiguous.unwrap(),
        repetitions: repetitions.unwrap(),
        seed: seed.unwrap(),
        workers: workers.unwrap(),
    })
}

fn method_display(m: &ParsedMethod, phi1: f64, phi2: f64) -> String {
    let mut spec = MethodSpec::new(m.loss);
    if m.rel {
        spec = spec.relaxed();
    }
    spec.reg = Regularization {
        l1: if m.l1 { phi1.max(f64::MIN_POSITIVE) } else { 0.0 },
        l2: if m.l2 { phi2.max(f64::MIN_POSITIVE) } else { 0.0 },
    };
    spec.name()
}

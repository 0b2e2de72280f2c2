//! Prediction models: linear/logistic regression, regression trees,
//! gradient boosting and random forests, with a versioned JSON format.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;
use crate::stats::{mean, sigmoid};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training samples")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("{0} labels for {1} rows")]
    LabelCount(usize, usize),
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("feature {0} has zero variance")]
    ZeroVariance(String),
    #[error("classification needs both classes in y")]
    SingleClass,
    #[error("classification labels must be 0 or 1, found {0}")]
    NotBinary(f64),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("unsupported model file version {0}")]
    Version(u64),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("linear system is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(ModelError::Empty);
    }
    if x.len() != y.len() {
        return Err(ModelError::LabelCount(y.len(), x.len()));
    }
    let p = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != p {
            return Err(ModelError::Ragged { row: i, got: row.len(), expected: p });
        }
        if !y[i].is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
    }
    Ok(p)
}

fn check_binary(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(ModelError::NotBinary(*v));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Linear models

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
    /// Training means, the reference point for linear attributions.
    pub feature_means: Vec<f64>,
}

impl LinearModel {
    pub fn raw(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.link {
            Link::Identity => self.raw(row),
            Link::Logistic => sigmoid(self.raw(row)),
        }
    }

    /// Intercept-only model; the constant predictor baseline.
    pub fn constant(y: &[f64], link: Link) -> Result<Self> {
        if y.is_empty() {
            return Err(ModelError::Empty);
        }
        let m = mean(y);
        let intercept = match link {
            Link::Identity => m,
            Link::Logistic => {
                let p = m.clamp(1e-12, 1.0 - 1e-12);
                (p / (1.0 - p)).ln()
            }
        };
        Ok(Self { feature_names: Vec::new(), weights: Vec::new(), intercept, link, feature_means: Vec::new() })
    }
}

const RIDGE: f64 = 1e-9;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-8;

/// Single-feature baseline: closed-form OLS or Newton logistic.
pub fn fit_univariate_baseline(x: &[f64], y: &[f64], name: &str, link: Link) -> Result<LinearModel> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    check_xy(&rows, y)?;
    if x.len() < 2 || x.iter().all(|&v| v == x[0]) {
        return Err(ModelError::ZeroVariance(name.to_string()));
    }
    match link {
        Link::Identity => {
            let (mx, my) = (mean(x), mean(y));
            let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let w = sxy / sxx;
            Ok(LinearModel { feature_names: vec![name.into()], weights: vec![w], intercept: my - w * mx, link, feature_means: vec![mx] })
        }
        Link::Logistic => fit_linear(&rows, y, &[name.to_string()], link),
    }
}

/// Multivariate fit. Identity: least squares on centred data with a tiny
/// ridge for conditioning. Logistic: Newton-Raphson with the same ridge on
/// the weights (not the intercept). The ridge on each weight is scaled by
/// its column's centred sum of squares, so it is unit-free.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64], names: &[String], link: Link) -> Result<LinearModel> {
    let p = check_xy(x, y)?;
    if names.len() != p {
        return Err(ModelError::Param(format!("{} names for {p} features", names.len())));
    }
    let n = x.len();
    let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let penalty: Vec<f64> =
        (0..p).map(|j| RIDGE * x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>().max(1.0)).collect();
    match link {
        Link::Identity => {
            let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - means[j]);
            let my = mean(y);
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - my));
            let mut a = xc.transpose() * &xc;
            for j in 0..p {
                a[(j, j)] += penalty[j];
            }
            let b = xc.transpose() * yc;
            let w = a.cholesky().ok_or(ModelError::Singular)?.solve(&b);
            let weights: Vec<f64> = w.iter().copied().collect();
            let intercept = my - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
            Ok(LinearModel { feature_names: names.to_vec(), weights, intercept, link, feature_means: means })
        }
        Link::Logistic => {
            check_binary(y)?;
            // column 0 is the intercept
            let xd = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
            let yv = DVector::from_column_slice(y);
            let mut beta = DVector::zeros(p + 1);
            for _ in 0..NEWTON_MAX_ITER {
                let eta = &xd * &beta;
                let prob = eta.map(sigmoid);
                let mut grad = xd.transpose() * (&yv - &prob);
                for j in 1..=p {
                    grad[j] -= penalty[j - 1] * beta[j];
                }
                if grad.norm() < NEWTON_TOL {
                    break;
                }
                let wts = prob.map(|q| (q * (1.0 - q)).max(1e-12));
                let xw = DMatrix::from_fn(n, p + 1, |i, j| xd[(i, j)] * wts[i]);
                let mut h = xd.transpose() * xw;
                for j in 0..=p {
                    h[(j, j)] += if j == 0 { 1e-12 } else { penalty[j - 1] };
                }
                let step = h.cholesky().ok_or(ModelError::Singular)?.solve(&grad);
                beta += step;
            }
            Ok(LinearModel {
                feature_names: names.to_vec(),
                weights: beta.iter().skip(1).copied().collect(),
                intercept: beta[0],
                link,
                feature_means: means,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Regression trees

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize, cover: f64 },
    Leaf { value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Binary tree stored as a node arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value, cover }] }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn features_used(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    fn resolve(&self, p: usize) -> usize {
        let k = match *self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => (p as f64).sqrt().round() as usize,
            MaxFeatures::Fraction(f) => (f * p as f64).ceil() as usize,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Clone, Copy, Debug)]
struct TreeParams {
    max_depth: usize,
    min_samples_leaf: usize,
    max_features: MaxFeatures,
}

/// Column-major training data with every feature presorted once.
struct Presorted<'a> {
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    _rows: std::marker::PhantomData<&'a ()>,
}

impl Presorted<'_> {
    fn new(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let cols: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let order = cols
            .par_iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..c.len() as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { cols, order, _rows: std::marker::PhantomData }
    }

    fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Stats {
    count: f64,
    sum_g: f64,
    sum_h: f64,
}

impl Stats {
    fn add(&mut self, w: f64, g: f64, h: f64) {
        self.count += w;
        self.sum_g += w * g;
        self.sum_h += w * h;
    }

    fn score(&self) -> f64 {
        if self.count > 0.0 { self.sum_g * self.sum_g / self.count } else { 0.0 }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    threshold: f64,
    feature: usize,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.gain > b.gain || (a.gain == b.gain && (a.threshold < b.threshold || (a.threshold == b.threshold && a.feature < b.feature)))
}

fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi { mid } else { lo }
}

/// Exact greedy, level-wise tree growth on targets `g` with Newton
/// denominators `h` (all ones for squared error). `weight[i]` is the
/// multiplicity of row i (0 = not in this tree's sample). Splits maximize
/// the reduction in weighted squared error of `g`; leaves hold Σwg / Σwh.
fn grow_tree(data: &Presorted<'_>, g: &[f64], h: &[f64], weight: &[f64], params: &TreeParams, rng: &mut ChaCha8Rng) -> RegressionTree {
    const NONE: u32 = u32::MAX;
    let n = g.len();
    let p = data.n_features();
    let mut root = Stats::default();
    for i in 0..n {
        if weight[i] > 0.0 {
            root.add(weight[i], g[i], h[i]);
        }
    }
    let leaf_value = |s: &Stats| if s.sum_h.abs() > 1e-150 { s.sum_g / s.sum_h } else { 0.0 };
    let mut nodes = vec![Node::Leaf { value: leaf_value(&root), cover: root.count }];
    if root.count == 0.0 {
        return RegressionTree { nodes };
    }
    let mut node_of: Vec<u32> = (0..n).map(|i| if weight[i] > 0.0 { 0 } else { NONE }).collect();
    // frontier: (node index, stats)
    let mut frontier: Vec<(usize, Stats)> = vec![(0, root)];
    let min_leaf = params.min_samples_leaf.max(1) as f64;
    let k_features = params.max_features.resolve(p);

    for _depth in 0..params.max_depth {
        if frontier.is_empty() || p == 0 {
            break;
        }
        // slot of each frontier node, by node index
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, (ni, _)) in frontier.iter().enumerate() {
            slot[*ni] = s;
        }
        let splittable: Vec<bool> = frontier.iter().map(|(_, st)| st.count >= 2.0 * min_leaf).collect();
        let allowed: Vec<Option<Vec<bool>>> = frontier
            .iter()
            .map(|_| {
                (k_features < p).then(|| {
                    let mut mask = vec![false; p];
                    for j in sample(rng, p, k_features).iter() {
                        mask[j] = true;
                    }
                    mask
                })
            })
            .collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = (0..p)
            .into_par_iter()
            .map(|f| {
                let col = &data.cols[f];
                let m = frontier.len();
                let mut best: Vec<Option<Candidate>> = vec![None; m];
                let mut left = vec![Stats::default(); m];
                let mut last = vec![f64::NAN; m];
                for &r in &data.order[f] {
                    let r = r as usize;
                    let node = node_of[r];
                    if node == NONE {
                        continue;
                    }
                    let s = slot[node as usize];
                    if s == usize::MAX || !splittable[s] || allowed[s].as_ref().is_some_and(|a| !a[f]) {
                        continue;
                    }
                    let v = col[r];
                    if left[s].count > 0.0 && v > last[s] {
                        let total = frontier[s].1;
                        let right = Stats { count: total.count - left[s].count, sum_g: total.sum_g - left[s].sum_g, sum_h: 0.0 };
                        if left[s].count >= min_leaf && right.count >= min_leaf {
                            let gain = left[s].score() + right.score() - total.score();
                            let c = Candidate { gain, threshold: split_threshold(last[s], v), feature: f };
                            if best[s].is_none_or(|b| better(&c, &b)) {
                                best[s] = Some(c);
                            }
                        }
                    }
                    left[s].add(weight[r], g[r], h[r]);
                    last[s] = v;
                }
                best
            })
            .collect();

        let mut next = Vec::new();
        let mut decisions: Vec<Option<(usize, f64, usize, usize)>> = vec![None; frontier.len()];
        for (s, (ni, st)) in frontier.iter().enumerate() {
            let mut chosen: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = cands[s] {
                    if chosen.is_none_or(|b| better(&c, &b)) {
                        chosen = Some(c);
                    }
                }
            }
            let tol = 1e-12 * (1.0 + st.score().abs());
            let Some(c) = chosen.filter(|c| c.gain > tol) else { continue };
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
            nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
            nodes[*ni] = Node::Split { feature: c.feature, threshold: c.threshold, left: li, right: ri, cover: st.count };
            decisions[s] = Some((c.feature, c.threshold, li, ri));
        }
        let mut child_stats: std::collections::BTreeMap<usize, Stats> = std::collections::BTreeMap::new();
        for r in 0..n {
            let node = node_of[r];
            if node == NONE {
                continue;
            }
            let s = slot[node as usize];
            if s == usize::MAX {
                node_of[r] = NONE;
                continue;
            }
            match decisions[s] {
                Some((f, t, li, ri)) => {
                    let c = if data.cols[f][r] <= t { li } else { ri };
                    node_of[r] = c as u32;
                    child_stats.entry(c).or_default().add(weight[r], g[r], h[r]);
                }
                None => node_of[r] = NONE,
            }
        }
        for (c, st) in child_stats {
            nodes[c] = Node::Leaf { value: leaf_value(&st), cover: st.count };
            next.push((c, st));
        }
        frontier = next;
    }
    RegressionTree { nodes }
}

// ---------------------------------------------------------------------------
// Ensembles

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Squared,
    Deviance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_trees: 200, learning_rate: 0.05, max_depth: 3, min_samples_leaf: 5, subsample: 1.0, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: None, min_samples_leaf: 1, max_features: MaxFeatures::Sqrt, bootstrap: true, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    GbtRegressor,
    GbtClassifier,
    RandomForest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum EnsembleParams {
    Gbt { loss: Loss, params: GbtParams },
    Forest { task: Task, params: ForestParams },
}

/// Raw score = base_score + tree_weight · Σ tree outputs, where the tree
/// weight is the learning rate for boosting and 1/n_trees for forests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub params: EnsembleParams,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    #[serde(default)]
    pub oob_score: Option<f64>,
}

impl TreeEnsemble {
    pub fn tree_weight(&self) -> f64 {
        match self.kind {
            EnsembleKind::RandomForest if self.trees.is_empty() => 0.0,
            EnsembleKind::RandomForest => 1.0 / self.trees.len() as f64,
            _ => self.learning_rate,
        }
    }

    pub fn raw(&self, row: &[f64]) -> f64 {
        let w = self.tree_weight();
        self.base_score + self.trees.iter().map(|t| w * t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::GbtClassifier => sigmoid(self.raw(row)),
            EnsembleKind::GbtRegressor => self.raw(row),
            EnsembleKind::RandomForest => match self.params {
                EnsembleParams::Forest { task: Task::Classification, .. } => self.raw(row).clamp(0.0, 1.0),
                _ => self.raw(row),
            },
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(
            (self.kind, &self.params),
            (EnsembleKind::GbtClassifier, _) | (EnsembleKind::RandomForest, EnsembleParams::Forest { task: Task::Classification, .. })
        )
    }
}

/// Per-stage training loss alongside the fitted ensemble.
pub struct GbtTrace {
    pub ensemble: TreeEnsemble,
    /// Entry 0 is the loss of the base score alone.
    pub train_loss: Vec<f64>,
}

fn training_loss(loss: Loss, y: &[f64], f: &[f64]) -> f64 {
    match loss {
        Loss::Squared => y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64,
        // log(1 + e^f) - y f, computed stably
        Loss::Deviance => {
            y.iter().zip(f).map(|(a, b)| b.max(0.0) + (-b.abs()).exp().ln_1p() - a * b).sum::<f64>() / y.len() as f64
        }
    }
}

pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], names: &[String], params: &GbtParams, loss: Loss) -> Result<TreeEnsemble> {
    fit_gbt_traced(x, y, names, params, loss).map(|t| t.ensemble)
}

/// Stagewise boosting: each tree fits the negative gradient (residual
/// y − F for squared error, y − sigmoid(F) for deviance) with Newton leaf
/// values. Deterministic given `params.seed`.
pub fn fit_gbt_traced(x: &[Vec<f64>], y: &[f64], names: &[String], params: &GbtParams, loss: Loss) -> Result<GbtTrace> {
    let p = check_xy(x, y)?;
    if names.len() != p {
        return Err(ModelError::Param(format!("{} names for {p} features", names.len())));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(ModelError::Param("learning_rate must be positive".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(ModelError::Param("subsample must be in (0, 1]".into()));
    }
    let n = x.len();
    let base_score = match loss {
        Loss::Squared => mean(y),
        Loss::Deviance => {
            check_binary(y)?;
            let r = mean(y);
            (r / (1.0 - r)).ln()
        }
    };
    let data = Presorted::new(x);
    let tp = TreeParams { max_depth: params.max_depth, min_samples_leaf: params.min_samples_leaf, max_features: MaxFeatures::All };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut f = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut train_loss = vec![training_loss(loss, y, &f)];
    let n_sub = ((params.subsample * n as f64).floor() as usize).max(1);
    for _ in 0..params.n_trees {
        let (g, h): (Vec<f64>, Vec<f64>) = match loss {
            Loss::Squared => (y.iter().zip(&f).map(|(a, b)| a - b).collect(), vec![1.0; n]),
            Loss::Deviance => y
                .iter()
                .zip(&f)
                .map(|(a, b)| {
                    let q = sigmoid(*b);
                    (a - q, q * (1.0 - q))
                })
                .unzip(),
        };
        let weight: Vec<f64> = if n_sub < n {
            let mut w = vec![0.0; n];
            for i in sample(&mut rng, n, n_sub).iter() {
                w[i] = 1.0;
            }
            w
        } else {
            vec![1.0; n]
        };
        let tree = grow_tree(&data, &g, &h, &weight, &tp, &mut rng);
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += params.learning_rate * tree.predict_row(row);
        }
        train_loss.push(training_loss(loss, y, &f));
        trees.push(tree);
    }
    let kind = match loss {
        Loss::Squared => EnsembleKind::GbtRegressor,
        Loss::Deviance => EnsembleKind::GbtClassifier,
    };
    Ok(GbtTrace {
        ensemble: TreeEnsemble {
            kind,
            params: EnsembleParams::Gbt { loss, params: *params },
            feature_names: names.to_vec(),
            base_score,
            learning_rate: params.learning_rate,
            trees,
            oob_score: None,
        },
        train_loss,
    })
}

/// Bootstrap forest of variance-reduction trees; classification trees
/// regress on 0/1 so leaves hold class-1 frequencies. Trees are grown in
/// parallel from per-tree seeds drawn from `params.seed`.
///
/// The out-of-bag score is R² (regression) or accuracy at 0.5
/// (classification) over rows left out by at least one tree.
pub fn fit_random_forest(x: &[Vec<f64>], y: &[f64], names: &[String], params: &ForestParams, task: Task) -> Result<TreeEnsemble> {
    let p = check_xy(x, y)?;
    if names.len() != p {
        return Err(ModelError::Param(format!("{} names for {p} features", names.len())));
    }
    if task == Task::Classification {
        check_binary(y)?;
    }
    let n = x.len();
    let data = Presorted::new(x);
    let tp = TreeParams {
        max_depth: params.max_depth.unwrap_or(usize::MAX),
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features,
    };
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.gen()).collect();
    let ones = vec![1.0; n];
    let grown: Vec<(RegressionTree, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let weight: Vec<f64> = if params.bootstrap {
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.gen_range(0..n)] += 1.0;
                }
                w
            } else {
                ones.clone()
            };
            (grow_tree(&data, y, &ones, &weight, &tp, &mut rng), weight)
        })
        .collect();

    let mut oob_sum = vec![0.0; n];
    let mut oob_cnt = vec![0usize; n];
    for (tree, weight) in &grown {
        for i in (0..n).filter(|&i| weight[i] == 0.0) {
            oob_sum[i] += tree.predict_row(&x[i]);
            oob_cnt[i] += 1;
        }
    }
    let covered: Vec<usize> = (0..n).filter(|&i| oob_cnt[i] > 0).collect();
    let oob_score = (!covered.is_empty() && params.bootstrap).then(|| {
        let pred: Vec<f64> = covered.iter().map(|&i| oob_sum[i] / oob_cnt[i] as f64).collect();
        let truth: Vec<f64> = covered.iter().map(|&i| y[i]).collect();
        match task {
            Task::Classification => {
                pred.iter().zip(&truth).filter(|(p, t)| ((**p >= 0.5) as u8 as f64) == **t).count() as f64 / truth.len() as f64
            }
            Task::Regression => {
                let m = mean(&truth);
                let sst: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
                let sse: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum();
                if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN }
            }
        }
    });
    Ok(TreeEnsemble {
        kind: EnsembleKind::RandomForest,
        params: EnsembleParams::Forest { task, params: *params },
        feature_names: names.to_vec(),
        base_score: 0.0,
        learning_rate: 1.0,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        oob_score: oob_score.filter(|s| s.is_finite()),
    })
}

// ---------------------------------------------------------------------------
// Model files and prediction

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Trees(TreeEnsemble),
}

impl Model {
    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Linear(m) => &m.feature_names,
            Model::Trees(t) => &t.feature_names,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Trees(t) => t.predict_row(row),
        }
    }

    pub fn raw_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.raw(row),
            Model::Trees(t) => t.raw(row),
        }
    }
}

/// Predictions for every matrix row, with columns matched by name.
pub fn predict(model: &Model, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    let aligned = align(model.feature_names(), matrix)?;
    Ok(aligned.iter().map(|r| model.predict_row(r)).collect())
}

/// Rows of `matrix` restricted and reordered to `names`.
pub fn align(names: &[String], matrix: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    let idx = names
        .iter()
        .map(|n| matrix.column_index(n).ok_or_else(|| ModelError::MissingColumn(n.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(matrix.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect())
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    version: u32,
    #[serde(flatten)]
    model: &'a Model,
}

#[derive(Deserialize)]
struct ModelFileIn {
    #[serde(flatten)]
    model: Model,
}

pub fn save_model<W: Write>(model: &Model, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &ModelFileOut { version: MODEL_FORMAT_VERSION, model })?;
    Ok(())
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let mut buf = Vec::new();
    save_model(model, &mut buf)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// Parse a model file, refusing unknown versions and malformed trees.
pub fn load_model<R: Read>(reader: R) -> Result<Model> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    let version = value.get("version").and_then(serde_json::Value::as_u64).ok_or_else(|| {
        ModelError::Format(serde::de::Error::custom("missing version"))
    })?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(ModelError::Version(version));
    }
    let model = serde_json::from_value::<ModelFileIn>(value)?.model;
    validate_model(&model)?;
    Ok(model)
}

fn validate_model(model: &Model) -> Result<()> {
    let bad = |m: &str| Err(ModelError::Format(serde::de::Error::custom(m)));
    match model {
        Model::Linear(m) => {
            if m.weights.len() != m.feature_names.len() || m.feature_means.len() != m.feature_names.len() {
                return bad("weights do not match feature names");
            }
        }
        Model::Trees(t) => {
            let p = t.feature_names.len();
            for tree in &t.trees {
                if tree.nodes.is_empty() {
                    return bad("empty tree");
                }
                // children must point forward so traversal terminates
                for (i, node) in tree.nodes.iter().enumerate() {
                    if let Node::Split { feature, left, right, .. } = node {
                        if *feature >= p || *left <= i || *right <= i || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return bad("malformed tree node");
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Model specifications

/// What to fit; resolved against a training matrix by [`ModelSpec::fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Intercept only.
    Constant,
    /// One named column.
    Univariate { feature: String },
    /// All columns, linear/logistic.
    Linear,
    Gbt { params: GbtParams },
    RandomForest { params: ForestParams },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Constant => "constant".into(),
            ModelSpec::Univariate { feature } => format!("univariate[{feature}]"),
            ModelSpec::Linear => "linear".into(),
            ModelSpec::Gbt { .. } => "gbt".into(),
            ModelSpec::RandomForest { .. } => "random_forest".into(),
        }
    }

    /// Columns the model will read from `columns`.
    pub fn columns_used(&self, columns: &[String]) -> Result<Vec<String>> {
        match self {
            ModelSpec::Constant => Ok(Vec::new()),
            ModelSpec::Univariate { feature } => {
                if columns.contains(feature) { Ok(vec![feature.clone()]) } else { Err(ModelError::MissingColumn(feature.clone())) }
            }
            _ => Ok(columns.to_vec()),
        }
    }

    pub fn fit(&self, matrix: &FeatureMatrix, y: &[f64], task: Task) -> Result<Model> {
        let link = match task {
            Task::Classification => Link::Logistic,
            Task::Regression => Link::Identity,
        };
        match self {
            ModelSpec::Constant => {
                if task == Task::Classification {
                    check_binary(y).or_else(|e| if matches!(e, ModelError::SingleClass) { Ok(()) } else { Err(e) })?;
                }
                LinearModel::constant(y, link).map(Model::Linear)
            }
            ModelSpec::Univariate { feature } => {
                let x = matrix.column(feature).ok_or_else(|| ModelError::MissingColumn(feature.clone()))?;
                fit_univariate_baseline(&x, y, feature, link).map(Model::Linear)
            }
            ModelSpec::Linear => fit_linear(&matrix.rows, y, &matrix.columns, link).map(Model::Linear),
            ModelSpec::Gbt { params } => {
                let loss = match task {
                    Task::Classification => Loss::Deviance,
                    Task::Regression => Loss::Squared,
                };
                fit_gbt(&matrix.rows, y, &matrix.columns, params, loss).map(Model::Trees)
            }
            ModelSpec::RandomForest { params } => fit_random_forest(&matrix.rows, y, &matrix.columns, params, task).map(Model::Trees),
        }
    }
}

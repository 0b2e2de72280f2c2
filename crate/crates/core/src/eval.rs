//! Stratified cross-validation, classification/regression metrics and the
//! before/during window contrast.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::column_block;
use crate::labels::{LabelScaler, Measure, ScoreInputs};
use crate::matrix::FeatureMatrix;
use crate::models::{ModelError, ModelSpec, Task};
use crate::stats::{mean, midranks, pearson, std_dev};
use crate::text::{TermCounts, TfidfConfig, TfidfModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least k = {k} samples, got {n}")]
    TooFew { n: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("class {class} has {count} members, fewer than k = {k}")]
    SmallClass { class: String, count: usize, k: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("leakage: {0}")]
    Leakage(String),
    #[error("community sets differ: {0}")]
    CommunityMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Label(#[from] crate::labels::LabelError),
    #[error(transparent)]
    Matrix(#[from] crate::matrix::MatrixError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

// ---------------------------------------------------------------------------
// Fold plans

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub communities: Vec<String>,
    /// Fold index of each community, parallel to `communities`.
    pub assignment: Vec<usize>,
    pub strata: String,
}

impl FoldPlan {
    pub fn fold_of(&self, community: &str) -> Option<usize> {
        self.communities.iter().position(|c| c == community).map(|i| self.assignment[i])
    }

    /// (train, test) row indices of fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != f)
    }
}

/// Strata are the class labels (classification) or label deciles
/// (regression). Members of each stratum are shuffled and dealt to folds
/// round-robin, continuing from where the previous stratum stopped, so fold
/// sizes and per-stratum counts each differ by at most one.
pub fn stratified_kfold(communities: &[String], labels: &[f64], k: usize, seed: u64, task: Task) -> Result<FoldPlan> {
    let n = labels.len();
    if communities.len() != n {
        return Err(EvalError::Length(format!("{} communities, {n} labels", communities.len())));
    }
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    if n < k {
        return Err(EvalError::TooFew { n, k });
    }
    let (strata, description): (Vec<usize>, &str) = match task {
        Task::Classification => {
            let classes: BTreeSet<u64> = labels.iter().map(|v| v.to_bits()).collect();
            let classes: Vec<u64> = classes.into_iter().collect();
            let s: Vec<usize> = labels.iter().map(|v| classes.binary_search(&v.to_bits()).unwrap()).collect();
            for (ci, c) in classes.iter().enumerate() {
                let count = s.iter().filter(|&&x| x == ci).count();
                if count < k {
                    return Err(EvalError::SmallClass { class: f64::from_bits(*c).to_string(), count, k });
                }
            }
            (s, "class labels")
        }
        Task::Regression => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
            let mut s = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                s[i] = rank * 10 / n;
            }
            (s, "label deciles")
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; n];
    let mut offset = 0;
    let n_strata = strata.iter().copied().max().map_or(0, |m| m + 1);
    for s in 0..n_strata {
        let mut members: Vec<usize> = (0..n).filter(|&i| strata[i] == s).collect();
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = (offset + j) % k;
        }
        offset += members.len();
    }
    Ok(FoldPlan { k, seed, communities: communities.to_vec(), assignment, strata: description.into() })
}

// ---------------------------------------------------------------------------
// Metrics

pub type MetricMap = BTreeMap<String, Option<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

/// Mann-Whitney AUC with half credit for ties, via midranks.
pub fn auc(y_true: &[f64], scores: &[f64]) -> Option<f64> {
    assert_eq!(y_true.len(), scores.len(), "auc: length mismatch");
    let ranks = midranks(scores);
    let n_pos = y_true.iter().filter(|&&y| y == 1.0).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(y_true).filter(|(_, &y)| y == 1.0).map(|(r, _)| r).sum();
    Some((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Positive class is 1; a prediction is positive when `prob >= threshold`.
/// Undefined precision/recall (no predicted/actual positives) count as 0.
pub fn classification_metrics(y_true: &[f64], y_prob: &[f64], threshold: f64) -> ClassificationMetrics {
    assert_eq!(y_true.len(), y_prob.len(), "classification_metrics: length mismatch");
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &p) in y_true.iter().zip(y_prob) {
        match (y == 1.0, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    ClassificationMetrics { precision, recall, f1, accuracy: div(tp + tn, y_true.len()), auc: auc(y_true, y_prob) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    /// `None` when y_true has zero variance.
    pub r2: Option<f64>,
    /// `None` when r2 is undefined or n − p − 1 < 1.
    pub adj_r2: Option<f64>,
}

pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> Option<f64> {
    (n >= p + 2).then(|| 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0))
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64], p: usize) -> RegressionMetrics {
    assert_eq!(y_true.len(), y_pred.len(), "regression_metrics: length mismatch");
    let n = y_true.len();
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    let m = mean(y_true);
    let sst: f64 = y_true.iter().map(|a| (a - m).powi(2)).sum();
    let rmse = if n == 0 { 0.0 } else { (sse / n as f64).sqrt() };
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    RegressionMetrics { rmse, r2, adj_r2: r2.and_then(|r| adjusted_r2(r, n, p)) }
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Labels for cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LabelSource {
    /// Labels involving no fitted statistic (survival flags, raw pixel counts).
    Fixed(Vec<f64>),
    /// Percentile-scaled scores; the percentile maps are refitted on every
    /// training fold and applied to its test fold.
    Scaled { measure: Measure, inputs: Vec<ScoreInputs>, alpha: f64 },
}

impl LabelSource {
    fn len(&self) -> usize {
        match self {
            LabelSource::Fixed(v) => v.len(),
            LabelSource::Scaled { inputs, .. } => inputs.len(),
        }
    }

    /// Labels of all rows using the whole population (for stratification
    /// and final models).
    pub fn full(&self, communities: &[String]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.fit_apply(communities, &all, &all)
    }

    fn fit_apply(&self, communities: &[String], fit_rows: &[usize], apply_rows: &[usize]) -> Result<Vec<f64>> {
        match self {
            LabelSource::Fixed(v) => Ok(apply_rows.iter().map(|&i| v[i]).collect()),
            LabelSource::Scaled { measure, inputs, alpha } => {
                let population: BTreeMap<String, ScoreInputs> = fit_rows.iter().map(|&i| (communities[i].clone(), inputs[i])).collect();
                let scaler = LabelScaler::fit(&population, *alpha)?;
                Ok(apply_rows.iter().map(|&i| scaler.score(&communities[i], &inputs[i]).get(*measure)).collect())
            }
        }
    }
}

/// Text documents whose TF-IDF vocabulary is refitted per training fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldText {
    /// One document per matrix row.
    pub docs: Vec<TermCounts>,
    pub config: TfidfConfig,
}

/// Everything cross-validation needs; every fitted statistic is taken
/// from the training rows of each fold.
#[derive(Clone, Debug)]
pub struct CvData {
    pub base: FeatureMatrix,
    pub text: Option<FoldText>,
    pub labels: LabelSource,
    pub task: Task,
}

/// Train/test matrices and labels of one fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldData {
    pub train_x: FeatureMatrix,
    pub train_y: Vec<f64>,
    pub test_x: FeatureMatrix,
    pub test_y: Vec<f64>,
}

impl CvData {
    /// Refuses a base matrix with corpus-fitted columns: their statistics
    /// would include the test rows of every fold.
    pub fn new(base: FeatureMatrix, text: Option<FoldText>, labels: LabelSource, task: Task) -> Result<Self> {
        if base.provenance.corpus_fitted {
            return Err(EvalError::Leakage(
                "the feature matrix contains blocks fitted on all rows; supply their raw inputs for per-fold refitting instead".into(),
            ));
        }
        if labels.len() != base.n_rows() {
            return Err(EvalError::Length(format!("{} labels for {} rows", labels.len(), base.n_rows())));
        }
        if let Some(t) = &text {
            if t.docs.len() != base.n_rows() {
                return Err(EvalError::Length(format!("{} documents for {} rows", t.docs.len(), base.n_rows())));
            }
        }
        if task == Task::Classification && matches!(labels, LabelSource::Scaled { .. }) {
            return Err(EvalError::Length("scaled labels are continuous; use the regression task".into()));
        }
        Ok(Self { base, text, labels, task })
    }

    pub fn full_labels(&self) -> Result<Vec<f64>> {
        self.labels.full(&self.base.communities)
    }

    /// Matrix over `rows` with bow columns from `model` placed after the
    /// meta/network blocks.
    fn with_text(&self, rows: &[usize], model: Option<&TfidfModel>) -> FeatureMatrix {
        let sub = self.base.select_rows(rows);
        let (Some(model), Some(text)) = (model, &self.text) else { return sub };
        let at = sub.columns.iter().rposition(|c| matches!(column_block(c), "meta" | "network")).map_or(0, |i| i + 1);
        let mut columns = sub.columns[..at].to_vec();
        columns.extend(model.vocab.iter().map(|t| format!("bow::{t}")));
        columns.extend(sub.columns[at..].iter().cloned());
        let out_rows = rows
            .iter()
            .zip(&sub.rows)
            .map(|(&i, r)| {
                let mut row = r[..at].to_vec();
                row.extend(model.transform(&text.docs[i]));
                row.extend_from_slice(&r[at..]);
                row
            })
            .collect();
        let mut m = FeatureMatrix { communities: sub.communities, columns, rows: out_rows, provenance: sub.provenance };
        m.provenance.vocab_size = model.vocab.len();
        if !m.provenance.blocks.iter().any(|b| b == "bow") {
            m.provenance.blocks.push("bow".into());
        }
        m
    }

    pub fn fold(&self, train: &[usize], test: &[usize]) -> Result<FoldData> {
        let vocab = self.text.as_ref().map(|t| TfidfModel::fit(train.iter().map(|&i| &t.docs[i]), &t.config));
        let communities = &self.base.communities;
        Ok(FoldData {
            train_x: self.with_text(train, vocab.as_ref()),
            train_y: self.labels.fit_apply(communities, train, train)?,
            test_x: self.with_text(test, vocab.as_ref()),
            test_y: self.labels.fit_apply(communities, train, test)?,
        })
    }

    /// The full-data matrix, with the vocabulary fitted on every row; for
    /// final models and explanations, not for scoring.
    pub fn full(&self) -> Result<(FeatureMatrix, Vec<f64>)> {
        let all: Vec<usize> = (0..self.base.n_rows()).collect();
        let vocab = self.text.as_ref().map(|t| TfidfModel::fit(t.docs.iter(), &t.config));
        let mut m = self.with_text(&all, vocab.as_ref());
        m.provenance.corpus_fitted = vocab.is_some();
        Ok((m, self.full_labels()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OofPrediction {
    pub community: String,
    pub fold: usize,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: String,
    pub k: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub per_fold: Vec<MetricMap>,
    pub mean: MetricMap,
    pub std: MetricMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub report: EvalReport,
    /// Out-of-fold predictions in row order.
    pub predictions: Vec<OofPrediction>,
}

fn metric_map(task: Task, y: &[f64], pred: &[f64], p: usize) -> MetricMap {
    let mut m = MetricMap::new();
    match task {
        Task::Classification => {
            let c = classification_metrics(y, pred, 0.5);
            m.insert("precision".into(), Some(c.precision));
            m.insert("recall".into(), Some(c.recall));
            m.insert("f1".into(), Some(c.f1));
            m.insert("accuracy".into(), Some(c.accuracy));
            m.insert("auc".into(), c.auc);
        }
        Task::Regression => {
            let r = regression_metrics(y, pred, p);
            m.insert("rmse".into(), Some(r.rmse));
            m.insert("r2".into(), r.r2);
            m.insert("adj_r2".into(), r.adj_r2);
        }
    }
    m
}

/// Mean and population std per metric; a metric undefined on any fold is
/// undefined in the aggregate.
pub fn aggregate(per_fold: &[MetricMap]) -> (MetricMap, MetricMap) {
    let keys: BTreeSet<&String> = per_fold.iter().flat_map(|m| m.keys()).collect();
    let mut mu = MetricMap::new();
    let mut sd = MetricMap::new();
    for k in keys {
        let vals: Option<Vec<f64>> = per_fold.iter().map(|m| m.get(k).copied().flatten()).collect();
        mu.insert(k.clone(), vals.as_ref().map(|v| mean(v)));
        sd.insert(k.clone(), vals.as_ref().map(|v| std_dev(v)));
    }
    (mu, sd)
}

fn fingerprint(data: &CvData, spec: &ModelSpec, plan: &FoldPlan) -> Result<String> {
    let doc = serde_json::json!({
        "spec": spec,
        "task": data.task,
        "k": plan.k,
        "seed": plan.seed,
        "assignment": plan.assignment,
        "communities": plan.communities,
        "columns": data.base.columns,
        "labels": match &data.labels {
            LabelSource::Fixed(_) => "fixed".to_string(),
            LabelSource::Scaled { measure, alpha, .. } => format!("{measure}@{alpha}"),
        },
        "text": data.text.as_ref().map(|t| t.config),
    });
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&doc)?)))
}

/// Fold metrics and (row, truth, prediction) triples.
type FoldOutcome = (MetricMap, Vec<(usize, f64, f64)>);

/// Fit `spec` on each fold's training rows and score its test rows; folds
/// run in parallel and are collected in fold order.
pub fn cross_validate(data: &CvData, spec: &ModelSpec, plan: &FoldPlan) -> Result<CvOutcome> {
    if plan.communities != data.base.communities {
        return Err(EvalError::CommunityMismatch("fold plan rows differ from matrix rows".into()));
    }
    let folds: Vec<FoldOutcome> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = plan.split(f);
            let fd = data.fold(&train, &test)?;
            let model = spec.fit(&fd.train_x, &fd.train_y, data.task)?;
            let pred = crate::models::predict(&model, &fd.test_x)?;
            let p = spec.columns_used(&fd.train_x.columns)?.len();
            let metrics = metric_map(data.task, &fd.test_y, &pred, p);
            let rows = test.iter().zip(fd.test_y.iter().zip(&pred)).map(|(&i, (&y, &q))| (i, y, q)).collect();
            Ok((metrics, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut predictions: Vec<Option<OofPrediction>> = vec![None; plan.communities.len()];
    let mut per_fold = Vec::with_capacity(plan.k);
    for (f, (metrics, rows)) in folds.into_iter().enumerate() {
        per_fold.push(metrics);
        for (i, y, q) in rows {
            predictions[i] = Some(OofPrediction { community: plan.communities[i].clone(), fold: f, y_true: y, y_pred: q });
        }
    }
    let (mean, std) = aggregate(&per_fold);
    Ok(CvOutcome {
        report: EvalReport {
            task: data.task,
            model: spec.name(),
            k: plan.k,
            seed: plan.seed,
            fingerprint: fingerprint(data, spec, plan)?,
            per_fold,
            mean,
            std,
        },
        predictions: predictions.into_iter().flatten().collect(),
    })
}

pub fn write_report_json<W: Write>(report: &EvalReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report)?;
    Ok(())
}

/// `metric,mean,std` rows; undefined values are left empty.
pub fn write_report_csv<W: Write>(report: &EvalReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "metric", "mean", "std"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (k, v) in &report.mean {
        w.write_record([report.model.as_str(), k, &fmt(*v), &fmt(report.std.get(k).copied().flatten())])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Window contrast

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowContrast {
    /// (community, dp − bp), in community order.
    pub deltas: Vec<(String, f64)>,
    pub correlation: Option<f64>,
    /// Up to N communities with the largest |delta| (non-zero only).
    pub divergent: Vec<(String, f64)>,
    /// dp − bp of every metric defined in both reports.
    pub metric_deltas: BTreeMap<String, f64>,
}

pub fn compare_windows(
    report_bp: &EvalReport,
    predictions_bp: &[OofPrediction],
    report_dp: &EvalReport,
    predictions_dp: &[OofPrediction],
    top_n: usize,
) -> Result<WindowContrast> {
    let bp: BTreeMap<&str, f64> = predictions_bp.iter().map(|p| (p.community.as_str(), p.y_pred)).collect();
    let dp: BTreeMap<&str, f64> = predictions_dp.iter().map(|p| (p.community.as_str(), p.y_pred)).collect();
    if bp.len() != dp.len() || bp.keys().zip(dp.keys()).any(|(a, b)| a != b) {
        let only: Vec<&str> = bp.keys().filter(|k| !dp.contains_key(*k)).chain(dp.keys().filter(|k| !bp.contains_key(*k))).copied().collect();
        return Err(EvalError::CommunityMismatch(only.join(", ")));
    }
    let deltas: Vec<(String, f64)> = bp.iter().map(|(c, b)| (c.to_string(), dp[c] - b)).collect();
    let xs: Vec<f64> = bp.values().copied().collect();
    let ys: Vec<f64> = dp.values().copied().collect();
    let correlation = if xs == ys && !xs.is_empty() { Some(1.0) } else { pearson(&xs, &ys) };
    let mut divergent: Vec<(String, f64)> = deltas.iter().filter(|(_, d)| *d != 0.0).cloned().collect();
    divergent.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    divergent.truncate(top_n);
    let metric_deltas = report_dp
        .mean
        .iter()
        .filter_map(|(k, v)| Some((k.clone(), (*v)? - report_bp.mean.get(k).copied().flatten()?)))
        .collect();
    Ok(WindowContrast { deltas, correlation, divergent, metric_deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GbtParams, MaxFeatures};
    use proptest::prelude::*;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i:04}")).collect()
    }

    fn pair_count_auc(y: &[f64], s: &[f64]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.4, 0.35, 0.8]), Some(0.75));
        assert_eq!(auc(&[0.0, 1.0], &[0.2, 0.9]), Some(1.0));
        assert_eq!(auc(&[1.0, 1.0], &[0.2, 0.9]), None);
        let c = classification_metrics(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.2, 0.8, 0.9], 0.5);
        assert_eq!((c.f1, c.auc), (1.0, Some(1.0)));
    }

    #[test]
    fn f1_is_harmonic_mean() {
        // tp 3, fp 2, fn 1: precision 0.6, recall 0.75
        let y = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let p = [0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.1];
        let c = classification_metrics(&y, &p, 0.5);
        assert_eq!((c.precision, c.recall), (0.6, 0.75));
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
        let none = classification_metrics(&[1.0, 0.0], &[0.0, 0.0], 0.5);
        assert_eq!((none.precision, none.f1), (0.0, 0.0));
    }

    #[test]
    fn regression_examples() {
        let y = [1.0, 2.0, 4.0, 8.0];
        let r = regression_metrics(&y, &y, 1);
        assert_eq!((r.rmse, r.r2), (0.0, Some(1.0)));
        let m = regression_metrics(&y, &[3.75; 4], 1);
        assert_eq!(m.r2, Some(0.0));
        assert!((adjusted_r2(0.5, 10, 2).unwrap() - (1.0 - 0.5 * 9.0 / 7.0)).abs() < 1e-15);
        assert_eq!(adjusted_r2(0.5, 3, 2), None);
        assert_eq!(regression_metrics(&[2.0, 2.0], &[1.0, 3.0], 0).r2, None);
    }

    #[test]
    fn kfold_examples() {
        let n = 100;
        let y: Vec<f64> = (0..n).map(|i| (i < 33) as u8 as f64).collect();
        let plan = stratified_kfold(&names(n), &y, 5, 1, Task::Classification).unwrap();
        for f in 0..5 {
            let pos = (0..n).filter(|&i| plan.assignment[i] == f && y[i] == 1.0).count();
            assert!(pos == 6 || pos == 7, "fold {f} has {pos} positives");
        }
        assert_eq!(plan, stratified_kfold(&names(n), &y, 5, 1, Task::Classification).unwrap());
        let loo = stratified_kfold(&names(7), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 7, 0, Task::Regression).unwrap();
        let mut a = loo.assignment.clone();
        a.sort();
        assert_eq!(a, (0..7).collect::<Vec<_>>());
        assert!(matches!(
            stratified_kfold(&names(10), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 5, 0, Task::Classification),
            Err(EvalError::SmallClass { .. })
        ));
    }

    fn synthetic(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y = rows.iter().map(|r| r[0] * r[1] + (r[2] > 0.0) as u8 as f64 + 0.1 * rng.gen_range(-1.0..1.0)).collect();
        let cols = vec!["meta::a".into(), "meta::b".into(), "meta::c".into(), "network::d".into()];
        (FeatureMatrix::new(names(n), cols, rows).unwrap(), y)
    }

    #[test]
    fn constant_model_never_beats_the_mean() {
        let (m, y) = synthetic(100, 2);
        let data = CvData::new(m, None, LabelSource::Fixed(y.clone()), Task::Regression).unwrap();
        let plan = stratified_kfold(&data.base.communities, &y, 5, 3, Task::Regression).unwrap();
        let out = cross_validate(&data, &ModelSpec::Constant, &plan).unwrap();
        assert!(out.report.per_fold.iter().all(|f| f["r2"].unwrap() <= 0.0));
        assert_eq!(out, cross_validate(&data, &ModelSpec::Constant, &plan).unwrap());
        assert_eq!(out.predictions.len(), 100);
    }

    #[test]
    fn gbt_beats_univariate_baseline() {
        let (m, y) = synthetic(500, 4);
        let data = CvData::new(m, None, LabelSource::Fixed(y.clone()), Task::Regression).unwrap();
        let plan = stratified_kfold(&data.base.communities, &y, 5, 0, Task::Regression).unwrap();
        let gbt = cross_validate(&data, &ModelSpec::Gbt { params: GbtParams::default() }, &plan).unwrap();
        let uni = cross_validate(&data, &ModelSpec::Univariate { feature: "meta::a".into() }, &plan).unwrap();
        let (g, u) = (gbt.report.mean["rmse"].unwrap(), uni.report.mean["rmse"].unwrap());
        assert!(g <= 0.8 * u, "gbt {g} univariate {u}");
        let _ = MaxFeatures::Sqrt;
    }

    #[test]
    fn forest_oob_tracks_cross_validation() {
        let (m, y) = synthetic(500, 12);
        let params = crate::models::ForestParams { n_trees: 100, max_features: MaxFeatures::All, ..Default::default() };
        let forest = crate::models::fit_random_forest(&m.rows, &y, &m.columns, &params, Task::Regression).unwrap();
        let data = CvData::new(m, None, LabelSource::Fixed(y.clone()), Task::Regression).unwrap();
        let plan = stratified_kfold(&data.base.communities, &y, 5, 0, Task::Regression).unwrap();
        let cv = cross_validate(&data, &ModelSpec::RandomForest { params }, &plan).unwrap();
        let (oob, r2) = (forest.oob_score.unwrap(), cv.report.mean["r2"].unwrap());
        assert!((oob - r2).abs() < 0.1, "oob {oob} cv {r2}");
    }

    #[test]
    fn corpus_fitted_matrix_is_refused() {
        let (mut m, y) = synthetic(20, 1);
        m.provenance.corpus_fitted = true;
        assert!(matches!(CvData::new(m, None, LabelSource::Fixed(y), Task::Regression), Err(EvalError::Leakage(_))));
    }

    fn scaled_data() -> CvData {
        let (m, _) = synthetic(40, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs: Vec<ScoreInputs> = (0..40)
            .map(|_| ScoreInputs {
                pixel_count: rng.gen_range(5..500),
                size: rng.gen_range(100..100_000),
                popularity: rng.gen_range(0.0..10.0),
                diameter: rng.gen_range(2.0..50.0),
                entropy: rng.gen_range(0.0..4.0),
            })
            .collect();
        let docs = (0..40)
            .map(|i| [(format!("w{}", i % 5), 1 + i as u32 % 3), ("all".to_string(), 1)].into_iter().collect())
            .collect();
        CvData::new(
            m,
            Some(FoldText { docs, config: TfidfConfig { max_vocab: 10, min_df: 1 } }),
            LabelSource::Scaled { measure: Measure::Size, inputs, alpha: 0.1 },
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn dropping_a_test_row_leaves_training_statistics_unchanged() {
        let data = scaled_data();
        let train: Vec<usize> = (0..30).collect();
        let test: Vec<usize> = (30..40).collect();
        let a = data.fold(&train, &test).unwrap();
        let b = data.fold(&train, &test[1..]).unwrap();
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.train_y, b.train_y);
        assert_eq!(&a.test_y[1..], &b.test_y[..]);
        // bow columns sit between network and any later block
        assert_eq!(a.train_x.columns[4..].iter().filter(|c| c.starts_with("bow::")).count(), a.train_x.n_cols() - 4);
        let (full, _) = data.full().unwrap();
        assert!(full.provenance.corpus_fitted);
    }

    #[test]
    fn scaled_labels_cross_validate() {
        let data = scaled_data();
        let y = data.full_labels().unwrap();
        let plan = stratified_kfold(&data.base.communities, &y, 4, 0, Task::Regression).unwrap();
        let out = cross_validate(&data, &ModelSpec::Gbt { params: GbtParams { n_trees: 20, ..Default::default() } }, &plan).unwrap();
        assert!(out.report.mean["rmse"].unwrap().is_finite());
        assert_eq!(out.report.fingerprint.len(), 64);
    }

    fn oof(vals: &[f64]) -> Vec<OofPrediction> {
        vals.iter().enumerate().map(|(i, v)| OofPrediction { community: format!("c{i}"), fold: 0, y_true: 0.0, y_pred: *v }).collect()
    }

    fn empty_report() -> EvalReport {
        EvalReport {
            task: Task::Regression,
            model: "m".into(),
            k: 5,
            seed: 0,
            fingerprint: String::new(),
            per_fold: vec![],
            mean: [("rmse".to_string(), Some(1.0))].into_iter().collect(),
            std: MetricMap::new(),
        }
    }

    #[test]
    fn window_contrast_examples() {
        let r = empty_report();
        let same = compare_windows(&r, &oof(&[1.0, 2.0, 3.0]), &r, &oof(&[1.0, 2.0, 3.0]), 5).unwrap();
        assert_eq!(same.correlation, Some(1.0));
        assert!(same.divergent.is_empty());
        let anti = compare_windows(&r, &oof(&[1.0, 2.0, 3.0]), &r, &oof(&[3.0, 2.0, 1.0]), 1).unwrap();
        assert_eq!(anti.correlation, Some(-1.0));
        assert_eq!(anti.divergent, vec![("c0".to_string(), 2.0)]);
        assert!(compare_windows(&r, &oof(&[1.0]), &r, &oof(&[1.0, 2.0]), 1).is_err());
    }

    proptest! {
        #[test]
        fn auc_equals_pair_counting(pairs in proptest::collection::vec((0u8..2, 0u8..6), 2..60)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let s: Vec<f64> = pairs.iter().map(|p| p.1 as f64 / 5.0).collect();
            prop_assert_eq!(auc(&y, &s), pair_count_auc(&y, &s));
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
            prop_assert_eq!(auc(&y, &s), auc(&y, &t));
        }

        #[test]
        fn rmse_scales_with_labels(y in proptest::collection::vec(-10.0f64..10.0, 2..30), c in -5.0f64..5.0) {
            let pred: Vec<f64> = y.iter().map(|v| v * 0.5 + 1.0).collect();
            let a = regression_metrics(&y, &pred, 0).rmse;
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let ps: Vec<f64> = pred.iter().map(|v| v * c).collect();
            let b = regression_metrics(&ys, &ps, 0).rmse;
            prop_assert!((b - c.abs() * a).abs() <= 1e-9 * (1.0 + b));
        }

        #[test]
        fn folds_partition_and_balance(labels in proptest::collection::vec(0u8..3, 15..120), k in 2usize..6, seed in 0u64..50) {
            let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
            let counts: Vec<usize> = (0..3).map(|c| labels.iter().filter(|&&v| v == c).count()).collect();
            let plan = stratified_kfold(&names(y.len()), &y, k, seed, Task::Classification);
            if counts.iter().any(|&c| c > 0 && c < k) {
                prop_assert!(plan.is_err());
                return Ok(());
            }
            let plan = plan.unwrap();
            let sizes: Vec<usize> = (0..k).map(|f| plan.assignment.iter().filter(|&&a| a == f).count()).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), y.len());
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for c in 0..3u8 {
                let per: Vec<usize> = (0..k).map(|f| (0..y.len()).filter(|&i| plan.assignment[i] == f && labels[i] == c).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }
    }
}

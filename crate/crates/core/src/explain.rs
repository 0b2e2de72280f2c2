//! Shapley attributions: path-dependent TreeSHAP for tree ensembles and
//! mean-referenced contributions for linear models, with summaries.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;
use crate::models::{align, Model, ModelError, Node, RegressionTree, TreeEnsemble};
use crate::stats::pearson;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("feature {0} has no type")]
    Unmapped(String),
    #[error("no attributions")]
    Empty,
    #[error("instance has {got} values, model expects {expected}")]
    Width { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TreeShap,
    /// w_j · (x_j − mean_j); not a Shapley estimate for correlated inputs.
    LinearMean,
}

/// Contributions to the raw (pre-link) score of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub community: String,
    pub method: Method,
    pub base_value: f64,
    pub features: Vec<String>,
    pub values: Vec<f64>,
    pub phi: Vec<f64>,
    /// Raw model score of the instance.
    pub prediction: f64,
}

#[derive(Clone, Copy, Debug)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            next = t - path[j].weight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Σ of path weights after unwinding element i, without mutating the path.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let w = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += w;
            next = path[j].weight - w * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            total += path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(tree: &RegressionTree, x: &[f64], phi: &mut [f64], node: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    extend(&mut path, zero, one, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature] += w * (e.one - e.zero) * value;
            }
        }
        Node::Split { feature: f, threshold, left, right, cover } => {
            let (hot, cold) = if x[*f] <= *threshold { (*left, *right) } else { (*right, *left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == *f).map(|k| k + 1) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            let rj = *cover;
            let (rh, rc) = (tree.nodes[hot].cover(), tree.nodes[cold].cover());
            let frac = |r: f64| if rj > 0.0 { r / rj } else { 0.0 };
            recurse(tree, x, phi, hot, path.clone(), iz * frac(rh), io, *f);
            recurse(tree, x, phi, cold, path, iz * frac(rc), 0.0, *f);
        }
    }
}

/// Cover-weighted mean leaf value: the tree's expectation over its
/// training distribution.
pub fn tree_expectation(tree: &RegressionTree) -> f64 {
    fn go(t: &RegressionTree, i: usize) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, .. } => *value,
            Node::Split { left, right, cover, .. } => {
                if *cover <= 0.0 {
                    return 0.0;
                }
                (t.nodes[*left].cover() * go(t, *left) + t.nodes[*right].cover() * go(t, *right)) / cover
            }
        }
    }
    go(tree, 0)
}

/// Exact path-dependent Shapley values of one tree at `x`.
pub fn tree_phi(tree: &RegressionTree, x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, x, &mut phi, 0, Vec::with_capacity(8), 1.0, 1.0, NO_FEATURE);
    phi
}

/// Attribution of the ensemble's raw score; `x` is aligned to
/// `ensemble.feature_names`.
pub fn tree_shap(ensemble: &TreeEnsemble, community: &str, x: &[f64]) -> Result<Attribution, ExplainError> {
    let p = ensemble.feature_names.len();
    if x.len() != p {
        return Err(ExplainError::Width { got: x.len(), expected: p });
    }
    let w = ensemble.tree_weight();
    let mut phi = vec![0.0; p];
    let mut base = ensemble.base_score;
    for tree in &ensemble.trees {
        base += w * tree_expectation(tree);
        for (acc, v) in phi.iter_mut().zip(tree_phi(tree, x, p)) {
            *acc += w * v;
        }
    }
    Ok(Attribution {
        community: community.to_string(),
        method: Method::TreeShap,
        base_value: base,
        features: ensemble.feature_names.clone(),
        values: x.to_vec(),
        phi,
        prediction: ensemble.raw(x),
    })
}

/// Attribution for any fitted model: TreeSHAP for ensembles, mean-referenced
/// contributions (flagged [`Method::LinearMean`]) for linear models.
pub fn attribute(model: &Model, community: &str, x: &[f64]) -> Result<Attribution, ExplainError> {
    match model {
        Model::Trees(t) => tree_shap(t, community, x),
        Model::Linear(m) => {
            if x.len() != m.weights.len() {
                return Err(ExplainError::Width { got: x.len(), expected: m.weights.len() });
            }
            let phi: Vec<f64> = m.weights.iter().zip(x).zip(&m.feature_means).map(|((w, v), mu)| w * (v - mu)).collect();
            Ok(Attribution {
                community: community.to_string(),
                method: Method::LinearMean,
                base_value: m.raw(&m.feature_means),
                features: m.feature_names.clone(),
                values: x.to_vec(),
                phi,
                prediction: m.raw(x),
            })
        }
    }
}

/// Attributions for every row of `matrix`, computed in parallel.
pub fn explain_matrix(model: &Model, matrix: &FeatureMatrix) -> Result<Vec<Attribution>, ExplainError> {
    let rows = align(model.feature_names(), matrix)?;
    rows.par_iter().zip(&matrix.communities).map(|(r, c)| attribute(model, c, r)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature: String,
    pub mean_abs_phi: f64,
    pub mean_phi: f64,
    /// Pearson correlation between feature value and phi; `None` when either
    /// is constant.
    pub value_phi_corr: Option<f64>,
}

/// Per-feature importance, ranked by mean |phi| (ties by name).
pub fn shap_summary(attributions: &[Attribution]) -> Result<Vec<SummaryRow>, ExplainError> {
    let first = attributions.first().ok_or(ExplainError::Empty)?;
    let n = attributions.len() as f64;
    let mut rows: Vec<SummaryRow> = first
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let phi: Vec<f64> = attributions.iter().map(|a| a.phi[j]).collect();
            let vals: Vec<f64> = attributions.iter().map(|a| a.values[j]).collect();
            SummaryRow {
                feature: f.clone(),
                mean_abs_phi: phi.iter().map(|v| v.abs()).sum::<f64>() / n,
                mean_phi: phi.iter().sum::<f64>() / n,
                value_phi_corr: pearson(&vals, &phi),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi).then_with(|| a.feature.cmp(&b.feature)));
    Ok(rows)
}

/// Share of total mean |phi| per feature type. With no attribution mass at
/// all, every type gets an equal share.
pub fn group_importance(summary: &[SummaryRow], types: &BTreeMap<String, String>) -> Result<BTreeMap<String, f64>, ExplainError> {
    let mut per_type: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for row in summary {
        let t = types.get(&row.feature).ok_or_else(|| ExplainError::Unmapped(row.feature.clone()))?;
        per_type.entry(t.as_str()).or_default().push(row.mean_abs_phi);
    }
    // sorted sums make the result independent of feature order
    let sums: BTreeMap<&str, f64> = per_type
        .into_iter()
        .map(|(t, mut v)| {
            v.sort_by(f64::total_cmp);
            (t, v.iter().sum())
        })
        .collect();
    let mut totals: Vec<f64> = sums.values().copied().collect();
    totals.sort_by(f64::total_cmp);
    let total: f64 = totals.iter().sum();
    let k = sums.len() as f64;
    Ok(sums.into_iter().map(|(t, s)| (t.to_string(), if total > 0.0 { s / total } else { 1.0 / k })).collect())
}

pub fn write_attributions_csv<W: Write>(attributions: &[Attribution], writer: W) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["community", "feature", "value", "phi"])?;
    for a in attributions {
        for ((f, v), p) in a.features.iter().zip(&a.values).zip(&a.phi) {
            w.write_record([a.community.as_str(), f, &v.to_string(), &p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], writer: W) -> Result<(), ExplainError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "mean_abs_phi", "mean_phi", "value_phi_corr"])?;
    for r in summary {
        let corr = r.value_phi_corr.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([r.feature.as_str(), &r.mean_abs_phi.to_string(), &r.mean_phi.to_string(), &corr])?;
    }
    w.flush()?;
    Ok(())
}

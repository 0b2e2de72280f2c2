//! Per-community feature blocks: interaction-network statistics, activity
//! meta-features, TF-IDF bag-of-words, dictionary categories and loaded
//! embeddings, plus assembly into a [`FeatureMatrix`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CategoryDictionary, CommunityMeta, ContentItem, ContentKind, EmbeddingTable};
use crate::matrix::{FeatureMatrix, Provenance, MATRIX_SCHEMA_VERSION};
use crate::stats::{gini, mean, std_dev};
use crate::text::{category_weights, term_counts, tokenize, TermCounts, TfidfConfig, TfidfModel};
use crate::window::{TimeWindow, WindowKind, AGE_ANCHOR, MS_PER_DAY};

pub const DELETED_AUTHOR: &str = "[deleted]";

/// Ordered `(name, value)` pairs; `None` marks a feature that could not be
/// computed and must be resolved by imputation.
pub type NamedVector = Vec<(String, Option<f64>)>;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("block {block} was built for the {built} window but {requested} was requested")]
    WindowConflict { block: String, built: WindowKind, requested: WindowKind },
    #[error("block {0} requested twice")]
    DuplicateBlock(String),
    #[error("block {block} has {got} values for {community}, expected {expected}")]
    Width { block: String, community: String, got: usize, expected: usize },
    #[error(transparent)]
    Matrix(#[from] crate::matrix::MatrixError),
}

// ---------------------------------------------------------------------------
// Interaction graph

/// Directed reply graph: an edge u → v counts replies by u to content by v.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u32>,
    /// Replies whose parent is not among the items.
    pub dropped_missing_parent: usize,
    /// Replies by or to a deleted account.
    pub dropped_deleted: usize,
}

impl InteractionGraph {
    pub fn self_loops(&self) -> usize {
        self.edges.keys().filter(|(u, v)| u == v).count()
    }
}

pub fn build_interaction_graph(items: &[ContentItem]) -> InteractionGraph {
    let authors: HashMap<&str, &str> = items.iter().map(|i| (i.id.as_str(), i.author.as_str())).collect();
    let mut g = InteractionGraph::default();
    for item in items {
        if item.author != DELETED_AUTHOR {
            g.nodes.insert(item.author.clone());
        }
    }
    for item in items {
        let Some(parent) = &item.parent_id else { continue };
        let Some(&target) = authors.get(parent.as_str()) else {
            g.dropped_missing_parent += 1;
            continue;
        };
        if item.author == DELETED_AUTHOR || target == DELETED_AUTHOR {
            g.dropped_deleted += 1;
            continue;
        }
        *g.edges.entry((item.author.clone(), target.to_string())).or_insert(0) += 1;
    }
    g
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkOptions {
    /// Adds exact betweenness statistics (skipped above [`BETWEENNESS_CAP`] nodes).
    pub betweenness: bool,
}

pub const BETWEENNESS_CAP: usize = 2000;

pub const NETWORK_SCHEMA: [&str; 32] = [
    "n_nodes",
    "n_edges",
    "total_weight",
    "density",
    "reciprocity",
    "avg_in_degree",
    "std_in_degree",
    "avg_out_degree",
    "std_out_degree",
    "max_in_degree",
    "max_out_degree",
    "avg_weighted_in_degree",
    "std_weighted_in_degree",
    "avg_edge_weight",
    "std_edge_weight",
    "n_triangles",
    "global_clustering",
    "avg_local_clustering",
    "n_weakly_connected_components",
    "largest_wcc_fraction",
    "n_strongly_connected_components",
    "largest_scc_fraction",
    "avg_pagerank",
    "std_pagerank",
    "max_pagerank",
    "avg_degree_centrality",
    "std_degree_centrality",
    "max_degree_centrality",
    "self_loop_count",
    "source_fraction",
    "sink_fraction",
    "isolated_fraction",
];

/// Index form of the graph; self-loops are kept out of the adjacency lists.
struct Indexed {
    n: usize,
    out: Vec<Vec<(usize, u32)>>,
    inn: Vec<Vec<(usize, u32)>>,
    und: Vec<Vec<usize>>,
}

impl Indexed {
    fn new(g: &InteractionGraph) -> Self {
        let mut ids: BTreeMap<&str, usize> = g.nodes.iter().map(|s| (s.as_str(), 0)).collect();
        for (u, v) in g.edges.keys() {
            ids.insert(u, 0);
            ids.insert(v, 0);
        }
        for (i, v) in ids.values_mut().enumerate() {
            *v = i;
        }
        let n = ids.len();
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        let mut und: Vec<Vec<usize>> = vec![Vec::new(); n];
        for ((u, v), &w) in &g.edges {
            let (a, b) = (ids[u.as_str()], ids[v.as_str()]);
            if a == b {
                continue;
            }
            out[a].push((b, w));
            inn[b].push((a, w));
            und[a].push(b);
            und[b].push(a);
        }
        for nb in &mut und {
            nb.sort_unstable();
            nb.dedup();
        }
        Self { n, out, inn, und }
    }

    /// Total triangles and the number through each node.
    fn triangles(&self) -> (u64, Vec<u64>) {
        let mut per = vec![0u64; self.n];
        let mut total = 0;
        for u in 0..self.n {
            for &v in self.und[u].iter().filter(|&&v| v > u) {
                for &w in self.und[v].iter().filter(|&&w| w > v) {
                    if self.und[u].binary_search(&w).is_ok() {
                        total += 1;
                        per[u] += 1;
                        per[v] += 1;
                        per[w] += 1;
                    }
                }
            }
        }
        (total, per)
    }

    fn weak_components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n];
        let mut sizes = Vec::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut stack = vec![s];
            comp[s] = id;
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &v in &self.und[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    /// Kosaraju with explicit stacks; returns component sizes.
    fn strong_components(&self) -> Vec<usize> {
        let mut visited = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        for s in 0..self.n {
            if visited[s] {
                continue;
            }
            visited[s] = true;
            let mut stack = vec![(s, 0usize)];
            while let Some((u, i)) = stack.pop() {
                if let Some(&(v, _)) = self.out[u].get(i) {
                    stack.push((u, i + 1));
                    if !visited[v] {
                        visited[v] = true;
                        stack.push((v, 0));
                    }
                } else {
                    order.push(u);
                }
            }
        }
        let mut comp = vec![usize::MAX; self.n];
        let mut sizes = Vec::new();
        for &s in order.iter().rev() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            comp[s] = id;
            let mut stack = vec![s];
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &(v, _) in &self.inn[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        sizes
    }

    /// Weighted PageRank with uniform teleport; dangling mass is spread evenly.
    fn pagerank(&self, damping: f64, max_iter: usize, tol: f64) -> Vec<f64> {
        let n = self.n;
        if n == 0 {
            return Vec::new();
        }
        let out_w: Vec<f64> = self.out.iter().map(|e| e.iter().map(|&(_, w)| w as f64).sum()).collect();
        let mut pr = vec![1.0 / n as f64; n];
        for _ in 0..max_iter {
            let dangling: f64 = (0..n).filter(|&u| out_w[u] == 0.0).map(|u| pr[u]).sum();
            let base = (1.0 - damping) / n as f64 + damping * dangling / n as f64;
            let mut next = vec![base; n];
            for u in 0..n {
                if out_w[u] > 0.0 {
                    let share = damping * pr[u] / out_w[u];
                    for &(v, w) in &self.out[u] {
                        next[v] += share * w as f64;
                    }
                }
            }
            let delta: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
            pr = next;
            if delta < tol {
                break;
            }
        }
        pr
    }

    /// Brandes betweenness on the unweighted directed graph, normalized by (n-1)(n-2).
    fn betweenness(&self) -> Vec<f64> {
        let n = self.n;
        let mut cb = vec![0.0; n];
        for s in 0..n {
            let mut stack = Vec::new();
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut sigma = vec![0.0f64; n];
            let mut dist = vec![-1i64; n];
            sigma[s] = 1.0;
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                stack.push(v);
                for &(w, _) in &self.out[v] {
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0; n];
            while let Some(w) = stack.pop() {
                for &v in &preds[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    cb[w] += delta[w];
                }
            }
        }
        if n > 2 {
            let norm = ((n - 1) * (n - 2)) as f64;
            cb.iter_mut().for_each(|c| *c /= norm);
        }
        cb
    }
}

fn max_or_zero(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

/// The fixed network schema (plus betweenness when requested). An empty
/// graph yields all zeros.
pub fn network_features(graph: &InteractionGraph, options: &NetworkOptions) -> NamedVector {
    let ix = Indexed::new(graph);
    let n = ix.n;
    let nf = n as f64;
    let mut vals: Vec<f64> = vec![0.0; NETWORK_SCHEMA.len()];
    if n > 0 {
        let e: usize = ix.out.iter().map(Vec::len).sum();
        let weights: Vec<f64> = graph.edges.values().map(|&w| w as f64).collect();
        let in_deg: Vec<f64> = ix.inn.iter().map(|v| v.len() as f64).collect();
        let out_deg: Vec<f64> = ix.out.iter().map(|v| v.len() as f64).collect();
        let w_in: Vec<f64> = ix.inn.iter().map(|v| v.iter().map(|&(_, w)| w as f64).sum()).collect();
        let edge_set: HashSet<(usize, usize)> =
            (0..n).flat_map(|u| ix.out[u].iter().map(move |&(v, _)| (u, v))).collect();
        let reciprocal = edge_set.iter().filter(|(u, v)| edge_set.contains(&(*v, *u))).count();
        let (tri, per_node) = ix.triangles();
        let triples: f64 = ix.und.iter().map(|nb| (nb.len() * nb.len().saturating_sub(1)) as f64 / 2.0).sum();
        let local: Vec<f64> = (0..n)
            .map(|u| {
                let d = ix.und[u].len();
                if d < 2 { 0.0 } else { per_node[u] as f64 / ((d * (d - 1)) as f64 / 2.0) }
            })
            .collect();
        let wcc = ix.weak_components();
        let scc = ix.strong_components();
        let pr = ix.pagerank(0.85, 50, 1e-9);
        let dc: Vec<f64> = if n > 1 {
            (0..n).map(|u| (in_deg[u] + out_deg[u]) / (nf - 1.0)).collect()
        } else {
            vec![0.0]
        };
        vals = vec![
            nf,
            e as f64,
            weights.iter().sum(),
            if n > 1 { e as f64 / (nf * (nf - 1.0)) } else { 0.0 },
            if e > 0 { reciprocal as f64 / e as f64 } else { 0.0 },
            mean(&in_deg),
            std_dev(&in_deg),
            mean(&out_deg),
            std_dev(&out_deg),
            max_or_zero(&in_deg),
            max_or_zero(&out_deg),
            mean(&w_in),
            std_dev(&w_in),
            mean(&weights),
            std_dev(&weights),
            tri as f64,
            if triples > 0.0 { 3.0 * tri as f64 / triples } else { 0.0 },
            mean(&local),
            wcc.len() as f64,
            wcc.iter().copied().max().unwrap_or(0) as f64 / nf,
            scc.len() as f64,
            scc.iter().copied().max().unwrap_or(0) as f64 / nf,
            mean(&pr),
            std_dev(&pr),
            max_or_zero(&pr),
            mean(&dc),
            std_dev(&dc),
            max_or_zero(&dc),
            graph.self_loops() as f64,
            (0..n).filter(|&u| out_deg[u] > 0.0 && in_deg[u] == 0.0).count() as f64 / nf,
            (0..n).filter(|&u| in_deg[u] > 0.0 && out_deg[u] == 0.0).count() as f64 / nf,
            (0..n).filter(|&u| in_deg[u] == 0.0 && out_deg[u] == 0.0).count() as f64 / nf,
        ];
    }
    let mut out: NamedVector = NETWORK_SCHEMA.iter().zip(vals).map(|(k, v)| (k.to_string(), Some(v))).collect();
    if options.betweenness {
        let (avg, max) = if n == 0 {
            (Some(0.0), Some(0.0))
        } else if n > BETWEENNESS_CAP {
            (None, None)
        } else {
            let b = ix.betweenness();
            (Some(mean(&b)), Some(max_or_zero(&b)))
        };
        out.push(("avg_betweenness".into(), avg));
        out.push(("max_betweenness".into(), max));
    }
    out
}

// ---------------------------------------------------------------------------
// Meta-features

pub const META_SCHEMA: [&str; 25] = [
    "subscriber_count",
    "age_days",
    "n_submissions",
    "n_comments",
    "n_active_users",
    "comments_per_submission",
    "distinct_commenters_per_submission",
    "removed_submission_ratio",
    "removed_comment_ratio",
    "avg_submission_score",
    "std_submission_score",
    "avg_comment_score",
    "std_comment_score",
    "posts_per_day",
    "submissions_per_day",
    "avg_title_length",
    "avg_submission_body_length",
    "avg_comment_length",
    "deleted_author_fraction",
    "activity_gini",
    "items_per_active_user",
    "top_user_share",
    "reply_to_comment_fraction",
    "self_post_fraction",
    "has_submissions",
];

/// Whole days from `created` back from the age anchor (negative when the
/// community was created after it).
pub fn age_days(created: i64) -> i64 {
    (AGE_ANCHOR - created).div_euclid(MS_PER_DAY)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 { 0.0 } else { a as f64 / b as f64 }
}

/// Activity features over one community's items in one window.
///
/// Active users are distinct non-deleted authors of submissions or
/// comments. Lengths are in tokens. Subscriber count and age are `None`
/// without metadata.
pub fn meta_features(items: &[ContentItem], meta: Option<&CommunityMeta>, span: &TimeWindow) -> NamedVector {
    let subs: Vec<&ContentItem> = items.iter().filter(|i| i.kind == ContentKind::Submission).collect();
    let coms: Vec<&ContentItem> = items.iter().filter(|i| i.kind == ContentKind::Comment).collect();
    let by_id: HashMap<&str, &ContentItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();

    // thread root of every comment, following the parent chain
    let root_of = |c: &ContentItem| -> Option<&str> {
        let mut cur = c;
        for _ in 0..=items.len() {
            let parent = by_id.get(cur.parent_id.as_deref()?)?;
            if parent.kind == ContentKind::Submission {
                return Some(parent.id.as_str());
            }
            cur = parent;
        }
        None
    };
    let mut commenters: HashMap<&str, HashSet<&str>> = subs.iter().map(|s| (s.id.as_str(), HashSet::new())).collect();
    for c in &coms {
        if c.author == DELETED_AUTHOR {
            continue;
        }
        if let Some(set) = root_of(c).and_then(|r| commenters.get_mut(r)) {
            set.insert(c.author.as_str());
        }
    }
    let distinct: Vec<f64> = subs.iter().map(|s| commenters[s.id.as_str()].len() as f64).collect();

    let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
    for i in items.iter().filter(|i| i.author != DELETED_AUTHOR) {
        *per_user.entry(i.author.as_str()).or_insert(0) += 1;
    }
    let user_counts: Vec<f64> = per_user.values().map(|&c| c as f64).collect();
    let attributed: usize = per_user.values().sum();

    let sub_scores: Vec<f64> = subs.iter().map(|s| s.score as f64).collect();
    let com_scores: Vec<f64> = coms.iter().map(|c| c.score as f64).collect();
    let body = |i: &ContentItem| if i.removed && i.kind == ContentKind::Comment { String::new() } else { i.text.clone() };
    let title_len: Vec<f64> = subs.iter().map(|s| tokenize(s.title.as_deref().unwrap_or("")).len() as f64).collect();
    let sub_body_len: Vec<f64> =
        subs.iter().map(|s| tokenize(&s.full_text()).len() as f64 - tokenize(s.title.as_deref().unwrap_or("")).len() as f64).collect();
    let com_len: Vec<f64> = coms.iter().map(|c| tokenize(&body(c)).len() as f64).collect();
    let days = span.days();
    let per_day = |k: usize| if days > 0.0 && days.is_finite() { k as f64 / days } else { 0.0 };
    let reply_to_comment = coms
        .iter()
        .filter(|c| {
            c.parent_id.as_deref().and_then(|p| by_id.get(p)).is_some_and(|p| p.kind == ContentKind::Comment)
        })
        .count();
    let self_posts = subs.iter().filter(|s| !s.removed && !s.text.trim().is_empty()).count();

    let values = [
        meta.map(|m| m.size as f64),
        meta.map(|m| age_days(m.created) as f64),
        Some(subs.len() as f64),
        Some(coms.len() as f64),
        Some(per_user.len() as f64),
        Some(ratio(coms.len(), subs.len())),
        Some(mean(&distinct)),
        Some(ratio(subs.iter().filter(|s| s.removed).count(), subs.len())),
        Some(ratio(coms.iter().filter(|c| c.removed).count(), coms.len())),
        Some(mean(&sub_scores)),
        Some(std_dev(&sub_scores)),
        Some(mean(&com_scores)),
        Some(std_dev(&com_scores)),
        Some(per_day(items.len())),
        Some(per_day(subs.len())),
        Some(mean(&title_len)),
        Some(mean(&sub_body_len)),
        Some(mean(&com_len)),
        Some(ratio(items.len() - attributed, items.len())),
        Some(gini(&user_counts)),
        Some(ratio(attributed, per_user.len())),
        Some(ratio(per_user.values().copied().max().unwrap_or(0), attributed)),
        Some(ratio(reply_to_comment, coms.len())),
        Some(ratio(self_posts, subs.len())),
        Some(if subs.is_empty() { 0.0 } else { 1.0 }),
    ];
    META_SCHEMA.iter().zip(values).map(|(k, v)| (k.to_string(), v)).collect()
}

// ---------------------------------------------------------------------------
// Text blocks

/// All tokens of a community's items, as one document.
pub fn community_tokens(items: &[ContentItem]) -> Vec<String> {
    items.iter().flat_map(|i| tokenize(&i.full_text())).collect()
}

pub fn community_term_counts(items: &[ContentItem]) -> TermCounts {
    let tokens = community_tokens(items);
    term_counts(tokens.iter().map(String::as_str))
}

pub fn category_features(items: &[ContentItem], dict: &CategoryDictionary) -> NamedVector {
    category_weights(&community_tokens(items), dict).into_iter().map(|(k, v)| (k, Some(v))).collect()
}

// ---------------------------------------------------------------------------
// Blocks and assembly

pub const BLOCK_META: &str = "meta";
pub const BLOCK_NETWORK: &str = "network";
pub const BLOCK_BOW: &str = "bow";
pub const BLOCK_LIWC: &str = "liwc";

/// One feature family for a set of communities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    /// Window the block describes; `None` means window-independent.
    pub window: Option<WindowKind>,
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
    pub corpus_fitted: bool,
}

impl FeatureBlock {
    /// Collect per-community vectors sharing one schema (taken from the
    /// first vector; all are expected to agree).
    pub fn from_vectors(name: &str, window: Option<WindowKind>, vectors: BTreeMap<String, NamedVector>) -> Result<Self, FeatureError> {
        let columns: Vec<String> = vectors.values().next().map(|v| v.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
        let mut rows = BTreeMap::new();
        for (community, v) in vectors {
            if v.len() != columns.len() || v.iter().zip(&columns).any(|((k, _), c)| k != c) {
                return Err(FeatureError::Width { block: name.into(), community, got: v.len(), expected: columns.len() });
            }
            rows.insert(community, v.into_iter().map(|(_, x)| x).collect());
        }
        Ok(Self { name: name.into(), window, columns, rows, corpus_fitted: false })
    }
}

/// Fit the vocabulary on `docs` and weight every document with it.
pub fn tfidf_block(docs: &BTreeMap<String, TermCounts>, config: &TfidfConfig, window: Option<WindowKind>) -> (TfidfModel, FeatureBlock) {
    let model = TfidfModel::fit(docs.values(), config);
    let mut block = tfidf_transform_block(&model, docs, window);
    block.corpus_fitted = true;
    (model, block)
}

/// Weight documents with an already-fitted vocabulary.
pub fn tfidf_transform_block(model: &TfidfModel, docs: &BTreeMap<String, TermCounts>, window: Option<WindowKind>) -> FeatureBlock {
    FeatureBlock {
        name: BLOCK_BOW.into(),
        window,
        columns: model.vocab.clone(),
        rows: docs.par_iter().map(|(c, d)| (c.clone(), model.transform(d).into_iter().map(Some).collect())).collect(),
        corpus_fitted: false,
    }
}

/// Inputs shared by the per-community blocks of one window.
pub struct WindowCorpus<'a> {
    pub window: WindowKind,
    pub span: TimeWindow,
    pub items: &'a BTreeMap<String, Vec<ContentItem>>,
    pub meta: &'a BTreeMap<String, CommunityMeta>,
}

/// Meta, network and (with a dictionary) category blocks for `communities`,
/// computed in parallel. Communities without items get empty-input vectors.
pub fn per_community_blocks(
    communities: &[String],
    corpus: &WindowCorpus<'_>,
    network: &NetworkOptions,
    dictionary: Option<&CategoryDictionary>,
) -> Result<Vec<FeatureBlock>, FeatureError> {
    let empty = Vec::new();
    let computed: Vec<(String, NamedVector, NamedVector, Option<NamedVector>)> = communities
        .par_iter()
        .map(|c| {
            let items = corpus.items.get(c).unwrap_or(&empty);
            let meta = meta_features(items, corpus.meta.get(c), &corpus.span);
            let net = network_features(&build_interaction_graph(items), network);
            let liwc = dictionary.map(|d| category_features(items, d));
            (c.clone(), meta, net, liwc)
        })
        .collect();
    let w = Some(corpus.window);
    let mut metas = BTreeMap::new();
    let mut nets = BTreeMap::new();
    let mut liwcs = BTreeMap::new();
    for (c, m, n, l) in computed {
        metas.insert(c.clone(), m);
        nets.insert(c.clone(), n);
        if let Some(l) = l {
            liwcs.insert(c, l);
        }
    }
    let mut blocks = vec![FeatureBlock::from_vectors(BLOCK_META, w, metas)?, FeatureBlock::from_vectors(BLOCK_NETWORK, w, nets)?];
    if dictionary.is_some() {
        let mut liwc = FeatureBlock::from_vectors(BLOCK_LIWC, w, liwcs)?;
        if liwc.rows.is_empty() {
            liwc.columns = dictionary.map(|d| d.categories.values().cloned().collect()).unwrap_or_default();
        }
        blocks.push(liwc);
    }
    Ok(blocks)
}

/// Embedding table as a block: one column per dimension plus a
/// `missing` indicator; absent communities get zeros and indicator 1.
pub fn embedding_block(table: &EmbeddingTable, communities: &[String]) -> FeatureBlock {
    let width = table.dim.saturating_sub(1).to_string().len();
    let mut columns: Vec<String> = (0..table.dim).map(|d| format!("d{d:0width$}")).collect();
    columns.push("missing".into());
    let rows = communities
        .iter()
        .map(|c| {
            let mut row: Vec<Option<f64>> = match table.get(c) {
                Some(v) => v.iter().map(|&x| Some(x)).chain([Some(0.0)]).collect(),
                None => std::iter::repeat_n(Some(0.0), table.dim).chain([Some(1.0)]).collect(),
            };
            row.truncate(table.dim + 1);
            (c.clone(), row)
        })
        .collect();
    FeatureBlock { name: table.name.clone(), window: table.window, columns, rows, corpus_fitted: false }
}

fn block_rank(name: &str) -> (usize, &str) {
    match name {
        BLOCK_META => (0, ""),
        BLOCK_NETWORK => (1, ""),
        BLOCK_BOW => (2, ""),
        BLOCK_LIWC => (3, ""),
        other => (4, other),
    }
}

/// Order blocks canonically: meta, network, bow, liwc, then the rest by name.
pub fn canonical_block_order(names: &mut [String]) {
    names.sort_by(|a, b| block_rank(a).cmp(&block_rank(b)));
}

/// Build the matrix for `communities` (rows in the given order) from the
/// given blocks. Columns are `block::feature`, blocks in canonical order and
/// features sorted by name within each block. Missing values and communities
/// absent from a block are imputed as zero; the count is recorded in the
/// provenance notes.
pub fn assemble(communities: &[String], window: WindowKind, blocks: &[&FeatureBlock]) -> Result<FeatureMatrix, FeatureError> {
    let mut ordered: Vec<&FeatureBlock> = blocks.to_vec();
    ordered.sort_by(|a, b| block_rank(&a.name).cmp(&block_rank(&b.name)));
    for pair in ordered.windows(2) {
        if pair[0].name == pair[1].name {
            return Err(FeatureError::DuplicateBlock(pair[0].name.clone()));
        }
    }
    let mut columns = Vec::new();
    let mut plan: Vec<(&FeatureBlock, Vec<usize>)> = Vec::new();
    for b in &ordered {
        if let Some(built) = b.window {
            if built != window {
                return Err(FeatureError::WindowConflict { block: b.name.clone(), built, requested: window });
            }
        }
        let mut idx: Vec<usize> = (0..b.columns.len()).collect();
        idx.sort_by(|&i, &j| b.columns[i].cmp(&b.columns[j]));
        columns.extend(idx.iter().map(|&i| format!("{}::{}", b.name, b.columns[i])));
        plan.push((b, idx));
    }
    let mut imputed = 0usize;
    let rows: Vec<Vec<f64>> = communities
        .iter()
        .map(|c| {
            let mut row = Vec::with_capacity(columns.len());
            for (b, idx) in &plan {
                match b.rows.get(c) {
                    Some(vals) => row.extend(idx.iter().map(|&i| {
                        vals.get(i).copied().flatten().unwrap_or_else(|| {
                            imputed += 1;
                            0.0
                        })
                    })),
                    None => {
                        imputed += idx.len();
                        row.extend(std::iter::repeat_n(0.0, idx.len()));
                    }
                }
            }
            row
        })
        .collect();
    let mut m = FeatureMatrix::new(communities.to_vec(), columns, rows)?;
    let mut notes = BTreeMap::new();
    notes.insert("imputed_values".to_string(), imputed.to_string());
    m.provenance = Provenance {
        schema_version: MATRIX_SCHEMA_VERSION,
        window: Some(window),
        blocks: ordered.iter().map(|b| b.name.clone()).collect(),
        corpus_fitted: ordered.iter().any(|b| b.corpus_fitted),
        vocab_size: ordered.iter().filter(|b| b.name == BLOCK_BOW).map(|b| b.columns.len()).sum(),
        notes,
    };
    Ok(m)
}

/// Feature-type of an assembled column (`block::feature` → `block`).
pub fn column_block(column: &str) -> &str {
    column.split_once("::").map_or(column, |(b, _)| b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::load_category_dictionary;
    use proptest::prelude::*;

    fn item(kind: ContentKind, id: &str, parent: Option<&str>, author: &str) -> ContentItem {
        ContentItem {
            kind,
            id: id.into(),
            parent_id: parent.map(str::to_string),
            author: author.into(),
            community: "c".into(),
            created: 0,
            title: (kind == ContentKind::Submission).then(|| "a title".to_string()),
            text: String::new(),
            score: 1,
            removed: false,
        }
    }

    fn sub(id: &str, author: &str) -> ContentItem {
        item(ContentKind::Submission, id, None, author)
    }

    fn com(id: &str, parent: &str, author: &str) -> ContentItem {
        item(ContentKind::Comment, id, Some(parent), author)
    }

    fn graph_of(edges: &[(&str, &str)]) -> InteractionGraph {
        let mut g = InteractionGraph::default();
        for (u, v) in edges {
            g.nodes.insert(u.to_string());
            g.nodes.insert(v.to_string());
            *g.edges.entry((u.to_string(), v.to_string())).or_insert(0) += 1;
        }
        g
    }

    fn feat(v: &NamedVector, name: &str) -> f64 {
        v.iter().find(|(k, _)| k == name).and_then(|(_, x)| *x).unwrap()
    }

    #[test]
    fn reply_edges() {
        let items = vec![sub("s1", "v"), com("c1", "s1", "u"), com("c2", "s1", "u"), com("c3", "gone", "u"), com("c4", "c1", "[deleted]")];
        let g = build_interaction_graph(&items);
        assert_eq!(g.edges.get(&("u".into(), "v".into())), Some(&2));
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.dropped_missing_parent, 1);
        assert_eq!(g.dropped_deleted, 1);
        assert_eq!(g.nodes.len(), 2);
    }

    #[test]
    fn network_examples() {
        let opts = NetworkOptions::default();
        let k3 = network_features(&graph_of(&[("a", "b"), ("b", "c"), ("c", "a")]), &opts);
        assert_eq!(feat(&k3, "n_triangles"), 1.0);
        assert_eq!(feat(&k3, "global_clustering"), 1.0);
        let k4 = graph_of(&[("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")]);
        assert_eq!(feat(&network_features(&k4, &opts), "n_triangles"), 4.0);
        let path = network_features(&graph_of(&[("a", "b"), ("b", "c")]), &opts);
        assert!((feat(&path, "density") - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(feat(&path, "n_strongly_connected_components"), 3.0);
        assert_eq!(feat(&path, "n_weakly_connected_components"), 1.0);
        let empty = network_features(&InteractionGraph::default(), &opts);
        assert_eq!(empty.len(), 32);
        assert!(empty.iter().all(|(_, v)| *v == Some(0.0)));
    }

    #[test]
    fn pagerank_sums_to_one_and_betweenness_of_path() {
        let g = graph_of(&[("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")]);
        let ix = Indexed::new(&g);
        let pr = ix.pagerank(0.85, 50, 1e-9);
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let path = Indexed::new(&graph_of(&[("a", "b"), ("b", "c")]));
        // only b lies between a and c: 1 / ((3-1)(3-2))
        assert_eq!(path.betweenness(), vec![0.0, 0.5, 0.0]);
        let v = network_features(&g, &NetworkOptions { betweenness: true });
        assert_eq!(v.len(), 34);
    }

    #[test]
    fn meta_examples() {
        let mut items: Vec<ContentItem> = (0..10).map(|i| sub(&format!("s{i}"), "u")).collect();
        items[3].removed = true;
        let v = meta_features(&items, None, &TimeWindow::during_place());
        assert_eq!(feat(&v, "removed_submission_ratio"), 0.1);
        assert_eq!(v.len(), 25);
        assert_eq!(v[0].1, None);

        // commenter sets of sizes 2, 2, 3, 1; c5 replies to a comment
        let items = vec![
            sub("a", "x"),
            sub("b", "x"),
            sub("c", "x"),
            sub("d", "x"),
            com("1", "a", "p"),
            com("2", "a", "q"),
            com("3", "b", "p"),
            com("4", "b", "r"),
            com("5", "4", "p"),
            com("6", "c", "p"),
            com("7", "c", "q"),
            com("8", "c", "r"),
            com("9", "d", "s"),
        ];
        let v = meta_features(&items, None, &TimeWindow::during_place());
        assert_eq!(feat(&v, "distinct_commenters_per_submission"), 2.0);
        assert_eq!(feat(&v, "n_active_users"), 5.0);
        assert_eq!(feat(&v, "comments_per_submission"), 2.25);
        assert_eq!(feat(&v, "reply_to_comment_fraction"), 1.0 / 9.0);
        assert_eq!(feat(&v, "posts_per_day"), 13.0 / 3.0);

        let none = meta_features(&[], None, &TimeWindow::during_place());
        assert_eq!(feat(&none, "has_submissions"), 0.0);
        assert_eq!(feat(&none, "comments_per_submission"), 0.0);
    }

    #[test]
    fn age_in_days() {
        let jan1 = chrono::NaiveDate::from_ymd_opt(2017, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis();
        assert_eq!(age_days(jan1), 89);
        let meta = CommunityMeta { name: "c".into(), size: 42, created: jan1 };
        let v = meta_features(&[], Some(&meta), &TimeWindow::before_place());
        assert_eq!(feat(&v, "age_days"), 89.0);
        assert_eq!(feat(&v, "subscriber_count"), 42.0);
    }

    #[test]
    fn liwc_block() {
        let dict = load_category_dictionary("%\n1\tincl\n%\nwith\t1\ntogether\t1\n").unwrap();
        let mut s = sub("s", "u");
        s.title = Some("we are together with friends".into());
        assert_eq!(category_features(&[s], &dict), vec![("incl".to_string(), Some(0.4))]);
    }

    fn block(name: &str, cols: &[&str], rows: &[(&str, Vec<Option<f64>>)]) -> FeatureBlock {
        FeatureBlock {
            name: name.into(),
            window: Some(WindowKind::Dp),
            columns: cols.iter().map(|c| c.to_string()).collect(),
            rows: rows.iter().map(|(c, v)| (c.to_string(), v.clone())).collect(),
            corpus_fitted: false,
        }
    }

    #[test]
    fn assembly_order_and_imputation() {
        let communities: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let meta = block(BLOCK_META, &["b", "a"], &[("x", vec![Some(1.0), Some(2.0)]), ("y", vec![None, Some(4.0)]), ("z", vec![Some(5.0), Some(6.0)])]);
        let net = block(BLOCK_NETWORK, &["n"], &[("x", vec![Some(7.0)])]);
        let table = EmbeddingTable {
            name: "snap".into(),
            dim: 2,
            vectors: [("x".to_string(), vec![0.5, -0.5])].into_iter().collect(),
            window: None,
        };
        let emb = embedding_block(&table, &communities);
        let m = assemble(&communities, WindowKind::Dp, &[&emb, &net, &meta]).unwrap();
        assert_eq!(m.columns, vec!["meta::a", "meta::b", "network::n", "snap::d0", "snap::d1", "snap::missing"]);
        assert_eq!(m.rows[0], vec![2.0, 1.0, 7.0, 0.5, -0.5, 0.0]);
        assert_eq!(m.rows[1], vec![4.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.provenance.notes["imputed_values"], "3");

        let only_meta = assemble(&communities, WindowKind::Dp, &[&meta]).unwrap();
        assert_eq!((only_meta.n_rows(), only_meta.n_cols()), (3, 2));

        let bp_table = table.clone().with_window(Some(WindowKind::Bp));
        let err = assemble(&communities, WindowKind::Dp, &[&embedding_block(&bp_table, &communities)]).unwrap_err();
        assert!(err.to_string().contains("snap") && err.to_string().contains("bp"));
    }

    #[test]
    fn tfidf_block_marks_corpus_fit() {
        let docs: BTreeMap<String, TermCounts> = [("a", "x y"), ("b", "x")]
            .iter()
            .map(|(c, t)| (c.to_string(), term_counts(tokenize(t).iter().map(String::as_str))))
            .collect();
        let (model, b) = tfidf_block(&docs, &TfidfConfig { max_vocab: 10, min_df: 1 }, Some(WindowKind::Dp));
        assert!(b.corpus_fitted);
        assert_eq!(model.vocab, vec!["x", "y"]);
        let m = assemble(&["b".to_string()], WindowKind::Dp, &[&b]).unwrap();
        assert!(m.provenance.corpus_fitted);
        assert_eq!(m.rows[0], vec![1.0, 0.0]);
    }

    fn brute_triangles(n: usize, und: &HashSet<(usize, usize)>) -> u64 {
        let adj = |a: usize, b: usize| und.contains(&(a.min(b), a.max(b)));
        let mut t = 0;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if adj(a, b) && adj(b, c) && adj(a, c) {
                        t += 1;
                    }
                }
            }
        }
        t
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn triangles_match_triple_enumeration(n in 1usize..200, edges in proptest::collection::vec((0usize..200, 0usize..200), 0..600)) {
            let mut g = InteractionGraph::default();
            for i in 0..n {
                g.nodes.insert(format!("u{i:03}"));
            }
            let mut und = HashSet::new();
            for (a, b) in edges {
                let (a, b) = (a % n, b % n);
                *g.edges.entry((format!("u{a:03}"), format!("u{b:03}"))).or_insert(0) += 1;
                if a != b {
                    und.insert((a.min(b), a.max(b)));
                }
            }
            let v = network_features(&g, &NetworkOptions::default());
            prop_assert_eq!(feat(&v, "n_triangles"), brute_triangles(n, &und) as f64);
            let again = network_features(&g.clone(), &NetworkOptions::default());
            prop_assert!(v.iter().zip(&again).all(|(a, b)| a.1.map(f64::to_bits) == b.1.map(f64::to_bits)));
        }

        #[test]
        fn assembly_rows_follow_given_order(perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
            let rows: Vec<(String, Vec<Option<f64>>)> = names.iter().enumerate().map(|(i, c)| (c.clone(), vec![Some(i as f64), Some((i * i) as f64)])).collect();
            let b = FeatureBlock { name: BLOCK_META.into(), window: None, columns: vec!["p".into(), "q".into()], rows: rows.into_iter().collect(), corpus_fitted: false };
            let base = assemble(&names, WindowKind::Bp, &[&b]).unwrap();
            let order: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
            let shuffled = assemble(&order, WindowKind::Bp, &[&b]).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&shuffled.rows[k], &base.rows[i]);
            }
        }
    }
}

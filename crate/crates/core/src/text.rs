//! Tokenization, TF-IDF weighting and dictionary-category weights.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::CategoryDictionary;

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>()\[\]{}"'`]+"#).expect("static regex"))
}

fn url_domain(raw: &str) -> Option<String> {
    let with_scheme = if raw.to_ascii_lowercase().starts_with("www.") { format!("http://{raw}") } else { raw.to_string() };
    let parsed = url::Url::parse(&with_scheme).ok()?;
    let host = parsed.host_str()?.to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).trim_end_matches('.').to_string();
    (!host.is_empty()).then_some(host)
}

fn push_words(segment: &str, out: &mut Vec<String>) {
    out.extend(segment.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase));
}

/// Lowercase word tokens; URLs collapse to their domain, everything else
/// splits on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut last = 0;
    for m in url_pattern().find_iter(text) {
        push_words(&text[last..m.start()], &mut out);
        if let Some(domain) = url_domain(m.as_str()) {
            out.push(domain);
        }
        last = m.end();
    }
    push_words(&text[last..], &mut out);
    out
}

pub type TermCounts = BTreeMap<String, u32>;

pub fn term_counts<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> TermCounts {
    let mut counts = TermCounts::new();
    for t in tokens {
        *counts.entry(t.to_string()).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub max_vocab: usize,
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self { max_vocab: 5000, min_df: 5 }
    }
}

/// Vocabulary and smoothed idf weights fitted on a set of documents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Lexicographically sorted terms; the column order.
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl TfidfModel {
    /// Keep the `max_vocab` terms with the highest document frequency among
    /// those with `df >= min_df`; idf = ln((1 + N) / (1 + df)) + 1.
    pub fn fit<'a, I>(docs: I, config: &TfidfConfig) -> Self
    where
        I: IntoIterator<Item = &'a TermCounts>,
    {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            for term in doc.keys() {
                *df.entry(term.as_str()).or_insert(0) += 1;
            }
        }
        let mut candidates: Vec<(&str, usize)> = df.into_iter().filter(|(_, d)| *d >= config.min_df.max(1)).collect();
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        candidates.truncate(config.max_vocab);
        candidates.sort_by(|a, b| a.0.cmp(b.0));
        let idf = candidates
            .iter()
            .map(|(_, d)| ((1.0 + n_docs as f64) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        Self { vocab: candidates.into_iter().map(|(t, _)| t.to_string()).collect(), idf, n_docs }
    }

    /// Raw-count tf times idf, L2-normalized (an all-zero row stays zero).
    pub fn transform(&self, doc: &TermCounts) -> Vec<f64> {
        let mut row: Vec<f64> = self
            .vocab
            .iter()
            .zip(&self.idf)
            .map(|(t, idf)| doc.get(t).map_or(0.0, |&c| c as f64 * idf))
            .collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        row
    }
}

/// Fraction of tokens falling in each dictionary category, ordered by
/// category id. A token counts once toward every category it maps to.
pub fn category_weights(tokens: &[String], dict: &CategoryDictionary) -> Vec<(String, f64)> {
    let mut hits: BTreeMap<u32, usize> = dict.categories.keys().map(|id| (*id, 0)).collect();
    for t in tokens {
        if let Some(ids) = dict.lookup(t) {
            for id in ids {
                *hits.entry(*id).or_insert(0) += 1;
            }
        }
    }
    let total = tokens.len();
    dict.categories
        .iter()
        .map(|(id, name)| {
            let w = if total == 0 { 0.0 } else { hits[id] as f64 / total as f64 };
            (name.clone(), w)
        })
        .collect()
}

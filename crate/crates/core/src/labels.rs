//! Success labels: the binary survival flag and the five continuous scores.
//!
//! Every continuous score starts from the artwork's pixel count and scales
//! it by a percentile factor clamped below by `alpha`:
//!
//! * `s_phi  = pixels`
//! * `s_size = pixels * max(1 - rho(|c|), alpha)`
//! * `s_pop  = pixels * max(rho(p), alpha)`
//! * `s_diam = pixels * max(rho(d), alpha)`
//! * `s_entropy = pixels * max(rho(H), alpha)`
//!
//! `rho` is the midrank percentile among surviving communities, so only the
//! ordering of a factor matters, never its scale.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artwork::ArtworkMetrics;
use crate::stats;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_MIN_PIXELS: usize = 5;
pub const DEFAULT_QUARTILE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot rank an empty set of values")]
    Empty,
    #[error("value for `{0}` is not finite")]
    NonFinite(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("surviving communities without a community size: {0:?}")]
    MissingSize(Vec<String>),
    #[error("surviving communities without artwork metrics: {0:?}")]
    MissingMetrics(Vec<String>),
    #[error("neither a final mask nor an annotation is available")]
    NoSource,
    #[error("need at least {needed} surviving communities, have {have}")]
    TooFew { needed: usize, have: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LabelError> = std::result::Result<T, E>;

/// The five continuous success measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "s_phi")]
    Phi,
    #[serde(rename = "s_size")]
    Size,
    #[serde(rename = "s_pop")]
    Popularity,
    #[serde(rename = "s_diam")]
    Diameter,
    #[serde(rename = "s_entropy")]
    Entropy,
}

impl Measure {
    pub const ALL: [Measure; 5] = [Measure::Phi, Measure::Size, Measure::Popularity, Measure::Diameter, Measure::Entropy];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::Phi => "s_phi",
            Measure::Size => "s_size",
            Measure::Popularity => "s_pop",
            Measure::Diameter => "s_diam",
            Measure::Entropy => "s_entropy",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown measure `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessLabels {
    pub community: String,
    pub survived: bool,
    pub s_phi: f64,
    pub s_size: f64,
    pub s_pop: f64,
    pub s_diam: f64,
    pub s_entropy: f64,
}

impl SuccessLabels {
    pub fn failed(community: &str) -> Self {
        Self {
            community: community.to_string(),
            survived: false,
            s_phi: 0.0,
            s_size: 0.0,
            s_pop: 0.0,
            s_diam: 0.0,
            s_entropy: 0.0,
        }
    }

    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Phi => self.s_phi,
            Measure::Size => self.s_size,
            Measure::Popularity => self.s_pop,
            Measure::Diameter => self.s_diam,
            Measure::Entropy => self.s_entropy,
        }
    }
}

/// Midrank percentiles of one measure over a reference population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileMap {
    pub measure: String,
    pub values: BTreeMap<String, f64>,
    pub rho: BTreeMap<String, f64>,
    /// Reference values, sorted ascending.
    sorted: Vec<f64>,
}

impl PercentileMap {
    /// Percentile of an arbitrary value against the reference population:
    /// `(#{smaller} + 0.5 * #{equal}) / n`.
    pub fn rho_of(&self, v: f64) -> f64 {
        let below = self.sorted.partition_point(|x| *x < v);
        let through = self.sorted.partition_point(|x| *x <= v);
        (below as f64 + 0.5 * (through - below) as f64) / self.sorted.len() as f64
    }
}

pub fn percentile_rank<I>(measure: &str, values: I) -> Result<PercentileMap>
where
    I: IntoIterator<Item = (String, f64)>,
{
    let values: BTreeMap<String, f64> = values.into_iter().collect();
    if values.is_empty() {
        return Err(LabelError::Empty);
    }
    if let Some((k, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(LabelError::NonFinite(k.clone()));
    }
    let mut sorted: Vec<f64> = values.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut map = PercentileMap { measure: measure.to_string(), values, rho: BTreeMap::new(), sorted };
    map.rho = map.values.iter().map(|(k, v)| (k.clone(), map.rho_of(*v))).collect();
    Ok(map)
}

/// Raw inputs to the continuous scores for one community.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreInputs {
    pub pixel_count: u64,
    pub size: u64,
    pub popularity: f64,
    pub diameter: f64,
    pub entropy: f64,
}

impl ScoreInputs {
    pub fn new(metrics: &ArtworkMetrics, size: u64) -> Self {
        Self {
            pixel_count: metrics.pixel_count,
            size,
            popularity: metrics.popularity,
            diameter: metrics.diameter as f64,
            entropy: metrics.entropy,
        }
    }
}

/// Percentile maps fitted on a reference population of survivors; applies
/// the score formulas to any community's inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub alpha: f64,
    pub size: PercentileMap,
    pub popularity: PercentileMap,
    pub diameter: PercentileMap,
    pub entropy: PercentileMap,
}

impl LabelScaler {
    pub fn fit(population: &BTreeMap<String, ScoreInputs>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(LabelError::Alpha(alpha));
        }
        let column = |f: fn(&ScoreInputs) -> f64| population.iter().map(move |(k, v)| (k.clone(), f(v)));
        Ok(Self {
            alpha,
            size: percentile_rank("size", column(|s| s.size as f64))?,
            popularity: percentile_rank("popularity", column(|s| s.popularity))?,
            diameter: percentile_rank("diameter", column(|s| s.diameter))?,
            entropy: percentile_rank("entropy", column(|s| s.entropy))?,
        })
    }

    pub fn score(&self, community: &str, inputs: &ScoreInputs) -> SuccessLabels {
        let phi = inputs.pixel_count as f64;
        let a = self.alpha;
        SuccessLabels {
            community: community.to_string(),
            survived: true,
            s_phi: phi,
            s_size: phi * (1.0 - self.size.rho_of(inputs.size as f64)).max(a),
            s_pop: phi * self.popularity.rho_of(inputs.popularity).max(a),
            s_diam: phi * self.diameter.rho_of(inputs.diameter).max(a),
            s_entropy: phi * self.entropy.rho_of(inputs.entropy).max(a),
        }
    }
}

/// Labels for every participant. Percentiles are computed over survivors
/// only; failed communities get zero scores.
pub fn compute_labels(
    survival: &BTreeMap<String, bool>,
    metrics: &BTreeMap<String, ArtworkMetrics>,
    sizes: &BTreeMap<String, u64>,
    alpha: f64,
) -> Result<BTreeMap<String, SuccessLabels>> {
    let survivors: Vec<&String> = survival.iter().filter(|(_, s)| **s).map(|(k, _)| k).collect();
    let no_size: Vec<String> = survivors.iter().filter(|k| !sizes.contains_key(**k)).map(|k| k.to_string()).collect();
    if !no_size.is_empty() {
        return Err(LabelError::MissingSize(no_size));
    }
    let no_metrics: Vec<String> =
        survivors.iter().filter(|k| !metrics.contains_key(**k)).map(|k| k.to_string()).collect();
    if !no_metrics.is_empty() {
        return Err(LabelError::MissingMetrics(no_metrics));
    }
    let population: BTreeMap<String, ScoreInputs> =
        survivors.iter().map(|k| ((*k).clone(), ScoreInputs::new(&metrics[*k], sizes[*k]))).collect();

    let mut out = BTreeMap::new();
    if population.is_empty() {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(LabelError::Alpha(alpha));
        }
    } else {
        let scaler = LabelScaler::fit(&population, alpha)?;
        for (k, inputs) in &population {
            out.insert(k.clone(), scaler.score(k, inputs));
        }
    }
    for (k, survived) in survival {
        if !survived {
            out.insert(k.clone(), SuccessLabels::failed(k));
        }
    }
    Ok(out)
}

/// Survival flag: an annotation wins; otherwise the final mask must hold at
/// least `min_pixels` pixels.
pub fn binary_label(final_mask_pixels: Option<usize>, annotation: Option<bool>, min_pixels: usize) -> Result<bool> {
    match (annotation, final_mask_pixels) {
        (Some(a), _) => Ok(a),
        (None, Some(n)) => Ok(n >= min_pixels),
        (None, None) => Err(LabelError::NoSource),
    }
}

/// Symmetric matrix of (Pearson, Spearman) pairs; `None` marks an undefined
/// entry (a zero-variance measure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub measures: Vec<Measure>,
    pub entries: Vec<Vec<Option<(f64, f64)>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Measure, b: Measure) -> Option<(f64, f64)> {
        let i = self.measures.iter().position(|m| *m == a)?;
        let j = self.measures.iter().position(|m| *m == b)?;
        self.entries[i][j]
    }

    /// Upper-triangular "pearson ; spearman" table.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.measures.iter().map(|m| m.to_string()));
        w.write_record(&header)?;
        for (i, a) in self.measures.iter().enumerate() {
            let mut row = vec![a.to_string()];
            for j in 0..self.measures.len() {
                row.push(if j < i {
                    String::new()
                } else {
                    match self.entries[i][j] {
                        Some((p, s)) => format!("{p:.2} ; {s:.2}"),
                        None => "undefined".into(),
                    }
                });
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn label_correlations<'a, I>(labels: I) -> Result<CorrelationMatrix>
where
    I: IntoIterator<Item = &'a SuccessLabels>,
{
    let survivors: Vec<&SuccessLabels> = labels.into_iter().filter(|l| l.survived).collect();
    if survivors.len() < 3 {
        return Err(LabelError::TooFew { needed: 3, have: survivors.len() });
    }
    let cols: Vec<Vec<f64>> = Measure::ALL.iter().map(|m| survivors.iter().map(|l| l.get(*m)).collect()).collect();
    let k = Measure::ALL.len();
    let mut entries = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let e = if i == j {
                stats::pearson(&cols[i], &cols[i]).map(|_| (1.0, 1.0))
            } else {
                stats::pearson(&cols[i], &cols[j]).zip(stats::spearman(&cols[i], &cols[j]))
            };
            entries[i][j] = e;
            entries[j][i] = e;
        }
    }
    Ok(CorrelationMatrix { measures: Measure::ALL.to_vec(), entries })
}

/// Descending midranks (rank 1 = highest score).
fn descending_ranks(values: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    stats::midranks(&negated)
}

/// Survivors ranked in the top `quartile` fraction under one measure and in
/// the bottom `quartile` fraction under another.
pub fn rank_divergent<'a, I>(labels: I, quartile: f64, measures: &[Measure]) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a SuccessLabels>,
{
    let survivors: Vec<&SuccessLabels> = labels.into_iter().filter(|l| l.survived).collect();
    let n = survivors.len();
    if n < 4 {
        return BTreeSet::new();
    }
    let top = quartile * n as f64;
    let bottom = (1.0 - quartile) * n as f64;
    let ranks: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| descending_ranks(&survivors.iter().map(|l| l.get(*m)).collect::<Vec<_>>()))
        .collect();
    (0..n)
        .filter(|&i| {
            let in_top = ranks.iter().any(|r| r[i] <= top);
            let in_bottom = ranks.iter().any(|r| r[i] > bottom);
            in_top && in_bottom
        })
        .map(|i| survivors[i].community.clone())
        .collect()
}

/// Ranks of one community under one measure among survivors (1 = best).
pub fn rank_of<'a, I>(labels: I, community: &str, measure: Measure) -> Option<f64>
where
    I: IntoIterator<Item = &'a SuccessLabels>,
{
    let survivors: Vec<&SuccessLabels> = labels.into_iter().filter(|l| l.survived).collect();
    let ranks = descending_ranks(&survivors.iter().map(|l| l.get(measure)).collect::<Vec<_>>());
    survivors.iter().position(|l| l.community == community).map(|i| ranks[i])
}

pub fn write_labels_csv<'a, W, I>(labels: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a SuccessLabels>,
{
    let mut w = csv::Writer::from_writer(out);
    for l in labels {
        w.serialize(l)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<BTreeMap<String, SuccessLabels>> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(input).deserialize::<SuccessLabels>() {
        let l = row?;
        out.insert(l.community.clone(), l);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artwork::toys;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn percentile_examples() {
        let m = percentile_rank("x", [10.0, 20.0, 30.0, 40.0].iter().enumerate().map(|(i, v)| (format!("c{i}"), *v)))
            .unwrap();
        let rho: Vec<f64> = m.rho.values().copied().collect();
        assert_eq!(rho, vec![0.125, 0.375, 0.625, 0.875]);

        let tied = percentile_rank("x", (0..5).map(|i| (format!("c{i}"), 3.0))).unwrap();
        assert!(tied.rho.values().all(|r| *r == 0.5));

        assert!(matches!(percentile_rank("x", std::iter::empty()), Err(LabelError::Empty)));
    }

    #[test]
    fn thirteenth_percentile_anchor() {
        let m = percentile_rank("size", (0..100).map(|i| (format!("c{i:03}"), i as f64))).unwrap();
        // 13 of 100 reference values lie below 12.5
        assert!(close(1.0 - m.rho_of(12.5), 0.87));
    }

    #[test]
    fn clamp_examples() {
        // s_size = 7114 * max(1 - 0.87, 0.1)
        assert!(close(7114.0 * (1.0_f64 - 0.87).max(DEFAULT_ALPHA), 924.82));
        // factor clamps at alpha
        assert!(close(1000.0 * (1.0_f64 - 0.95).max(DEFAULT_ALPHA), 100.0));

        let mut metrics = BTreeMap::new();
        let mut sizes = BTreeMap::new();
        let mut survival = BTreeMap::new();
        for i in 0..20u64 {
            let name = format!("c{i:02}");
            metrics.insert(name.clone(), ArtworkMetrics { pixel_count: 1000, diameter: 10, entropy: 1.0, popularity: 1.0 });
            sizes.insert(name.clone(), i);
            survival.insert(name, true);
        }
        let labels = compute_labels(&survival, &metrics, &sizes, DEFAULT_ALPHA).unwrap();
        // the largest community: rho = 19.5/20 = 0.975, clamps to alpha
        assert!(close(labels["c19"].s_size, 100.0));
        // the smallest: rho = 0.025
        assert!(close(labels["c00"].s_size, 975.0));
    }

    #[test]
    fn toy_orderings() {
        let toys = toys::all();
        let metrics: BTreeMap<String, ArtworkMetrics> = toys.iter().map(|(k, m)| (k.to_string(), *m)).collect();
        let sizes: BTreeMap<String, u64> = toys.iter().map(|(k, _)| (k.to_string(), 100)).collect();
        let survival: BTreeMap<String, bool> = toys.iter().map(|(k, _)| (k.to_string(), true)).collect();
        let l = compute_labels(&survival, &metrics, &sizes, DEFAULT_ALPHA).unwrap();
        for k in ["a", "b", "c", "d"] {
            assert_eq!(l[k].s_phi, 28.0);
        }
        assert!(l["d"].s_pop > l["a"].s_pop);
        assert_eq!(l["a"].s_pop, l["b"].s_pop);
        assert_eq!(l["b"].s_pop, l["c"].s_pop);
        assert!(l["c"].s_diam > l["a"].s_diam);
        assert_eq!(l["a"].s_diam, l["b"].s_diam);
        assert_eq!(l["b"].s_diam, l["d"].s_diam);
        assert!(l["b"].s_entropy > l["a"].s_entropy);
    }

    #[test]
    fn failed_and_missing() {
        let survival: BTreeMap<String, bool> = [("a".to_string(), true), ("b".to_string(), false)].into();
        let metrics = BTreeMap::from([(
            "a".to_string(),
            ArtworkMetrics { pixel_count: 10, diameter: 3, entropy: 0.5, popularity: 2.0 },
        )]);
        let err = compute_labels(&survival, &metrics, &BTreeMap::new(), 0.1).unwrap_err();
        assert!(matches!(err, LabelError::MissingSize(v) if v == vec!["a".to_string()]));
        let sizes = BTreeMap::from([("a".to_string(), 5)]);
        let l = compute_labels(&survival, &metrics, &sizes, 0.1).unwrap();
        assert_eq!(l["b"], SuccessLabels::failed("b"));
        assert!(matches!(compute_labels(&survival, &metrics, &sizes, 0.0), Err(LabelError::Alpha(_))));
    }

    #[test]
    fn binary_examples() {
        assert!(!binary_label(Some(0), None, DEFAULT_MIN_PIXELS).unwrap());
        assert!(binary_label(Some(100), None, DEFAULT_MIN_PIXELS).unwrap());
        assert!(!binary_label(Some(100), Some(false), DEFAULT_MIN_PIXELS).unwrap());
        assert!(matches!(binary_label(None, None, 5), Err(LabelError::NoSource)));
    }

    fn labels_from(cols: &[[f64; 5]]) -> Vec<SuccessLabels> {
        cols.iter()
            .enumerate()
            .map(|(i, c)| SuccessLabels {
                community: format!("c{i:04}"),
                survived: true,
                s_phi: c[0],
                s_size: c[1],
                s_pop: c[2],
                s_diam: c[3],
                s_entropy: c[4],
            })
            .collect()
    }

    #[test]
    fn correlation_examples() {
        let labels = labels_from(&[[1.0, 6.0, 1.0, 2.0, 5.0], [2.0, 4.0, 1.0, 4.0, 5.0], [3.0, 2.0, 1.0, 9.0, 5.0]]);
        let m = label_correlations(&labels).unwrap();
        assert_eq!(m.get(Measure::Phi, Measure::Phi), Some((1.0, 1.0)));
        assert_eq!(m.get(Measure::Phi, Measure::Size).unwrap().0, -1.0);
        assert_eq!(m.get(Measure::Phi, Measure::Diameter).unwrap().1, 1.0);
        // zero variance is flagged, not zero
        assert_eq!(m.get(Measure::Phi, Measure::Popularity), None);
        assert_eq!(m.get(Measure::Entropy, Measure::Entropy), None);
        assert!(label_correlations(&labels[..2]).is_err());
    }

    #[test]
    fn rank_divergence() {
        let same = labels_from(&(0..12).map(|i| [i as f64; 5]).collect::<Vec<_>>());
        assert!(rank_divergent(&same, DEFAULT_QUARTILE, &Measure::ALL).is_empty());

        // 666 survivors; "lol" ranks 644 under s_size and 14 under s_entropy
        let mut cols: Vec<[f64; 5]> = (0..666).map(|i| [i as f64; 5]).collect();
        // rank r (1 = best) under descending order means value 666 - r
        cols[0] = [300.0, 666.0 - 644.0, 300.0, 300.0, 666.0 - 14.0];
        cols[666 - 644][1] = 0.0;
        cols[666 - 14][4] = 0.0;
        let mut labels = labels_from(&cols);
        labels[0].community = "lol".into();
        assert_eq!(rank_of(&labels, "lol", Measure::Size), Some(644.0));
        assert_eq!(rank_of(&labels, "lol", Measure::Entropy), Some(14.0));
        assert!(rank_divergent(&labels, DEFAULT_QUARTILE, &Measure::ALL).contains("lol"));
    }

    proptest! {
        #[test]
        fn clamp_bounds_and_base_invariance(
            rows in proptest::collection::vec((1u64..5000, 0u64..2_000_000, 0.0f64..50.0, 0u32..1000, 0.0f64..4.0), 2..60),
            alpha in 0.01f64..0.99
        ) {
            let mut metrics = BTreeMap::new();
            let mut nats = BTreeMap::new();
            let mut sizes = BTreeMap::new();
            let mut survival = BTreeMap::new();
            for (i, (px, size, pop, d, h)) in rows.iter().enumerate() {
                let k = format!("c{i:03}");
                let m = ArtworkMetrics { pixel_count: *px, diameter: *d, entropy: *h, popularity: *pop };
                metrics.insert(k.clone(), m);
                nats.insert(k.clone(), ArtworkMetrics { entropy: h * std::f64::consts::LN_2, ..m });
                sizes.insert(k.clone(), *size);
                survival.insert(k, true);
            }
            let l = compute_labels(&survival, &metrics, &sizes, alpha).unwrap();
            let ln = compute_labels(&survival, &nats, &sizes, alpha).unwrap();
            for (k, v) in &l {
                for m in Measure::ALL {
                    let s = v.get(m);
                    prop_assert!(alpha * v.s_phi <= s + 1e-9 && s <= v.s_phi + 1e-9);
                }
                prop_assert_eq!(v.s_entropy, ln[k].s_entropy);
            }
        }

        #[test]
        fn size_score_non_increasing(sizes in proptest::collection::vec(0u64..1000, 3..30), bump in 1u64..500) {
            let metrics: BTreeMap<String, ArtworkMetrics> = (0..sizes.len())
                .map(|i| (format!("c{i:02}"), ArtworkMetrics { pixel_count: 100, diameter: 1, entropy: 0.0, popularity: 1.0 }))
                .collect();
            let survival: BTreeMap<String, bool> = metrics.keys().map(|k| (k.clone(), true)).collect();
            let base: BTreeMap<String, u64> = sizes.iter().enumerate().map(|(i, s)| (format!("c{i:02}"), *s)).collect();
            let mut grown = base.clone();
            *grown.get_mut("c00").unwrap() += bump;
            let a = compute_labels(&survival, &metrics, &base, 0.1).unwrap();
            let b = compute_labels(&survival, &metrics, &grown, 0.1).unwrap();
            prop_assert!(b["c00"].s_size <= a["c00"].s_size + 1e-12);
        }

        #[test]
        fn spearman_monotone_invariance(xs in proptest::collection::vec(-100.0f64..100.0, 3..40), seed in 0u64..1000) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.3 + ((i as u64 * 7 + seed) % 11) as f64).collect();
            let transformed: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            let a = stats::spearman(&xs, &ys);
            let b = stats::spearman(&transformed, &ys);
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }
    }
}

//! Pipeline configuration: one TOML document, every field defaulted.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use placelab::ingest::{BoundsPolicy, CANVAS_SIZE};
use placelab::labels::{Measure, DEFAULT_ALPHA, DEFAULT_MIN_PIXELS, DEFAULT_QUARTILE};
use placelab::models::{ForestParams, GbtParams, ModelSpec};
use placelab::window::{TimeWindow, WindowKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub data: DataPaths,
    pub windows: Windows,
    pub canvas: CanvasConfig,
    pub features: FeatureConfig,
    pub labels: LabelConfig,
    /// Model name → specification. Names become file stems.
    pub models: BTreeMap<String, ModelSpec>,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub placements: PathBuf,
    pub atlas: PathBuf,
    pub content: PathBuf,
    pub meta: PathBuf,
    pub annotations: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// Published final image, compared against the replayed canvas.
    pub reference_image: Option<PathBuf>,
    pub embeddings: Vec<EmbeddingSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    /// Block name, e.g. `snap`.
    pub name: String,
    pub path: PathBuf,
    /// Window the embedding was trained on, if any.
    #[serde(default)]
    pub window: Option<WindowKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Windows {
    pub bp: TimeWindow,
    pub dp: TimeWindow,
    /// Windows the feature, train, evaluate and explain stages run for.
    pub run: Vec<WindowKind>,
}

impl Default for Windows {
    fn default() -> Self {
        Self { bp: TimeWindow::before_place(), dp: TimeWindow::during_place(), run: WindowKind::ALL.to_vec() }
    }
}

impl Windows {
    pub fn span(&self, w: WindowKind) -> TimeWindow {
        match w {
            WindowKind::Bp => self.bp,
            WindowKind::Dp => self.dp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasConfig {
    pub width: u32,
    pub height: u32,
    pub bounds_policy: BoundsPolicy,
    /// How far atlas vertices may stray outside the canvas.
    pub atlas_margin: f64,
    /// Events per shard when accumulating activity.
    pub activity_chunk: usize,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        Self { width: CANVAS_SIZE, height: CANVAS_SIZE, bounds_policy: BoundsPolicy::Skip, atlas_margin: 10.0, activity_chunk: 1 << 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// `meta`, `network`, `bow`, `liwc`, or an embedding name.
    pub blocks: Vec<String>,
    pub max_vocab: usize,
    pub min_df: usize,
    pub betweenness: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { blocks: vec!["meta".into(), "network".into(), "bow".into()], max_vocab: 5000, min_df: 5, betweenness: false }
    }
}

/// A prediction target: the survival flag or one continuous score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelTarget {
    Binary,
    SPhi,
    SSize,
    SPop,
    SDiam,
    SEntropy,
}

impl LabelTarget {
    pub const ALL: [LabelTarget; 6] =
        [LabelTarget::Binary, LabelTarget::SPhi, LabelTarget::SSize, LabelTarget::SPop, LabelTarget::SDiam, LabelTarget::SEntropy];

    pub fn as_str(&self) -> &'static str {
        match self {
            LabelTarget::Binary => "binary",
            LabelTarget::SPhi => "s_phi",
            LabelTarget::SSize => "s_size",
            LabelTarget::SPop => "s_pop",
            LabelTarget::SDiam => "s_diam",
            LabelTarget::SEntropy => "s_entropy",
        }
    }

    pub fn measure(&self) -> Option<Measure> {
        match self {
            LabelTarget::Binary => None,
            LabelTarget::SPhi => Some(Measure::Phi),
            LabelTarget::SSize => Some(Measure::Size),
            LabelTarget::SPop => Some(Measure::Popularity),
            LabelTarget::SDiam => Some(Measure::Diameter),
            LabelTarget::SEntropy => Some(Measure::Entropy),
        }
    }
}

impl fmt::Display for LabelTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelTarget::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = LabelTarget::ALL.iter().map(|t| t.as_str()).collect();
            format!("unknown label `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub alpha: f64,
    pub min_pixels: usize,
    /// Fraction defining "top" and "bottom" for rank-divergent communities.
    pub quartile: f64,
    pub targets: Vec<LabelTarget>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, min_pixels: DEFAULT_MIN_PIXELS, quartile: DEFAULT_QUARTILE, targets: LabelTarget::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k: 5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Name of the entry in `models` to explain.
    pub model: String,
    /// Rows kept in the window-contrast divergence table.
    pub top_n: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { model: "gbt".into(), top_n: 20 }
    }
}

pub fn default_models() -> BTreeMap<String, ModelSpec> {
    let mut m = BTreeMap::new();
    m.insert("constant".to_string(), ModelSpec::Constant);
    m.insert("size_baseline".to_string(), ModelSpec::Univariate { feature: "meta::subscriber_count".into() });
    m.insert("linear".to_string(), ModelSpec::Linear);
    m.insert("gbt".to_string(), ModelSpec::Gbt { params: GbtParams::default() });
    m.insert("random_forest".to_string(), ModelSpec::RandomForest { params: ForestParams::default() });
    m
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            data: DataPaths::default(),
            windows: Windows::default(),
            canvas: CanvasConfig::default(),
            features: FeatureConfig::default(),
            labels: LabelConfig::default(),
            models: default_models(),
            eval: EvalConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Load a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|source| ConfigError::Toml { path: path.to_path_buf(), source })?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let d = &mut self.data;
        for p in [&mut d.placements, &mut d.atlas, &mut d.content, &mut d.meta] {
            fix(p);
        }
        for p in [&mut d.annotations, &mut d.palette, &mut d.dictionary, &mut d.reference_image].into_iter().flatten() {
            fix(p);
        }
        for e in &mut d.embeddings {
            fix(&mut e.path);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Apply a global seed to evaluation and every seeded model.
    pub fn set_seed(&mut self, seed: u64) {
        self.eval.seed = seed;
        for spec in self.models.values_mut() {
            match spec {
                ModelSpec::Gbt { params } => params.seed = seed,
                ModelSpec::RandomForest { params } => params.seed = seed,
                _ => {}
            }
        }
    }
}

/// One configuration problem with a machine-readable code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Problem {
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

pub const BUILTIN_BLOCKS: [&str; 4] = ["meta", "network", "bow", "liwc"];

fn is_file_stem_safe(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Every reason the config cannot run; empty when it can.
pub fn validate(cfg: &PipelineConfig) -> Vec<Problem> {
    let mut out = Vec::new();
    let mut push = |code: &'static str, message: String| out.push(Problem { code, message });

    let w = &cfg.windows;
    for (name, span) in [("bp", w.bp), ("dp", w.dp)] {
        if span.is_empty() {
            push("WINDOW_EMPTY", format!("window {name} ends before it starts"));
        }
    }
    if w.bp.overlaps(&w.dp) {
        push("WINDOW_OVERLAP", format!("bp [{}, {}] and dp [{}, {}] overlap", w.bp.start, w.bp.end, w.dp.start, w.dp.end));
    }
    if w.run.is_empty() {
        push("NO_WINDOWS", "windows.run is empty".into());
    }

    let required = [
        ("data.placements", &cfg.data.placements),
        ("data.atlas", &cfg.data.atlas),
        ("data.content", &cfg.data.content),
        ("data.meta", &cfg.data.meta),
    ];
    for (field, p) in required {
        if p.as_os_str().is_empty() {
            push("MISSING_PATH", format!("{field} is not set"));
        } else if !p.is_file() {
            push("MISSING_PATH", format!("{field}: {} does not exist", p.display()));
        }
    }
    let optional = [
        ("data.annotations", &cfg.data.annotations),
        ("data.palette", &cfg.data.palette),
        ("data.dictionary", &cfg.data.dictionary),
        ("data.reference_image", &cfg.data.reference_image),
    ];
    for (field, p) in optional {
        if let Some(p) = p {
            if !p.is_file() {
                push("MISSING_PATH", format!("{field}: {} does not exist", p.display()));
            }
        }
    }
    let mut emb_names = Vec::new();
    for e in &cfg.data.embeddings {
        if !e.path.is_file() {
            push("MISSING_PATH", format!("embedding {}: {} does not exist", e.name, e.path.display()));
        }
        if BUILTIN_BLOCKS.contains(&e.name.as_str()) || !is_file_stem_safe(&e.name) {
            push("EMBEDDING_NAME", format!("embedding name `{}` is reserved or not a plain identifier", e.name));
        }
        if emb_names.contains(&e.name) {
            push("EMBEDDING_NAME", format!("embedding `{}` declared twice", e.name));
        }
        emb_names.push(e.name.clone());
    }

    let c = &cfg.canvas;
    if c.width == 0 || c.height == 0 || c.width > u32::from(u16::MAX) || c.height > u32::from(u16::MAX) {
        push("CANVAS_SIZE", format!("canvas {}x{} is outside 1..=65535", c.width, c.height));
    }
    if !(c.atlas_margin >= 0.0 && c.atlas_margin.is_finite()) {
        push("ATLAS_MARGIN", format!("atlas_margin {} must be a finite non-negative number", c.atlas_margin));
    }

    let f = &cfg.features;
    if f.blocks.is_empty() {
        push("NO_BLOCKS", "features.blocks is empty".into());
    }
    for b in &f.blocks {
        let known = BUILTIN_BLOCKS.contains(&b.as_str()) || emb_names.contains(b);
        if !known {
            push("UNKNOWN_BLOCK", format!("feature block `{b}` is neither built in nor a declared embedding"));
        }
        if b == "liwc" && cfg.data.dictionary.is_none() {
            push("BLOCK_UNAVAILABLE", "block `liwc` needs data.dictionary".into());
        }
    }
    if f.max_vocab == 0 {
        push("MAX_VOCAB", "features.max_vocab must be positive".into());
    }
    if f.min_df == 0 {
        push("MIN_DF", "features.min_df must be positive".into());
    }

    let l = &cfg.labels;
    if !(l.alpha > 0.0 && l.alpha < 1.0) {
        push("ALPHA_RANGE", format!("labels.alpha {} must lie in (0, 1)", l.alpha));
    }
    if !(l.quartile > 0.0 && l.quartile <= 0.5) {
        push("QUARTILE_RANGE", format!("labels.quartile {} must lie in (0, 0.5]", l.quartile));
    }
    if l.targets.is_empty() {
        push("NO_LABELS", "labels.targets is empty".into());
    }

    if cfg.models.is_empty() {
        push("NO_MODELS", "no models configured".into());
    }
    for (name, spec) in &cfg.models {
        if !is_file_stem_safe(name) {
            push("MODEL_NAME", format!("model name `{name}` must be ASCII letters, digits, `_` or `-`"));
        }
        match spec {
            ModelSpec::Gbt { params } => {
                if params.n_trees == 0 || params.learning_rate.is_nan() || params.learning_rate <= 0.0 || !(0.0..=1.0).contains(&params.subsample) || params.subsample == 0.0 {
                    push("MODEL_PARAMS", format!("model `{name}`: n_trees, learning_rate and subsample must be positive (subsample ≤ 1)"));
                }
            }
            ModelSpec::RandomForest { params } => {
                if params.n_trees == 0 || params.min_samples_leaf == 0 {
                    push("MODEL_PARAMS", format!("model `{name}`: n_trees and min_samples_leaf must be positive"));
                }
            }
            ModelSpec::Univariate { feature } => {
                let block = feature.split_once("::").map(|(b, _)| b);
                if !block.is_some_and(|b| f.blocks.iter().any(|x| x == b)) {
                    push("MODEL_FEATURE", format!("model `{name}` reads `{feature}`, whose block is not enabled"));
                }
            }
            _ => {}
        }
    }
    if !cfg.models.contains_key(&cfg.explain.model) {
        push("EXPLAIN_MODEL", format!("explain.model `{}` is not a configured model", cfg.explain.model));
    }
    if cfg.eval.k < 2 {
        push("K_RANGE", format!("eval.k {} must be at least 2", cfg.eval.k));
    }
    out
}

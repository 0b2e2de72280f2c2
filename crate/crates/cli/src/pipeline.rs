//! The pipeline stages and their artifacts.
//!
//! ```text
//! ingest → replay → snapshot → measure → label → featurize → train → evaluate → explain → report
//! ```
//!
//! Every stage writes one or more cached units under the output directory
//! (see [`crate::cache`]). A stage never runs its predecessors: a missing
//! input is a [`DependencyError`](crate::cache::DependencyError).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use placelab::artwork::{community_masks, measure_communities, read_metrics_csv, write_metrics_csv, ArtworkMetrics};
use placelab::canvas::{accumulate_activity_par, encode_snapshot, load_palette, replay, Canvas, Palette, SnapshotFormat};
use placelab::eval::{
    compare_windows, cross_validate, stratified_kfold, write_report_json, CvData, EvalReport, FoldText, LabelSource, OofPrediction,
};
use placelab::explain::{explain_matrix, group_importance, shap_summary, write_attributions_csv, write_summary_csv};
use placelab::features::{
    assemble, column_block, community_term_counts, embedding_block, per_community_blocks, tfidf_block, FeatureBlock, NetworkOptions,
    WindowCorpus, BLOCK_BOW, BLOCK_LIWC, DELETED_AUTHOR,
};
use placelab::ingest::{
    load_annotations, load_category_dictionary, load_community_meta, load_embeddings, parse_atlas, parse_content, parse_placements,
    AtlasEntry, AtlasOptions, CommunityMeta, ContentItem, ContentKind, PlacementOptions,
};
use placelab::labels::{binary_label, compute_labels, label_correlations, rank_divergent, write_labels_csv, Measure, ScoreInputs};
use placelab::matrix::FeatureMatrix;
use placelab::models::{load_model, save_model, Task};
use placelab::text::{TermCounts, TfidfConfig};
use placelab::window::WindowKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts;
use crate::cache::{run_unit, Input, UnitOutcome, UnitSpec};
use crate::config::{validate, LabelTarget, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Canvas,
    Snapshot,
    Artwork,
    Labels,
    Features,
    Train,
    Evaluate,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Canvas,
        Stage::Snapshot,
        Stage::Artwork,
        Stage::Labels,
        Stage::Features,
        Stage::Train,
        Stage::Evaluate,
        Stage::Explain,
        Stage::Report,
    ];

    /// Subcommand that runs the stage.
    pub fn command(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Canvas => "replay",
            Stage::Snapshot => "snapshot",
            Stage::Artwork => "measure",
            Stage::Labels => "label",
            Stage::Features => "featurize",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    /// Directory under the output root.
    pub fn dir(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Canvas => "canvas",
            Stage::Snapshot => "snapshot",
            Stage::Artwork => "artwork",
            Stage::Labels => "labels",
            Stage::Features => "features",
            Stage::Train => "models",
            Stage::Evaluate => "eval",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }
}

// Artifact paths, relative to the output root.
const PLACEMENTS_BIN: &str = "ingest/placements/placements.bin";
const ATLAS_JSON: &str = "ingest/atlas/atlas.json";
const META_JSON: &str = "ingest/meta/meta.json";
const ANNOTATIONS_JSON: &str = "ingest/meta/annotations.json";
const CANVAS_BIN: &str = "canvas/final.bin";
const ACTIVITY_BIN: &str = "canvas/activity.bin";
const SNAPSHOT_PNG: &str = "snapshot/final_snapshot.png";
const METRICS_CSV: &str = "artwork/metrics.csv";
const LABEL_INPUTS_CSV: &str = "labels/inputs.csv";
const TABLE1_CSV: &str = "labels/table1_correlations.csv";
const DIVERGENT_CSV: &str = "labels/divergent.csv";

fn content_json(w: WindowKind) -> String {
    format!("ingest/content/content_{w}.json")
}

fn features_dir(w: WindowKind) -> String {
    format!("features/{w}")
}

/// Per-community inputs to every label, as written by the label stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub community: String,
    pub survived: bool,
    pub pixel_count: u64,
    pub size: u64,
    pub popularity: f64,
    pub diameter: f64,
    pub entropy: f64,
}

impl LabelRow {
    fn score_inputs(&self) -> ScoreInputs {
        ScoreInputs { pixel_count: self.pixel_count, size: self.size, popularity: self.popularity, diameter: self.diameter, entropy: self.entropy }
    }
}

/// Counts describing one window of ingested content.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContentStats {
    pub submissions: usize,
    pub comments: usize,
    pub removed: usize,
    pub authors: usize,
    pub communities: usize,
    pub outside_window: usize,
    pub unparseable: usize,
    pub unknown_kind: usize,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub root: PathBuf,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let root = config.out_dir.clone();
        Self { config, root }
    }

    fn check(&self) -> Result<()> {
        let problems = validate(&self.config);
        if !problems.is_empty() {
            let lines: Vec<String> = problems.iter().map(|p| format!("  {p}")).collect();
            bail!("configuration is not runnable:\n{}", lines.join("\n"));
        }
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> Result<Vec<UnitOutcome>> {
        self.check()?;
        fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Canvas => self.canvas().map(|u| vec![u]),
            Stage::Snapshot => self.snapshot().map(|u| vec![u]),
            Stage::Artwork => self.artwork().map(|u| vec![u]),
            Stage::Labels => self.labels().map(|u| vec![u]),
            Stage::Features => self.per_window(|w| self.features(w)),
            Stage::Train => self.per_target(|w, t| self.train(w, t)),
            Stage::Evaluate => self.per_target(|w, t| self.evaluate(w, t)),
            Stage::Explain => self.per_target(|w, t| self.explain(w, t)),
            Stage::Report => self.report().map(|u| vec![u]),
        }
    }

    pub fn run_all(&self) -> Result<Vec<UnitOutcome>> {
        let mut out = Vec::new();
        for s in Stage::ALL {
            out.extend(self.run(s)?);
        }
        Ok(out)
    }

    fn per_window(&self, f: impl Fn(WindowKind) -> Result<UnitOutcome>) -> Result<Vec<UnitOutcome>> {
        self.config.windows.run.iter().map(|&w| f(w)).collect()
    }

    fn per_target(&self, f: impl Fn(WindowKind, LabelTarget) -> Result<UnitOutcome>) -> Result<Vec<UnitOutcome>> {
        let mut out = Vec::new();
        for &w in &self.config.windows.run {
            for &t in &self.config.labels.targets {
                out.push(f(w, t)?);
            }
        }
        Ok(out)
    }

    fn palette(&self) -> Result<Palette> {
        match &self.config.data.palette {
            Some(p) => Ok(load_palette(open(p)?)?),
            None => Ok(Palette::place_2017()),
        }
    }

    fn palette_inputs(&self) -> Vec<Input> {
        self.config.data.palette.iter().map(|p| Input::External(p.clone())).collect()
    }

    // -----------------------------------------------------------------------
    // ingest

    fn ingest(&self) -> Result<Vec<UnitOutcome>> {
        let cfg = &self.config;
        let c = &cfg.canvas;
        let placements = run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Ingest.command(),
                unit: "ingest/placements".into(),
                config: json!({ "width": c.width, "height": c.height, "bounds_policy": c.bounds_policy }),
                inputs: vec![Input::External(cfg.data.placements.clone())],
            },
            |io| {
                let opts = PlacementOptions { bounds_policy: c.bounds_policy, width: c.width, height: c.height, ..Default::default() };
                let log = parse_placements(open(&cfg.data.placements)?, &opts)?;
                io.write("placements.bin", &artifacts::encode_placements(&log.events))?;
                let stats = json!({
                    "events": log.events.len(),
                    "users": log.users.len(),
                    "malformed": log.malformed,
                    "out_of_bounds": log.out_of_bounds,
                    "first_ts": log.events.first().map(|e| e.ts),
                    "last_ts": log.events.last().map(|e| e.ts),
                });
                tracing::info!(stage = "ingest", input = "placements", events = log.events.len(), users = log.users.len(), malformed = log.malformed, out_of_bounds = log.out_of_bounds);
                io.write_json("stats.json", &stats)?;
                Ok(log.events.len() as u64)
            },
        )?;

        let atlas = run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Ingest.command(),
                unit: "ingest/atlas".into(),
                config: json!({ "width": c.width, "height": c.height, "margin": c.atlas_margin }),
                inputs: vec![Input::External(cfg.data.atlas.clone())],
            },
            |io| {
                let text = fs::read_to_string(&cfg.data.atlas).with_context(|| format!("reading {}", cfg.data.atlas.display()))?;
                let parsed = parse_atlas(&text, &AtlasOptions { width: c.width, height: c.height, margin: c.atlas_margin })?;
                for w in &parsed.warnings {
                    tracing::warn!(stage = "ingest", input = "atlas", "{w}");
                }
                io.write_json("atlas.json", &parsed.entries)?;
                io.write("warnings.txt", parsed.warnings.iter().map(|w| format!("{w}\n")).collect::<String>().as_bytes())?;
                tracing::info!(stage = "ingest", input = "atlas", entries = parsed.entries.len(), warnings = parsed.warnings.len());
                Ok(parsed.entries.len() as u64)
            },
        )?;

        let content = run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Ingest.command(),
                unit: "ingest/content".into(),
                config: json!({ "bp": cfg.windows.bp, "dp": cfg.windows.dp }),
                inputs: vec![Input::External(cfg.data.content.clone())],
            },
            |io| {
                let mut stats = BTreeMap::new();
                let mut total = 0u64;
                for w in WindowKind::ALL {
                    let parsed = parse_content(open(&cfg.data.content)?, Some(&cfg.windows.span(w)))?;
                    let mut by_community: BTreeMap<String, Vec<ContentItem>> = BTreeMap::new();
                    let mut authors = BTreeSet::new();
                    let mut s = ContentStats {
                        outside_window: parsed.outside_window,
                        unparseable: parsed.unparseable,
                        unknown_kind: parsed.unknown_kind,
                        ..Default::default()
                    };
                    for item in parsed.items {
                        match item.kind {
                            ContentKind::Submission => s.submissions += 1,
                            ContentKind::Comment => s.comments += 1,
                        }
                        s.removed += usize::from(item.removed);
                        if item.author != DELETED_AUTHOR {
                            authors.insert(item.author.clone());
                        }
                        by_community.entry(item.community.clone()).or_default().push(item);
                    }
                    s.authors = authors.len();
                    s.communities = by_community.len();
                    total += (s.submissions + s.comments) as u64;
                    tracing::info!(
                        stage = "ingest",
                        input = "content",
                        window = %w,
                        submissions = s.submissions,
                        comments = s.comments,
                        authors = s.authors,
                        communities = s.communities,
                        removed = s.removed,
                        dropped = s.outside_window + s.unparseable + s.unknown_kind
                    );
                    io.write_json(&format!("content_{w}.json"), &by_community)?;
                    stats.insert(w.to_string(), s);
                }
                io.write_json("stats.json", &stats)?;
                Ok(total)
            },
        )?;

        let mut meta_inputs = vec![Input::External(cfg.data.meta.clone())];
        meta_inputs.extend(cfg.data.annotations.iter().map(|p| Input::External(p.clone())));
        let meta = run_unit(
            &self.root,
            UnitSpec { stage: Stage::Ingest.command(), unit: "ingest/meta".into(), config: json!({}), inputs: meta_inputs },
            |io| {
                let mut meta: BTreeMap<String, CommunityMeta> = BTreeMap::new();
                for m in load_community_meta(open(&cfg.data.meta)?)? {
                    if meta.contains_key(&m.name) {
                        tracing::warn!(stage = "ingest", input = "meta", community = %m.name, "duplicate community, keeping the first row");
                        continue;
                    }
                    meta.insert(m.name.clone(), m);
                }
                let annotations: BTreeMap<String, bool> = match &cfg.data.annotations {
                    Some(p) => load_annotations(open(p)?)?,
                    None => BTreeMap::new(),
                };
                io.write_json("meta.json", &meta)?;
                io.write_json("annotations.json", &annotations)?;
                tracing::info!(stage = "ingest", input = "meta", communities = meta.len(), annotations = annotations.len());
                Ok(meta.len() as u64)
            },
        )?;
        Ok(vec![placements, atlas, content, meta])
    }

    // -----------------------------------------------------------------------
    // canvas

    fn canvas(&self) -> Result<UnitOutcome> {
        let cfg = &self.config;
        let c = &cfg.canvas;
        let dp = cfg.windows.dp;
        let mut inputs = vec![Input::artifact(Stage::Ingest.command(), PLACEMENTS_BIN)];
        inputs.extend(self.palette_inputs());
        inputs.extend(cfg.data.reference_image.iter().map(|p| Input::External(p.clone())));
        run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Canvas.command(),
                unit: "canvas".into(),
                config: json!({ "width": c.width, "height": c.height, "until": dp.end, "activity": dp, "chunk": c.activity_chunk }),
                inputs,
            },
            |io| {
                let events = artifacts::decode_placements(&fs::read(io.input(PLACEMENTS_BIN))?)?;
                let palette = self.palette()?;
                let canvas = replay(&events, dp.end, c.width, c.height, palette.background)?;
                let activity = accumulate_activity_par(&events, dp, c.width, c.height, c.activity_chunk)?;
                let applied = events.partition_point(|e| e.ts <= dp.end);
                let agreement = match &cfg.data.reference_image {
                    Some(p) => {
                        let (w, h, cells) = placelab::canvas::decode_reference(p, &palette)?;
                        let reference = Canvas { width: w, height: h, cells: cells.into_iter().map(|c| c.unwrap_or(u8::MAX)).collect(), as_of: None };
                        Some(canvas.agreement(&reference)?)
                    }
                    None => None,
                };
                io.write("final.bin", &artifacts::encode_canvas(&canvas))?;
                io.write("activity.bin", &artifacts::encode_activity(&activity))?;
                io.write_json(
                    "summary.json",
                    &json!({ "as_of": dp.end, "events_applied": applied, "activity_total": activity.total(), "reference_agreement": agreement }),
                )?;
                if let Some(a) = agreement {
                    tracing::info!(stage = "replay", reference_agreement = a);
                }
                Ok(applied as u64)
            },
        )
    }

    fn snapshot(&self) -> Result<UnitOutcome> {
        let mut inputs = vec![Input::artifact(Stage::Canvas.command(), CANVAS_BIN)];
        inputs.extend(self.palette_inputs());
        run_unit(
            &self.root,
            UnitSpec { stage: Stage::Snapshot.command(), unit: "snapshot".into(), config: json!({}), inputs },
            |io| {
                let canvas = artifacts::decode_canvas(&fs::read(io.input(CANVAS_BIN))?)?;
                let mut png = Vec::new();
                encode_snapshot(&canvas, &self.palette()?, SnapshotFormat::Png, &mut png)?;
                io.write("final_snapshot.png", &png)?;
                Ok(canvas.cells.len() as u64)
            },
        )
    }

    // -----------------------------------------------------------------------
    // artwork

    fn artwork(&self) -> Result<UnitOutcome> {
        run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Artwork.command(),
                unit: "artwork".into(),
                config: json!({}),
                inputs: vec![
                    Input::artifact(Stage::Canvas.command(), CANVAS_BIN),
                    Input::artifact(Stage::Canvas.command(), ACTIVITY_BIN),
                    Input::artifact(Stage::Ingest.command(), ATLAS_JSON),
                ],
            },
            |io| {
                let canvas = artifacts::decode_canvas(&fs::read(io.input(CANVAS_BIN))?)?;
                let activity = artifacts::decode_activity(&fs::read(io.input(ACTIVITY_BIN))?)?;
                let entries: Vec<AtlasEntry> = read_json(&io.input(ATLAS_JSON))?;
                let (masks, warnings) = community_masks(&entries, canvas.width, canvas.height);
                for w in &warnings {
                    tracing::warn!(stage = "measure", "{w}");
                }
                let metrics = measure_communities(&masks, &canvas, &activity)?;
                let mut buf = Vec::new();
                write_metrics_csv(&metrics, &mut buf)?;
                io.write("metrics.csv", &buf)?;
                io.write("warnings.txt", warnings.iter().map(|w| format!("{w}\n")).collect::<String>().as_bytes())?;
                Ok(metrics.len() as u64)
            },
        )
    }

    // -----------------------------------------------------------------------
    // labels

    fn labels(&self) -> Result<UnitOutcome> {
        let l = &self.config.labels;
        run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Labels.command(),
                unit: "labels".into(),
                config: json!({ "alpha": l.alpha, "min_pixels": l.min_pixels, "quartile": l.quartile }),
                inputs: vec![
                    Input::artifact(Stage::Artwork.command(), METRICS_CSV),
                    Input::artifact(Stage::Ingest.command(), META_JSON),
                    Input::artifact(Stage::Ingest.command(), ANNOTATIONS_JSON),
                ],
            },
            |io| {
                let metrics: BTreeMap<String, ArtworkMetrics> = read_metrics_csv(open(&io.input(METRICS_CSV))?)?;
                let meta: BTreeMap<String, CommunityMeta> = read_json(&io.input(META_JSON))?;
                let annotations: BTreeMap<String, bool> = read_json(&io.input(ANNOTATIONS_JSON))?;

                let mut survival = BTreeMap::new();
                let mut excluded = Vec::new();
                for name in meta.keys() {
                    let pixels = metrics.get(name).map_or(0, |m| m.pixel_count as usize);
                    let survived = binary_label(Some(pixels), annotations.get(name).copied(), l.min_pixels)?;
                    if survived && !metrics.contains_key(name) {
                        // annotated as surviving but with no measurable artwork
                        excluded.push(name.clone());
                        continue;
                    }
                    survival.insert(name.clone(), survived);
                }
                if !excluded.is_empty() {
                    tracing::warn!(stage = "label", excluded = excluded.len(), "survivors without atlas artwork were left out");
                }
                let sizes: BTreeMap<String, u64> = meta.iter().map(|(k, m)| (k.clone(), m.size)).collect();
                let labels = compute_labels(&survival, &metrics, &sizes, l.alpha)?;

                let mut buf = Vec::new();
                write_labels_csv(labels.values(), &mut buf)?;
                io.write("labels.csv", &buf)?;

                let rows: Vec<LabelRow> = survival
                    .iter()
                    .map(|(name, &survived)| {
                        let m = metrics.get(name);
                        LabelRow {
                            community: name.clone(),
                            survived,
                            pixel_count: m.map_or(0, |m| m.pixel_count),
                            size: sizes[name],
                            popularity: m.map_or(0.0, |m| m.popularity),
                            diameter: m.map_or(0.0, |m| f64::from(m.diameter)),
                            entropy: m.map_or(0.0, |m| m.entropy),
                        }
                    })
                    .collect();
                io.write(
                    "inputs.csv",
                    &csv_bytes(|w| {
                        for r in &rows {
                            w.serialize(r)?;
                        }
                        Ok(())
                    })?,
                )?;

                let table1 = match label_correlations(labels.values()) {
                    Ok(c) => {
                        let mut buf = Vec::new();
                        c.write_csv(&mut buf)?;
                        buf
                    }
                    Err(e) => format!("# correlations undefined: {e}\n").into_bytes(),
                };
                io.write("table1_correlations.csv", &table1)?;

                let divergent = rank_divergent(labels.values(), l.quartile, &Measure::ALL);
                io.write(
                    "divergent.csv",
                    &csv_bytes(|w| {
                        w.write_record(["community"])?;
                        for c in &divergent {
                            w.write_record([c])?;
                        }
                        Ok(())
                    })?,
                )?;

                let survivors = survival.values().filter(|s| **s).count();
                let n = survival.len();
                let failure_fraction = if n == 0 { None } else { Some((n - survivors) as f64 / n as f64) };
                io.write_json(
                    "summary.json",
                    &json!({
                        "participants": n,
                        "survivors": survivors,
                        "failed": n - survivors,
                        "failure_fraction": failure_fraction,
                        "excluded": excluded,
                        "rank_divergent": divergent.len(),
                    }),
                )?;
                tracing::info!(stage = "label", participants = n, survivors, failure_fraction = failure_fraction.unwrap_or(f64::NAN));
                Ok(n as u64)
            },
        )
    }

    // -----------------------------------------------------------------------
    // features

    fn blocks(&self) -> Vec<String> {
        let mut b: Vec<String> = self.config.features.blocks.clone();
        placelab::features::canonical_block_order(&mut b);
        b.dedup();
        b
    }

    fn uses_bow(&self) -> bool {
        self.config.features.blocks.iter().any(|b| b == BLOCK_BOW)
    }

    fn tfidf(&self) -> TfidfConfig {
        TfidfConfig { max_vocab: self.config.features.max_vocab, min_df: self.config.features.min_df }
    }

    fn features(&self, w: WindowKind) -> Result<UnitOutcome> {
        let cfg = &self.config;
        let blocks = self.blocks();
        let embeddings: Vec<_> = cfg.data.embeddings.iter().filter(|e| blocks.contains(&e.name)).collect();
        let dictionary = if blocks.iter().any(|b| b == BLOCK_LIWC) { cfg.data.dictionary.clone() } else { None };
        let mut inputs = vec![
            Input::artifact(Stage::Ingest.command(), content_json(w)),
            Input::artifact(Stage::Ingest.command(), META_JSON),
        ];
        inputs.extend(dictionary.iter().map(|p| Input::External(p.clone())));
        inputs.extend(embeddings.iter().map(|e| Input::External(e.path.clone())));
        let span = cfg.windows.span(w);
        run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Features.command(),
                unit: features_dir(w),
                config: json!({
                    "window": w,
                    "span": span,
                    "blocks": blocks,
                    "tfidf": self.tfidf(),
                    "betweenness": cfg.features.betweenness,
                    "embeddings": embeddings.iter().map(|e| json!({ "name": e.name, "window": e.window })).collect::<Vec<_>>(),
                }),
                inputs,
            },
            |io| {
                let items: BTreeMap<String, Vec<ContentItem>> = read_json(&io.input(&content_json(w)))?;
                let meta: BTreeMap<String, CommunityMeta> = read_json(&io.input(META_JSON))?;
                let communities: Vec<String> = meta.keys().cloned().collect();
                let dict = match &dictionary {
                    Some(p) => Some(load_category_dictionary(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
                    None => None,
                };
                let corpus = WindowCorpus { window: w, span, items: &items, meta: &meta };
                let computed = per_community_blocks(&communities, &corpus, &NetworkOptions { betweenness: cfg.features.betweenness }, dict.as_ref())?;
                let mut base_blocks: Vec<FeatureBlock> = computed.into_iter().filter(|b| blocks.contains(&b.name)).collect();
                for e in &embeddings {
                    let table = load_embeddings(open(&e.path)?, &e.name)?.with_window(e.window);
                    base_blocks.push(embedding_block(&table, &communities));
                }
                let base_refs: Vec<&FeatureBlock> = base_blocks.iter().collect();
                let base = assemble(&communities, w, &base_refs)?;
                let mut buf = Vec::new();
                base.write_csv(&mut buf)?;
                io.write("base.csv", &buf)?;
                let mut buf = Vec::new();
                base.write_sidecar(&mut buf)?;
                io.write("base.json", &buf)?;

                if self.uses_bow() {
                    let empty = Vec::new();
                    let docs: BTreeMap<String, TermCounts> =
                        communities.iter().map(|c| (c.clone(), community_term_counts(items.get(c).unwrap_or(&empty)))).collect();
                    io.write_json("docs.json", &docs)?;
                    let (_, bow) = tfidf_block(&docs, &self.tfidf(), Some(w));
                    let mut refs = base_refs.clone();
                    refs.push(&bow);
                    let full = assemble(&communities, w, &refs)?;
                    let mut buf = Vec::new();
                    full.write_csv(&mut buf)?;
                    io.write("matrix.csv", &buf)?;
                    let mut buf = Vec::new();
                    full.write_sidecar(&mut buf)?;
                    io.write("matrix.json", &buf)?;
                }
                tracing::info!(stage = "featurize", window = %w, rows = base.n_rows(), base_columns = base.n_cols());
                Ok(base.n_rows() as u64)
            },
        )
    }

    fn feature_inputs(&self, w: WindowKind) -> Vec<Input> {
        let dir = features_dir(w);
        let mut v = vec![
            Input::artifact(Stage::Features.command(), format!("{dir}/base.csv")),
            Input::artifact(Stage::Features.command(), format!("{dir}/base.json")),
            Input::artifact(Stage::Labels.command(), LABEL_INPUTS_CSV),
        ];
        if self.uses_bow() {
            v.push(Input::artifact(Stage::Features.command(), format!("{dir}/docs.json")));
        }
        v
    }

    /// Rows with a label for `target`: every participant for the survival
    /// flag, survivors only for the continuous scores.
    fn cv_data(&self, root: &Path, w: WindowKind, target: LabelTarget) -> Result<CvData> {
        let dir = root.join(features_dir(w));
        let mut base = FeatureMatrix::read_csv(open(&dir.join("base.csv"))?)?;
        base.provenance = FeatureMatrix::read_sidecar(open(&dir.join("base.json"))?)?;
        let mut rows: BTreeMap<String, LabelRow> = BTreeMap::new();
        for r in csv::Reader::from_reader(open(&root.join(LABEL_INPUTS_CSV))?).deserialize::<LabelRow>() {
            let r = r?;
            rows.insert(r.community.clone(), r);
        }
        let keep: Vec<usize> = base
            .communities
            .iter()
            .enumerate()
            .filter(|(_, c)| rows.get(*c).is_some_and(|r| target == LabelTarget::Binary || r.survived))
            .map(|(i, _)| i)
            .collect();
        let base = base.select_rows(&keep);
        let kept: Vec<&LabelRow> = base.communities.iter().map(|c| &rows[c]).collect();
        let (labels, task) = match target.measure() {
            None => (LabelSource::Fixed(kept.iter().map(|r| f64::from(u8::from(r.survived))).collect()), Task::Classification),
            Some(Measure::Phi) => (LabelSource::Fixed(kept.iter().map(|r| r.pixel_count as f64).collect()), Task::Regression),
            Some(measure) => (
                LabelSource::Scaled { measure, inputs: kept.iter().map(|r| r.score_inputs()).collect(), alpha: self.config.labels.alpha },
                Task::Regression,
            ),
        };
        let text = if self.uses_bow() {
            let docs: BTreeMap<String, TermCounts> = read_json(&dir.join("docs.json"))?;
            Some(FoldText { docs: base.communities.iter().map(|c| docs.get(c).cloned().unwrap_or_default()).collect(), config: self.tfidf() })
        } else {
            None
        };
        Ok(CvData::new(base, text, labels, task)?)
    }

    fn target_config(&self, w: WindowKind, t: LabelTarget) -> serde_json::Value {
        json!({
            "window": w,
            "label": t,
            "alpha": self.config.labels.alpha,
            "tfidf": self.tfidf(),
            "bow": self.uses_bow(),
        })
    }

    fn train(&self, w: WindowKind, t: LabelTarget) -> Result<UnitOutcome> {
        let mut config = self.target_config(w, t);
        config["models"] = serde_json::to_value(&self.config.models)?;
        run_unit(
            &self.root,
            UnitSpec { stage: Stage::Train.command(), unit: format!("models/{w}/{t}"), config, inputs: self.feature_inputs(w) },
            |io| {
                let data = self.cv_data(&self.root, w, t)?;
                let (matrix, y) = data.full()?;
                for (name, spec) in &self.config.models {
                    let model = spec.fit(&matrix, &y, data.task).with_context(|| format!("fitting `{name}`"))?;
                    let mut buf = Vec::new();
                    save_model(&model, &mut buf)?;
                    io.write(&format!("{name}.json"), &buf)?;
                }
                Ok(matrix.n_rows() as u64)
            },
        )
    }

    fn evaluate(&self, w: WindowKind, t: LabelTarget) -> Result<UnitOutcome> {
        let mut config = self.target_config(w, t);
        config["models"] = serde_json::to_value(&self.config.models)?;
        config["k"] = json!(self.config.eval.k);
        config["seed"] = json!(self.config.eval.seed);
        run_unit(
            &self.root,
            UnitSpec { stage: Stage::Evaluate.command(), unit: format!("eval/{w}/{t}"), config, inputs: self.feature_inputs(w) },
            |io| {
                let data = self.cv_data(&self.root, w, t)?;
                let y = data.full_labels()?;
                let plan = stratified_kfold(&data.base.communities, &y, self.config.eval.k, self.config.eval.seed, data.task)?;
                io.write(
                    "folds.csv",
                    &csv_bytes(|wr| {
                        wr.write_record(["community", "fold"])?;
                        for (c, f) in plan.communities.iter().zip(&plan.assignment) {
                            wr.write_record([c.clone(), f.to_string()])?;
                        }
                        Ok(())
                    })?,
                )?;
                for (name, spec) in &self.config.models {
                    let outcome = cross_validate(&data, spec, &plan).with_context(|| format!("cross-validating `{name}`"))?;
                    let mut buf = Vec::new();
                    write_report_json(&outcome.report, &mut buf)?;
                    io.write(&format!("{name}.json"), &buf)?;
                    io.write(
                        &format!("{name}_oof.csv"),
                        &csv_bytes(|wr| {
                            for p in &outcome.predictions {
                                wr.serialize(p)?;
                            }
                            Ok(())
                        })?,
                    )?;
                    let headline: Vec<String> = outcome.report.mean.iter().map(|(k, v)| format!("{k}={}", opt(*v))).collect();
                    tracing::info!(stage = "evaluate", window = %w, label = %t, model = %name, "{}", headline.join(" "));
                }
                Ok(y.len() as u64)
            },
        )
    }

    fn explain(&self, w: WindowKind, t: LabelTarget) -> Result<UnitOutcome> {
        let model_name = &self.config.explain.model;
        let model_rel = format!("models/{w}/{t}/{model_name}.json");
        let mut inputs = vec![Input::artifact(Stage::Train.command(), model_rel.clone())];
        inputs.extend(self.feature_inputs(w));
        let mut config = self.target_config(w, t);
        config["model"] = json!(model_name);
        run_unit(
            &self.root,
            UnitSpec { stage: Stage::Explain.command(), unit: format!("explain/{w}/{t}"), config, inputs },
            |io| {
                let model = load_model(open(&io.input(&model_rel))?)?;
                let data = self.cv_data(&self.root, w, t)?;
                let (matrix, _) = data.full()?;
                let attributions = explain_matrix(&model, &matrix)?;
                let summary = shap_summary(&attributions)?;
                let types: BTreeMap<String, String> = model.feature_names().iter().map(|f| (f.clone(), column_block(f).to_string())).collect();
                let groups = group_importance(&summary, &types)?;
                let mut buf = Vec::new();
                write_attributions_csv(&attributions, &mut buf)?;
                io.write("attributions.csv", &buf)?;
                let mut buf = Vec::new();
                write_summary_csv(&summary, &mut buf)?;
                io.write("summary.csv", &buf)?;
                io.write(
                    "groups.csv",
                    &csv_bytes(|wr| {
                        wr.write_record(["group", "share"])?;
                        for (g, s) in &groups {
                            wr.write_record([g.clone(), s.to_string()])?;
                        }
                        Ok(())
                    })?,
                )?;
                Ok(attributions.len() as u64)
            },
        )
    }

    // -----------------------------------------------------------------------
    // report

    fn report(&self) -> Result<UnitOutcome> {
        let cfg = &self.config;
        let explain_model = &cfg.explain.model;
        let mut inputs = vec![
            Input::artifact(Stage::Labels.command(), TABLE1_CSV),
            Input::artifact(Stage::Labels.command(), DIVERGENT_CSV),
            Input::artifact(Stage::Snapshot.command(), SNAPSHOT_PNG),
        ];
        for &w in &cfg.windows.run {
            for &t in &cfg.labels.targets {
                for name in cfg.models.keys() {
                    inputs.push(Input::artifact(Stage::Evaluate.command(), format!("eval/{w}/{t}/{name}.json")));
                }
                inputs.push(Input::artifact(Stage::Evaluate.command(), format!("eval/{w}/{t}/{explain_model}_oof.csv")));
                inputs.push(Input::artifact(Stage::Explain.command(), format!("explain/{w}/{t}/groups.csv")));
            }
        }
        run_unit(
            &self.root,
            UnitSpec {
                stage: Stage::Report.command(),
                unit: "report".into(),
                config: json!({
                    "windows": cfg.windows.run,
                    "labels": cfg.labels.targets,
                    "models": cfg.models.keys().collect::<Vec<_>>(),
                    "explain_model": explain_model,
                    "top_n": cfg.explain.top_n,
                }),
                inputs,
            },
            |io| {
                io.write("table1_correlations.csv", &fs::read(io.input(TABLE1_CSV))?)?;
                io.write("divergent_communities.csv", &fs::read(io.input(DIVERGENT_CSV))?)?;
                io.write("final_snapshot.png", &fs::read(io.input(SNAPSHOT_PNG))?)?;

                let mut reports: BTreeMap<(WindowKind, LabelTarget, String), EvalReport> = BTreeMap::new();
                for &w in &cfg.windows.run {
                    for &t in &cfg.labels.targets {
                        for name in cfg.models.keys() {
                            reports.insert((w, t, name.clone()), read_json(&io.input(&format!("eval/{w}/{t}/{name}.json")))?);
                        }
                    }
                }
                let table3 = csv_bytes(|wr| {
                    wr.write_record(["window", "label", "model", "metric", "mean", "std"])?;
                    for &w in &cfg.windows.run {
                        for &t in &cfg.labels.targets {
                            for name in cfg.models.keys() {
                                let r = &reports[&(w, t, name.clone())];
                                for (metric, mean) in &r.mean {
                                    let std = r.std.get(metric).copied().flatten();
                                    wr.write_record([w.to_string(), t.to_string(), name.clone(), metric.clone(), opt(*mean), opt(std)])?;
                                }
                            }
                        }
                    }
                    Ok(())
                })?;
                io.write("table3_summary.csv", &table3)?;

                let groups = csv_bytes(|wr| {
                    wr.write_record(["window", "label", "group", "share"])?;
                    for &w in &cfg.windows.run {
                        for &t in &cfg.labels.targets {
                            let mut r = csv::Reader::from_reader(open(&io.input(&format!("explain/{w}/{t}/groups.csv")))?);
                            for rec in r.records() {
                                let rec = rec?;
                                wr.write_record([w.to_string(), t.to_string(), rec[0].to_string(), rec[1].to_string()])?;
                            }
                        }
                    }
                    Ok(())
                })?;
                io.write("group_importance.csv", &groups)?;

                let both = WindowKind::ALL.iter().all(|w| cfg.windows.run.contains(w));
                let mut contrast_rows = Vec::new();
                let mut divergent_rows = Vec::new();
                if both {
                    for &t in &cfg.labels.targets {
                        let load = |w: WindowKind| -> Result<Vec<OofPrediction>> {
                            let mut r = csv::Reader::from_reader(open(&io.input(&format!("eval/{w}/{t}/{explain_model}_oof.csv")))?);
                            Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
                        };
                        let c = compare_windows(
                            &reports[&(WindowKind::Bp, t, explain_model.clone())],
                            &load(WindowKind::Bp)?,
                            &reports[&(WindowKind::Dp, t, explain_model.clone())],
                            &load(WindowKind::Dp)?,
                            cfg.explain.top_n,
                        )?;
                        let bp = &reports[&(WindowKind::Bp, t, explain_model.clone())].mean;
                        let dp = &reports[&(WindowKind::Dp, t, explain_model.clone())].mean;
                        for (metric, delta) in &c.metric_deltas {
                            contrast_rows.push([
                                t.to_string(),
                                explain_model.clone(),
                                metric.clone(),
                                opt(bp.get(metric).copied().flatten()),
                                opt(dp.get(metric).copied().flatten()),
                                delta.to_string(),
                                opt(c.correlation),
                            ]);
                        }
                        for (community, delta) in &c.divergent {
                            divergent_rows.push([t.to_string(), community.clone(), delta.to_string()]);
                        }
                    }
                }
                io.write(
                    "table5_window_contrast.csv",
                    &csv_bytes(|wr| {
                        wr.write_record(["label", "model", "metric", "bp", "dp", "delta", "prediction_correlation"])?;
                        for r in &contrast_rows {
                            wr.write_record(r)?;
                        }
                        Ok(())
                    })?,
                )?;
                io.write(
                    "table5_divergent.csv",
                    &csv_bytes(|wr| {
                        wr.write_record(["label", "community", "delta"])?;
                        for r in &divergent_rows {
                            wr.write_record(r)?;
                        }
                        Ok(())
                    })?,
                )?;
                Ok(reports.len() as u64)
            },
        )
    }
}

/// Unit directory of a window/label pair for a per-target stage.
pub fn target_unit(stage: Stage, w: WindowKind, t: LabelTarget) -> String {
    format!("{}/{w}/{t}", stage.dir())
}


//! Deterministic synthetic inputs for end-to-end runs.
//!
//! Each community gets a hidden strength `z` in [0, 1). Strength drives
//! survival, artwork size, and activity during the experiment; activity in
//! the months before carries only a weak trace of it. Subscriber counts are
//! loosely tied to `z`, so the one-feature baseline has something to find
//! without being the whole story.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use placelab::window::{TimeWindow, AGE_ANCHOR, MS_PER_DAY};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureParams {
    pub communities: usize,
    pub canvas: u32,
    pub seed: u64,
    /// Trees per ensemble in the generated config.
    pub n_trees: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { communities: 80, canvas: 120, seed: 7, n_trees: 60 }
    }
}

const NEUTRAL: [&str; 12] = ["place", "pixel", "canvas", "color", "art", "draw", "today", "line", "corner", "grid", "blue", "update"];
const STRONG: [&str; 6] = ["together", "team", "build", "building", "plan", "planning"];
const WEAK: [&str; 4] = ["lost", "griefed", "sad", "void"];

struct Community {
    name: String,
    z: f64,
    survived: bool,
    users: Vec<String>,
}

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words.choose(rng).copied().unwrap_or("x")
}

fn sentence<R: Rng>(rng: &mut R, z: f64, len: std::ops::Range<usize>, during: bool) -> String {
    let len = rng.gen_range(len);
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            if during && u < 0.35 * z {
                pick(rng, &STRONG)
            } else if during && u < 0.35 * z + 0.25 * (1.0 - z) {
                pick(rng, &WEAK)
            } else {
                pick(rng, &NEUTRAL)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn ts_in<R: Rng>(rng: &mut R, w: TimeWindow) -> i64 {
    rng.gen_range(w.start..=w.end)
}

/// Write placements, atlas, content, metadata, a category dictionary, an
/// embedding table and `config.toml` into `dir`; returns the config path.
pub fn write_fixture(dir: &Path, p: &FixtureParams) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let bp = TimeWindow::before_place();
    let dp = TimeWindow::during_place();

    let communities: Vec<Community> = (0..p.communities)
        .map(|i| {
            let z: f64 = rng.gen();
            let survived = z + rng.gen_range(-0.2..0.2) > 0.35;
            let n_users = 3 + (15.0 * z).round() as usize;
            let name = format!("comm{i:03}");
            let users = (0..n_users).map(|u| format!("{name}_u{u}")).collect();
            Community { name, z, survived, users }
        })
        .collect();

    // grid of square slots, one per community
    let per_row = (p.communities as f64).sqrt().ceil().max(1.0) as u32;
    let slot = p.canvas / per_row;
    anyhow::ensure!(slot >= 6, "canvas {} too small for {} communities", p.canvas, p.communities);

    let mut events: Vec<(i64, String, u32, u32, u8)> = Vec::new();
    let mut atlas = Vec::new();
    for (i, c) in communities.iter().enumerate() {
        let (sx, sy) = ((i as u32 % per_row) * slot, (i as u32 / per_row) * slot);
        let colors: Vec<u8> = (0..rng.gen_range(1..=5)).map(|_| rng.gen_range(1..16)).collect();
        let span = f64::from(slot - 4);
        let w = 3 + (c.z * span).round() as u32;
        let h = 3 + ((0.5 * c.z + 0.5 * rng.gen::<f64>()) * span).round() as u32;
        let (w, h) = (w.min(slot - 1), h.min(slot - 1));
        let contested = rng.gen_range(0.2..2.0);
        for y in sy..sy + h {
            for x in sx..sx + w {
                let repeats = 1 + (contested * rng.gen::<f64>() * 3.0) as usize;
                for _ in 0..repeats {
                    let user = c.users.choose(&mut rng).expect("users").clone();
                    let color = *colors.choose(&mut rng).expect("colors");
                    events.push((ts_in(&mut rng, dp), user, x, y, color));
                }
            }
        }
        if c.survived {
            let (x0, y0, x1, y1) = (sx as f64, sy as f64, (sx + w - 1) as f64, (sy + h - 1) as f64);
            let links = if i % 3 == 0 { json!({ "subreddit": [format!("r/{}", c.name.to_uppercase())] }) } else { json!([c.name]) };
            atlas.push(json!({
                "id": format!("a{i}"),
                "name": format!("{} logo", c.name),
                "links": links,
                "path": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            }));
        } else {
            // a failed attempt, painted over by a neighbour's colors
            for y in sy..sy + h {
                for x in sx..sx + w {
                    events.push((ts_in(&mut rng, TimeWindow::new(dp.end - MS_PER_DAY, dp.end)), "void_user".into(), x, y, 3));
                }
            }
        }
    }
    events.sort_by_key(|e| e.0);
    let mut csv = String::from("ts,user,x,y,color\n");
    for (ts, user, x, y, color) in &events {
        writeln!(csv, "{ts},{user},{x},{y},{color}")?;
    }
    // one malformed row and one off-canvas row, skipped under the default policy
    csv.push_str("not-a-time,u,1,1,1\n");
    writeln!(csv, "{},u,{},0,1", dp.end, p.canvas + 5)?;
    fs::write(dir.join("placements.csv"), csv)?;
    fs::write(dir.join("atlas.json"), serde_json::to_string_pretty(&atlas)?)?;

    let mut meta = String::from("name,subscribers,created_utc\n");
    for c in &communities {
        let subs = (6.0 + 1.5 * c.z + 1.5 * rng.gen::<f64>()).exp().round() as u64;
        let created = (AGE_ANCHOR - rng.gen_range(30..3000) * MS_PER_DAY) / 1000;
        writeln!(meta, "{},{subs},{created}", c.name)?;
    }
    fs::write(dir.join("meta.csv"), meta)?;

    let mut lines = Vec::new();
    let mut next_id = 0u64;
    for c in &communities {
        for (window, during) in [(bp, false), (dp, true)] {
            let strength = if during { c.z } else { 0.2 * c.z + 0.8 * rng.gen::<f64>() };
            let n_subs = 1 + (10.0 * strength).round() as usize + rng.gen_range(0..3);
            for _ in 0..n_subs {
                next_id += 1;
                let sid = format!("s{next_id}");
                let author = c.users.choose(&mut rng).expect("users").clone();
                let removed = rng.gen::<f64>() < 0.08 * (1.0 - strength);
                let body = if removed { "[removed]".to_string() } else { sentence(&mut rng, strength, 0..12, during) };
                lines.push(json!({
                    "kind": "submission",
                    "id": format!("t3_{sid}"),
                    "author": author,
                    "subreddit": c.name,
                    "created_utc": ts_in(&mut rng, window) / 1000,
                    "title": sentence(&mut rng, strength, 2..8, during),
                    "selftext": body,
                    "score": (rng.gen::<f64>() * 40.0 * (0.2 + strength)).round() as i64,
                }));
                let n_comments = (4.0 * strength * rng.gen::<f64>()).round() as usize + rng.gen_range(0..2);
                let mut parents = vec![format!("t3_{sid}")];
                for _ in 0..n_comments {
                    next_id += 1;
                    let cid = format!("c{next_id}");
                    let parent = parents.choose(&mut rng).expect("parent").clone();
                    let author = if rng.gen::<f64>() < 0.05 { "[deleted]".to_string() } else { c.users.choose(&mut rng).expect("users").clone() };
                    lines.push(json!({
                        "kind": "comment",
                        "id": format!("t1_{cid}"),
                        "parent_id": parent,
                        "author": author,
                        "subreddit": c.name,
                        "created_utc": ts_in(&mut rng, window) / 1000,
                        "body": sentence(&mut rng, strength, 1..10, during),
                        "score": rng.gen_range(-2..15),
                    }));
                    parents.push(format!("t1_{cid}"));
                }
            }
        }
    }
    // outside both windows; dropped at ingest
    lines.push(json!({ "kind": "submission", "id": "old", "author": "x", "subreddit": "comm000", "created_utc": 1_000_000_000, "title": "ancient", "score": 1 }));
    lines.push(json!({ "kind": "poll", "id": "p1", "subreddit": "comm000", "created_utc": dp.start / 1000 }));
    let content: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(dir.join("content.jsonl"), content)?;

    let dic = "%\n1\tsocial\n2\twork\n3\tnegemo\n%\ntogether\t1\nteam\t1\nbuild*\t2\nplan*\t2\nlost\t3\ngrief*\t3\nsad\t3\n";
    fs::write(dir.join("categories.dic"), dic)?;

    let mut emb = String::new();
    for c in &communities {
        if rng.gen::<f64>() < 0.15 {
            continue;
        }
        let mut v = vec![c.z + 0.3 * rng.gen::<f64>()];
        v.extend((0..7).map(|_| rng.gen_range(-1.0..1.0)));
        let cols: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(emb, "{}\t{}", c.name, cols.join("\t"))?;
    }
    fs::write(dir.join("snap.tsv"), emb)?;

    let config = format!(
        r#"out_dir = "out"

[data]
placements = "placements.csv"
atlas = "atlas.json"
content = "content.jsonl"
meta = "meta.csv"
dictionary = "categories.dic"

[[data.embeddings]]
name = "snap"
path = "snap.tsv"

[canvas]
width = {size}
height = {size}

[features]
blocks = ["meta", "network", "bow", "liwc", "snap"]
max_vocab = 200
min_df = 2

[models.constant]
model = "constant"

[models.size_baseline]
model = "univariate"
feature = "meta::subscriber_count"

[models.linear]
model = "linear"

[models.gbt]
model = "gbt"
params = {{ n_trees = {trees}, learning_rate = 0.1, max_depth = 3, min_samples_leaf = 3 }}

[models.random_forest]
model = "random_forest"
params = {{ n_trees = {trees}, max_depth = 6, min_samples_leaf = 2 }}
"#,
        size = p.canvas,
        trees = p.n_trees,
    );
    let path = dir.join("config.toml");
    fs::write(&path, config)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, PipelineConfig};

    #[test]
    fn fixture_is_deterministic_and_valid() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let params = FixtureParams { communities: 12, canvas: 60, ..Default::default() };
        let cfg_path = write_fixture(a.path(), &params).unwrap();
        write_fixture(b.path(), &params).unwrap();
        for f in ["placements.csv", "atlas.json", "content.jsonl", "meta.csv", "snap.tsv", "config.toml"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let cfg = PipelineConfig::load(&cfg_path).unwrap();
        assert_eq!(validate(&cfg), vec![]);
    }
}

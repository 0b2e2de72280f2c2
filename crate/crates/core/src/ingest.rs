//! Parsers for every external input: the placement log, the artwork atlas,
//! community content dumps, community metadata, annotations, embedding
//! tables and LIWC-style category dictionaries.
//!
//! All parsers are pure functions over a reader or a string. Recoverable
//! problems (a malformed row, an atlas entry with a broken path) are
//! counted or reported as warnings; only structural problems are errors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::window::{TimeWindow, Timestamp, WindowKind, MS_PER_SECOND};

pub const CANVAS_SIZE: u32 = 1000;
pub const PALETTE_SIZE: u8 = 16;
/// Body text Reddit substitutes for moderator-removed content.
pub const REMOVED_SENTINEL: &str = "[removed]";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: coordinate ({x}, {y}) or color {color} outside the canvas")]
    OutOfBounds { row: usize, x: i64, y: i64, color: i64 },
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("atlas document must be a JSON array of entries")]
    AtlasNotArray,
    #[error("embedding table `{name}` line {line}: expected {expected} values, found {found}")]
    RaggedEmbedding { name: String, line: usize, expected: usize, found: usize },
    #[error("embedding table `{name}` line {line}: {message}")]
    BadEmbedding { name: String, line: usize, message: String },
    #[error("dictionary line {line}: {message}")]
    BadDictionary { line: usize, message: String },
    #[error("dictionary line {line}: word `{word}` references undeclared category {id}")]
    UndeclaredCategory { line: usize, word: String, id: u32 },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Lowercase, trim, and strip a leading `r/` or `/r/`.
///
/// Idempotent: normalizing a normalized name returns it unchanged.
pub fn normalize_community(name: &str) -> String {
    let mut s = name.trim().to_lowercase();
    loop {
        let next = s
            .strip_prefix("/r/")
            .or_else(|| s.strip_prefix("r/"))
            .unwrap_or(&s)
            .trim_end_matches('/')
            .trim()
            .to_string();
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Parse an epoch-millisecond integer or an ISO-8601 timestamp.
pub fn parse_timestamp_ms(raw: &str) -> Option<Timestamp> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if let Ok(ms) = raw.parse::<i64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp_millis());
    }
    let naive = raw
        .strip_suffix(" UTC")
        .or_else(|| raw.strip_suffix('Z'))
        .unwrap_or(raw);
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M", "%Y-%m-%d"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
        if fmt == "%Y-%m-%d" {
            if let Ok(d) = chrono::NaiveDate::parse_from_str(naive, fmt) {
                return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp_millis());
            }
        }
    }
    None
}

/// Parse epoch seconds (integer, float, or numeric string) or an ISO string.
fn parse_seconds_value(v: &Value) -> Option<Timestamp> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.checked_mul(MS_PER_SECOND)
            } else {
                n.as_f64()
                    .filter(|f| f.is_finite())
                    .map(|f| (f * MS_PER_SECOND as f64).round() as i64)
            }
        }
        Value::String(s) => parse_seconds_str(s),
        _ => None,
    }
}

fn parse_seconds_str(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        return i.checked_mul(MS_PER_SECOND);
    }
    if let Ok(f) = s.parse::<f64>() {
        return f.is_finite().then(|| (f * MS_PER_SECOND as f64).round() as i64);
    }
    // ISO strings are absolute; integers are seconds here, so don't reuse
    // parse_timestamp_ms's millisecond reading.
    if s.chars().any(|c| c == '-') {
        return parse_timestamp_ms(s);
    }
    None
}

// ---------------------------------------------------------------------------
// Placements

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementEvent {
    pub ts: Timestamp,
    /// Index into [`PlacementLog::users`].
    pub user: u32,
    pub x: u16,
    pub y: u16,
    pub color: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsPolicy {
    #[default]
    Skip,
    Strict,
}

#[derive(Clone, Debug)]
pub struct ColumnAliases {
    pub ts: Vec<String>,
    pub user: Vec<String>,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub color: Vec<String>,
}

impl Default for ColumnAliases {
    fn default() -> Self {
        let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
        Self {
            ts: v(&["ts", "timestamp"]),
            user: v(&["user", "user_hash", "user_id"]),
            x: v(&["x", "x_coordinate"]),
            y: v(&["y", "y_coordinate"]),
            color: v(&["color", "pixel_color"]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlacementOptions {
    pub bounds_policy: BoundsPolicy,
    pub width: u32,
    pub height: u32,
    pub palette_size: u8,
    pub aliases: ColumnAliases,
    /// Drop events outside this window when set.
    pub window: Option<TimeWindow>,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            bounds_policy: BoundsPolicy::Skip,
            width: CANVAS_SIZE,
            height: CANVAS_SIZE,
            palette_size: PALETTE_SIZE,
            aliases: ColumnAliases::default(),
            window: None,
        }
    }
}

/// Events sorted ascending by timestamp, with users interned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlacementLog {
    pub events: Vec<PlacementEvent>,
    pub users: Vec<String>,
    pub malformed: usize,
    pub out_of_bounds: usize,
    pub outside_window: usize,
}

impl PlacementLog {
    pub fn user_name(&self, event: &PlacementEvent) -> &str {
        &self.users[event.user as usize]
    }
}

fn find_column(headers: &csv::StringRecord, aliases: &[String], name: &'static str) -> Result<usize> {
    headers
        .iter()
        .position(|h| {
            let h = h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase();
            aliases.iter().any(|a| a.eq_ignore_ascii_case(&h))
        })
        .ok_or(IngestError::MissingColumn(name))
}

pub fn parse_placements<R: Read>(reader: R, opts: &PlacementOptions) -> Result<PlacementLog> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = [
        find_column(&headers, &opts.aliases.ts, "ts")?,
        find_column(&headers, &opts.aliases.user, "user")?,
        find_column(&headers, &opts.aliases.x, "x")?,
        find_column(&headers, &opts.aliases.y, "y")?,
        find_column(&headers, &opts.aliases.color, "color")?,
    ];

    let mut log = PlacementLog::default();
    let mut user_index: HashMap<String, u32> = HashMap::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        row += 1;
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => {
                log.malformed += 1;
                continue;
            }
        }
        let field = |i: usize| record.get(cols[i]).map(str::trim);
        let parsed = (|| {
            let ts = parse_timestamp_ms(field(0)?)?;
            let user = field(1)?;
            let x = field(2)?.parse::<i64>().ok()?;
            let y = field(3)?.parse::<i64>().ok()?;
            let color = field(4)?.parse::<i64>().ok()?;
            Some((ts, user, x, y, color))
        })();
        let Some((ts, user, x, y, color)) = parsed else {
            log.malformed += 1;
            continue;
        };
        let in_bounds = (0..opts.width as i64).contains(&x)
            && (0..opts.height as i64).contains(&y)
            && (0..opts.palette_size as i64).contains(&color);
        if !in_bounds {
            match opts.bounds_policy {
                BoundsPolicy::Skip => {
                    log.out_of_bounds += 1;
                    continue;
                }
                BoundsPolicy::Strict => return Err(IngestError::OutOfBounds { row, x, y, color }),
            }
        }
        if let Some(w) = &opts.window {
            if !w.contains(ts) {
                log.outside_window += 1;
                continue;
            }
        }
        let next = log.users.len() as u32;
        let uid = *user_index.entry(user.to_string()).or_insert_with(|| {
            log.users.push(user.to_string());
            next
        });
        log.events.push(PlacementEvent { ts, user: uid, x: x as u16, y: y as u16, color: color as u8 });
    }
    // stable: equal timestamps keep input order
    log.events.sort_by_key(|e| e.ts);
    Ok(log)
}

// ---------------------------------------------------------------------------
// Atlas

pub type Vertex = (f64, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub id: String,
    pub name: String,
    pub subreddits: Vec<String>,
    pub polygons: Vec<Vec<Vertex>>,
}

#[derive(Clone, Debug)]
pub struct AtlasOptions {
    pub width: u32,
    pub height: u32,
    /// Vertices may sit this far outside the canvas before an entry is rejected.
    pub margin: f64,
}

impl Default for AtlasOptions {
    fn default() -> Self {
        Self { width: CANVAS_SIZE, height: CANVAS_SIZE, margin: 10.0 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AtlasParse {
    pub entries: Vec<AtlasEntry>,
    pub warnings: Vec<String>,
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn split_subreddit_list(s: &str, out: &mut Vec<String>) {
    for part in s.split([',', ';', ' ', '\n']) {
        let n = normalize_community(part);
        if !n.is_empty() {
            out.push(n);
        }
    }
}

fn collect_subreddits(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => split_subreddit_list(s, out),
        Value::Array(items) => items.iter().for_each(|i| collect_subreddits(i, out)),
        Value::Object(map) => {
            if let Some(sub) = map.get("subreddit").or_else(|| map.get("subreddits")) {
                collect_subreddits(sub, out);
            }
        }
        _ => {}
    }
}

fn parse_path(v: &Value) -> std::result::Result<Vec<Vertex>, String> {
    let points = v.as_array().ok_or("path is not an array")?;
    points
        .iter()
        .map(|p| {
            let pair = p.as_array().filter(|a| a.len() == 2).ok_or("vertex is not an [x, y] pair")?;
            let x = pair[0].as_f64().ok_or("non-numeric vertex")?;
            let y = pair[1].as_f64().ok_or("non-numeric vertex")?;
            if x.is_finite() && y.is_finite() {
                Ok((x, y))
            } else {
                Err("non-finite vertex".to_string())
            }
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|e: String| e)
}

/// Parse a Place-Atlas style JSON export.
pub fn parse_atlas(document: &str, opts: &AtlasOptions) -> Result<AtlasParse> {
    let root: Value = serde_json::from_str(document)?;
    let items = root.as_array().ok_or(IngestError::AtlasNotArray)?;
    let mut out = AtlasParse::default();
    let mut seen = BTreeSet::new();
    let (lo_x, hi_x) = (-opts.margin, opts.width as f64 + opts.margin);
    let (lo_y, hi_y) = (-opts.margin, opts.height as f64 + opts.margin);

    for (pos, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            out.warnings.push(format!("entry #{pos}: not an object, skipped"));
            continue;
        };
        let Some(id) = obj.get("id").and_then(value_to_string) else {
            out.warnings.push(format!("entry #{pos}: missing id, skipped"));
            continue;
        };
        let name = obj.get("name").and_then(value_to_string).unwrap_or_default();

        let mut raw_paths: Vec<&Value> = Vec::new();
        if let Some(p) = obj.get("path") {
            raw_paths.push(p);
        }
        match obj.get("paths") {
            Some(Value::Array(ps)) => raw_paths.extend(ps.iter()),
            Some(Value::Object(ps)) => raw_paths.extend(ps.values()),
            _ => {}
        }
        let mut polygons = Vec::new();
        let mut broken = None;
        for raw in raw_paths {
            match parse_path(raw) {
                Ok(poly) if poly.len() >= 3 => polygons.push(poly),
                Ok(poly) => {
                    out.warnings.push(format!("entry {id}: {}-vertex path dropped", poly.len()));
                }
                Err(e) => {
                    broken = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = broken {
            out.warnings.push(format!("entry {id}: {e}, skipped"));
            continue;
        }
        if polygons.is_empty() {
            out.warnings.push(format!("entry {id}: no polygon with at least 3 vertices, skipped"));
            continue;
        }
        let outside = polygons
            .iter()
            .flatten()
            .any(|&(x, y)| x < lo_x || x > hi_x || y < lo_y || y > hi_y);
        if outside {
            out.warnings.push(format!("entry {id}: vertex outside canvas margin, skipped"));
            continue;
        }
        if !seen.insert(id.clone()) {
            out.warnings.push(format!("entry {id}: duplicate id, keeping first"));
            continue;
        }

        let mut subreddits = Vec::new();
        for key in ["subreddits", "subreddit", "links"] {
            if let Some(v) = obj.get(key) {
                collect_subreddits(v, &mut subreddits);
            }
        }
        let mut dedup = BTreeSet::new();
        subreddits.retain(|s| dedup.insert(s.clone()));

        out.entries.push(AtlasEntry { id, name, subreddits, polygons });
    }
    for w in &out.warnings {
        tracing::warn!(target: "atlas", "{w}");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Content

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Submission,
    Comment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub kind: ContentKind,
    /// Id with any `t1_`/`t3_` type prefix removed.
    pub id: String,
    pub parent_id: Option<String>,
    pub author: String,
    pub community: String,
    pub created: Timestamp,
    /// Submission title; `None` for comments.
    pub title: Option<String>,
    /// Submission self-text or comment body.
    pub text: String,
    pub score: i64,
    pub removed: bool,
}

impl ContentItem {
    /// Title and body joined, with the removal sentinel left out.
    pub fn full_text(&self) -> String {
        let body = if self.text.trim() == REMOVED_SENTINEL { "" } else { self.text.as_str() };
        match &self.title {
            Some(t) if !body.is_empty() => format!("{t}\n{body}"),
            Some(t) => t.clone(),
            None => body.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ContentParse {
    pub items: Vec<ContentItem>,
    /// Non-blank lines seen.
    pub total_lines: usize,
    pub unparseable: usize,
    pub unknown_kind: usize,
    pub outside_window: usize,
}

/// Strip a Reddit thing-type prefix (`t1_`, `t3_`, ...).
pub fn strip_thing_prefix(id: &str) -> &str {
    let b = id.as_bytes();
    if b.len() > 3 && b[0] == b't' && b[1].is_ascii_digit() && b[2] == b'_' {
        &id[3..]
    } else {
        id
    }
}

fn parse_content_line(v: &Value) -> std::result::Result<ContentItem, bool> {
    // Err(true) = unknown kind, Err(false) = unparseable
    let obj = v.as_object().ok_or(false)?;
    let kind = match obj.get("kind").and_then(Value::as_str) {
        Some("submission") => ContentKind::Submission,
        Some("comment") => ContentKind::Comment,
        Some(_) => return Err(true),
        None => return Err(false),
    };
    let str_field = |k: &str| obj.get(k).and_then(value_to_string);
    let id = str_field("id").ok_or(false)?;
    let author = str_field("author").ok_or(false)?;
    let community = normalize_community(&str_field("subreddit").ok_or(false)?);
    let created = obj.get("created_utc").and_then(parse_seconds_value).ok_or(false)?;
    let score = match obj.get("score") {
        None | Some(Value::Null) => 0,
        Some(Value::Number(n)) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)).ok_or(false)?,
        Some(Value::String(s)) => s.trim().parse().map_err(|_| false)?,
        Some(_) => return Err(false),
    };
    let (title, text, parent_id) = match kind {
        ContentKind::Submission => {
            let title = str_field("title").unwrap_or_default();
            let text = str_field("selftext").unwrap_or_default();
            (Some(title), text, None)
        }
        ContentKind::Comment => {
            let parent = str_field("parent_id").ok_or(false)?;
            let text = str_field("body").unwrap_or_default();
            (None, text, Some(strip_thing_prefix(&parent).to_string()))
        }
    };
    let removed = match obj.get("removed").and_then(Value::as_bool) {
        Some(explicit) if kind == ContentKind::Submission => explicit,
        _ => text == REMOVED_SENTINEL,
    };
    Ok(ContentItem {
        kind,
        id: strip_thing_prefix(&id).to_string(),
        parent_id,
        author,
        community,
        created,
        title,
        text,
        score,
        removed,
    })
}

/// Parse a JSON-lines content dump, keeping items created inside `window`.
pub fn parse_content<R: BufRead>(reader: R, window: Option<&TimeWindow>) -> Result<ContentParse> {
    let mut out = ContentParse::default();
    for line in reader.split(b'\n') {
        let line = line?;
        let Ok(text) = std::str::from_utf8(&line) else {
            out.total_lines += 1;
            out.unparseable += 1;
            continue;
        };
        if text.trim().is_empty() {
            continue;
        }
        out.total_lines += 1;
        let Ok(v) = serde_json::from_str::<Value>(text) else {
            out.unparseable += 1;
            continue;
        };
        match parse_content_line(&v) {
            Ok(item) => {
                if window.is_some_and(|w| !w.contains(item.created)) {
                    out.outside_window += 1;
                } else {
                    out.items.push(item);
                }
            }
            Err(true) => out.unknown_kind += 1,
            Err(false) => out.unparseable += 1,
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Community metadata and annotations

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityMeta {
    pub name: String,
    /// Subscriber count |c|.
    pub size: u64,
    pub created: Timestamp,
}

/// CSV `name,subscribers,created_utc`; `created_utc` in epoch seconds or ISO-8601.
pub fn load_community_meta<R: Read>(reader: R) -> Result<Vec<CommunityMeta>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let name_col = find_column(&headers, &["name".into(), "subreddit".into(), "community".into()], "name")?;
    let size_col = find_column(&headers, &["subscribers".into(), "size".into()], "subscribers")?;
    let created_col = find_column(&headers, &["created_utc".into(), "created".into()], "created_utc")?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |message: String| IngestError::MalformedRow { row, message };
        let name = normalize_community(rec.get(name_col).unwrap_or(""));
        if name.is_empty() {
            return Err(bad("empty community name".into()));
        }
        let size_raw = rec.get(size_col).unwrap_or("");
        let size = size_raw
            .parse::<u64>()
            .ok()
            .or_else(|| size_raw.parse::<f64>().ok().filter(|f| *f >= 0.0 && f.is_finite()).map(|f| f as u64))
            .ok_or_else(|| bad(format!("bad subscriber count `{size_raw}`")))?;
        let created_raw = rec.get(created_col).unwrap_or("");
        let created =
            parse_seconds_str(created_raw).ok_or_else(|| bad(format!("bad created_utc `{created_raw}`")))?;
        out.push(CommunityMeta { name, size, created });
    }
    Ok(out)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

/// CSV `community,survived`.
pub fn load_annotations<R: Read>(reader: R) -> Result<BTreeMap<String, bool>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let c_col = find_column(&headers, &["community".into(), "name".into(), "subreddit".into()], "community")?;
    let s_col = find_column(&headers, &["survived".into(), "label".into()], "survived")?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(s_col).unwrap_or("");
        let survived = parse_bool(raw).ok_or_else(|| IngestError::MalformedRow {
            row: i + 2,
            message: format!("bad survived flag `{raw}`"),
        })?;
        out.entry(normalize_community(rec.get(c_col).unwrap_or(""))).or_insert(survived);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Embeddings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub name: String,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
    /// Window the table was trained on; `None` for window-independent tables.
    pub window: Option<WindowKind>,
}

impl EmbeddingTable {
    pub fn get(&self, community: &str) -> Option<&[f64]> {
        self.vectors.get(&normalize_community(community)).map(Vec::as_slice)
    }

    pub fn with_window(mut self, window: Option<WindowKind>) -> Self {
        self.window = window;
        self
    }
}

/// TSV `name\tv1\t...\tvd`.
pub fn load_embeddings<R: BufRead>(reader: R, name: &str) -> Result<EmbeddingTable> {
    let mut vectors = BTreeMap::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim_end_matches('\r').split('\t');
        let community = normalize_community(fields.next().unwrap_or(""));
        if community.is_empty() {
            return Err(IngestError::BadEmbedding {
                name: name.into(),
                line: lineno,
                message: "empty community name".into(),
            });
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| IngestError::BadEmbedding {
                name: name.into(),
                line: lineno,
                message: "non-numeric component".into(),
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(IngestError::RaggedEmbedding {
                    name: name.into(),
                    line: lineno,
                    expected: d,
                    found: values.len(),
                })
            }
            Some(_) => {}
        }
        vectors.entry(community).or_insert(values);
    }
    Ok(EmbeddingTable { name: name.to_string(), dim: dim.unwrap_or(0), vectors, window: None })
}

// ---------------------------------------------------------------------------
// Category dictionary

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryDictionary {
    pub categories: BTreeMap<u32, String>,
    /// Exact words and wildcard patterns (ending in `*`) to category ids.
    pub entries: BTreeMap<String, BTreeSet<u32>>,
}

impl CategoryDictionary {
    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Categories for a lowercase token. An exact entry wins; otherwise the
    /// longest wildcard prefix that matches.
    pub fn lookup(&self, token: &str) -> Option<&BTreeSet<u32>> {
        if let Some(ids) = self.entries.get(token) {
            return Some(ids);
        }
        // every prefix of `token`, longest first
        token
            .char_indices()
            .map(|(i, c)| &token[..i + c.len_utf8()])
            .rev()
            .find_map(|prefix| self.entries.get(&format!("{prefix}*")))
    }
}

/// Parse a LIWC `.dic` file: a `%`-delimited category block followed by
/// word rows (`pattern<TAB>id<TAB>id...`).
pub fn load_category_dictionary(text: &str) -> Result<CategoryDictionary> {
    let mut dict = CategoryDictionary::default();
    let mut markers = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.trim() == "%" {
            markers += 1;
            continue;
        }
        match markers {
            0 => {
                return Err(IngestError::BadDictionary {
                    line: lineno,
                    message: "content before the opening % marker".into(),
                })
            }
            1 => {
                let mut parts = line.split_whitespace();
                let id = parts.next().and_then(|p| p.parse::<u32>().ok()).ok_or_else(|| {
                    IngestError::BadDictionary { line: lineno, message: "category id is not an integer".into() }
                })?;
                let name = parts.collect::<Vec<_>>().join(" ");
                if name.is_empty() {
                    return Err(IngestError::BadDictionary { line: lineno, message: "category has no name".into() });
                }
                dict.categories.insert(id, name);
            }
            _ => {
                let (word, ids): (String, Vec<&str>) = if line.contains('\t') {
                    let mut parts = line.split('\t');
                    let w = parts.next().unwrap_or("").trim().to_lowercase();
                    (w, parts.flat_map(str::split_whitespace).collect())
                } else {
                    let mut parts = line.split_whitespace();
                    (parts.next().unwrap_or("").to_lowercase(), parts.collect())
                };
                if word.is_empty() {
                    return Err(IngestError::BadDictionary { line: lineno, message: "empty word".into() });
                }
                let slot = dict.entries.entry(word.clone()).or_default();
                for raw_id in ids {
                    let id = raw_id.parse::<u32>().map_err(|_| IngestError::BadDictionary {
                        line: lineno,
                        message: format!("category reference `{raw_id}` is not an integer"),
                    })?;
                    if !dict.categories.contains_key(&id) {
                        return Err(IngestError::UndeclaredCategory { line: lineno, word, id });
                    }
                    slot.insert(id);
                }
            }
        }
    }
    if markers == 1 {
        return Err(IngestError::BadDictionary { line: 0, message: "category block is never closed".into() });
    }
    Ok(dict)
}

//! Canvas reconstruction from the placement log.

use std::io::{BufRead, Write};
use std::path::Path;

use image::ImageEncoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PlacementEvent;
use crate::window::{TimeWindow, Timestamp};

#[derive(Debug, Error)]
pub enum CanvasError {
    #[error("events are not sorted by timestamp (event {index} precedes its predecessor)")]
    Unsorted { index: usize },
    #[error("event {index} at ({x}, {y}) lies outside a {width}x{height} canvas")]
    OutOfBounds { index: usize, x: u16, y: u16, width: u32, height: u32 },
    #[error("palette has no entry for color index {0}")]
    UnmappedColor(u8),
    #[error("palette: {0}")]
    Palette(String),
    #[error("grid dimensions {got} do not match {expected}")]
    DimensionMismatch { expected: String, got: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = CanvasError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    /// Row-major palette indices, `y * width + x`.
    pub cells: Vec<u8>,
    pub as_of: Option<Timestamp>,
}

impl Canvas {
    pub fn blank(width: u32, height: u32, background: u8) -> Self {
        Self { width, height, cells: vec![background; (width * height) as usize], as_of: None }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.cells[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, color: u8) {
        let i = self.index(x, y);
        self.cells[i] = color;
    }

    /// Fraction of cells holding the same color in both canvases.
    pub fn agreement(&self, other: &Canvas) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(CanvasError::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                got: format!("{}x{}", other.width, other.height),
            });
        }
        let same = self.cells.iter().zip(&other.cells).filter(|(a, b)| a == b).count();
        Ok(same as f64 / self.cells.len().max(1) as f64)
    }
}

fn check_bounds(index: usize, e: &PlacementEvent, width: u32, height: u32) -> Result<()> {
    if u32::from(e.x) >= width || u32::from(e.y) >= height {
        return Err(CanvasError::OutOfBounds { index, x: e.x, y: e.y, width, height });
    }
    Ok(())
}

/// Last-writer-wins replay of every event with `ts <= until`.
pub fn replay(
    events: &[PlacementEvent],
    until: Timestamp,
    width: u32,
    height: u32,
    background: u8,
) -> Result<Canvas> {
    let mut canvas = Canvas::blank(width, height, background);
    let mut prev = Timestamp::MIN;
    for (i, e) in events.iter().enumerate() {
        if e.ts < prev {
            return Err(CanvasError::Unsorted { index: i });
        }
        prev = e.ts;
        if e.ts > until {
            break;
        }
        check_bounds(i, e, width, height)?;
        canvas.set(e.x.into(), e.y.into(), e.color);
    }
    canvas.as_of = Some(until);
    Ok(canvas)
}

/// Per-cell placement counts over a closed time window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellActivity {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
    pub window: TimeWindow,
}

impl CellActivity {
    pub fn zeros(width: u32, height: u32, window: TimeWindow) -> Self {
        Self { width, height, counts: vec![0; (width * height) as usize], window }
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.counts[(y * self.width + x) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Cellwise sum. The merged window spans both inputs.
    pub fn merge(&mut self, other: &CellActivity) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(CanvasError::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                got: format!("{}x{}", other.width, other.height),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a = a.saturating_add(*b);
        }
        if self.window.is_empty() {
            self.window = other.window;
        } else if !other.window.is_empty() {
            self.window = TimeWindow::new(self.window.start.min(other.window.start), self.window.end.max(other.window.end));
        }
        Ok(())
    }
}

fn accumulate_slice(
    events: &[PlacementEvent],
    offset: usize,
    window: TimeWindow,
    width: u32,
    height: u32,
) -> Result<CellActivity> {
    let mut act = CellActivity::zeros(width, height, window);
    if window.is_empty() {
        return Ok(act);
    }
    for (i, e) in events.iter().enumerate() {
        if !window.contains(e.ts) {
            continue;
        }
        check_bounds(offset + i, e, width, height)?;
        let idx = (u32::from(e.y) * width + u32::from(e.x)) as usize;
        act.counts[idx] = act.counts[idx].saturating_add(1);
    }
    Ok(act)
}

pub fn accumulate_activity(
    events: &[PlacementEvent],
    window: TimeWindow,
    width: u32,
    height: u32,
) -> Result<CellActivity> {
    accumulate_slice(events, 0, window, width, height)
}

/// Sharded variant: per-chunk grids merged by cellwise addition.
pub fn accumulate_activity_par(
    events: &[PlacementEvent],
    window: TimeWindow,
    width: u32,
    height: u32,
    chunk: usize,
) -> Result<CellActivity> {
    let chunk = chunk.max(1);
    let parts = events
        .par_chunks(chunk)
        .enumerate()
        .map(|(i, part)| accumulate_slice(part, i * chunk, window, width, height))
        .collect::<Result<Vec<_>>>()?;
    let mut total = CellActivity::zeros(width, height, window);
    for p in &parts {
        for (a, b) in total.counts.iter_mut().zip(&p.counts) {
            *a = a.saturating_add(*b);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Palette and snapshots

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
    /// Index of the background ("white") entry.
    pub background: u8,
}

impl Palette {
    /// The 2017 palette in the order of the public placement dump.
    pub fn place_2017() -> Self {
        const HEX: [u32; 16] = [
            0xFFFFFF, 0xE4E4E4, 0x888888, 0x222222, 0xFFA7D1, 0xE50000, 0xE59500, 0xA06A42, 0xE5D900, 0x94E044,
            0x02BE01, 0x00D3DD, 0x0083C7, 0x0000EA, 0xCF6EE4, 0x820080,
        ];
        let colors = HEX.iter().map(|h| [(h >> 16) as u8, (h >> 8) as u8, *h as u8]).collect();
        Self { colors, background: 0 }
    }

    pub fn rgb(&self, index: u8) -> Result<[u8; 3]> {
        self.colors.get(index as usize).copied().ok_or(CanvasError::UnmappedColor(index))
    }

    /// Reverse lookup; exact RGB match only.
    pub fn index_of(&self, rgb: [u8; 3]) -> Option<u8> {
        self.colors.iter().position(|c| *c == rgb).map(|i| i as u8)
    }
}

/// CSV `index,r,g,b` (optionally a trailing `name` column). The background
/// is the entry named `white`, else the first pure-white entry.
pub fn load_palette<R: BufRead>(reader: R) -> Result<Palette> {
    let mut rows: Vec<(usize, [u8; 3], Option<String>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields.first().is_some_and(|f| f.parse::<usize>().is_err()) {
            continue; // header
        }
        if fields.len() < 4 {
            return Err(CanvasError::Palette(format!("line {}: expected index,r,g,b", i + 1)));
        }
        let bad = |what: &str| CanvasError::Palette(format!("line {}: bad {what}", i + 1));
        let idx = fields[0].parse::<usize>().map_err(|_| bad("index"))?;
        let mut rgb = [0u8; 3];
        for (k, slot) in rgb.iter_mut().enumerate() {
            *slot = fields[k + 1].parse::<u8>().map_err(|_| bad("channel"))?;
        }
        let name = fields.get(4).map(|s| s.to_ascii_lowercase()).filter(|s| !s.is_empty());
        rows.push((idx, rgb, name));
    }
    if rows.is_empty() || rows.len() > 256 {
        return Err(CanvasError::Palette(format!("expected 1..=256 entries, found {}", rows.len())));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(CanvasError::Palette("indices must be 0..n without gaps".into()));
    }
    let background = rows
        .iter()
        .find(|r| r.2.as_deref() == Some("white"))
        .or_else(|| rows.iter().find(|r| r.1 == [255, 255, 255]))
        .map(|r| r.0 as u8)
        .ok_or_else(|| CanvasError::Palette("no white entry to use as background".into()))?;
    Ok(Palette { colors: rows.into_iter().map(|r| r.1).collect(), background })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotFormat {
    Png,
    Ppm,
}

impl SnapshotFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ppm") => SnapshotFormat::Ppm,
            _ => SnapshotFormat::Png,
        }
    }
}

pub fn to_rgb(canvas: &Canvas, palette: &Palette) -> Result<Vec<u8>> {
    let mut lut = [None; 256];
    for (i, c) in palette.colors.iter().enumerate() {
        lut[i] = Some(*c);
    }
    let mut out = Vec::with_capacity(canvas.cells.len() * 3);
    for &c in &canvas.cells {
        out.extend_from_slice(&lut[c as usize].ok_or(CanvasError::UnmappedColor(c))?);
    }
    Ok(out)
}

/// Encode a snapshot as PNG or binary PPM (P6).
pub fn encode_snapshot<W: Write>(canvas: &Canvas, palette: &Palette, format: SnapshotFormat, mut out: W) -> Result<()> {
    let rgb = to_rgb(canvas, palette)?;
    match format {
        SnapshotFormat::Ppm => {
            write!(out, "P6\n{} {}\n255\n", canvas.width, canvas.height)?;
            out.write_all(&rgb)?;
        }
        SnapshotFormat::Png => {
            let mut buf = Vec::new();
            image::codecs::png::PngEncoder::new(&mut buf).write_image(
                &rgb,
                canvas.width,
                canvas.height,
                image::ExtendedColorType::Rgb8,
            )?;
            out.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn export_snapshot(canvas: &Canvas, palette: &Palette, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    encode_snapshot(canvas, palette, SnapshotFormat::from_path(path), file)
}

/// Decode a reference image back to palette indices. Pixels whose color is
/// not in the palette map to `None`.
pub fn decode_reference(path: &Path, palette: &Palette) -> Result<(u32, u32, Vec<Option<u8>>)> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let cells = img.pixels().map(|p| palette.index_of(p.0)).collect();
    Ok((w, h, cells))
}

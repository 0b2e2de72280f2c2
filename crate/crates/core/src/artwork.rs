//! Artwork masks and the four per-artwork measurements: pixel count,
//! Manhattan diameter, color entropy and location popularity.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{Canvas, CellActivity};
use crate::ingest::{AtlasEntry, Vertex};

#[derive(Debug, Error)]
pub enum ArtworkError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("polygons cover no canvas cell")]
    Degenerate,
    #[error("pixel ({x}, {y}) lies outside a {width}x{height} grid")]
    OutsideGrid { x: u32, y: u32, width: u32, height: u32 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = ArtworkError> = std::result::Result<T, E>;

/// A set of canvas cells, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    pixels: Vec<(u32, u32)>,
}

impl PixelMask {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pixels.iter().copied()
    }

    pub fn contains(&self, p: (u32, u32)) -> bool {
        self.pixels.binary_search(&p).is_ok()
    }

    pub fn union(&self, other: &PixelMask) -> PixelMask {
        self.iter().chain(other.iter()).collect()
    }
}

impl FromIterator<(u32, u32)> for PixelMask {
    fn from_iter<I: IntoIterator<Item = (u32, u32)>>(iter: I) -> Self {
        let mut pixels: Vec<_> = iter.into_iter().collect();
        pixels.sort_unstable();
        pixels.dedup();
        Self { pixels }
    }
}

const EPS: f64 = 1e-9;

fn near_integer(v: f64) -> Option<i64> {
    let r = v.round();
    ((v - r).abs() <= EPS).then_some(r as i64)
}

/// Even-odd scanline fill of one polygon sampled at integer coordinates,
/// plus every integer point lying on an edge.
fn rasterize_polygon(poly: &[Vertex], width: u32, height: u32, out: &mut Vec<(u32, u32)>) {
    let n = poly.len();
    if n < 3 {
        return;
    }
    let in_grid = |x: i64, y: i64| x >= 0 && y >= 0 && x < width as i64 && y < height as i64;
    let (min_y, max_y) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.1), hi.max(v.1)));
    let row_lo = (min_y - EPS).ceil().max(0.0) as i64;
    let row_hi = (max_y + EPS).floor().min(height as f64 - 1.0) as i64;

    let edges = || (0..n).map(move |i| (poly[i], poly[(i + 1) % n]));

    let mut crossings = Vec::new();
    for row in row_lo..=row_hi {
        let y = row as f64;
        crossings.clear();
        for (p, q) in edges() {
            if (p.1 <= y && y < q.1) || (q.1 <= y && y < p.1) {
                crossings.push(p.0 + (y - p.1) * (q.0 - p.0) / (q.1 - p.1));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let x0 = ((pair[0] - EPS).ceil().max(0.0)) as i64;
            let x1 = ((pair[1] + EPS).floor().min(width as f64 - 1.0)) as i64;
            for x in x0..=x1 {
                out.push((x as u32, row as u32));
            }
        }
    }

    for (p, q) in edges() {
        if p.1 == q.1 {
            if let Some(row) = near_integer(p.1) {
                let lo = (p.0.min(q.0) - EPS).ceil() as i64;
                let hi = (p.0.max(q.0) + EPS).floor() as i64;
                for x in lo.max(0)..=hi.min(width as i64 - 1) {
                    if in_grid(x, row) {
                        out.push((x as u32, row as u32));
                    }
                }
            }
            continue;
        }
        let lo = (p.1.min(q.1) - EPS).ceil().max(0.0) as i64;
        let hi = (p.1.max(q.1) + EPS).floor().min(height as f64 - 1.0) as i64;
        for row in lo..=hi {
            let y = row as f64;
            let x = p.0 + (y - p.1) * (q.0 - p.0) / (q.1 - p.1);
            if let Some(xi) = near_integer(x) {
                if in_grid(xi, row) {
                    out.push((xi as u32, row as u32));
                }
            }
        }
    }
}

/// Union over polygons of the integer cells inside each polygon under the
/// even-odd rule, boundary included, clipped to the grid.
pub fn rasterize(polygons: &[Vec<Vertex>], width: u32, height: u32) -> Result<PixelMask> {
    let mut cells = Vec::new();
    for poly in polygons {
        rasterize_polygon(poly, width, height, &mut cells);
    }
    let mask: PixelMask = cells.into_iter().collect();
    if mask.is_empty() {
        return Err(ArtworkError::Degenerate);
    }
    Ok(mask)
}

/// Maximum L1 distance between two mask pixels, from the extrema of
/// `x + y` and `x - y`.
pub fn manhattan_diameter(mask: &PixelMask) -> Result<u32> {
    if mask.is_empty() {
        return Err(ArtworkError::EmptyMask);
    }
    let (mut s_lo, mut s_hi, mut d_lo, mut d_hi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for (x, y) in mask.iter() {
        let (x, y) = (x as i64, y as i64);
        s_lo = s_lo.min(x + y);
        s_hi = s_hi.max(x + y);
        d_lo = d_lo.min(x - y);
        d_hi = d_hi.max(x - y);
    }
    Ok((s_hi - s_lo).max(d_hi - d_lo) as u32)
}

fn check_grid(mask: &PixelMask, width: u32, height: u32) -> Result<()> {
    match mask.iter().find(|&(x, y)| x >= width || y >= height) {
        Some((x, y)) => Err(ArtworkError::OutsideGrid { x, y, width, height }),
        None => Ok(()),
    }
}

/// Shannon entropy of the mask's color distribution, in the given log base.
pub fn color_entropy_base(mask: &PixelMask, canvas: &Canvas, base: f64) -> Result<f64> {
    if mask.is_empty() {
        return Err(ArtworkError::EmptyMask);
    }
    check_grid(mask, canvas.width, canvas.height)?;
    let mut counts = [0u64; 256];
    for (x, y) in mask.iter() {
        counts[canvas.get(x, y) as usize] += 1;
    }
    // summing in count order makes equal distributions bit-identical
    // whichever colors they use
    let mut present: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    present.sort_unstable();
    let n = mask.len() as f64;
    let h: f64 = present
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok((h / base.ln()).max(0.0))
}

/// Entropy in bits.
pub fn color_entropy(mask: &PixelMask, canvas: &Canvas) -> Result<f64> {
    color_entropy_base(mask, canvas, 2.0)
}

/// Total placements over the mask divided by its size.
pub fn location_popularity(mask: &PixelMask, activity: &CellActivity) -> Result<f64> {
    if mask.is_empty() {
        return Err(ArtworkError::EmptyMask);
    }
    check_grid(mask, activity.width, activity.height)?;
    let total: u64 = mask.iter().map(|(x, y)| u64::from(activity.get(x, y))).sum();
    Ok(total as f64 / mask.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtworkMetrics {
    pub pixel_count: u64,
    pub diameter: u32,
    pub entropy: f64,
    pub popularity: f64,
}

pub fn measure_mask(mask: &PixelMask, canvas: &Canvas, activity: &CellActivity) -> Result<ArtworkMetrics> {
    Ok(ArtworkMetrics {
        pixel_count: mask.len() as u64,
        diameter: manhattan_diameter(mask)?,
        entropy: color_entropy(mask, canvas)?,
        popularity: location_popularity(mask, activity)?,
    })
}

pub fn measure(entry: &AtlasEntry, canvas: &Canvas, activity: &CellActivity) -> Result<ArtworkMetrics> {
    let mask = rasterize(&entry.polygons, canvas.width, canvas.height)?;
    measure_mask(&mask, canvas, activity)
}

/// Union mask per community over every atlas entry linking to it. Entries
/// that rasterize to nothing are reported and ignored.
pub fn community_masks(entries: &[AtlasEntry], width: u32, height: u32) -> (BTreeMap<String, PixelMask>, Vec<String>) {
    let rasters: Vec<_> = entries
        .par_iter()
        .filter(|e| !e.subreddits.is_empty())
        .map(|e| (e, rasterize(&e.polygons, width, height)))
        .collect();
    let mut masks: BTreeMap<String, PixelMask> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (entry, raster) in rasters {
        match raster {
            Ok(mask) => {
                for sub in &entry.subreddits {
                    let merged = match masks.get(sub) {
                        Some(prev) => prev.union(&mask),
                        None => mask.clone(),
                    };
                    masks.insert(sub.clone(), merged);
                }
            }
            Err(e) => warnings.push(format!("atlas entry {}: {e}", entry.id)),
        }
    }
    (masks, warnings)
}

pub fn measure_communities(
    masks: &BTreeMap<String, PixelMask>,
    canvas: &Canvas,
    activity: &CellActivity,
) -> Result<BTreeMap<String, ArtworkMetrics>> {
    masks
        .par_iter()
        .map(|(name, mask)| Ok((name.clone(), measure_mask(mask, canvas, activity)?)))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().collect())
}

pub fn write_metrics_csv<W: Write>(metrics: &BTreeMap<String, ArtworkMetrics>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["community", "pixel_count", "diameter", "entropy", "popularity"])?;
    for (name, m) in metrics {
        w.write_record([
            name.clone(),
            m.pixel_count.to_string(),
            m.diameter.to_string(),
            m.entropy.to_string(),
            m.popularity.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<BTreeMap<String, ArtworkMetrics>> {
    #[derive(Deserialize)]
    struct Row {
        community: String,
        pixel_count: u64,
        diameter: u32,
        entropy: f64,
        popularity: f64,
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(input).deserialize::<Row>() {
        let r = row?;
        out.insert(
            r.community,
            ArtworkMetrics { pixel_count: r.pixel_count, diameter: r.diameter, entropy: r.entropy, popularity: r.popularity },
        );
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent point-in-polygon oracle: exact on-segment test plus
    /// crossing-number parity.
    fn brute_force(polys: &[Vec<Vertex>], width: u32, height: u32) -> PixelMask {
        let on_segment = |p: Vertex, a: Vertex, b: Vertex| {
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            cross.abs() < 1e-9
                && p.0 >= a.0.min(b.0) - 1e-9
                && p.0 <= a.0.max(b.0) + 1e-9
                && p.1 >= a.1.min(b.1) - 1e-9
                && p.1 <= a.1.max(b.1) + 1e-9
        };
        let inside = |p: Vertex, poly: &[Vertex]| {
            let mut c = false;
            let n = poly.len();
            let mut j = n - 1;
            for i in 0..n {
                let (xi, yi) = poly[i];
                let (xj, yj) = poly[j];
                if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
                    c = !c;
                }
                j = i;
            }
            c
        };
        let mut out = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let p = (x as f64, y as f64);
                let hit = polys.iter().any(|poly| {
                    (0..poly.len()).any(|i| on_segment(p, poly[i], poly[(i + 1) % poly.len()])) || inside(p, poly)
                });
                if hit {
                    out.push((x, y));
                }
            }
        }
        out.into_iter().collect()
    }

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Vertex> {
        vec![(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]
    }

    #[test]
    fn square_is_five_by_five() {
        let polys = vec![square(0.0, 0.0, 4.0)];
        let mask = rasterize(&polys, 20, 20).unwrap();
        assert_eq!(mask.len(), 25);
        assert_eq!(mask, brute_force(&polys, 20, 20));
    }

    #[test]
    fn disjoint_squares_sum() {
        let polys = vec![square(0.0, 0.0, 1.0), square(5.0, 5.0, 1.0)];
        let mask = rasterize(&polys, 20, 20).unwrap();
        assert_eq!(mask.len(), 8);
    }

    #[test]
    fn bowtie_even_odd() {
        let polys = vec![vec![(0.0, 0.0), (6.0, 6.0), (6.0, 0.0), (0.0, 6.0)]];
        let mask = rasterize(&polys, 10, 10).unwrap();
        assert_eq!(mask, brute_force(&polys, 10, 10));
        // the crossing point belongs to both wings' boundaries
        assert!(mask.contains((3, 3)));
        // the wings are left and right of the crossing; above it is outside
        assert!(mask.contains((1, 3)) && !mask.contains((3, 1)));
    }

    #[test]
    fn clipped_to_nothing_is_degenerate() {
        let polys = vec![square(-20.0, -20.0, 5.0)];
        assert!(matches!(rasterize(&polys, 10, 10), Err(ArtworkError::Degenerate)));
    }

    #[test]
    fn diameter_examples() {
        let one: PixelMask = [(3, 3)].into_iter().collect();
        assert_eq!(manhattan_diameter(&one).unwrap(), 0);
        let two: PixelMask = [(0, 0), (3, 4)].into_iter().collect();
        assert_eq!(manhattan_diameter(&two).unwrap(), 7);
        assert!(matches!(manhattan_diameter(&PixelMask::default()), Err(ArtworkError::EmptyMask)));
    }

    #[test]
    fn toy_artworks() {
        let [a, b, c, d] = toys::all();
        for (_, m) in [a, b, c, d] {
            assert_eq!(m.pixel_count, 28);
        }
        assert_eq!(a.1.diameter, 8);
        assert_eq!(c.1.diameter, 14);
        assert_eq!(a.1.entropy, 0.0);
        assert!((b.1.entropy - 1.0).abs() < 1e-12);
        assert!(b.1.entropy > a.1.entropy);
        assert_eq!(a.1.popularity, 1.0);
        assert!((d.1.popularity - 34.0 / 28.0).abs() < 1e-12);
    }

    #[test]
    fn single_pixel_measure() {
        let entry = AtlasEntry {
            id: "1".into(),
            name: "dot".into(),
            subreddits: vec!["x".into()],
            polygons: vec![vec![(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)]],
        };
        let canvas = Canvas::blank(5, 5, 0);
        let mut act = CellActivity::zeros(5, 5, crate::window::TimeWindow::unbounded());
        act.counts[2 * 5 + 2] = 4;
        let m = measure(&entry, &canvas, &act).unwrap();
        assert_eq!((m.pixel_count, m.diameter, m.entropy, m.popularity), (1, 0, 0.0, 4.0));
    }

    #[test]
    fn community_union() {
        let entry = |id: &str, subs: &[&str], p: Vec<Vertex>| AtlasEntry {
            id: id.into(),
            name: id.into(),
            subreddits: subs.iter().map(|s| s.to_string()).collect(),
            polygons: vec![p],
        };
        let entries = vec![
            entry("1", &["a"], square(0.0, 0.0, 1.0)),
            entry("2", &["a", "b"], square(1.0, 0.0, 1.0)),
            entry("3", &[], square(5.0, 5.0, 1.0)),
        ];
        let (masks, warnings) = community_masks(&entries, 10, 10);
        assert!(warnings.is_empty());
        assert_eq!(masks["a"].len(), 6);
        assert_eq!(masks["b"].len(), 4);
        assert_eq!(masks.len(), 2);
    }

    fn mask_strategy(max: usize) -> impl Strategy<Value = PixelMask> {
        proptest::collection::vec((0u32..40, 0u32..40), 1..max).prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn rasterize_matches_brute_force(
            pts in proptest::collection::vec((-3i32..25, -3i32..25), 3..8)
        ) {
            let poly: Vec<Vertex> = pts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
            let polys = vec![poly];
            let expected = brute_force(&polys, 22, 22);
            match rasterize(&polys, 22, 22) {
                Ok(mask) => prop_assert_eq!(mask, expected),
                Err(_) => prop_assert!(expected.is_empty()),
            }
        }

        #[test]
        fn diameter_matches_pairwise(mask in mask_strategy(500)) {
            let pts: Vec<_> = mask.iter().collect();
            let mut best = 0i64;
            for a in &pts {
                for b in &pts {
                    best = best.max((a.0 as i64 - b.0 as i64).abs() + (a.1 as i64 - b.1 as i64).abs());
                }
            }
            prop_assert_eq!(manhattan_diameter(&mask).unwrap() as i64, best);
        }

        #[test]
        fn entropy_bounded_and_translation_invariant(
            mask in mask_strategy(200), colors in proptest::collection::vec(0u8..16, 200), dx in 0u32..20, dy in 0u32..20
        ) {
            let mut canvas = Canvas::blank(64, 64, 0);
            let mut shifted_canvas = Canvas::blank(64, 64, 0);
            for (i, (x, y)) in mask.iter().enumerate() {
                canvas.set(x, y, colors[i]);
                shifted_canvas.set(x + dx, y + dy, colors[i]);
            }
            let shifted: PixelMask = mask.iter().map(|(x, y)| (x + dx, y + dy)).collect();
            let h = color_entropy(&mask, &canvas).unwrap();
            prop_assert!((0.0..=4.0 + 1e-12).contains(&h));
            prop_assert_eq!(color_entropy(&shifted, &shifted_canvas).unwrap(), h);
            prop_assert_eq!(manhattan_diameter(&shifted).unwrap(), manhattan_diameter(&mask).unwrap());
            prop_assert_eq!(shifted.len(), mask.len());
        }

        #[test]
        fn entropy_ignores_which_colors(mask in mask_strategy(200), colors in proptest::collection::vec(0u8..16, 200), shift in 1u8..16) {
            let mut canvas = Canvas::blank(64, 64, 0);
            let mut relabeled = Canvas::blank(64, 64, 0);
            for (i, (x, y)) in mask.iter().enumerate() {
                canvas.set(x, y, colors[i]);
                relabeled.set(x, y, (colors[i] + shift) % 16);
            }
            prop_assert_eq!(color_entropy(&mask, &relabeled).unwrap().to_bits(), color_entropy(&mask, &canvas).unwrap().to_bits());
        }

        #[test]
        fn popularity_scales(mask in mask_strategy(100), counts in proptest::collection::vec(0u32..1000, 1600)) {
            let a = CellActivity { width: 40, height: 40, counts: counts.clone(), window: crate::window::TimeWindow::unbounded() };
            let doubled = CellActivity { counts: counts.iter().map(|c| c * 2).collect(), ..a.clone() };
            let p = location_popularity(&mask, &a).unwrap();
            prop_assert!((location_popularity(&mask, &doubled).unwrap() - 2.0 * p).abs() <= 1e-9 * p.max(1.0));
        }
    }
}

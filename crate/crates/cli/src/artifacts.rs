//! Binary encodings of the large intermediate artifacts.
//!
//! Placements are fixed 17-byte little-endian records
//! (`ts:i64 user:u32 x:u16 y:u16 color:u8`) after a 16-byte header. Canvas
//! and activity grids carry their dimensions (and window) in the header.

use placelab::canvas::{Canvas, CellActivity};
use placelab::ingest::PlacementEvent;
use placelab::window::TimeWindow;

pub const PLACEMENTS_MAGIC: &[u8; 8] = b"PLPLACE1";
pub const CANVAS_MAGIC: &[u8; 8] = b"PLCANVS1";
pub const ACTIVITY_MAGIC: &[u8; 8] = b"PLACTIV1";
pub const RECORD_LEN: usize = 17;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic, expected {0}")]
    Magic(&'static str),
    #[error("truncated: {0}")]
    Truncated(&'static str),
    #[error("length mismatch: header says {expected} bytes, found {got}")]
    Length { expected: u64, got: u64 },
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
    if buf.len() < n {
        return Err(DecodeError::Truncated(what));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn u32_at(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn i64_at(b: &[u8]) -> i64 {
    i64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn expect_magic(buf: &mut &[u8], magic: &[u8; 8], name: &'static str) -> Result<(), DecodeError> {
    if take(buf, 8, "magic")? != magic {
        return Err(DecodeError::Magic(name));
    }
    Ok(())
}

pub fn encode_placements(events: &[PlacementEvent]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + events.len() * RECORD_LEN);
    out.extend_from_slice(PLACEMENTS_MAGIC);
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    for e in events {
        out.extend_from_slice(&e.ts.to_le_bytes());
        out.extend_from_slice(&e.user.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.color);
    }
    out
}

pub fn decode_placements(mut buf: &[u8]) -> Result<Vec<PlacementEvent>, DecodeError> {
    expect_magic(&mut buf, PLACEMENTS_MAGIC, "placements")?;
    let n = u64::from_le_bytes(take(&mut buf, 8, "record count")?.try_into().expect("8 bytes"));
    let expected = n.checked_mul(RECORD_LEN as u64).ok_or(DecodeError::Truncated("record count overflows"))?;
    if expected != buf.len() as u64 {
        return Err(DecodeError::Length { expected, got: buf.len() as u64 });
    }
    Ok(buf
        .chunks_exact(RECORD_LEN)
        .map(|r| PlacementEvent {
            ts: i64_at(&r[0..8]),
            user: u32_at(&r[8..12]),
            x: u16::from_le_bytes([r[12], r[13]]),
            y: u16::from_le_bytes([r[14], r[15]]),
            color: r[16],
        })
        .collect())
}

pub fn encode_canvas(canvas: &Canvas) -> Vec<u8> {
    let mut out = Vec::with_capacity(25 + canvas.cells.len());
    out.extend_from_slice(CANVAS_MAGIC);
    out.extend_from_slice(&canvas.width.to_le_bytes());
    out.extend_from_slice(&canvas.height.to_le_bytes());
    match canvas.as_of {
        Some(ts) => {
            out.push(1);
            out.extend_from_slice(&ts.to_le_bytes());
        }
        None => {
            out.push(0);
            out.extend_from_slice(&0i64.to_le_bytes());
        }
    }
    out.extend_from_slice(&canvas.cells);
    out
}

fn grid_len(width: u32, height: u32, cell: u64) -> Result<u64, DecodeError> {
    u64::from(width).checked_mul(u64::from(height)).and_then(|n| n.checked_mul(cell)).ok_or(DecodeError::Truncated("grid size overflows"))
}

pub fn decode_canvas(mut buf: &[u8]) -> Result<Canvas, DecodeError> {
    expect_magic(&mut buf, CANVAS_MAGIC, "canvas")?;
    let width = u32_at(take(&mut buf, 4, "width")?);
    let height = u32_at(take(&mut buf, 4, "height")?);
    let has_ts = take(&mut buf, 1, "timestamp flag")?[0] != 0;
    let ts = i64_at(take(&mut buf, 8, "timestamp")?);
    let expected = grid_len(width, height, 1)?;
    if expected != buf.len() as u64 {
        return Err(DecodeError::Length { expected, got: buf.len() as u64 });
    }
    Ok(Canvas { width, height, cells: buf.to_vec(), as_of: has_ts.then_some(ts) })
}

pub fn encode_activity(act: &CellActivity) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + act.counts.len() * 4);
    out.extend_from_slice(ACTIVITY_MAGIC);
    out.extend_from_slice(&act.width.to_le_bytes());
    out.extend_from_slice(&act.height.to_le_bytes());
    out.extend_from_slice(&act.window.start.to_le_bytes());
    out.extend_from_slice(&act.window.end.to_le_bytes());
    for c in &act.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_activity(mut buf: &[u8]) -> Result<CellActivity, DecodeError> {
    expect_magic(&mut buf, ACTIVITY_MAGIC, "activity")?;
    let width = u32_at(take(&mut buf, 4, "width")?);
    let height = u32_at(take(&mut buf, 4, "height")?);
    let start = i64_at(take(&mut buf, 8, "window start")?);
    let end = i64_at(take(&mut buf, 8, "window end")?);
    let expected = grid_len(width, height, 4)?;
    if expected != buf.len() as u64 {
        return Err(DecodeError::Length { expected, got: buf.len() as u64 });
    }
    Ok(CellActivity { width, height, counts: buf.chunks_exact(4).map(u32_at).collect(), window: TimeWindow::new(start, end) })
}

//! Time windows over millisecond timestamps.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Milliseconds since the Unix epoch.
pub type Timestamp = i64;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_HOUR: i64 = 3_600 * MS_PER_SECOND;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

/// First placement of the public 2017 log (2017-03-31T17:00:00Z).
pub const EXPERIMENT_START: Timestamp = 1_490_979_600_000;
/// The canvas stayed open for 72 hours.
pub const EXPERIMENT_DURATION: i64 = 72 * MS_PER_HOUR;
/// "Before" window length.
pub const BEFORE_DURATION: i64 = 90 * MS_PER_DAY;
/// Community age is counted back from 2017-03-31T00:00:00Z.
pub const AGE_ANCHOR: Timestamp = 1_490_918_400_000;

/// Closed interval `[start, end]`; empty when `start > end`.
///
/// Timestamps are integral, so `(b, c]` is `[b + 1, c]` and adjacent
/// windows compose without gaps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub const fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub const fn unbounded() -> Self {
        Self { start: i64::MIN, end: i64::MAX }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        !self.is_empty() && !other.is_empty() && self.start <= other.end && other.start <= self.end
    }

    /// Length in days, counting the inclusive end millisecond.
    pub fn days(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            ((self.end as f64) - (self.start as f64) + 1.0) / MS_PER_DAY as f64
        }
    }

    /// Three months preceding the experiment.
    pub const fn before_place() -> Self {
        Self::new(EXPERIMENT_START - BEFORE_DURATION, EXPERIMENT_START - 1)
    }

    /// The 72 hours of the experiment.
    pub const fn during_place() -> Self {
        Self::new(EXPERIMENT_START, EXPERIMENT_START + EXPERIMENT_DURATION - 1)
    }
}

/// Which community-representation window a feature set belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Bp,
    Dp,
}

impl WindowKind {
    pub const ALL: [WindowKind; 2] = [WindowKind::Bp, WindowKind::Dp];

    pub fn as_str(&self) -> &'static str {
        match self {
            WindowKind::Bp => "bp",
            WindowKind::Dp => "dp",
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bp" => Ok(WindowKind::Bp),
            "dp" => Ok(WindowKind::Dp),
            other => Err(format!("unknown window `{other}` (expected bp or dp)")),
        }
    }
}

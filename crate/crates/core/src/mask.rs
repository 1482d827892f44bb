//! Run-length encoded region masks over a row-major grid.
//!
//! A mask stores sorted, non-overlapping `(start, len)` runs of cell indices
//! in `[0, width * height)`. All set operations work directly on the run
//! lists; masks are never decoded to dense bitmaps outside of tests.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("grid must be non-zero, got {width}x{height}")]
    ZeroGrid { width: u32, height: u32 },
    #[error("run {index} has zero length")]
    EmptyRun { index: usize },
    #[error("run {index} ({start}+{len}) exceeds grid of {cells} cells")]
    OutOfBounds {
        index: usize,
        start: u64,
        len: u64,
        cells: u64,
    },
    #[error("run {index} starts at {start}, before the end {prev_end} of the previous run")]
    OverlapsOrUnsorted {
        index: usize,
        start: u64,
        prev_end: u64,
    },
    #[error("grid mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    GridMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },
}

/// Maximal horizontal span of set cells: row `y`, columns `x0..x1` (exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSpan {
    pub y: u32,
    pub x0: u32,
    pub x1: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    width: u32,
    height: u32,
    // Sorted by start, pairwise disjoint, adjacent runs merged.
    runs: Vec<(u64, u64)>,
}

impl RegionMask {
    /// Builds a mask from `(start, len)` runs, validating bounds and order.
    /// Adjacent runs are merged so equal cell sets compare equal.
    pub fn new(width: u32, height: u32, runs: Vec<(u64, u64)>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::ZeroGrid { width, height });
        }
        let cells = width as u64 * height as u64;
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(runs.len());
        for (index, &(start, len)) in runs.iter().enumerate() {
            if len == 0 {
                return Err(MaskError::EmptyRun { index });
            }
            if start >= cells || cells - start < len {
                return Err(MaskError::OutOfBounds {
                    index,
                    start,
                    len,
                    cells,
                });
            }
            match merged.last_mut() {
                Some(prev) if start < prev.0 + prev.1 => {
                    return Err(MaskError::OverlapsOrUnsorted {
                        index,
                        start,
                        prev_end: prev.0 + prev.1,
                    });
                }
                Some(prev) if start == prev.0 + prev.1 => prev.1 += len,
                _ => merged.push((start, len)),
            }
        }
        Ok(Self {
            width,
            height,
            runs: merged,
        })
    }

    /// Builds a mask from an unsorted cell index list (duplicates allowed).
    pub fn from_cells(width: u32, height: u32, cells: &[u64]) -> Result<Self, MaskError> {
        let mut sorted = cells.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for &c in &sorted {
            match runs.last_mut() {
                Some(run) if run.0 + run.1 == c => run.1 += 1,
                _ => runs.push((c, 1)),
            }
        }
        Self::new(width, height, runs)
    }

    /// Axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self, MaskError> {
        let mut runs = Vec::with_capacity(h as usize);
        for y in y0..y0 + h {
            runs.push((y as u64 * width as u64 + x0 as u64, w as u64));
        }
        Self::new(width, height, runs)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn grid(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn runs(&self) -> &[(u64, u64)] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Number of set cells.
    pub fn area(&self) -> u64 {
        self.runs.iter().map(|&(_, len)| len).sum()
    }

    /// Set cell indices in ascending order.
    pub fn cells(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|&(start, len)| start..start + len)
    }

    /// Runs split at row boundaries, in row-major order.
    pub fn row_spans(&self) -> Vec<RowSpan> {
        let w = self.width as u64;
        let mut spans = Vec::with_capacity(self.runs.len());
        for &(start, len) in &self.runs {
            let mut pos = start;
            let mut left = len;
            while left > 0 {
                let y = pos / w;
                let x0 = pos % w;
                let take = left.min(w - x0);
                spans.push(RowSpan {
                    y: y as u32,
                    x0: x0 as u32,
                    x1: (x0 + take) as u32,
                });
                pos += take;
                left -= take;
            }
        }
        spans
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`, or `None` if empty.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let spans = self.row_spans();
        let first = spans.first()?;
        let last = spans.last().unwrap();
        let (mut x0, mut x1) = (first.x0, first.x1 - 1);
        for s in &spans {
            x0 = x0.min(s.x0);
            x1 = x1.max(s.x1 - 1);
        }
        Some((x0, first.y, x1, last.y))
    }

    fn check_grid(&self, other: &Self) -> Result<(), MaskError> {
        if self.grid() != other.grid() {
            return Err(MaskError::GridMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            });
        }
        Ok(())
    }

    /// Cells set in both masks, by merge-scanning the two run lists.
    pub fn intersection_area(&self, other: &Self) -> Result<u64, MaskError> {
        self.check_grid(other)?;
        Ok(intersect_runs(&self.runs, &other.runs))
    }

    pub fn intersects(&self, other: &Self) -> Result<bool, MaskError> {
        self.check_grid(other)?;
        Ok(runs_intersect(&self.runs, &other.runs))
    }

    /// True when some cell of `self` and some cell of `other` lie within
    /// Manhattan distance `dist`. Equivalent to dilating both masks by
    /// `d` cells in 4-connectivity (with `dist = 2 * d`) and testing
    /// intersection: an L1-geodesic between two cells stays inside their
    /// bounding rectangle, so grid clamping never breaks the equivalence.
    pub fn within_l1(&self, other: &Self, dist: u64) -> Result<bool, MaskError> {
        self.check_grid(other)?;
        if self.is_empty() || other.is_empty() {
            return Ok(false);
        }
        if let (Some(a), Some(b)) = (self.bounding_box(), other.bounding_box()) {
            if box_l1_gap(a, b) > dist {
                return Ok(false);
            }
        }
        Ok(spans_within_l1(&self.row_spans(), &other.row_spans(), dist))
    }
}

/// Core of [`RegionMask::within_l1`] on precomputed span lists, so bulk
/// callers can reuse allocations.
pub(crate) fn spans_within_l1(sa: &[RowSpan], sb: &[RowSpan], dist: u64) -> bool {
    let mut lo = 0usize;
    for a in sa {
        while lo < sb.len() && (sb[lo].y as u64) + dist < a.y as u64 {
            lo += 1;
        }
        for b in &sb[lo..] {
            let dy = (b.y as u64).abs_diff(a.y as u64);
            if dy > dist {
                break;
            }
            let dx = span_gap(a.x0, a.x1, b.x0, b.x1);
            if dy + dx <= dist {
                return true;
            }
        }
    }
    false
}

/// Minimal column distance between cells of `[ax0, ax1)` and `[bx0, bx1)`.
fn span_gap(ax0: u32, ax1: u32, bx0: u32, bx1: u32) -> u64 {
    if ax1 <= bx0 {
        (bx0 - ax1) as u64 + 1
    } else if bx1 <= ax0 {
        (ax0 - bx1) as u64 + 1
    } else {
        0
    }
}

/// Minimal L1 distance between two inclusive boxes (0 when they touch).
pub(crate) fn box_l1_gap(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32)) -> u64 {
    let dx = if a.2 < b.0 {
        (b.0 - a.2) as u64
    } else if b.2 < a.0 {
        (a.0 - b.2) as u64
    } else {
        0
    };
    let dy = if a.3 < b.1 {
        (b.1 - a.3) as u64
    } else if b.3 < a.1 {
        (a.1 - b.3) as u64
    } else {
        0
    };
    dx + dy
}

fn intersect_runs(a: &[(u64, u64)], b: &[(u64, u64)]) -> u64 {
    let (mut i, mut j) = (0, 0);
    let mut total = 0;
    while i < a.len() && j < b.len() {
        let (sa, la) = a[i];
        let (sb, lb) = b[j];
        let lo = sa.max(sb);
        let hi = (sa + la).min(sb + lb);
        if lo < hi {
            total += hi - lo;
        }
        if sa + la <= sb + lb {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

pub(crate) fn runs_intersect(a: &[(u64, u64)], b: &[(u64, u64)]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (sa, la) = a[i];
        let (sb, lb) = b[j];
        if sa.max(sb) < (sa + la).min(sb + lb) {
            return true;
        }
        if sa + la <= sb + lb {
            i += 1;
        } else {
            j += 1;
        }
    }
    false
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::{OpenIntervalSet, QuadMap};

/// A run of equal tiles tiling [start, end].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoverSegment {
    pub start: f64,
    pub end: f64,
    pub width: f64,
    pub count: u64,
    /// Global index of the first tile.
    pub offset: u64,
}

impl CoverSegment {
    fn boundary(&self, j: u64) -> f64 {
        if j >= self.count {
            self.end
        } else {
            self.start + j as f64 * self.width
        }
    }
}

/// Reference intervals covering [1 - a, 1] \ H, stored implicitly as
/// segments of equal tiles so that tiny eps stays cheap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceCover {
    pub eps: f64,
    pub segments: Vec<CoverSegment>,
}

impl ReferenceCover {
    pub fn n_tiles(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.offset + s.count)
    }

    fn segment_of_tile(&self, i: u64) -> &CoverSegment {
        let p = self.segments.partition_point(|s| s.offset + s.count <= i);
        &self.segments[p.min(self.segments.len() - 1)]
    }

    /// Closed tile i.
    pub fn tile(&self, i: u64) -> (f64, f64) {
        let s = self.segment_of_tile(i);
        let j = i - s.offset;
        (s.boundary(j), s.boundary(j + 1))
    }

    /// Index of the segment containing x, if any.
    fn segment_at(&self, x: f64) -> Option<&CoverSegment> {
        let p = self.segments.partition_point(|s| s.end < x);
        self.segments.get(p).filter(|s| s.start <= x && x <= s.end)
    }

    /// Tile containing x; boundary points go to the right-hand tile.
    pub fn locate(&self, x: f64) -> Option<u64> {
        let s = self.segment_at(x)?;
        let mut j = (((x - s.start) / s.width).floor().max(0.0) as u64).min(s.count - 1);
        while j > 0 && s.boundary(j) > x {
            j -= 1;
        }
        while j + 1 < s.count && s.boundary(j + 1) <= x {
            j += 1;
        }
        Some(s.offset + j)
    }

    /// Tiles lying entirely inside [lo, hi], as an inclusive index range.
    /// Tiles of adjacent segments count only when the segments touch.
    pub fn covered_range(&self, lo: f64, hi: f64) -> Option<(u64, u64)> {
        let a = self.locate(lo)?;
        let b = self.locate(hi)?;
        let first = if self.tile(a).0 >= lo { a } else { a + 1 };
        let last = if self.tile(b).1 <= hi {
            b
        } else {
            b.checked_sub(1)?
        };
        if first > last {
            return None;
        }
        // the range must not jump a gap between segments
        for w in first..last.min(first + 4) {
            if self.tile(w).1 != self.tile(w + 1).0 {
                return None;
            }
        }
        let sa = self.segment_of_tile(first);
        let sb = self.segment_of_tile(last);
        let mut seg = sa.offset;
        while seg < sb.offset {
            let s = self.segment_of_tile(seg);
            let next = self.segment_of_tile(s.offset + s.count);
            if s.end != next.start {
                return None;
            }
            seg = next.offset;
        }
        Some((first, last))
    }

    /// Total length covered.
    pub fn measure(&self) -> f64 {
        self.segments.iter().map(|s| s.end - s.start).sum()
    }
}

/// Greedy tiling of each maximal interval of [1 - a, 1] \ H, split at -delta,
/// 0 and delta, with tiles of equal width in [eps, 2 eps].
pub fn build_reference_cover(
    map: &QuadMap,
    hole: &OpenIntervalSet,
    eps: f64,
    delta: f64,
) -> Result<ReferenceCover> {
    if !(eps > 0.0) {
        return Err(Error::config("eps", "must be positive"));
    }
    let (lo, hi) = map.invariant_range();
    let mut pieces = Vec::new();
    for (a, b) in hole.complement_within(lo, hi) {
        let mut cuts = vec![a];
        for c in [-delta, 0.0, delta] {
            if a < c && c < b {
                cuts.push(c);
            }
        }
        cuts.push(b);
        for w in cuts.windows(2) {
            pieces.push((w[0], w[1]));
        }
    }
    let mut segments = Vec::with_capacity(pieces.len());
    let mut offset = 0;
    for (a, b) in pieces {
        let len = b - a;
        if len < eps {
            return Err(Error::Tiling(format!(
                "interval [{a}, {b}] is shorter than eps = {eps}"
            )));
        }
        let count = (len / (2.0 * eps)).ceil().max(1.0) as u64;
        segments.push(CoverSegment {
            start: a,
            end: b,
            width: len / count as f64,
            count,
            offset,
        });
        offset += count;
    }
    Ok(ReferenceCover { eps, segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        let m = QuadMap::new(2.0).unwrap();
        // [-1, 1] \ (-0.5, 0.5) with delta outside: two segments of length 0.5
        let h = OpenIntervalSet::single(-0.5, 0.5).unwrap();
        let c = build_reference_cover(&m, &h, 0.25, 0.01).unwrap();
        assert_eq!(c.n_tiles(), 2);
        let c = build_reference_cover(&m, &h, 0.5 / 3.0, 0.01).unwrap();
        assert_eq!(c.n_tiles(), 4);
        let (a, b) = c.tile(0);
        assert!((b - a - 0.25).abs() < 1e-15);
        assert!(build_reference_cover(&m, &h, 0.6, 0.01).is_err());
    }

    #[test]
    fn tiles_respect_width_and_splits() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.3, 0.31).unwrap();
        let delta = (-6f64).exp();
        let eps = 1e-3;
        let c = build_reference_cover(&m, &h, eps, delta).unwrap();
        let mut total = 0.0;
        for i in 0..c.n_tiles() {
            let (a, b) = c.tile(i);
            assert!(b - a >= eps * (1.0 - 1e-12) && b - a <= 2.0 * eps * (1.0 + 1e-12));
            let inside = a >= -delta && b <= delta;
            let outside = b <= -delta || a >= delta;
            assert!(inside || outside, "tile {i} straddles delta");
            assert!(!(a < 0.0 && b > 0.0));
            assert!(h.overlap(a, b) == 0.0);
            total += b - a;
        }
        // oracle: count = sum over split intervals of ceil(len / 2 eps)
        let mut oracle = 0;
        for (a, b) in [
            (-1.0, -delta),
            (-delta, 0.0),
            (0.0, delta),
            (delta, 0.3),
            (0.31, 1.0),
        ] {
            oracle += ((b - a) / (2.0 * eps)).ceil() as u64;
        }
        assert_eq!(c.n_tiles(), oracle);
        assert!((total - 1.99).abs() < 1e-12);
        assert!((c.measure() - 1.99).abs() < 1e-12);
    }

    #[test]
    fn locate_and_cover() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.3, 0.31).unwrap();
        let c = build_reference_cover(&m, &h, 1e-3, (-6f64).exp()).unwrap();
        for i in (0..c.n_tiles()).step_by(37) {
            let (a, b) = c.tile(i);
            assert_eq!(c.locate(0.5 * (a + b)), Some(i));
            assert_eq!(c.locate(a), Some(i));
        }
        assert_eq!(c.locate(0.305), None);
        let (a, _) = c.tile(100);
        let (_, b) = c.tile(120);
        assert_eq!(c.covered_range(a, b), Some((100, 120)));
        assert_eq!(c.covered_range(a + 1e-9, b - 1e-9), Some((101, 119)));
        // across the hole there is no contiguous run
        assert_eq!(c.covered_range(0.29, 0.32), None);
    }
}

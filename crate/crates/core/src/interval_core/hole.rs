use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite union of disjoint open intervals in [-1, 1], sorted by left end.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct OpenIntervalSet {
    components: Vec<(f64, f64)>,
}

impl OpenIntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates and sorts. Components must be nonempty, lie in [-1, 1] and
    /// be pairwise disjoint (touching endpoints are allowed).
    pub fn new(mut components: Vec<(f64, f64)>) -> Result<Self> {
        for &(l, r) in &components {
            if !(l.is_finite() && r.is_finite()) || l >= r {
                return Err(Error::InvalidHole(format!(
                    "component ({l}, {r}) is empty or not finite"
                )));
            }
            if l < -1.0 || r > 1.0 {
                return Err(Error::InvalidHole(format!(
                    "component ({l}, {r}) leaves [-1, 1]"
                )));
            }
        }
        components.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in components.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidHole(format!(
                    "components ({}, {}) and ({}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn single(l: f64, r: f64) -> Result<Self> {
        Self::new(vec![(l, r)])
    }

    pub fn components(&self) -> &[(f64, f64)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.components.iter().map(|(l, r)| r - l).sum()
    }

    /// Strict interior test.
    pub fn contains(&self, x: f64) -> bool {
        self.component_of(x).is_some()
    }

    /// Index of the component whose interior holds x.
    pub fn component_of(&self, x: f64) -> Option<usize> {
        let i = self.components.partition_point(|c| c.0 < x);
        // candidate is the last component starting strictly left of x
        if i == 0 {
            return None;
        }
        let (l, r) = self.components[i - 1];
        (l < x && x < r).then_some(i - 1)
    }

    /// Distance to the nearest component endpoint, 0 inside a component.
    /// Infinite for the empty set.
    pub fn distance(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|&(l, r)| {
                if l < x && x < r {
                    0.0
                } else {
                    (x - l).abs().min((x - r).abs())
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Length of the overlap of [lo, hi] with the set.
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        self.components
            .iter()
            .map(|&(l, r)| (hi.min(r) - lo.max(l)).max(0.0))
            .sum()
    }

    /// Mirror image G = -H.
    pub fn reflection(&self) -> Self {
        let mut c: Vec<_> = self.components.iter().map(|&(l, r)| (-r, -l)).collect();
        c.reverse();
        Self { components: c }
    }

    /// `[lo, hi]` minus the set, as closed intervals of positive length.
    pub fn complement_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut cur = lo;
        for &(l, r) in &self.components {
            if r <= cur {
                continue;
            }
            if l >= hi {
                break;
            }
            if l > cur {
                out.push((cur, l));
            }
            cur = cur.max(r);
        }
        if cur < hi {
            out.push((cur, hi));
        }
        out
    }

    /// Affine rescaling about each component's centre (used by shrink studies).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let c = self
            .components
            .iter()
            .map(|&(l, r)| {
                let m = 0.5 * (l + r);
                let h = 0.5 * (r - l) * factor;
                (m - h, m + h)
            })
            .collect();
        Self::new(c)
    }
}

impl TryFrom<Vec<(f64, f64)>> for OpenIntervalSet {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OpenIntervalSet> for Vec<(f64, f64)> {
    fn from(h: OpenIntervalSet) -> Self {
        h.components
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reflection_examples() {
        let h = OpenIntervalSet::single(0.3, 0.31).unwrap();
        assert_eq!(h.reflection().components(), &[(-0.31, -0.3)]);
        let h = OpenIntervalSet::single(-0.2, -0.1).unwrap();
        assert_eq!(h.reflection().components(), &[(0.1, 0.2)]);
        let h = OpenIntervalSet::single(-0.05, 0.05).unwrap();
        assert_eq!(h.reflection(), h);
    }

    #[test]
    fn validation() {
        assert!(OpenIntervalSet::new(vec![(0.2, 0.1)]).is_err());
        assert!(OpenIntervalSet::new(vec![(0.1, 0.3), (0.2, 0.4)]).is_err());
        assert!(OpenIntervalSet::new(vec![(0.5, 1.2)]).is_err());
        let h = OpenIntervalSet::new(vec![(0.5, 0.6), (-0.2, 0.1)]).unwrap();
        assert_eq!(h.components()[0], (-0.2, 0.1));
        assert!((h.measure() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn membership_is_strict() {
        let h = OpenIntervalSet::single(0.0, 1.0).unwrap();
        assert!(!h.contains(0.0));
        assert!(!h.contains(1.0));
        assert!(h.contains(0.5));
        assert_eq!(h.distance(-0.25), 0.25);
        assert_eq!(h.distance(0.5), 0.0);
        assert_eq!(OpenIntervalSet::empty().distance(0.3), f64::INFINITY);
    }

    #[test]
    fn complement() {
        let h = OpenIntervalSet::new(vec![(0.0, 0.1), (0.5, 1.0)]).unwrap();
        assert_eq!(
            h.complement_within(-1.0, 1.0),
            vec![(-1.0, 0.0), (0.1, 0.5)]
        );
    }

    proptest! {
        #[test]
        fn reflection_is_involution(pts in proptest::collection::vec(-1.0f64..1.0, 2..10)) {
            let mut p = pts.clone();
            p.sort_by(f64::total_cmp);
            p.dedup();
            let comps: Vec<_> = p.chunks_exact(2).map(|c| (c[0], c[1])).filter(|c| c.0 < c.1).collect();
            let h = OpenIntervalSet::new(comps).unwrap();
            prop_assert_eq!(h.reflection().reflection(), h);
        }
    }
}

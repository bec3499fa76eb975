use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::{critical_orbit_stats, OpenIntervalSet, QuadMap};

/// Gap below which an image is taken to reach an end of [1 - a, 1].
pub const COVER_TOL: f64 = 1e-12;

/// Closed images T^i [lo, hi] for 0 <= i <= n.
pub fn forward_images(map: &QuadMap, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = (lo, hi);
    out.push(cur);
    for _ in 0..n {
        cur = map.image(cur.0, cur.1);
        out.push(cur);
    }
    out
}

/// Signed separation of two intervals: the gap between them, or minus the
/// length of their overlap.
fn separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    let gap = (b.0 - a.1).max(a.0 - b.1);
    if gap >= 0.0 {
        gap
    } else {
        -(a.1.min(b.1) - a.0.max(b.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A1Report {
    /// min(dist(critical orbit, H), delta0).
    pub r: f64,
    /// Distance from the truncated critical orbit to H, negative when an
    /// orbit point lies inside H.
    pub orbit_distance: f64,
    pub horizon: usize,
    pub pass: bool,
}

/// (A1): the critical orbit stays away from H.
pub fn check_a1(map: &QuadMap, hole: &OpenIntervalSet, horizon: usize, delta0: f64) -> A1Report {
    let stats = critical_orbit_stats(map, horizon, hole);
    let mut d = stats.min_dist_hole;
    for &x in stats.orbit.iter().filter(|&&x| hole.contains(x)) {
        let (l, r) = hole.components()[hole.component_of(x).unwrap_or(0)];
        d = d.min(-(x - l).min(r - x));
    }
    let r = d.max(0.0).min(delta0);
    A1Report {
        r,
        orbit_distance: d,
        horizon,
        pass: r > 0.0,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A2Report {
    pub m0: usize,
    pub eps0_candidate: f64,
    /// Largest eps0 for which the images T^i H_j, 0 <= i <= m0, keep disjoint
    /// eps0-neighbourhoods; 0 when two images already meet.
    pub eps0_max: f64,
    pub pass: bool,
    /// eps0_max - eps0_candidate.
    pub slack: f64,
}

impl A2Report {
    pub fn into_result(self) -> Result<Self> {
        if self.eps0_max <= 0.0 {
            return Err(Error::Assumption {
                name: "A2",
                detail: format!(
                    "forward images of the hole overlap within {} steps",
                    self.m0
                ),
            });
        }
        Ok(self)
    }
}

/// Images T^i H_j for 0 <= i <= m0 and every component.
fn hole_images(map: &QuadMap, hole: &OpenIntervalSet, m0: usize) -> Vec<Vec<(f64, f64)>> {
    hole.components()
        .iter()
        .map(|&(l, r)| forward_images(map, l, r, m0))
        .collect()
}

/// Whether every two distinct images (different time or different
/// component) lie further apart than 2 eps.
fn neighbourhoods_disjoint(images: &[Vec<(f64, f64)>], eps: f64) -> bool {
    let flat: Vec<(f64, f64)> = images.iter().flatten().copied().collect();
    for (p, a) in flat.iter().enumerate() {
        for b in &flat[p + 1..] {
            if separation(*a, *b) <= 2.0 * eps {
                return false;
            }
        }
    }
    true
}

/// (A2) through its sufficient condition: eps0-neighbourhoods of the forward
/// images of H up to time m0 are pairwise disjoint. Images of the same
/// component at different times and images of different components are all
/// compared. The largest admissible eps0 is found by bisection.
pub fn check_a2(
    map: &QuadMap,
    hole: &OpenIntervalSet,
    m0: usize,
    eps0_candidate: f64,
) -> Result<A2Report> {
    if m0 == 0 {
        return Err(Error::config("m0", "must be at least 1"));
    }
    if hole.is_empty() {
        return Ok(A2Report {
            m0,
            eps0_candidate,
            eps0_max: f64::INFINITY,
            pass: true,
            slack: f64::INFINITY,
        });
    }
    let images = hole_images(map, hole, m0);
    let eps0_max = if !neighbourhoods_disjoint(&images, 0.0) {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        while hi - lo > 1e-15 * hi.max(1e-300) && hi - lo > f64::MIN_POSITIVE {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if neighbourhoods_disjoint(&images, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let pass = eps0_max > 0.0 && eps0_candidate <= eps0_max;
    Ok(A2Report {
        m0,
        eps0_candidate,
        eps0_max,
        pass,
        slack: eps0_max - eps0_candidate,
    })
}

/// Least n >= 1 with T^n [lo, hi] containing [1 - a, 1], images taken
/// without holes. Once covered, [1 - a, 1] stays covered.
pub fn steps_to_cover(map: &QuadMap, lo: f64, hi: f64, cap: usize) -> Result<usize> {
    let (lo_t, hi_t) = map.invariant_range();
    let mut cur = (lo, hi);
    for n in 1..=cap {
        cur = map.image(cur.0, cur.1);
        if cur.0 <= lo_t + COVER_TOL && cur.1 >= hi_t - COVER_TOL {
            return Ok(n);
        }
    }
    Err(Error::CapExceeded {
        what: "covering time",
        cap,
    })
}

/// Intervals of length eps0/4 starting every eps0/4 across [-1, 1]. Any
/// interval of length at least eps0/2 contains one of them.
pub fn covering_family(eps0: f64) -> Vec<(f64, f64)> {
    let w = eps0 / 4.0;
    let n = (2.0 / w).ceil() as usize;
    (0..n)
        .map(|i| {
            let lo = (-1.0 + i as f64 * w).min(1.0 - w);
            (lo, lo + w)
        })
        .collect()
}

/// n0: the least n such that every interval of length >= eps0/2 covers
/// [1 - a, 1] after n steps, taken over the covering family.
pub fn derive_n0(map: &QuadMap, eps0: f64, cap: usize) -> Result<usize> {
    if !(eps0 > 0.0) || eps0 > 2.0 {
        return Err(Error::config("eps0", "must lie in (0, 2]"));
    }
    let mut n0 = 0;
    for (lo, hi) in covering_family(eps0) {
        n0 = n0.max(steps_to_cover(map, lo, hi, cap)?);
    }
    Ok(n0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A4Violation {
    /// 'a' for T^i H_j meeting G_k, 'b' for meeting H_k.
    pub clause: char,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct A4Report {
    pub n0: usize,
    pub pass: bool,
    /// Smallest separation over all checked pairs; negative on overlap.
    pub slack: f64,
    pub first_violation: Option<A4Violation>,
}

/// (A4): T^i H_j avoids G_k for 0 <= i <= n0 and H_k for 1 <= i <= n0.
pub fn check_a4(map: &QuadMap, hole: &OpenIntervalSet, n0: usize) -> A4Report {
    let g = hole.reflection();
    let mut slack = f64::INFINITY;
    let mut first: Option<A4Violation> = None;
    for (j, &(l, r)) in hole.components().iter().enumerate() {
        for (i, &img) in forward_images(map, l, r, n0).iter().enumerate() {
            for (k, &gk) in g.components().iter().enumerate() {
                let s = separation(img, gk);
                slack = slack.min(s);
                if s < 0.0 && first.is_none() {
                    first = Some(A4Violation {
                        clause: 'a',
                        i,
                        j,
                        k,
                    });
                }
            }
            if i == 0 {
                continue;
            }
            for (k, &hk) in hole.components().iter().enumerate() {
                let s = separation(img, hk);
                slack = slack.min(s);
                if s < 0.0 && first.is_none() {
                    first = Some(A4Violation {
                        clause: 'b',
                        i,
                        j,
                        k,
                    });
                }
            }
        }
    }
    A4Report {
        n0,
        pass: first.is_none(),
        slack,
        first_violation: first,
    }
}

/// Merges closed intervals into a sorted disjoint union.
fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringCheck {
    pub interval: (f64, f64),
    pub steps: usize,
    /// Measure of [1 - a, 1] \ H left uncovered by the union of T^i J.
    pub uncovered: f64,
    pub pass: bool,
}

/// Whether the union of T^i J, 0 <= i <= steps, covers [1 - a, 1] \ H, where
/// T is the open system: mass entering H is removed before the next step.
pub fn covering_check(
    map: &QuadMap,
    hole: &OpenIntervalSet,
    j: (f64, f64),
    steps: usize,
) -> CoveringCheck {
    let remove_hole = |v: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        v.into_iter()
            .flat_map(|(lo, hi)| hole.complement_within(lo, hi))
            .collect()
    };
    let mut cur = merge(remove_hole(vec![j]));
    let mut union = cur.clone();
    for _ in 0..steps {
        let next = cur.iter().map(|&(lo, hi)| map.image(lo, hi)).collect();
        cur = merge(remove_hole(merge(next)));
        union = merge(union.into_iter().chain(cur.iter().copied()).collect());
    }
    let (lo_t, hi_t) = map.invariant_range();
    let mut uncovered = 0.0;
    for (lo, hi) in hole.complement_within(lo_t, hi_t) {
        let covered: f64 = union
            .iter()
            .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
            .sum();
        uncovered += (hi - lo - covered).max(0.0);
    }
    CoveringCheck {
        interval: j,
        steps,
        uncovered,
        pass: uncovered <= COVER_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_core::TentMap;
    use proptest::prelude::*;

    fn a2map() -> QuadMap {
        QuadMap::new(2.0).unwrap()
    }

    /// Tent-coordinate images of [lo, hi] (in x), mapped back through h.
    fn tent_images(lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let mut u = (
            TentMap::conjugacy_inverse(lo),
            TentMap::conjugacy_inverse(hi),
        );
        let mut out = vec![(lo, hi)];
        for _ in 0..n {
            let g = |y: f64| 1.0 - 2.0 * y.abs();
            let (a, b) = (g(u.0), g(u.1));
            let (mut p, mut q) = (a.min(b), a.max(b));
            if u.0 < 0.0 && u.1 > 0.0 {
                q = 1.0;
            }
            u = (p, q);
            p = TentMap::conjugacy(u.0);
            q = TentMap::conjugacy(u.1);
            out.push((p, q));
        }
        out
    }

    #[test]
    fn a1_examples() {
        let m = a2map();
        let r = check_a1(&m, &OpenIntervalSet::single(0.3, 0.31).unwrap(), 1000, 0.4);
        assert!(r.pass);
        assert!((r.orbit_distance - 0.69).abs() < 1e-15);
        assert_eq!(r.r, 0.4);
        let r = check_a1(&m, &OpenIntervalSet::single(0.3, 0.31).unwrap(), 1000, 0.9);
        assert!((r.r - 0.69).abs() < 1e-15);
        assert!(!check_a1(&m, &OpenIntervalSet::single(0.99, 1.0).unwrap(), 1000, 0.4).pass);
        let inside = check_a1(&m, &OpenIntervalSet::single(-1.0, -0.9).unwrap(), 1000, 0.4);
        assert!(inside.orbit_distance == 0.0 && !inside.pass);
    }

    #[test]
    fn a1_at_1_9_matches_direct_orbit() {
        let m = QuadMap::new(1.9).unwrap();
        let h = OpenIntervalSet::single(0.3, 0.31).unwrap();
        let mut x = 0.0f64;
        let mut oracle = f64::INFINITY;
        for _ in 0..1000 {
            x = 1.0 - 1.9 * x * x;
            let d = if x <= 0.3 {
                0.3 - x
            } else if x >= 0.31 {
                x - 0.31
            } else {
                -(x - 0.3).min(0.31 - x)
            };
            oracle = oracle.min(d);
        }
        let r = check_a1(&m, &h, 1000, 1.0);
        // the orbit at a = 1.9 visits (0.3, 0.31)
        assert!(oracle < 0.0);
        assert!(
            (r.orbit_distance - oracle).abs() < 1e-15,
            "{} vs {oracle}",
            r.orbit_distance
        );
        assert!(!r.pass && r.r == 0.0);
    }

    #[test]
    fn a2_empty_hole_passes() {
        let r = check_a2(&a2map(), &OpenIntervalSet::empty(), 10, 0.3).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn a2_direct_violation() {
        // T(0.5) = -0.5, so the first image of the first component meets the second
        let h = OpenIntervalSet::new(vec![(-0.51, -0.49), (0.49, 0.51)]).unwrap();
        let r = check_a2(&a2map(), &h, 10, 1e-3).unwrap();
        assert!(!r.pass && r.eps0_max == 0.0);
        assert!(r.into_result().is_err());
        // a component of width 1e-2 spreads over everything within 10 steps
        let r = check_a2(
            &a2map(),
            &OpenIntervalSet::single(0.3, 0.31).unwrap(),
            10,
            1e-3,
        )
        .unwrap();
        assert_eq!(r.eps0_max, 0.0);
    }

    #[test]
    fn a2_matches_tent_oracle() {
        let (l, r) = (0.3, 0.3001);
        let h = OpenIntervalSet::single(l, r).unwrap();
        let rep = check_a2(&a2map(), &h, 10, 0.0).unwrap();
        let imgs = tent_images(l, r, 10);
        let mut gap = f64::INFINITY;
        for p in 0..imgs.len() {
            for q in p + 1..imgs.len() {
                gap = gap.min((imgs[q].0 - imgs[p].1).max(imgs[p].0 - imgs[q].1));
            }
        }
        assert!(gap > 0.0);
        assert!(
            (rep.eps0_max - gap / 2.0).abs() < 1e-9,
            "{} vs {}",
            rep.eps0_max,
            gap / 2.0
        );
        let frozen = 0.019240251957;
        assert!((rep.eps0_max - frozen).abs() < 1e-6, "{}", rep.eps0_max);
    }

    #[test]
    fn a2_monotone_in_eps0() {
        let h = OpenIntervalSet::single(0.3, 0.3001).unwrap();
        let r = check_a2(&a2map(), &h, 10, 0.0).unwrap();
        for f in [0.1, 0.5, 0.99] {
            assert!(check_a2(&a2map(), &h, 10, f * r.eps0_max).unwrap().pass);
        }
        assert!(!check_a2(&a2map(), &h, 10, 1.01 * r.eps0_max).unwrap().pass);
    }

    #[test]
    fn whole_interval_covers_in_one_step() {
        assert_eq!(steps_to_cover(&a2map(), -1.0, 1.0, 10).unwrap(), 1);
        assert_eq!(
            steps_to_cover(&QuadMap::new(1.9).unwrap(), -1.0, 1.0, 10).unwrap(),
            1
        );
    }

    fn tent_steps(lo: f64, hi: f64) -> usize {
        let mut u = (
            TentMap::conjugacy_inverse(lo),
            TentMap::conjugacy_inverse(hi),
        );
        let mut n = 0;
        while n == 0 || !(u.0 <= -1.0 + 1e-12 && u.1 >= 1.0 - 1e-12) {
            let g = |y: f64| 1.0 - 2.0 * y.abs();
            let (a, b) = (g(u.0), g(u.1));
            u = (
                a.min(b),
                if u.0 < 0.0 && u.1 > 0.0 {
                    1.0
                } else {
                    a.max(b)
                },
            );
            n += 1;
        }
        n
    }

    #[test]
    fn n0_matches_tent_oracle() {
        let m = a2map();
        let n0 = derive_n0(&m, 0.05, 200).unwrap();
        let oracle = covering_family(0.05)
            .iter()
            .map(|&(lo, hi)| tent_steps(lo, hi))
            .max()
            .unwrap();
        assert_eq!(n0, oracle);
        assert_eq!(n0, 9);
        assert!(derive_n0(&m, 0.025, 200).unwrap() >= n0);
    }

    #[test]
    fn n0_covers_random_intervals() {
        use rand::{Rng, SeedableRng};
        let m = a2map();
        let eps0 = 0.02;
        let n0 = derive_n0(&m, eps0, 200).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let len = rng.gen_range(eps0 / 2.0..eps0);
            let lo = rng.gen_range(-1.0..1.0 - len);
            assert!(steps_to_cover(&m, lo, lo + len, n0).unwrap() <= n0);
        }
    }

    #[test]
    fn a4_examples() {
        let m = a2map();
        assert!(check_a4(&m, &OpenIntervalSet::empty(), 10).pass);
        let sym = check_a4(&m, &OpenIntervalSet::single(-0.01, 0.01).unwrap(), 10);
        let v = sym.first_violation.unwrap();
        assert_eq!((v.clause, v.i), ('a', 0));
    }

    #[test]
    fn a4_matches_tent_oracle() {
        let m = a2map();
        let (l, r) = (0.3, 0.3001);
        let h = OpenIntervalSet::single(l, r).unwrap();
        for n0 in [5, 8, 10, 12] {
            let rep = check_a4(&m, &h, n0);
            let imgs = tent_images(l, r, n0);
            let hit = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
            let oracle = imgs
                .iter()
                .enumerate()
                .all(|(i, &img)| !hit(img, (-r, -l)) && (i == 0 || !hit(img, (l, r))));
            assert_eq!(rep.pass, oracle, "n0 = {n0}");
        }
    }

    #[test]
    fn covering_without_hole_matches_plain_cover() {
        let m = a2map();
        let c = covering_check(&m, &OpenIntervalSet::empty(), (0.1, 0.12), 20);
        assert!(c.pass);
        let c = covering_check(&m, &OpenIntervalSet::empty(), (0.1, 0.12), 2);
        assert!(!c.pass && c.uncovered > 0.5);
    }

    proptest! {
        #[test]
        fn covering_union_grows_with_steps(lo in -0.99f64..0.9, len in 0.01f64..0.09) {
            let m = a2map();
            let h = OpenIntervalSet::single(0.3, 0.3001).unwrap();
            let a = covering_check(&m, &h, (lo, lo + len), 3);
            let b = covering_check(&m, &h, (lo, lo + len), 6);
            prop_assert!(b.uncovered <= a.uncovered + 1e-15);
        }
    }
}

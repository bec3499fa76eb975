use serde::{Deserialize, Serialize};

use super::hole::OpenIntervalSet;
use super::map::QuadMap;
use super::partition::NeighborhoodPartition;
use crate::error::{Error, Result};

/// Longest bound period considered before declaring the orbit stuck.
const BOUND_HORIZON: usize = 10_000;

/// Summary of the truncated critical orbit T^k(0), 1 <= k <= N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalOrbitStats {
    pub orbit: Vec<f64>,
    pub min_dist_zero: f64,
    pub min_dist_hole: f64,
}

pub fn critical_orbit_stats(
    map: &QuadMap,
    horizon: usize,
    hole: &OpenIntervalSet,
) -> CriticalOrbitStats {
    let orbit = map.critical_orbit(horizon.max(1)).split_off(1);
    let min_dist_zero = orbit.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let min_dist_hole = orbit
        .iter()
        .map(|&x| hole.distance(x))
        .fold(f64::INFINITY, f64::min);
    CriticalOrbitStats {
        orbit,
        min_dist_zero,
        min_dist_hole,
    }
}

/// Deviations d_j = T^j(y) - T^j(0) for j = 0..=n, via d' = -a d (2 c + d).
fn deviations(map: &QuadMap, crit: &[f64], y: f64, n: usize) -> Vec<f64> {
    let a = map.a();
    let mut d = Vec::with_capacity(n + 1);
    let mut cur = y;
    d.push(cur);
    for c in crit.iter().take(n) {
        cur = -a * cur * (2.0 * c + cur);
        d.push(cur);
    }
    d
}

/// Shadowing time of a single point: the largest n with
/// |T^j y - T^j 0| < 1/j^2 for all 1 <= j < n.
pub fn shadow_time(map: &QuadMap, crit: &[f64], y: f64) -> usize {
    let a = map.a();
    let mut d = y;
    for (j, c) in crit.iter().enumerate().take(BOUND_HORIZON) {
        if j >= 1 && d.abs() >= 1.0 / (j * j) as f64 {
            return j;
        }
        d = -a * d * (2.0 * c + d);
    }
    BOUND_HORIZON.min(crit.len())
}

/// p(k): the infimum over I_k of the shadowing time, sampled on a grid that
/// includes both endpoints and is refined (n -> 2n - 1, a superset) until
/// two successive minima agree.
pub fn bound_period(
    map: &QuadMap,
    part: &NeighborhoodPartition,
    k: i32,
    grid: usize,
) -> Result<usize> {
    let (l, r) = part.cell(k)?;
    let (l, r) = (l.abs().min(r.abs()), l.abs().max(r.abs()));
    let crit = map.critical_orbit(BOUND_HORIZON + 1);
    let sample_min = |n: usize| {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                shadow_time(map, &crit, l + t * (r - l))
            })
            .min()
            .unwrap_or(0)
    };
    let mut n = grid.max(2);
    let mut prev = sample_min(n);
    for _ in 0..12 {
        n = 2 * n - 1;
        let cur = sample_min(n);
        if cur == prev {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// q(k): the largest n with |T^j((0, e^{-|k|}))| <= r/2 for all j <= n.
pub fn recovery_time(
    map: &QuadMap,
    part: &NeighborhoodPartition,
    k: i32,
    r: f64,
    cap: usize,
) -> Result<usize> {
    if !(r > 0.0) {
        return Err(Error::config("r", "must be positive"));
    }
    part.cell(k)?;
    let y = (-(k.unsigned_abs() as f64)).exp();
    let lens = interval_lengths(map, 0.0, y, cap + 1);
    for (j, len) in lens.iter().enumerate() {
        if *len > 0.5 * r {
            if j == 0 {
                return Ok(0);
            }
            return Ok(j - 1);
        }
    }
    Err(Error::CapExceeded {
        what: "recovery time",
        cap,
    })
}

/// |T^j([lo, hi])| for j = 0..=n with lo, hi in [0, delta). Endpoints are
/// tracked as offsets from the critical orbit until the interval folds.
pub fn interval_lengths(map: &QuadMap, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let crit = map.critical_orbit(n + 1);
    let a = map.a();
    let (mut u, mut v) = (lo, hi);
    let mut out = Vec::with_capacity(n + 1);
    let mut abs_mode: Option<(f64, f64)> = None;
    for j in 0..=n {
        if let Some((p, q)) = abs_mode {
            out.push(q - p);
            abs_mode = Some(map.image(p, q));
            continue;
        }
        out.push((v - u).abs());
        let c = crit[j];
        let (pu, pv) = (c + u, c + v);
        let straddles = pu.min(pv) < 0.0 && pu.max(pv) > 0.0;
        if straddles {
            abs_mode = Some(map.image(pu.min(pv), pu.max(pv)));
        } else {
            u = -a * u * (2.0 * c + u);
            v = -a * v * (2.0 * c + v);
        }
    }
    out
}

/// Tabulated p(k), q(k) for k0 <= k <= kmax (mirrored cells share values),
/// with r and the growth length eps'.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRecoveryTables {
    pub k0: u32,
    pub kmax: u32,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub r: f64,
    pub eps_prime: f64,
}

impl BoundRecoveryTables {
    pub fn build(
        map: &QuadMap,
        part: &NeighborhoodPartition,
        r: f64,
        grid: usize,
        cap: usize,
    ) -> Result<Self> {
        let mut p = Vec::new();
        let mut q = Vec::new();
        let mut eps_prime = f64::INFINITY;
        for k in part.k0()..=part.kmax() {
            let ki = k as i32;
            let pk = bound_period(map, part, ki, grid)?;
            let qk = recovery_time(map, part, ki, r, cap)?;
            let (l, h) = part.cell(ki)?;
            let len = interval_lengths(map, l, h, qk)[qk];
            eps_prime = eps_prime.min(len);
            p.push(pk);
            q.push(qk);
        }
        Ok(Self {
            k0: part.k0(),
            kmax: part.kmax(),
            p,
            q,
            r,
            eps_prime,
        })
    }

    pub fn p(&self, k: i32) -> usize {
        self.p[(k.unsigned_abs() - self.k0) as usize]
    }

    pub fn q(&self, k: i32) -> usize {
        self.q[(k.unsigned_abs() - self.k0) as usize]
    }
}

/// Outcome of the (P1)(b)/(c) derivative audits on sampled points of I_k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundAudit {
    /// Smallest d0 with d0^{-1} 1.9^j <= |(T^j)'(Tx)| <= d0 1.9^j for all sampled j < p(x).
    pub d0: f64,
    /// min over samples of log|(T^p)'(x)| - p/5; nonnegative iff (P1)(c) holds.
    pub expansion_margin: f64,
    pub samples: usize,
}

pub fn audit_bound_derivatives(
    map: &QuadMap,
    part: &NeighborhoodPartition,
    ks: &[i32],
    samples: usize,
) -> Result<BoundAudit> {
    let crit = map.critical_orbit(BOUND_HORIZON + 1);
    let a = map.a();
    let ln19 = 1.9f64.ln();
    let mut log_d0: f64 = 0.0;
    let mut margin = f64::INFINITY;
    let mut count = 0;
    for &k in ks {
        let (l, r) = part.cell(k)?;
        for i in 0..samples {
            let t = (i as f64 + 0.5) / samples as f64;
            let x = l + t * (r - l);
            let p = shadow_time(map, &crit, x.abs());
            let d = deviations(map, &crit, x, p);
            // log |(T^j)'(Tx)| accumulates |f'(T^i x)| for 1 <= i <= j
            let mut s = 0.0;
            for j in 1..p {
                let xi = crit[j] + d[j];
                s += (2.0 * a * xi).abs().ln();
                log_d0 = log_d0.max((s - j as f64 * ln19).abs());
            }
            let full = (2.0 * a * x).abs().ln() + s;
            margin = margin.min(full - p as f64 / 5.0);
            count += 1;
        }
    }
    Ok(BoundAudit {
        d0: log_d0.exp(),
        expansion_margin: margin,
        samples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (QuadMap, NeighborhoodPartition) {
        (
            QuadMap::new(2.0).unwrap(),
            NeighborhoodPartition::new(6, 40).unwrap(),
        )
    }

    // Independent route: plain iteration in quadruple-free form is useless for
    // tiny y, so the oracle uses the exact a = 2 conjugacy instead. With
    // y = sin(pi u / 2), T^j y = sin(pi g^j(u) / 2), and for small u the tent
    // orbit is exact: g(u) = 1 - 2u, then g^j(u) = -1 + 2^j u for j >= 2
    // until it leaves a neighbourhood of -1.
    fn oracle_shadow_a2(y: f64) -> usize {
        let u = (y.asin() / std::f64::consts::FRAC_PI_2).abs();
        for j in 1..200usize {
            let gj = if j == 1 {
                1.0 - 2.0 * u
            } else {
                -1.0 + 2f64.powi(j as i32) * u
            };
            if gj > 1.0 {
                return j;
            }
            let dev = if j == 1 {
                // 1 - sin(pi/2 (1 - 2u)) = 1 - cos(pi u)
                2.0 * (std::f64::consts::FRAC_PI_2 * u).sin().powi(2)
            } else {
                // sin(pi/2 (-1 + w)) + 1 = 1 - cos(pi w / 2)
                let w = 2f64.powi(j as i32) * u;
                2.0 * (std::f64::consts::FRAC_PI_4 * w).sin().powi(2)
            };
            if dev >= 1.0 / (j * j) as f64 {
                return j;
            }
        }
        200
    }

    #[test]
    fn shadow_time_matches_conjugacy_oracle() {
        let (m, _) = setup();
        let crit = m.critical_orbit(BOUND_HORIZON + 1);
        for k in 6..=40 {
            for t in [0.0, 0.3, 0.7, 1.0] {
                let y = (-(k as f64 + t)).exp();
                assert_eq!(
                    shadow_time(&m, &crit, y),
                    oracle_shadow_a2(y),
                    "k={k} t={t}"
                );
            }
        }
    }

    #[test]
    fn bound_period_k10_frozen() {
        let (m, part) = setup();
        let p = bound_period(&m, &part, 10, 17).unwrap();
        // frozen from the conjugacy oracle on a 4097-point grid
        let (l, r) = part.cell(10).unwrap();
        let want = (0..4097)
            .map(|i| oracle_shadow_a2(l + (r - l) * i as f64 / 4096.0))
            .min()
            .unwrap();
        assert_eq!(p, want);
        assert!((5..=40).contains(&p));
        assert_eq!(p, bound_period(&m, &part, 10, 33).unwrap());
        assert_eq!(p, bound_period(&m, &part, -10, 17).unwrap());
    }

    #[test]
    fn p1a_window_and_monotone() {
        let (m, part) = setup();
        let mut prev = 0;
        for k in 6..=14 {
            let p = bound_period(&m, &part, k, 9).unwrap();
            assert!(
                p as f64 >= 0.5 * k as f64 && p <= 4 * k as usize,
                "k={k} p={p}"
            );
            assert!(p >= prev);
            prev = p;
        }
        assert!(bound_period(&m, &part, 5, 9).is_err());
    }

    #[test]
    fn recovery_time_oracle_a2() {
        let (m, part) = setup();
        // at a = 2, |T^j((0, y))| = 1 - cos(pi 2^{j-1} u) ... in tent coordinates
        // the image of (0, u) is (-1, -1 + 2^j u) for j >= 2 (before folding)
        let r = 0.5;
        let y = (-6f64).exp();
        let u = y.asin() / std::f64::consts::FRAC_PI_2;
        let mut want = 0;
        for j in 1..100 {
            let len = if j == 1 {
                1.0 - (std::f64::consts::FRAC_PI_2 * (1.0 - 2.0 * u)).sin()
            } else {
                1.0 + (std::f64::consts::FRAC_PI_2 * (-1.0 + 2f64.powi(j) * u)).sin()
            };
            if len > r / 2.0 {
                want = j - 1;
                break;
            }
        }
        assert_eq!(recovery_time(&m, &part, 6, r, 1000).unwrap(), want as usize);
        assert_eq!(
            recovery_time(&m, &part, -6, r, 1000).unwrap(),
            want as usize
        );
    }

    #[test]
    fn recovery_dominates_bound_and_grows() {
        let (m, part) = setup();
        let stats = critical_orbit_stats(&m, 100, &OpenIntervalSet::empty());
        let r = stats.min_dist_hole.min(0.4);
        let t = BoundRecoveryTables::build(&m, &part, r, 9, 1000).unwrap();
        for k in 6..=40 {
            assert!(t.q(k) >= t.p(k), "k={k}");
        }
        for k in 6..14 {
            assert!(t.q(k + 1) >= t.q(k));
        }
        assert!(t.eps_prime > 0.0);
    }

    #[test]
    fn recovery_cap() {
        let (m, part) = setup();
        assert!(matches!(
            recovery_time(&m, &part, 30, 0.4, 5),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn orbit_stats_examples() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.3, 0.31).unwrap();
        let s = critical_orbit_stats(&m, 10, &h);
        assert_eq!(s.min_dist_zero, 1.0);
        assert!((s.min_dist_hole - 0.69).abs() < 1e-15);
        // a = 1.9: oracle is the plain loop
        let m = QuadMap::new(1.9).unwrap();
        let s = critical_orbit_stats(&m, 200, &OpenIntervalSet::empty());
        let mut x = 0.0f64;
        let mut best = f64::INFINITY;
        for _ in 0..200 {
            x = 1.0 - 1.9 * x * x;
            best = best.min(x.abs());
        }
        assert_eq!(s.min_dist_zero, best);
        assert!(best > 0.0);
    }

    #[test]
    fn p1_audit_a2() {
        let (m, part) = setup();
        let ks: Vec<i32> = (6..=12).collect();
        let a = audit_bound_derivatives(&m, &part, &ks, 16).unwrap();
        assert!(a.d0.is_finite() && a.d0 >= 1.0);
        assert!(a.expansion_margin >= 0.0, "{}", a.expansion_margin);
    }

    #[test]
    fn range_invariance() {
        for &a in &[0.5, 1.3, 1.9, 2.0] {
            let m = QuadMap::new(a).unwrap();
            for i in 0..=200 {
                let x = -1.0 + 0.01 * i as f64;
                let (orb, _) = m.orbit_deriv(x, 1000);
                assert!(orb.iter().all(|y| y.abs() <= 1.0 + f64::EPSILON));
            }
        }
    }
}

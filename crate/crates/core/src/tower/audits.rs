use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::interval_core::{audit_bound_derivatives, Pt, ShadowOrbit};
use crate::stats::{tail_fit, LinearFit};

use super::engine::{aux_partition, Outcome, SeedRun, StopHistory, TowerSetup};
use super::model::TowerModel;

/// Offsets from the critical orbit larger than this are kept absolute.
const NEAR_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailAudit {
    /// Fit of log m{S > n} / m(base), first chain.
    pub s_fit: Option<LinearFit>,
    /// Fit of log m{R > n} / m(base).
    pub r_fit: Option<LinearFit>,
    /// e^{slope} of the R-tail fit.
    pub theta: f64,
    /// Smallest C'' with m{R > n} / m(base) <= C'' theta^n at every level.
    pub c_dprime: f64,
    /// Same for the S-tail with its own fitted rate.
    pub c_prime: f64,
    pub s_rate: f64,
    /// Smallest A with m(Delta_l) <= A theta^l in tower units.
    pub h1_a: f64,
    pub floor: f64,
}

fn envelope(series: &[f64], rate: f64) -> f64 {
    series
        .iter()
        .enumerate()
        .map(|(n, &v)| v / rate.powi(n as i32))
        .fold(0.0, f64::max)
}

/// Log-linear tail fits on the levels whose normalized mass is >= floor.
pub fn tail_audit(model: &TowerModel, floor: f64) -> TailAudit {
    let b = model.base_total();
    let r: Vec<f64> = model.level_mass.iter().map(|m| m / b).collect();
    let s: Vec<f64> = model.first_chain_mass.iter().map(|m| m / b).collect();
    let r_fit = tail_fit(&r, floor);
    let s_fit = tail_fit(&s, floor);
    let theta = r_fit.map_or(f64::NAN, |f| f.slope.exp());
    let s_rate = s_fit.map_or(f64::NAN, |f| f.slope.exp());
    let c_dprime = if theta.is_finite() {
        envelope(&r, theta)
    } else {
        f64::NAN
    };
    let c_prime = if s_rate.is_finite() {
        envelope(&s, s_rate)
    } else {
        f64::NAN
    };
    let h1_a = if theta.is_finite() {
        envelope(&model.level_mass_tower, theta)
    } else {
        f64::NAN
    };
    TailAudit {
        s_fit,
        r_fit,
        theta,
        c_dprime,
        c_prime,
        s_rate,
        h1_a,
        floor,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoleFallStats {
    pub hole_measure: f64,
    /// m{R = n, T^n x in H} / m(base).
    pub series: Vec<f64>,
    pub total: f64,
    /// Fit of the log cumulative tail sum_{m >= n} series_m.
    pub fit: Option<LinearFit>,
    pub theta: f64,
    /// Smallest D with series_n <= D m(H) theta^n, theta from `fit`.
    pub d_hat: f64,
    /// Smallest D with m{x in Lambda: R = n, T^n x in H} <= D m(H) theta_r^n
    /// for every sampled seed, in absolute length.
    pub d_abs: f64,
    /// Smallest D' with the first-chain S-series <= D' m(H) e^{-n/21} (normalized).
    pub d_prime: f64,
}

pub fn hole_fall_stats(
    runs: &[SeedRun],
    model: &TowerModel,
    hole_measure: f64,
    theta_r: f64,
) -> HoleFallStats {
    let b = model.base_total();
    let series: Vec<f64> = model.hole_mass.iter().map(|m| m / b).collect();
    let total: f64 = series.iter().sum();
    let mut cum = vec![0.0; series.len()];
    let mut acc = 0.0;
    for i in (0..series.len()).rev() {
        acc += series[i];
        cum[i] = acc;
    }
    let fit = if total > 0.0 {
        let c: Vec<f64> = cum.iter().map(|v| v / total).collect();
        tail_fit(&c, 1e-6)
    } else {
        None
    };
    let theta = fit.map_or(f64::NAN, |f| f.slope.exp());
    let (mut d_hat, mut d_abs, mut d_prime) = (0.0f64, 0.0f64, 0.0f64);
    if hole_measure > 0.0 && total > 0.0 {
        if theta.is_finite() {
            d_hat = envelope(&series, theta) / hole_measure;
        }
        let mut s_series = vec![0.0; series.len()];
        for r in runs {
            let mut per = vec![0.0; series.len()];
            for c in &r.cells {
                if let Outcome::FellInHole { .. } = c.outcome {
                    per[c.stop as usize] += c.mass;
                    if c.chain.len() == 2 {
                        s_series[c.stop as usize] += c.mass / b;
                    }
                }
            }
            if theta_r.is_finite() {
                d_abs = d_abs.max(envelope(&per, theta_r) / hole_measure);
            }
        }
        d_prime = envelope(&s_series, (-1.0f64 / 21.0).exp()) / hole_measure;
    }
    HoleFallStats {
        hole_measure,
        series,
        total,
        fit,
        theta,
        d_hat,
        d_abs,
        d_prime,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceCountAudit {
    /// Largest number of coexisting unreturned pieces of one seed at level n.
    pub counts: Vec<u32>,
    /// max over n >= 1 of count / (8 n 2^{53 n / 200}).
    pub max_ratio: f64,
    pub level_zero: u32,
}

pub fn piece_count_bound(n: usize) -> f64 {
    8.0 * n as f64 * 2f64.powf(53.0 * n as f64 / 200.0)
}

pub fn piece_count_audit(runs: &[SeedRun]) -> PieceCountAudit {
    let len = runs.iter().map(|r| r.piece_counts.len()).max().unwrap_or(0);
    let mut counts = vec![0u32; len];
    for r in runs {
        for (i, &c) in r.piece_counts.iter().enumerate() {
            counts[i] = counts[i].max(c);
        }
    }
    let max_ratio = counts
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &c)| c as f64 / piece_count_bound(n))
        .fold(0.0, f64::max);
    PieceCountAudit {
        level_zero: counts.first().copied().unwrap_or(0),
        counts,
        max_ratio,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnAudit {
    /// min over return steps of returned / stopped image length.
    pub min_image_fraction: f64,
    pub image_fraction_bound: f64,
    /// min over chains started from end pieces of returned / initial mass.
    pub min_chain_fraction: f64,
    /// sum of returned over sum of initial mass, all chains.
    pub weighted_chain_fraction: f64,
    /// Chains returning less than a third, and their share of chain mass.
    pub chains_below_third: usize,
    pub mass_below_third: f64,
    pub chains: usize,
    pub returned_cells: usize,
}

pub fn return_audit(runs: &[SeedRun], growth: f64) -> ReturnAudit {
    let mut min_chain = f64::INFINITY;
    let (mut chains, mut cells, mut below) = (0, 0, 0);
    let (mut mass, mut returned, mut mass_below) = (0.0, 0.0, 0.0);
    for r in runs {
        for c in &r.chains {
            if c.mass > 0.0 {
                chains += 1;
                min_chain = min_chain.min(c.returned / c.mass);
                mass += c.mass;
                returned += c.returned;
                if c.returned < c.mass / 3.0 {
                    below += 1;
                    mass_below += c.mass;
                }
            }
        }
        cells += r
            .cells
            .iter()
            .filter(|c| matches!(c.outcome, Outcome::Returned { .. }))
            .count();
    }
    ReturnAudit {
        min_image_fraction: runs
            .iter()
            .map(|r| r.min_return_fraction)
            .fold(1.0, f64::min),
        image_fraction_bound: 1.0 - 6.0 / growth,
        min_chain_fraction: min_chain,
        weighted_chain_fraction: if mass > 0.0 { returned / mass } else { 1.0 },
        chains_below_third: below,
        mass_below_third: if mass > 0.0 { mass_below / mass } else { 0.0 },
        chains,
        returned_cells: cells,
    }
}

/// Orbit of a point pulled back from the stop image to the seed.
struct Orbit {
    /// values at times 0..=n
    values: Vec<f64>,
    /// prefix sums of log|f'| : logd[i] = log|(T^i)'(x_0)|
    logd: Vec<f64>,
}

impl Orbit {
    fn log_deriv(&self, from: usize, to: usize) -> f64 {
        self.logd[to] - self.logd[from]
    }
}

fn pt_like(sh: &ShadowOrbit, y: f64, like: &[Pt; 2]) -> Pt {
    for e in like {
        if let Pt::Near { j, .. } = *e {
            let off = y - sh.crit(j as usize);
            if off.abs() <= NEAR_LIMIT {
                return Pt::Near { j, off };
            }
        }
    }
    Pt::Abs(y)
}

fn pull_orbit(sh: &ShadowOrbit, h: &StopHistory, y: f64) -> Orbit {
    let n = h.stop as usize;
    let entries: Vec<usize> = h.itinerary.iter().map(|e| e.0 as usize).collect();
    let mut p = pt_like(sh, y, &h.image);
    let mut pts = vec![p; n + 1];
    for i in (0..n).rev() {
        p = sh.backward(sh.reanchor(p, i + 1, &entries), h.sign(i));
        pts[i] = p;
    }
    let values: Vec<f64> = pts.iter().map(|&q| sh.value(q)).collect();
    let mut logd = Vec::with_capacity(n + 1);
    logd.push(0.0);
    let mut acc = 0.0;
    for &q in &pts[..n] {
        acc += sh.abs_deriv(q).ln();
        logd.push(acc);
    }
    Orbit { values, logd }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionAudit {
    /// Smallest C with |D(x)/D(y) - 1| <= C |T^n x - T^n y| at the stop
    /// times S (from the chain start) and R (from the seed).
    pub c_tilde: f64,
    /// Largest |D(x)/D(y) - 1| at free times before the stop.
    pub weak_bound: f64,
    /// Lemma-type bound on log ratios up to q(k) inside I_k.
    pub c1: f64,
    pub c2: f64,
    /// (P1)(b) constant.
    pub d0: f64,
    /// Free-excursion constant: |(T^n)'(x)| >= c0' delta e^{lambda0 n / 3}.
    pub c0_prime: f64,
    /// min over sampled points of returned cells of log|(T^R)'| / log 4.
    pub min_return_expansion_log4: f64,
    pub cells: usize,
    pub samples_per_cell: usize,
}

fn free_at(h: &StopHistory, m: usize, setup: &TowerSetup) -> bool {
    let cs = h.chain_start as usize;
    match h
        .itinerary
        .iter()
        .rev()
        .find(|e| (e.0 as usize) >= cs && (e.0 as usize) <= m)
    {
        None => true,
        Some(&(t, k)) => m >= t as usize + setup.tables.q(k as i32),
    }
}

/// Distortion constants from stopped pieces (histories required), bound
/// periods and free excursions.
pub fn distortion_audit(
    setup: &TowerSetup,
    runs: &[SeedRun],
    samples: usize,
    max_cells: usize,
    lambda0: f64,
) -> Result<DistortionAudit> {
    let sh = setup.shadow();
    let samples = samples.max(2);
    let hist: Vec<&StopHistory> = runs.iter().flat_map(|r| r.histories.iter()).collect();
    let stride = (hist.len() / max_cells.max(1)).max(1);
    let chosen: Vec<&StopHistory> = hist.iter().step_by(stride).copied().collect();
    let per: Vec<(f64, f64, f64)> = chosen
        .par_iter()
        .map(|h| {
            let n = h.stop as usize;
            let cs = h.chain_start as usize;
            let (a, b) = match h.returned {
                Some(r) => r,
                None => {
                    let (u, v) = (sh.value(h.image[0]), sh.value(h.image[1]));
                    (u.min(v), u.max(v))
                }
            };
            let orbits: Vec<Orbit> = (0..samples)
                .map(|i| pull_orbit(sh, h, a + (b - a) * (i as f64 + 0.5) / samples as f64))
                .collect();
            let mut c = 0.0f64;
            let mut weak = 0.0f64;
            let mut expansion = f64::INFINITY;
            for (i, x) in orbits.iter().enumerate() {
                if h.returned.is_some() {
                    expansion = expansion.min(x.log_deriv(0, n) / 4f64.ln());
                }
                for y in &orbits[i + 1..] {
                    let dist = (x.values[n] - y.values[n]).abs();
                    if dist > 0.0 {
                        let s =
                            ((x.log_deriv(cs, n) - y.log_deriv(cs, n)).exp() - 1.0).abs() / dist;
                        c = c.max(s);
                        if h.returned.is_some() {
                            let r =
                                ((x.log_deriv(0, n) - y.log_deriv(0, n)).exp() - 1.0).abs() / dist;
                            c = c.max(r);
                        }
                    }
                    for m in cs + 1..n {
                        if free_at(h, m, setup) {
                            weak = weak
                                .max(((x.log_deriv(cs, m) - y.log_deriv(cs, m)).exp() - 1.0).abs());
                        }
                    }
                }
            }
            (c, weak, expansion)
        })
        .collect();
    let c_tilde = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let weak_bound = per.iter().map(|p| p.1).fold(0.0, f64::max);
    let min_return_expansion_log4 = per.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);

    let (c1, c2) = bound_distortion(setup, samples);
    let part = setup.partition;
    let ks: Vec<i32> =
        (part.k0() as i32..=(part.k0() as i32 + 6).min(part.kmax() as i32)).collect();
    let d0 = audit_bound_derivatives(&setup.map, &part, &ks, samples.max(8))?.d0;
    let c0_prime = free_excursion_constant(setup, lambda0, 2001, 200);
    Ok(DistortionAudit {
        c_tilde,
        weak_bound,
        c1,
        c2,
        d0,
        c0_prime,
        min_return_expansion_log4,
        cells: chosen.len(),
        samples_per_cell: samples,
    })
}

/// c1 = max |log (T^{n-1})'(Tx) / (T^{n-1})'(Ty)| for x, y in I_k, n <= q(k);
/// c2 = max |ratio - 1| / |T^q x - T^q y| at n = q(k).
fn bound_distortion(setup: &TowerSetup, samples: usize) -> (f64, f64) {
    let sh = setup.shadow();
    let part = setup.partition;
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    for k in part.k0()..=part.kmax() {
        let ki = k as i32;
        let (lo, hi) = part.cell(ki).expect("k in range");
        let q = setup.tables.q(ki).min(sh.len() - 2);
        let orbits: Vec<(Vec<f64>, Pt)> = (0..samples)
            .map(|i| {
                let x = lo * (hi / lo).powf((i as f64 + 0.5) / samples as f64);
                let mut p = sh.forward(Pt::Abs(x));
                let mut logs = vec![0.0];
                let mut acc = 0.0;
                for _ in 1..q {
                    acc += sh.abs_deriv(p).ln();
                    logs.push(acc);
                    p = sh.forward(p);
                }
                (logs, p)
            })
            .collect();
        for (i, (lx, px)) in orbits.iter().enumerate() {
            for (ly, py) in &orbits[i + 1..] {
                for n in 0..lx.len() {
                    c1 = c1.max((lx[n] - ly[n]).abs());
                }
                let dist = sh.diff(*px, *py).abs();
                if dist > 0.0 {
                    let last = lx.len() - 1;
                    c2 = c2.max(((lx[last] - ly[last]).exp() - 1.0).abs() / dist);
                }
            }
        }
    }
    (c1, c2)
}

/// min over free excursions of |(T^n)'(x)| / (delta e^{lambda0 n / 3}),
/// starting from a grid outside (-delta, delta).
pub fn free_excursion_constant(
    setup: &TowerSetup,
    lambda0: f64,
    grid: usize,
    horizon: usize,
) -> f64 {
    let map = setup.map;
    let delta = setup.partition.delta();
    let mut best = f64::INFINITY;
    for i in 0..grid {
        let x0 = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
        if x0.abs() < delta {
            continue;
        }
        let mut x = x0;
        let mut logd = 0.0;
        for n in 1..=horizon {
            logd += map.derivative(x).abs().ln();
            x = map.apply(x);
            best = best.min((logd - delta.ln() - lambda0 * n as f64 / 3.0).exp());
            if x.abs() < delta {
                break;
            }
        }
    }
    best
}

/// Forward orbit of a seed point in plain double precision. Returns the
/// endpoint and a rounding radius r propagated as r <- |f'(x)| r + a r^2 + ulp.
fn reiterate(sh: &ShadowOrbit, x: f64, n: usize) -> (f64, f64) {
    let map = sh.map();
    let a = map.a();
    let mut x = x;
    let mut r = ulp(x);
    for _ in 0..n {
        r = map.derivative(x).abs() * r + a * r * r;
        x = map.apply(x);
        r += ulp(x);
    }
    (x, r)
}

/// Forward orbit in offset arithmetic near the critical orbit.
fn reiterate_shadow(sh: &ShadowOrbit, x: f64, n: usize) -> f64 {
    let mut p = Pt::Abs(x);
    for _ in 0..n {
        p = sh.forward(p);
    }
    sh.value(p)
}

fn ulp(x: f64) -> f64 {
    let a = x.abs().max(f64::MIN_POSITIVE);
    f64::from_bits(a.to_bits() + 1) - a
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReiterationCheck {
    pub cells: usize,
    /// Largest |error| of plain double-precision re-iteration.
    pub max_error: f64,
    /// Largest |error| of re-iteration in offset arithmetic.
    pub max_shadow_error: f64,
    /// Cells whose offset-arithmetic error exceeds the tolerance.
    pub shadow_over_tol: usize,
    /// Largest error over (tolerance + 8 r), r being the propagated
    /// rounding radius of the plain re-iteration.
    pub max_normalized: f64,
    pub pass: bool,
}

/// Returned cells re-iterated from their seed endpoints must land on the
/// endpoints of their tiles within `tol` (plus rounding of the seed point).
pub fn markov_return_check(setup: &TowerSetup, runs: &[SeedRun], tol: f64) -> ReiterationCheck {
    let sh = setup.shadow();
    let items: Vec<(f64, f64, f64)> = runs
        .par_iter()
        .flat_map_iter(|r| {
            r.cells.iter().filter_map(move |c| match c.outcome {
                Outcome::Returned {
                    first_tile,
                    last_tile,
                } => {
                    let (a, _) = setup.cover.tile(first_tile);
                    let (_, b) = setup.cover.tile(last_tile);
                    let (want_lo, want_hi) = if c.increasing { (a, b) } else { (b, a) };
                    let mut worst = (0.0f64, 0.0f64, 0.0f64);
                    for (x, want) in [(c.lo, want_lo), (c.hi, want_hi)] {
                        let (got, cond) = reiterate(sh, x, c.stop as usize);
                        let err = (got - want).abs();
                        let norm = err / (tol + 8.0 * cond);
                        let shadow = (reiterate_shadow(sh, x, c.stop as usize) - want).abs();
                        worst = (worst.0.max(err), worst.1.max(norm), worst.2.max(shadow));
                    }
                    Some(worst)
                }
                _ => None,
            })
        })
        .collect();
    let max_error = items.iter().map(|p| p.0).fold(0.0, f64::max);
    let max_normalized = items.iter().map(|p| p.1).fold(0.0, f64::max);
    ReiterationCheck {
        cells: items.len(),
        max_error,
        max_shadow_error: items.iter().map(|p| p.2).fold(0.0, f64::max),
        shadow_over_tol: items.iter().filter(|p| p.2 > tol).count(),
        max_normalized,
        pass: max_normalized <= 1.0,
    }
}

/// Grown cells of auxiliary runs re-iterated from their seed endpoints must
/// have image length >= growth * eps within relative `tol` (plus rounding).
pub fn stop_length_check(setup: &TowerSetup, runs: &[SeedRun], tol: f64) -> ReiterationCheck {
    let sh = setup.shadow();
    let target = setup.params.stop_length();
    let mut out = ReiterationCheck {
        cells: 0,
        max_error: 0.0,
        max_shadow_error: 0.0,
        shadow_over_tol: 0,
        max_normalized: 0.0,
        pass: true,
    };
    for r in runs {
        for c in r.cells.iter().filter(|c| c.outcome == Outcome::Grown) {
            let n = c.stop as usize;
            let (u, cu) = reiterate(sh, c.lo, n);
            let (v, cv) = reiterate(sh, c.hi, n);
            let short = (target - (u - v).abs()).max(0.0);
            let cond = 8.0 * (cu + cv);
            let su = reiterate_shadow(sh, c.lo, n);
            let sv = reiterate_shadow(sh, c.hi, n);
            let shadow_short = (target - (su - sv).abs()).max(0.0);
            out.max_shadow_error = out.max_shadow_error.max(shadow_short);
            if shadow_short > tol * target {
                out.shadow_over_tol += 1;
            }
            out.cells += 1;
            out.max_error = out.max_error.max(short);
            out.max_normalized = out.max_normalized.max(short / (tol * target + cond));
        }
    }
    out.pass = out.max_normalized <= 1.0;
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthLemmaCheck {
    pub intervals: usize,
    /// Intervals with no descendant reaching the stopping length.
    pub failures: usize,
}

/// Random Omega-type intervals of length eps; some descendant of each must
/// reach the stopping length before the time cap.
pub fn growth_lemma_check(setup: &TowerSetup, count: usize, seed: u64) -> Result<GrowthLemmaCheck> {
    let eps = setup.params.eps;
    let delta = setup.partition.delta();
    let (lo, hi) = setup.map.invariant_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = Vec::with_capacity(count);
    while seeds.len() < count {
        let x = rng.gen_range(lo..hi - eps);
        let y = x + eps;
        let inside = x >= -delta && y <= delta && !(x < 0.0 && y > 0.0);
        let outside = y <= -delta || x >= delta;
        if (inside || outside) && setup.hole.overlap(x, y) == 0.0 {
            seeds.push((x, y));
        }
    }
    let results: Vec<Result<bool>> = seeds
        .par_iter()
        .map(|&(x, y)| {
            Ok(aux_partition(setup, x, y)?
                .cells
                .iter()
                .any(|c| c.outcome == Outcome::Grown))
        })
        .collect();
    let mut failures = 0;
    for r in results {
        if !r? {
            failures += 1;
        }
    }
    Ok(GrowthLemmaCheck {
        intervals: count,
        failures,
    })
}

/// Measured constants gathered from the audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasuredConstants {
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    #[serde(rename = "C_dprime")]
    pub c_dprime: f64,
    pub theta: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_prime")]
    pub d_prime: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "C_tilde")]
    pub c_tilde: f64,
    pub d0: f64,
    pub c0_prime: f64,
}

impl MeasuredConstants {
    pub fn gather(t: &TailAudit, h: &HoleFallStats, d: &DistortionAudit) -> Self {
        Self {
            c_prime: t.c_prime,
            c_dprime: t.c_dprime,
            theta: t.theta,
            d: h.d_abs,
            d_prime: h.d_prime,
            c1: d.c1,
            c2: d.c2,
            c_tilde: d.c_tilde,
            d0: d.d0,
            c0_prime: d.c0_prime,
        }
    }
}

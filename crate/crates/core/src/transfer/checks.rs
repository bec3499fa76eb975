use serde::{Deserialize, Serialize};

use crate::interval_core::{OpenIntervalSet, QuadMap};
use crate::tower::TowerModel;

use super::tower_op::NormParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1H2Verdict {
    /// False when the fitted theta does not decay; the checks are then
    /// reported but not judged.
    pub applicable: bool,
    pub theta: f64,
    /// Smallest A with m(hat Delta_l) <= A theta^l, tower units.
    pub h1_a: f64,
    pub h1_holds: bool,
    /// sum_{l >= 1} e^{xi (l - 1)} m(tilde H_l), tower units.
    pub h2_lhs: f64,
    /// (1 - a0)^2 / b.
    pub h2_rhs: f64,
    pub h2_slack: f64,
    pub h2_holds: bool,
    /// Sufficient hole size (1 - sqrt theta)^2 / (1 + C) * eps (1 - sqrt theta) / (N D theta).
    pub hole_size_bound: f64,
    pub hole_measure: f64,
    pub params: Option<NormParams>,
}

/// Tower-unit level and hole masses scaled from the sampled bases to all N.
fn scaled(model: &TowerModel, v: &[f64]) -> Vec<f64> {
    let f = model.n_tiles as f64 / model.bases.len().max(1) as f64;
    v.iter().map(|x| x * f).collect()
}

pub fn check_h1_h2(
    model: &TowerModel,
    theta: f64,
    params: Option<NormParams>,
    d: f64,
    eps: f64,
    hole: &OpenIntervalSet,
) -> H1H2Verdict {
    let levels = scaled(model, &model.level_mass_tower);
    let holes = scaled(model, &model.hole_mass_tower);
    let len = levels.len().max(holes.len());
    let full: Vec<f64> = (0..len)
        .map(|l| levels.get(l).unwrap_or(&0.0) + holes.get(l).unwrap_or(&0.0))
        .collect();
    let applicable = params.is_some() && theta > 0.0 && theta < 1.0;
    let h1_a = if applicable {
        full.iter()
            .enumerate()
            .map(|(l, m)| m / theta.powi(l as i32))
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let (h2_lhs, h2_rhs) = match params {
        Some(p) => (
            holes
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, m)| (p.xi * (l - 1) as f64).exp() * m)
                .sum(),
            (1.0 - p.a0).powi(2) / p.b,
        ),
        None => (f64::NAN, f64::NAN),
    };
    let st = theta.sqrt();
    let c = params.map_or(0.0, |p| p.c);
    let hole_size_bound =
        (1.0 - st).powi(2) / (1.0 + c) * eps * (1.0 - st) / (model.n_tiles as f64 * d * theta);
    H1H2Verdict {
        applicable,
        theta,
        h1_a,
        h1_holds: applicable && h1_a.is_finite(),
        h2_lhs,
        h2_rhs,
        h2_slack: h2_rhs - h2_lhs,
        h2_holds: applicable && h2_lhs <= h2_rhs,
        hole_size_bound,
        hole_measure: hole.measure(),
        params,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenvalueBounds {
    pub lambda: f64,
    /// 1 - M sum e^{xi (l - 1)} m(tilde H_l).
    pub tower_bound: f64,
    /// 1 - N D theta m(H) / (eps (1 - sqrt theta)).
    pub hole_bound: f64,
    pub sqrt_theta: f64,
    pub tower_holds: bool,
    pub hole_holds: bool,
    pub sqrt_theta_holds: bool,
    pub slack: f64,
}

pub fn eigenvalue_bound_check(
    lambda: f64,
    h: &H1H2Verdict,
    n_tiles: u64,
    d: f64,
    eps: f64,
    tol: f64,
) -> EigenvalueBounds {
    let theta = h.theta;
    let st = theta.sqrt();
    let tower_bound = match h.params {
        Some(p) => 1.0 - p.m * h.h2_lhs,
        None => f64::NAN,
    };
    let hole_bound = if h.hole_measure > 0.0 {
        1.0 - n_tiles as f64 * d * theta * h.hole_measure / (eps * (1.0 - st))
    } else {
        1.0
    };
    let tower_holds = !tower_bound.is_finite() || lambda >= tower_bound - tol;
    let hole_holds = lambda >= hole_bound - tol;
    let sqrt_theta_holds = !st.is_finite() || lambda >= st - tol;
    let slack = [tower_bound, hole_bound, st]
        .iter()
        .filter(|b| b.is_finite())
        .map(|b| lambda - b)
        .fold(f64::INFINITY, f64::min);
    EigenvalueBounds {
        lambda,
        tower_bound,
        hole_bound,
        sqrt_theta: st,
        tower_holds,
        hole_holds,
        sqrt_theta_holds,
        slack,
    }
}

/// Cell average of 1 / sqrt|x - c| over [u, v].
fn inv_sqrt_average(u: f64, v: f64, c: f64) -> f64 {
    let s = |x: f64| (x - c).abs().sqrt();
    let integral = if c <= u || c >= v {
        2.0 * (s(v) - s(u)).abs()
    } else {
        2.0 * (s(u) + s(v))
    };
    integral / (v - u)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityDecomposition {
    pub spikes: usize,
    pub centers: Vec<f64>,
    pub c_flat: f64,
    pub c_spike: f64,
    /// Grid cells above the envelope at the fitted constants.
    pub violations: usize,
    /// Cells skipped because they contain a spike center.
    pub center_cells: usize,
    /// min psi over cells inside [1 - a, 1] \ H.
    pub min_density: f64,
    pub mean_density: f64,
}

/// Fits psi <= c_flat + c_spike sum_{k <= K} 1.9^{-k/3} / sqrt|x - T^k(0)|
/// on grid cells away from the spike centers, minimizing the envelope's
/// integral over [1 - a, 1]; also reports the positivity minimum.
pub fn density_decomposition_check(
    map: &QuadMap,
    hole: &OpenIntervalSet,
    edges: &[f64],
    psi: &[f64],
    spikes: usize,
) -> DensityDecomposition {
    let k = spikes.clamp(1, 20);
    let orbit = map.critical_orbit(k);
    let centers: Vec<f64> = orbit[1..=k].to_vec();
    let n = psi.len();
    let (lo, hi) = map.invariant_range();
    let mut rows = Vec::with_capacity(n);
    let mut center_cells = 0;
    let mut env_mass = (0.0, 0.0);
    for i in 0..n {
        let (u, v) = (edges[i], edges[i + 1]);
        let s: f64 = centers
            .iter()
            .enumerate()
            .map(|(j, &c)| 1.9f64.powf(-((j + 1) as f64) / 3.0) * inv_sqrt_average(u, v, c))
            .sum();
        let inside = u >= lo && v <= hi;
        if inside {
            env_mass.0 += v - u;
            env_mass.1 += s * (v - u);
        }
        if centers.iter().any(|&c| c >= u && c <= v) {
            center_cells += 1;
            continue;
        }
        rows.push((psi[i], s));
    }
    // c_flat(cs) = max (psi - cs s) is convex; so is the envelope integral.
    let flat = |cs: f64| rows.iter().map(|&(p, s)| p - cs * s).fold(0.0f64, f64::max);
    let cost = |cs: f64| flat(cs) * env_mass.0 + cs * env_mass.1;
    let hi_cs = rows
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|&(p, s)| p / s)
        .fold(0.0f64, f64::max);
    let (mut a, mut b) = (0.0, hi_cs);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if cost(m1) <= cost(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let c_spike = 0.5 * (a + b);
    let c_flat = flat(c_spike);
    let violations = rows
        .iter()
        .filter(|&&(p, s)| p > (c_flat + c_spike * s) * (1.0 + 1e-12))
        .count();
    let mut min_density = f64::INFINITY;
    let (mut mass, mut width) = (0.0, 0.0);
    for i in 0..n {
        let (u, v) = (edges[i], edges[i + 1]);
        if u >= lo && v <= hi && hole.overlap(u, v) == 0.0 {
            min_density = min_density.min(psi[i]);
            mass += psi[i] * (v - u);
            width += v - u;
        }
    }
    DensityDecomposition {
        spikes: k,
        centers,
        c_flat,
        c_spike,
        violations,
        center_cells,
        min_density,
        mean_density: if width > 0.0 { mass / width } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_average_matches_quadrature() {
        for &(u, v, c) in &[(0.1, 0.3, 0.0), (0.1, 0.3, 0.2), (-0.5, -0.2, 1.0)] {
            let n = 200_000;
            let h = (v - u) / n as f64;
            let q: f64 = (0..n)
                .map(|i| 1.0 / ((u + (i as f64 + 0.5) * h) - c).abs().sqrt())
                .sum::<f64>()
                / n as f64;
            let tol = if c > u && c < v { 2e-2 } else { 1e-8 };
            assert!(
                (inv_sqrt_average(u, v, c) - q).abs() / q < tol,
                "{u} {v} {c}"
            );
        }
    }

    #[test]
    fn uniform_density_needs_no_spikes() {
        let m = QuadMap::new(2.0).unwrap();
        let edges: Vec<f64> = (0..=64).map(|i| -1.0 + i as f64 / 32.0).collect();
        let psi = vec![0.5; 64];
        let d = density_decomposition_check(&m, &OpenIntervalSet::empty(), &edges, &psi, 12);
        assert!(d.c_spike.abs() < 1e-9, "{}", d.c_spike);
        assert!((d.c_flat - 0.5).abs() < 1e-9);
        assert_eq!(d.violations, 0);
        assert_eq!(d.min_density, 0.5);
    }

    #[test]
    fn empty_hole_bounds() {
        let p = NormParams::from_theta(0.5, 2.0, 0.01);
        let model = TowerModel {
            n_tiles: 1,
            bases: vec![0],
            base_measures: vec![1.0],
            level_mass: vec![1.0, 0.5],
            level_mass_tower: vec![1.0, 0.5],
            hole_mass: vec![0.0, 0.0],
            hole_mass_tower: vec![0.0, 0.0],
            return_mass: vec![0.0, 0.5, 0.5],
            first_chain_mass: vec![1.0, 0.5],
            defect: 0.0,
            residual: Default::default(),
            flags: Default::default(),
            cells: Vec::new(),
        };
        let h = check_h1_h2(&model, 0.5, p, 1.0, 1e-3, &OpenIntervalSet::empty());
        assert!(h.h2_holds);
        assert_eq!(h.h2_lhs, 0.0);
        assert!((h.h2_slack - h.h2_rhs).abs() < 1e-15);
        let e = eigenvalue_bound_check(1.0, &h, 1, 1.0, 1e-3, 1e-9);
        assert_eq!(e.hole_bound, 1.0);
        assert!(e.tower_holds && e.hole_holds && e.sqrt_theta_holds);
    }
}

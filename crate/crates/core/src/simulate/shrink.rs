use serde::{Deserialize, Serialize};

use super::srb::{srb_reference, SrbMode};
use super::survival::{survival_mc, Bins, InitDensity, SurvivalSpec};
use crate::error::{Error, Result};
use crate::interval_core::{OpenIntervalSet, QuadMap};
use crate::stats::weighted_l1;
use crate::transfer::{
    build_ulam_on, power_iterate, GridKind, UlamGrid, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// One hole of a shrinking family, labelled by its size parameter s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyMember {
    pub s: f64,
    pub hole: OpenIntervalSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkRecord {
    pub s: f64,
    pub hole_measure: f64,
    pub lambda: f64,
    pub l1_to_srb: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkStudyResult {
    pub family: Vec<FamilyMember>,
    pub records: Vec<ShrinkRecord>,
    /// lambda strictly increases along the family (largest hole first).
    pub lambda_increasing: bool,
    /// L1 distance to the reference strictly decreases along the family.
    pub l1_decreasing: bool,
    /// Densities per member, as cell averages on the grid.
    #[serde(skip)]
    pub densities: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

fn inside(inner: (f64, f64), outer: (f64, f64)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

/// Checks the nesting conditions of a shrinking family, largest s first:
/// m(H_s) <= s; H_s is inside H_t for s < t with at most one component of
/// H_s per component of H_t; and either none of 0, +-delta lies in any
/// hole, or all three lie in every hole.
pub fn validate_family(family: &[FamilyMember], delta: f64) -> Result<()> {
    if family.is_empty() {
        return Err(Error::HoleFamily("family is empty".into()));
    }
    for (i, m) in family.iter().enumerate() {
        if m.hole.measure() > m.s * (1.0 + 1e-12) {
            return Err(Error::HoleFamily(format!(
                "member {i}: m(H) = {} exceeds s = {}",
                m.hole.measure(),
                m.s
            )));
        }
        if i > 0 {
            let t = &family[i - 1];
            if !(m.s < t.s) {
                return Err(Error::HoleFamily(format!(
                    "member {i}: s must decrease along the family"
                )));
            }
            for &c in m.hole.components() {
                if !t.hole.components().iter().any(|&o| inside(c, o)) {
                    return Err(Error::HoleFamily(format!(
                        "member {i}: component {c:?} is not inside the previous hole"
                    )));
                }
            }
            for &o in t.hole.components() {
                let k = m
                    .hole
                    .components()
                    .iter()
                    .filter(|&&c| inside(c, o))
                    .count();
                if k > 1 {
                    return Err(Error::HoleFamily(format!(
                        "member {i}: component {o:?} of the previous hole contains {k} components"
                    )));
                }
            }
        }
    }
    let marks = [0.0, delta, -delta];
    let none_anywhere = family
        .iter()
        .all(|m| marks.iter().all(|&x| !m.hole.contains(x)));
    let all_everywhere = family
        .iter()
        .all(|m| marks.iter().all(|&x| m.hole.contains(x)));
    if !(none_anywhere || all_everywhere) {
        return Err(Error::HoleFamily(
            "0 and +-delta must lie outside every hole, or inside every hole".into(),
        ));
    }
    Ok(())
}

/// Ulam eigenvalue and density for each hole of a nested family, and the
/// L1 distance of each density to the closed map's invariant density.
pub fn shrink_study(
    map: &QuadMap,
    family: &[FamilyMember],
    kind: GridKind,
    n_cells: usize,
    delta: f64,
    reference: SrbMode,
) -> Result<ShrinkStudyResult> {
    validate_family(family, delta)?;
    let base = UlamGrid::new(kind, n_cells, &OpenIntervalSet::empty())?;
    let srb = srb_reference(map, reference, &base.edges)?;
    let widths: Vec<f64> = (0..n_cells).map(|i| base.width(i)).collect();
    let mut records = Vec::new();
    let mut densities = Vec::new();
    for m in family {
        let grid = UlamGrid::from_edges(kind, base.edges.clone(), &m.hole)?;
        let op = build_ulam_on(map, &m.hole, grid)?;
        let r = power_iterate(&op, DEFAULT_TOL, DEFAULT_MAX_ITER);
        records.push(ShrinkRecord {
            s: m.s,
            hole_measure: m.hole.measure(),
            lambda: r.lambda,
            l1_to_srb: weighted_l1(&r.density, &srb, &widths),
            iterations: r.iterations,
            converged: r.converged,
        });
        densities.push(r.density);
    }
    let lambda_increasing = records.windows(2).all(|w| w[1].lambda > w[0].lambda);
    let l1_decreasing = records.windows(2).all(|w| w[1].l1_to_srb < w[0].l1_to_srb);
    Ok(ShrinkStudyResult {
        family: family.to_vec(),
        records,
        lambda_increasing,
        l1_decreasing,
        densities,
        reference: srb,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalLimit {
    pub n_star: usize,
    pub l1: f64,
    pub survivors: (u64, u64),
}

/// Runs two survival simulations from different initial densities and
/// compares the normalized survivor histograms at time `n_star`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_limit_test(
    map: &QuadMap,
    hole: &OpenIntervalSet,
    init1: &InitDensity,
    init2: &InitDensity,
    n_star: usize,
    samples: u64,
    seed: u64,
    bins: Bins,
) -> Result<ConditionalLimit> {
    let run = |init: &InitDensity, seed: u64| {
        survival_mc(
            map,
            hole,
            &SurvivalSpec {
                init,
                n_max: n_star,
                samples,
                seed,
                bins: bins.clone(),
                hist_times: vec![n_star],
            },
        )
    };
    let a = run(init1, seed)?;
    // independent streams for the second population
    let b = run(init2, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let ma = a.histograms.masses(0);
    let mb = b.histograms.masses(0);
    let l1 = ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum();
    Ok(ConditionalLimit {
        n_star,
        l1,
        survivors: (
            *a.series.survivors.last().unwrap_or(&0),
            *b.series.survivors.last().unwrap_or(&0),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(s: f64, l: f64, r: f64) -> FamilyMember {
        FamilyMember {
            s,
            hole: OpenIntervalSet::single(l, r).unwrap(),
        }
    }

    #[test]
    fn family_validation() {
        let d = (-6f64).exp();
        let ok = vec![member(0.04, 0.27, 0.31), member(0.02, 0.28, 0.30)];
        assert!(validate_family(&ok, d).is_ok());
        let not_nested = vec![member(0.04, 0.27, 0.31), member(0.02, 0.30, 0.32)];
        assert!(validate_family(&not_nested, d).is_err());
        let too_big = vec![member(0.01, 0.27, 0.31)];
        assert!(validate_family(&too_big, d).is_err());
        let two_in_one = vec![
            member(0.04, 0.27, 0.31),
            FamilyMember {
                s: 0.02,
                hole: OpenIntervalSet::new(vec![(0.27, 0.28), (0.29, 0.30)]).unwrap(),
            },
        ];
        assert!(validate_family(&two_in_one, d).is_err());
        let zero_mixed = vec![member(0.04, -0.02, 0.02), member(0.0, 0.0, 1e-9)];
        assert!(validate_family(&zero_mixed, d).is_err());
    }

    #[test]
    fn small_study_monotone() {
        let m = QuadMap::new(2.0).unwrap();
        let fam = vec![
            member(0.04, 0.27, 0.31),
            member(0.02, 0.28, 0.30),
            member(0.01, 0.285, 0.295),
        ];
        let r = shrink_study(
            &m,
            &fam,
            GridKind::Uniform,
            1024,
            (-6f64).exp(),
            SrbMode::ClosedFormA2,
        )
        .unwrap();
        assert!(r.lambda_increasing);
        assert!(r.l1_decreasing);
    }

    #[test]
    fn identical_inits_agree_to_noise() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.28, 0.3).unwrap();
        let samples = 100_000;
        let bins = Bins::uniform(16);
        let r = conditional_limit_test(
            &m,
            &h,
            &InitDensity::Uniform,
            &InitDensity::Uniform,
            10,
            samples,
            1,
            bins,
        )
        .unwrap();
        assert!(r.l1 <= 16.0 * 2.0 / (samples as f64).sqrt(), "{}", r.l1);
    }
}

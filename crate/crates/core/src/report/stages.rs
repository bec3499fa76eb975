//! Computation stages shared by the subcommands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::admissibility::{
    check_a1, check_a2, check_a4, check_class_m, covering_check, derive_length_scales, derive_n0,
    growth_length, A1Report, A2Report, A4Report, ClassMReport, ClassMSettings, HoleSizeVerdict,
    LengthScales, ScaleInputs,
};
use crate::error::Result;
use crate::interval_core::{BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, QuadMap};
use crate::tower::{
    assemble_tower, build_reference_cover, build_tower, distortion_audit, hole_fall_stats,
    tail_audit, DistortionAudit, HoleFallStats, MeasuredConstants, SeedRun, SeedSelection,
    TailAudit, TowerModel, TowerParams, TowerSetup,
};

/// The map, hole and partition a config describes.
pub struct Problem {
    pub map: QuadMap,
    pub hole: OpenIntervalSet,
    pub partition: NeighborhoodPartition,
}

impl Problem {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            map: cfg.map()?,
            hole: cfg.hole_set()?,
            partition: NeighborhoodPartition::new(cfg.k0, cfg.kmax)?,
        })
    }

    pub fn tables(&self, cfg: &RunConfig, r: f64) -> Result<BoundRecoveryTables> {
        BoundRecoveryTables::build(
            &self.map,
            &self.partition,
            r,
            cfg.tables.grid,
            cfg.tables.cap,
        )
    }
}

/// (A1), (A2), n0 and (A4) for the configured hole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoleAssumptions {
    pub a1: A1Report,
    pub a2: A2Report,
    /// eps0 carried forward: the configured value, else the largest
    /// admissible one capped at `eps0_cap`.
    pub eps0: f64,
    pub n0: usize,
    pub a4: A4Report,
}

pub fn hole_assumptions(cfg: &RunConfig, p: &Problem) -> Result<HoleAssumptions> {
    let c = &cfg.check;
    let a1 = check_a1(&p.map, &p.hole, c.orbit_horizon, c.delta0);
    let a2 = check_a2(&p.map, &p.hole, c.m0, c.eps0.unwrap_or(0.0))?;
    let eps0 = c.eps0.unwrap_or_else(|| a2.eps0_max.min(c.eps0_cap));
    let a2 = check_a2(&p.map, &p.hole, c.m0, eps0)?;
    let n0 = if eps0 > 0.0 {
        derive_n0(&p.map, eps0, c.cover_cap)?
    } else {
        0
    };
    let a4 = check_a4(&p.map, &p.hole, n0);
    Ok(HoleAssumptions {
        a1,
        a2,
        eps0,
        n0,
        a4,
    })
}

pub fn class_m(cfg: &RunConfig, p: &Problem) -> Result<ClassMReport> {
    let settings = ClassMSettings {
        excursion_horizon: cfg.check.excursion_horizon,
        ..ClassMSettings::default()
    };
    check_class_m(&p.map, cfg.check.delta0, cfg.check.orbit_horizon, &settings)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringSummary {
    pub intervals: usize,
    pub steps: usize,
    pub failures: usize,
    pub max_uncovered: f64,
    /// (lo, hi, uncovered) per interval.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Random intervals of length in [eps0/2, eps0] against 2 n0 open-system
/// steps.
pub fn covering_property(cfg: &RunConfig, p: &Problem, eps0: f64, n0: usize) -> CoveringSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps = 2 * n0;
    let half = (0.5 * eps0).min(1.0);
    let rows: Vec<(f64, f64, f64)> = (0..cfg.check.covering_intervals)
        .map(|_| {
            let len = rng.gen_range(half..=(2.0 * half).min(2.0));
            let lo = rng.gen_range(-1.0..=(1.0 - len));
            let c = covering_check(&p.map, &p.hole, (lo, lo + len), steps);
            (lo, lo + len, c.uncovered)
        })
        .collect();
    let failures = rows
        .iter()
        .filter(|r| r.2 > crate::admissibility::COVER_TOL)
        .count();
    let max_uncovered = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    CoveringSummary {
        intervals: rows.len(),
        steps,
        failures,
        max_uncovered,
        rows,
    }
}

/// A built tower with its audits.
pub struct TowerRun {
    pub setup: TowerSetup,
    pub runs: Vec<SeedRun>,
    pub model: TowerModel,
    pub tail: TailAudit,
    pub hole_fall: HoleFallStats,
}

pub fn run_tower(
    p: &Problem,
    tables: &BoundRecoveryTables,
    params: TowerParams,
    seeds: SeedSelection,
    tail_floor: f64,
) -> Result<TowerRun> {
    let cover = build_reference_cover(&p.map, &p.hole, params.eps, p.partition.delta())?;
    let setup = TowerSetup::new(
        p.map,
        p.hole.clone(),
        p.partition,
        tables.clone(),
        cover,
        params,
    )?;
    let runs = build_tower(&setup, seeds)?;
    let model = assemble_tower(&setup, &runs);
    let tail = tail_audit(&model, tail_floor);
    let hole_fall = hole_fall_stats(&runs, &model, p.hole.measure(), tail.theta);
    Ok(TowerRun {
        setup,
        runs,
        model,
        tail,
        hole_fall,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotSummary {
    pub eps: f64,
    pub growth: f64,
    pub seeds: u64,
    pub tail: TailAudit,
    pub hole_fall_total: f64,
    pub distortion: DistortionAudit,
    pub constants: MeasuredConstants,
}

pub fn pilot(
    cfg: &RunConfig,
    p: &Problem,
    tables: &BoundRecoveryTables,
    lambda0: f64,
) -> Result<PilotSummary> {
    let pc = &cfg.pilot;
    let mut params = TowerParams::new(pc.eps);
    params.growth = pc.growth;
    params.keep_histories = true;
    let t = run_tower(
        p,
        tables,
        params,
        SeedSelection::Spaced { count: pc.seeds },
        pc.tail_floor,
    )?;
    let distortion = distortion_audit(
        &t.setup,
        &t.runs,
        pc.distortion_samples,
        pc.distortion_cells,
        lambda0,
    )?;
    let constants = MeasuredConstants::gather(&t.tail, &t.hole_fall, &distortion);
    Ok(PilotSummary {
        eps: pc.eps,
        growth: pc.growth,
        seeds: pc.seeds,
        tail: t.tail,
        hole_fall_total: t.hole_fall.total,
        distortion,
        constants,
    })
}

/// The length scales and the hole-size verdict, or why they could not be
/// formed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoleSize {
    pub eps: f64,
    pub scales: Option<LengthScales>,
    pub verdict: Option<HoleSizeVerdict>,
    /// Reason the verdict is missing.
    pub note: Option<String>,
    pub pass: bool,
}

pub fn hole_size(
    p: &Problem,
    tables: &BoundRecoveryTables,
    eps0: f64,
    constants: &MeasuredConstants,
    lambda0: f64,
    m0: usize,
) -> HoleSize {
    let eps = growth_length(tables.eps_prime, eps0, constants.c_tilde);
    if p.hole.is_empty() {
        return HoleSize {
            eps,
            scales: None,
            verdict: None,
            note: Some("no hole: the condition holds vacuously".into()),
            pass: true,
        };
    }
    let inputs = ScaleInputs {
        eps_prime: tables.eps_prime,
        eps0,
        c_tilde: constants.c_tilde,
        theta: constants.theta,
        d: constants.d,
        lambda0,
        m0,
        c0_prime: constants.c0_prime,
        delta: p.partition.delta(),
    };
    match derive_length_scales(&inputs, &p.hole) {
        Ok((s, v)) => HoleSize {
            eps: s.eps,
            pass: v.a3.pass,
            scales: Some(s),
            verdict: Some(v),
            note: None,
        },
        Err(e) => HoleSize {
            eps,
            scales: None,
            verdict: None,
            note: Some(e.to_string()),
            pass: false,
        },
    }
}

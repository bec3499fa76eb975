use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::engine::{full_return_partition, Outcome, Residual, RunFlags, SeedRun, TowerSetup};

/// Which reference intervals serve as seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeedSelection {
    All,
    /// `count` tiles evenly spaced through the cover.
    Spaced {
        count: u64,
    },
}

impl SeedSelection {
    pub fn tiles(&self, n: u64) -> Vec<u64> {
        match *self {
            SeedSelection::All => (0..n).collect(),
            SeedSelection::Spaced { count } if count >= n => (0..n).collect(),
            SeedSelection::Spaced { count } => (0..count)
                .map(|i| ((2 * i + 1) as u128 * n as u128 / (2 * count) as u128) as u64)
                .collect(),
        }
    }
}

/// Runs the return construction on the selected seeds in parallel.
pub fn build_tower(setup: &TowerSetup, seeds: SeedSelection) -> Result<Vec<SeedRun>> {
    let tiles = seeds.tiles(setup.cover.n_tiles());
    if tiles.is_empty() {
        return Err(Error::config("seeds", "selects no reference interval"));
    }
    tiles
        .par_iter()
        .map(|&t| full_return_partition(setup, t))
        .collect()
}

/// A cell of the tower: a piece alive at `level` above base `base`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TowerCell {
    pub level: u16,
    pub base: u64,
    /// Tower measure (Lebesgue over |Lambda|).
    pub measure: f64,
    pub seed_lo: f64,
    pub seed_hi: f64,
    /// pi of the cell.
    pub img_lo: f64,
    pub img_hi: f64,
    pub free: bool,
    /// Last entry time into (-delta, delta).
    pub anchor: Option<u16>,
}

/// Level-by-level mass accounting of the tower over the processed bases.
///
/// Lebesgue series are in units of length; tower series divide each base's
/// contribution by |Lambda^(i)| so that every base has unit measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerModel {
    pub n_tiles: u64,
    pub bases: Vec<u64>,
    pub base_measures: Vec<f64>,
    /// m{R > l} over tracked pieces; dropped residual is in `defect`.
    pub level_mass: Vec<f64>,
    pub level_mass_tower: Vec<f64>,
    /// Mass leaving the tower at level l through the hole.
    pub hole_mass: Vec<f64>,
    pub hole_mass_tower: Vec<f64>,
    /// Mass returning to the base from level l - 1.
    pub return_mass: Vec<f64>,
    /// m{S > l} for the first auxiliary chain of each seed.
    pub first_chain_mass: Vec<f64>,
    /// Residual (time cap, core, degenerate).
    pub defect: f64,
    pub residual: Residual,
    pub flags: RunFlags,
    pub cells: Vec<TowerCell>,
}

impl TowerModel {
    pub fn base_total(&self) -> f64 {
        self.base_measures.iter().sum()
    }

    /// |sum returns + sum hole + defect - sum |Lambda|| / sum |Lambda|.
    pub fn conservation_error(&self) -> f64 {
        let r: f64 = self.return_mass.iter().sum();
        let h: f64 = self.hole_mass.iter().sum();
        let b = self.base_total();
        (r + h + self.defect - b).abs() / b
    }

    pub fn max_level(&self) -> usize {
        self.level_mass.iter().rposition(|&m| m > 0.0).unwrap_or(0)
    }
}

fn add_at(v: &mut Vec<f64>, i: usize, x: f64) {
    if v.len() <= i {
        v.resize(i + 1, 0.0);
    }
    v[i] += x;
}

pub fn assemble_tower(setup: &TowerSetup, runs: &[SeedRun]) -> TowerModel {
    let mut m = TowerModel {
        n_tiles: setup.cover.n_tiles(),
        bases: Vec::with_capacity(runs.len()),
        base_measures: Vec::with_capacity(runs.len()),
        level_mass: Vec::new(),
        level_mass_tower: Vec::new(),
        hole_mass: Vec::new(),
        hole_mass_tower: Vec::new(),
        return_mass: Vec::new(),
        first_chain_mass: Vec::new(),
        defect: 0.0,
        residual: Residual::default(),
        flags: RunFlags::default(),
        cells: Vec::new(),
    };
    for r in runs {
        let w = r.mass();
        m.bases.push(r.base);
        m.base_measures.push(w);
        for (l, &a) in r.alive.iter().enumerate() {
            add_at(&mut m.level_mass, l, a);
            add_at(&mut m.level_mass_tower, l, a / w);
        }
        for (l, &a) in r.first_chain_alive.iter().enumerate() {
            add_at(&mut m.first_chain_mass, l, a);
        }
        for c in &r.cells {
            let l = c.stop as usize;
            match c.outcome {
                Outcome::FellInHole { .. } => {
                    add_at(&mut m.hole_mass, l, c.mass);
                    add_at(&mut m.hole_mass_tower, l, c.mass / w);
                }
                _ => add_at(&mut m.return_mass, l, c.mass),
            }
        }
        m.residual.add(&r.residual);
        let f = &r.flags;
        m.flags.fold_splits += f.fold_splits;
        m.flags.deadline_hole_conflicts += f.deadline_hole_conflicts;
        m.flags.adjoins += f.adjoins;
        m.flags.adjoin_skipped += f.adjoin_skipped;
        m.flags.uncovered_stops += f.uncovered_stops;
        for rec in &r.levels {
            m.cells.push(TowerCell {
                level: rec.level,
                base: r.base,
                measure: (rec.seed_hi - rec.seed_lo) / w,
                seed_lo: rec.seed_lo,
                seed_hi: rec.seed_hi,
                img_lo: rec.img_lo,
                img_hi: rec.img_hi,
                free: !rec.bound,
                anchor: rec.anchor,
            });
        }
    }
    m.defect = m.residual.total();
    let len = m
        .level_mass
        .len()
        .max(m.hole_mass.len())
        .max(m.return_mass.len());
    for v in [
        &mut m.level_mass,
        &mut m.level_mass_tower,
        &mut m.hole_mass,
        &mut m.hole_mass_tower,
        &mut m.return_mass,
    ] {
        v.resize(len, 0.0);
    }
    m.first_chain_mass.resize(len, 0.0);
    m
}

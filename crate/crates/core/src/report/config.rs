use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interval_core::{OpenIntervalSet, QuadMap};
use crate::simulate::{FamilyMember, InitDensity, SrbMode};
use crate::transfer::{CellMeasure, GridKind};

/// One JSON document drives every subcommand. Every field has a default;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub a: f64,
    /// Open intervals (l, r) making up H.
    pub hole: Vec<(f64, f64)>,
    pub k0: u32,
    pub kmax: u32,
    pub seed: u64,
    /// Worker threads; the rayon default when absent.
    pub threads: Option<usize>,
    /// Output directory; `--out` overrides it.
    pub out: Option<PathBuf>,
    /// Ulam cells.
    pub n_cells: usize,
    pub grid: GridKind,
    pub cell_measure: CellMeasure,
    pub samples: u64,
    pub check: CheckConfig,
    pub tables: TablesConfig,
    pub pilot: PilotConfig,
    pub tower: TowerConfig,
    pub accim: AccimConfig,
    pub escape: EscapeConfig,
    pub shrink: ShrinkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 2.0,
            hole: vec![(0.3, 0.3001)],
            k0: 6,
            kmax: 40,
            seed: 1,
            threads: None,
            out: None,
            n_cells: 1 << 13,
            grid: GridKind::Uniform,
            cell_measure: CellMeasure::Lebesgue,
            samples: 1_000_000,
            check: CheckConfig::default(),
            tables: TablesConfig::default(),
            pilot: PilotConfig::default(),
            tower: TowerConfig::default(),
            accim: AccimConfig::default(),
            escape: EscapeConfig::default(),
            shrink: ShrinkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub delta0: f64,
    /// Truncation of orbit clauses.
    pub orbit_horizon: usize,
    /// Truncation of excursion clauses.
    pub excursion_horizon: usize,
    pub m0: usize,
    /// eps0 to test; the largest admissible value when absent.
    pub eps0: Option<f64>,
    /// eps0 used when the hole puts no limit on it.
    pub eps0_cap: f64,
    pub cover_cap: usize,
    /// Random intervals for the covering property.
    pub covering_intervals: usize,
    /// Cells k0..=k0+span for the bound period audits.
    pub bound_span: u32,
    pub bound_samples: usize,
    /// Run the pilot tower and judge the hole-size condition.
    pub hole_size: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            delta0: 0.4,
            orbit_horizon: 1000,
            excursion_horizon: 100,
            m0: 10,
            eps0: None,
            eps0_cap: 1.0,
            cover_cap: 200,
            covering_intervals: 100,
            bound_span: 8,
            bound_samples: 64,
            hole_size: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TablesConfig {
    pub grid: usize,
    pub cap: usize,
}

impl Default for TablesConfig {
    fn default() -> Self {
        Self {
            grid: 2000,
            cap: 400,
        }
    }
}

/// A coarse tower whose distortion constant fixes eps and whose tails give
/// the constants of the hole-size condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotConfig {
    pub eps: f64,
    pub growth: f64,
    pub seeds: u64,
    pub tail_floor: f64,
    pub distortion_samples: usize,
    pub distortion_cells: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            eps: 2e-3,
            growth: 16.0,
            seeds: 24,
            tail_floor: 1e-6,
            distortion_samples: 8,
            distortion_cells: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerConfig {
    /// Reference length; derived from the pilot distortion constant when
    /// absent.
    pub eps: Option<f64>,
    pub growth: f64,
    /// Evenly spaced reference intervals to grow; all of them when absent.
    pub seeds: Option<u64>,
    pub time_cap: usize,
    pub width_floor: f64,
    pub tail_floor: f64,
    pub distortion_samples: usize,
    pub distortion_cells: usize,
    pub markov_tol: f64,
    pub growth_lemma_intervals: usize,
    /// Repeat the hole-fall statistics with the hole halved about its centre.
    pub half_hole: bool,
}

impl Default for TowerConfig {
    fn default() -> Self {
        Self {
            eps: None,
            growth: crate::admissibility::GROWTH,
            seeds: Some(131072),
            time_cap: 400,
            width_floor: 1e-12,
            tail_floor: 1e-6,
            distortion_samples: 8,
            distortion_cells: 2000,
            markov_tol: 1e-8,
            growth_lemma_intervals: 100,
            half_hole: true,
        }
    }
}

/// The tower operator run: a coarse tower on every reference interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerOperatorConfig {
    pub eps: f64,
    pub growth: f64,
    /// Sub-cells per reference interval.
    pub sub: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Bins of the projected density.
    pub bins: usize,
    /// gamma in a0 = max(e^{-xi}, 1 / gamma).
    pub gamma: f64,
}

impl Default for TowerOperatorConfig {
    fn default() -> Self {
        Self {
            eps: 2e-3,
            growth: 16.0,
            sub: 2,
            tol: 1e-10,
            max_iter: 20_000,
            bins: 64,
            gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccimConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Spike count K of the density envelope.
    pub spikes: usize,
    /// Also solve at 2 n_cells.
    pub grid_doubling: bool,
    /// Judge the hole assumptions next to the positivity minimum.
    pub assumptions: bool,
    pub tower_operator: Option<TowerOperatorConfig>,
}

impl Default for AccimConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            spikes: 12,
            grid_doubling: true,
            assumptions: true,
            tower_operator: Some(TowerOperatorConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionalConfig {
    pub n_star: usize,
    pub other: InitDensity,
    pub bins: usize,
}

impl Default for ConditionalConfig {
    fn default() -> Self {
        Self {
            n_star: 40,
            other: InitDensity::center_bump(),
            bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscapeConfig {
    pub init: InitDensity,
    pub n_max: usize,
    /// Fit window (first, last); from `skip` to the end when absent.
    pub window: Option<(usize, usize)>,
    pub skip: usize,
    pub bins: usize,
    /// Ulam eigenvalue for the cross-method delta.
    pub ulam: bool,
    pub conditional: Option<ConditionalConfig>,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        Self {
            init: InitDensity::Uniform,
            n_max: 60,
            window: None,
            skip: 5,
            bins: 64,
            ulam: true,
            conditional: Some(ConditionalConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEntry {
    pub s: f64,
    pub hole: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkConfig {
    /// Largest hole first.
    pub family: Vec<FamilyEntry>,
    pub reference: SrbMode,
}

impl Default for ShrinkConfig {
    fn default() -> Self {
        let c = 0.29;
        let family = [4e-2, 2e-2, 1e-2, 5e-3]
            .iter()
            .map(|&m| FamilyEntry {
                s: m,
                hole: vec![(c - m / 2.0, c + m / 2.0)],
            })
            .collect();
        Self {
            family,
            reference: SrbMode::ClosedFormA2,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn map(&self) -> Result<QuadMap> {
        QuadMap::new(self.a)
    }

    pub fn hole_set(&self) -> Result<OpenIntervalSet> {
        OpenIntervalSet::new(self.hole.clone())
    }

    pub fn family(&self) -> Result<Vec<FamilyMember>> {
        self.shrink
            .family
            .iter()
            .map(|e| {
                Ok(FamilyMember {
                    s: e.s,
                    hole: OpenIntervalSet::new(e.hole.clone())?,
                })
            })
            .collect()
    }

    /// Checks every field against the preconditions of the modules it
    /// feeds, before any computation.
    pub fn validate(&self) -> Result<()> {
        self.map()?;
        self.hole_set()?;
        if self.k0 == 0 || self.kmax < self.k0 {
            return Err(Error::config("kmax", "need 1 <= k0 <= kmax"));
        }
        if self.n_cells < 2 {
            return Err(Error::config("n_cells", "need at least two cells"));
        }
        if self.samples < 10_000 {
            return Err(Error::config("samples", "must be at least 10000"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        let c = &self.check;
        if !(c.delta0 > 0.0 && c.delta0 < 0.5) {
            return Err(Error::config("check.delta0", "must lie in (0, 0.5)"));
        }
        if c.orbit_horizon < 10 || c.excursion_horizon < 10 {
            return Err(Error::config(
                "check.orbit_horizon",
                "horizons must be at least 10",
            ));
        }
        if c.m0 == 0 {
            return Err(Error::config("check.m0", "must be at least 1"));
        }
        if let Some(e) = c.eps0 {
            if !(e > 0.0 && e <= 2.0) {
                return Err(Error::config("check.eps0", "must lie in (0, 2]"));
            }
        }
        if !(c.eps0_cap > 0.0 && c.eps0_cap <= 2.0) {
            return Err(Error::config("check.eps0_cap", "must lie in (0, 2]"));
        }
        if self.tables.grid < 2 || self.tables.cap == 0 {
            return Err(Error::config(
                "tables",
                "grid must be at least 2 and cap positive",
            ));
        }
        let p = &self.pilot;
        if !(p.eps > 0.0 && p.eps < 1.0) || !(p.growth >= 4.0) || p.seeds == 0 {
            return Err(Error::config(
                "pilot",
                "need eps in (0, 1), growth >= 4, seeds >= 1",
            ));
        }
        let t = &self.tower;
        if let Some(e) = t.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::config("tower.eps", "must lie in (0, 1)"));
            }
        }
        if !(t.growth >= 4.0) {
            return Err(Error::config("tower.growth", "must be at least 4"));
        }
        if t.seeds == Some(0) {
            return Err(Error::config("tower.seeds", "must be at least 1"));
        }
        if !(t.tail_floor > 0.0 && t.tail_floor < 1.0) {
            return Err(Error::config("tower.tail_floor", "must lie in (0, 1)"));
        }
        if let Some(op) = &self.accim.tower_operator {
            if op.sub == 0 || op.bins < 2 {
                return Err(Error::config(
                    "accim.tower_operator",
                    "need sub >= 1 and bins >= 2",
                ));
            }
            if !(op.gamma > 1.0) {
                return Err(Error::config("accim.tower_operator.gamma", "must exceed 1"));
            }
        }
        if self.accim.spikes == 0 || self.accim.spikes > 20 {
            return Err(Error::config("accim.spikes", "must lie in [1, 20]"));
        }
        let e = &self.escape;
        e.init.validate()?;
        if e.n_max < 5 || e.bins == 0 {
            return Err(Error::config(
                "escape.n_max",
                "need n_max >= 5 and bins >= 1",
            ));
        }
        if let Some(c) = &e.conditional {
            c.other.validate()?;
            if c.n_star == 0 || c.bins == 0 {
                return Err(Error::config(
                    "escape.conditional",
                    "need n_star >= 1 and bins >= 1",
                ));
            }
        }
        if self.shrink.family.is_empty() {
            return Err(Error::config("shrink.family", "must not be empty"));
        }
        self.family()?;
        Ok(())
    }

    /// sha256 of the canonical JSON of the settings that shape results;
    /// the output directory and thread count are left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.threads = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

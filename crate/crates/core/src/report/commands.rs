use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::output::{FileEntry, OutputDir, Table};
use super::stages::{
    class_m, covering_property, hole_assumptions, hole_size, pilot, run_tower, HoleAssumptions,
    HoleSize, Problem, TowerRun,
};
use crate::admissibility::LengthScales;
use crate::error::{Error, Result};
use crate::interval_core::audit_bound_derivatives;
use crate::simulate::{
    conditional_limit_test, escape_rate_fit, shrink_study, srb_reference, survival_mc, Bins,
    SrbMode, SurvivalSpec, GENERATOR,
};
use crate::stats::weighted_l1;
use crate::tower::{
    distortion_audit, growth_lemma_check, markov_return_check, piece_count_audit, return_audit,
    stop_length_check, MeasuredConstants, SeedSelection, TowerParams,
};
use crate::transfer::{
    build_tower_operator, build_ulam_on, check_h1_h2, density_decomposition_check,
    eigenvalue_bound_check, power_iterate, project_density, tower_eigen, NormParams,
    SparseOperator, SpectralResult, UlamGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Tower,
    Accim,
    Escape,
    Shrink,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Tower => "tower",
            Command::Accim => "accim",
            Command::Escape => "escape",
            Command::Shrink => "shrink",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub generator: String,
    pub threads: usize,
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub measured_constants: Option<MeasuredConstants>,
    pub length_scales: Option<LengthScales>,
    /// Residual and defect figures of any tower built.
    pub residual: Option<Value>,
    pub files: Vec<FileEntry>,
}

/// What a subcommand hands back besides its files.
pub struct Outcome {
    pub report: Value,
    /// False when a requested check failed (exit status 3 for `check`).
    pub passed: bool,
    pub constants: Option<MeasuredConstants>,
    pub scales: Option<LengthScales>,
    pub residual: Option<Value>,
}

impl Outcome {
    fn new(report: Value, passed: bool) -> Self {
        Self {
            report,
            passed,
            constants: None,
            scales: None,
            residual: None,
        }
    }
}

pub struct RunResult {
    pub outcome: Outcome,
    pub out: PathBuf,
}

/// Validates the config, runs the subcommand inside a pool of
/// `cfg.threads` workers and writes report.json and manifest.json.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<RunResult> {
    cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::config("threads", e.to_string()))?
    };
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let digest = cfg.digest();
    let mut dir = OutputDir::create(out, &digest)?;
    let outcome = pool.install(|| match command {
        Command::Check => cmd_check(cfg, &mut dir),
        Command::Tower => cmd_tower(cfg, &mut dir),
        Command::Accim => cmd_accim(cfg, &mut dir),
        Command::Escape => cmd_escape(cfg, &mut dir),
        Command::Shrink => cmd_shrink(cfg, &mut dir),
    })?;
    dir.json("report.json", &outcome.report)?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_sha256: digest,
        seed: cfg.seed,
        generator: GENERATOR.to_string(),
        threads: pool.current_num_threads(),
        started_unix_s: started,
        elapsed_s: clock.elapsed().as_secs_f64(),
        measured_constants: outcome.constants.clone(),
        length_scales: outcome.scales,
        residual: outcome.residual.clone(),
        files: dir.files().to_vec(),
    };
    let path = dir.path().to_path_buf();
    dir.finish(&manifest)?;
    Ok(RunResult { outcome, out: path })
}

/// Process exit status: 0 success, 1 invalid input, 2 computational
/// failure, 3 a `check` that ran but failed.
pub fn exit_code(command: Command, result: &Result<RunResult>) -> i32 {
    match result {
        Ok(r) if command == Command::Check && !r.outcome.passed => 3,
        Ok(_) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

/// (P1)(a): k/2 <= p(k) <= 4k.
fn bound_period_rows(
    tables: &crate::interval_core::BoundRecoveryTables,
    k0: u32,
    span: u32,
) -> Vec<(u32, usize, usize, bool)> {
    (k0..=(k0 + span).min(tables.kmax))
        .map(|k| {
            let p = tables.p(k as i32);
            let q = tables.q(k as i32);
            (k, p, q, 2 * p >= k as usize && p <= 4 * k as usize)
        })
        .collect()
}

pub fn cmd_check(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let p = Problem::new(cfg)?;
    let cm = class_m(cfg, &p)?;
    let ha = hole_assumptions(cfg, &p)?;
    let tables = p.tables(cfg, ha.a1.r)?;
    let span = cfg.check.bound_span;
    let rows = bound_period_rows(&tables, cfg.k0, span);
    let ks: Vec<i32> = (cfg.k0..=(cfg.k0 + span).min(cfg.kmax))
        .map(|k| k as i32)
        .collect();
    let bound_audit = audit_bound_derivatives(&p.map, &p.partition, &ks, cfg.check.bound_samples)?;
    let covering = covering_property(cfg, &p, ha.eps0, ha.n0);
    let (pilot_summary, size) = if cfg.check.hole_size {
        let ps = pilot(cfg, &p, &tables, cm.constants.lambda0)?;
        let hs = hole_size(
            &p,
            &tables,
            ha.eps0,
            &ps.constants,
            cm.constants.lambda0,
            cm.constants.m0,
        );
        (Some(ps), Some(hs))
    } else {
        (None, None)
    };

    let p1a = rows.iter().all(|r| r.3);
    let verdicts = json!({
        "class_m": cm.passed(),
        "A1": ha.a1.pass,
        "A2": ha.a2.pass,
        "A3": size.as_ref().map(|s| s.pass),
        "A4": ha.a4.pass,
        "bound_period_range": p1a,
        "covering": covering.failures == 0,
    });
    let passed = cm.passed()
        && ha.a1.pass
        && ha.a2.pass
        && ha.a4.pass
        && p1a
        && covering.failures == 0
        && size.as_ref().is_none_or(|s| s.pass);

    let mut t = Table::new(&[
        ("k", "index"),
        ("p", "steps"),
        ("q", "steps"),
        ("p_in_range", "bool"),
    ]);
    for &(k, pk, qk, ok) in &rows {
        t.push(vec![k.into(), pk.into(), qk.into(), ok.into()]);
    }
    out.csv("bound_periods.csv", &t)?;
    let mut t = Table::new(&[("lo", "x"), ("hi", "x"), ("uncovered", "length")]);
    for &(lo, hi, u) in &covering.rows {
        t.push(vec![lo.into(), hi.into(), u.into()]);
    }
    out.csv("covering.csv", &t)?;
    let orbit = p.map.critical_orbit(50);
    let pts: Vec<(f64, f64)> = orbit
        .iter()
        .enumerate()
        .map(|(n, &x)| (n as f64, x))
        .collect();
    out.dat("critical_orbit.dat", ("n", "step"), ("f^n(0)", "x"), &pts)?;

    let report = json!({
        "command": "check",
        "passed": passed,
        "verdicts": verdicts,
        "horizons": {"orbit": cfg.check.orbit_horizon, "excursion": cfg.check.excursion_horizon},
        "class_m": {
            "constants": cm.constants,
            "orbit_distance": cm.orbit_distance,
            "clause_a": cm.clause_a,
            "clause_b": cm.clause_b,
            "clause_c": cm.clause_c,
            "lambda_target_met": cm.lambda_target_met,
            "recovery_margin": cm.recovery_margin,
            "excursion_samples": cm.excursion_samples,
        },
        "assumptions": ha,
        "tables": {"eps_prime": tables.eps_prime, "r": tables.r, "k0": tables.k0, "kmax": tables.kmax, "p": tables.p, "q": tables.q},
        "bound_audit": bound_audit,
        "covering": {"intervals": covering.intervals, "steps": covering.steps, "failures": covering.failures, "max_uncovered": covering.max_uncovered},
        "pilot": pilot_summary,
        "hole_size": size,
    });
    let mut o = Outcome::new(report, passed);
    o.constants = pilot_summary.map(|p| p.constants);
    o.scales = size.and_then(|s| s.scales);
    Ok(o)
}

fn residual_figures(t: &TowerRun) -> Value {
    json!({
        "residual": t.model.residual,
        "flags": t.model.flags,
        "defect": t.model.defect,
        "base_total": t.model.base_total(),
        "conservation_error": t.model.conservation_error(),
    })
}

fn level_table(t: &TowerRun, out: &mut OutputDir) -> Result<()> {
    let m = &t.model;
    let w = m.base_total();
    let len = m
        .level_mass
        .len()
        .max(m.hole_mass.len())
        .max(m.return_mass.len());
    let at = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0) / w;
    let mut tab = Table::new(&[
        ("n", "level"),
        ("alive", "fraction of base"),
        ("first_chain_alive", "fraction of base"),
        ("returned", "fraction of base"),
        ("hole_fall", "fraction of base"),
    ]);
    for n in 0..len {
        tab.push(vec![
            n.into(),
            at(&m.level_mass, n).into(),
            at(&m.first_chain_mass, n).into(),
            at(&m.return_mass, n).into(),
            at(&m.hole_mass, n).into(),
        ]);
    }
    out.csv("levels.csv", &tab)?;
    let log_pts = |v: &Vec<f64>| -> Vec<(f64, f64)> {
        v.iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(n, &x)| (n as f64, (x / w).log10()))
            .collect()
    };
    out.dat(
        "tail_r.dat",
        ("n", "level"),
        ("log10 m{R>n}", "fraction of base"),
        &log_pts(&m.level_mass),
    )?;
    out.dat(
        "tail_s.dat",
        ("n", "level"),
        ("log10 m{S>n}", "fraction of base"),
        &log_pts(&m.first_chain_mass),
    )?;
    let hf: Vec<(f64, f64)> = t
        .hole_fall
        .series
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(n, &x)| (n as f64, x))
        .collect();
    out.dat(
        "hole_fall.dat",
        ("n", "level"),
        ("hole fall", "fraction of base"),
        &hf,
    )?;
    let mut cells = Table::new(&[
        ("level", "level"),
        ("base", "tile"),
        ("measure", "length"),
        ("seed_lo", "x"),
        ("seed_hi", "x"),
        ("img_lo", "x"),
        ("img_hi", "x"),
        ("free", "bool"),
    ]);
    for c in &m.cells {
        cells.push(vec![
            (c.level as usize).into(),
            c.base.into(),
            c.measure.into(),
            c.seed_lo.into(),
            c.seed_hi.into(),
            c.img_lo.into(),
            c.img_hi.into(),
            c.free.into(),
        ]);
    }
    out.csv("tower_cells.csv", &cells)
}

pub fn cmd_tower(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let p = Problem::new(cfg)?;
    let cm = class_m(cfg, &p)?;
    let lambda0 = cm.constants.lambda0;
    let ha = hole_assumptions(cfg, &p)?;
    let tables = p.tables(cfg, ha.a1.r)?;
    let tc = &cfg.tower;
    let (pilot_summary, eps) = match tc.eps {
        Some(e) => (None, e),
        None => {
            let ps = pilot(cfg, &p, &tables, lambda0)?;
            let e = crate::admissibility::growth_length(
                tables.eps_prime,
                ha.eps0,
                ps.constants.c_tilde,
            );
            (Some(ps), e)
        }
    };
    let seeds = tc
        .seeds
        .map_or(SeedSelection::All, |count| SeedSelection::Spaced { count });
    let mut params = TowerParams::new(eps);
    params.growth = tc.growth;
    params.time_cap = tc.time_cap;
    params.width_floor = tc.width_floor;
    params.keep_histories = true;
    let t = run_tower(&p, &tables, params, seeds, tc.tail_floor)?;
    let pieces = piece_count_audit(&t.runs);
    let returns = return_audit(&t.runs, tc.growth);
    let dist = distortion_audit(
        &t.setup,
        &t.runs,
        tc.distortion_samples,
        tc.distortion_cells,
        lambda0,
    )?;
    let dist2 = distortion_audit(
        &t.setup,
        &t.runs,
        2 * tc.distortion_samples,
        tc.distortion_cells,
        lambda0,
    )?;
    let markov = markov_return_check(&t.setup, &t.runs, tc.markov_tol);
    let stops = stop_length_check(&t.setup, &t.runs, tc.markov_tol);
    let growth_lemma = growth_lemma_check(&t.setup, tc.growth_lemma_intervals, cfg.seed)?;
    let constants = MeasuredConstants::gather(&t.tail, &t.hole_fall, &dist);
    let c_tilde_fixed = pilot_summary
        .as_ref()
        .map_or(dist.c_tilde, |ps| ps.constants.c_tilde);
    let size = {
        let mut c = constants.clone();
        c.c_tilde = c_tilde_fixed;
        hole_size(&p, &tables, ha.eps0, &c, lambda0, cm.constants.m0)
    };
    let half = if tc.half_hole && !p.hole.is_empty() {
        let hp = Problem {
            hole: p.hole.scaled(0.5)?,
            map: p.map,
            partition: p.partition,
        };
        let mut hparams = params;
        hparams.keep_histories = false;
        let h = run_tower(&hp, &tables, hparams, seeds, tc.tail_floor)?;
        let ratio = if t.hole_fall.total > 0.0 {
            h.hole_fall.total / t.hole_fall.total
        } else {
            f64::NAN
        };
        Some(json!({
            "hole_measure": hp.hole.measure(),
            "hole_fall_total": h.hole_fall.total,
            "ratio": ratio,
            "theta": h.hole_fall.theta,
        }))
    } else {
        None
    };
    let c_tilde_ratio = dist2.c_tilde / dist.c_tilde;

    level_table(&t, out)?;
    let mut pc = Table::new(&[("n", "level"), ("pieces", "count"), ("bound", "count")]);
    for (n, &c) in pieces.counts.iter().enumerate() {
        pc.push(vec![
            n.into(),
            c.into(),
            crate::tower::piece_count_bound(n).into(),
        ]);
    }
    out.csv("piece_counts.csv", &pc)?;

    let mut model = t.model.clone();
    model.cells = Vec::new();
    let residual = residual_figures(&t);
    let report = json!({
        "command": "tower",
        "eps": eps,
        "growth": tc.growth,
        "stop_length": params.stop_length(),
        "n_tiles": t.setup.cover.n_tiles(),
        "seeds": t.runs.len(),
        "model": model,
        "conservation_error": t.model.conservation_error(),
        "tails": t.tail,
        "hole_fall": t.hole_fall,
        "half_hole": half,
        "theta_gap": (t.hole_fall.theta - t.tail.theta).abs(),
        "pieces": {"max_ratio": pieces.max_ratio, "level_zero": pieces.level_zero},
        "returns": returns,
        "distortion": dist,
        "distortion_doubled": dist2,
        "c_tilde_ratio": c_tilde_ratio,
        "return_expansion_above_4_6": dist.min_return_expansion_log4 > 6.0,
        "markov_returns": markov,
        "stop_lengths": stops,
        "growth_lemma": growth_lemma,
        "bound_periods": bound_period_rows(&tables, cfg.k0, cfg.check.bound_span),
        "pilot": pilot_summary,
        "hole_size": size,
        "residual": residual,
    });
    let mut o = Outcome::new(report, true);
    o.constants = Some(constants);
    o.scales = size.scales;
    o.residual = Some(residual);
    Ok(o)
}

pub fn ulam_solve(
    cfg: &RunConfig,
    p: &Problem,
    n_cells: usize,
) -> Result<(SparseOperator, SpectralResult)> {
    let grid = UlamGrid::new(cfg.grid, n_cells, &p.hole)?.with_reference(cfg.cell_measure, &p.hole);
    let op = build_ulam_on(&p.map, &p.hole, grid)?;
    let r = power_iterate(&op, cfg.accim.tol, cfg.accim.max_iter);
    Ok((op, r))
}

/// Masses of a cell-average density on `edges`, moved to `bins`.
pub fn rebin(edges: &[f64], density: &[f64], bins: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; bins.len() - 1];
    let mut j = 0;
    for i in 0..density.len() {
        let (u, v) = (edges[i], edges[i + 1]);
        while j + 1 < bins.len() - 1 && bins[j + 1] <= u {
            j += 1;
        }
        let mut k = j;
        while k < out.len() && bins[k] < v {
            let o = v.min(bins[k + 1]) - u.max(bins[k]);
            if o > 0.0 {
                out[k] += density[i] * o;
            }
            k += 1;
        }
    }
    out
}

/// L1 distance to the closed-form invariant density at a = 2, skipping the
/// first and last cell.
pub fn srb_l1_interior(p: &Problem, edges: &[f64], density: &[f64]) -> Result<f64> {
    let srb = srb_reference(&p.map, SrbMode::ClosedFormA2, edges)?;
    let n = density.len();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                edges[i + 1] - edges[i]
            }
        })
        .collect();
    Ok(weighted_l1(density, &srb, &w))
}

fn tower_operator_stage(
    cfg: &RunConfig,
    p: &Problem,
    ha: &HoleAssumptions,
    lambda0: f64,
    ulam: &SpectralResult,
    edges: &[f64],
    out: &mut OutputDir,
) -> Result<Option<Value>> {
    let Some(oc) = &cfg.accim.tower_operator else {
        return Ok(None);
    };
    let tables = p.tables(cfg, ha.a1.r)?;
    let mut params = TowerParams::new(oc.eps);
    params.growth = oc.growth;
    params.resolve = oc.sub;
    params.record_levels = true;
    params.keep_histories = true;
    let t = run_tower(p, &tables, params, SeedSelection::All, cfg.tower.tail_floor)?;
    let op = build_tower_operator(&t.setup.cover, &t.runs, oc.sub)?;
    let eig = tower_eigen(&op, oc.tol, oc.max_iter);
    let bins: Vec<f64> = (0..=oc.bins)
        .map(|i| -1.0 + 2.0 * i as f64 / oc.bins as f64)
        .collect();
    let proj = project_density(&op, &t.setup.cover, &t.runs, &eig.phi, &bins)?;
    let ulam_mass = rebin(edges, &ulam.density, &bins);
    let l1: f64 = proj
        .density
        .iter()
        .zip(&ulam_mass)
        .enumerate()
        .map(|(i, (d, m))| (d * (bins[i + 1] - bins[i]) - m).abs())
        .sum();
    let dist = distortion_audit(
        &t.setup,
        &t.runs,
        cfg.pilot.distortion_samples,
        cfg.pilot.distortion_cells,
        lambda0,
    )?;
    let theta = t.tail.theta;
    let c = 2.0 * dist.c_tilde * oc.eps;
    let params = NormParams::from_theta(theta, oc.gamma, c);
    let norms = params.map(|np| op.norms(&eig.phi, &np));
    let d = t.hole_fall.d_abs;
    let h = check_h1_h2(&t.model, theta, params, d, oc.eps, &p.hole);
    let bounds = eigenvalue_bound_check(eig.lambda, &h, t.setup.cover.n_tiles(), d, oc.eps, 1e-9);

    let mut tab = Table::new(&[
        ("lo", "x"),
        ("hi", "x"),
        ("tower", "density"),
        ("ulam", "density"),
    ]);
    for i in 0..oc.bins {
        let w = bins[i + 1] - bins[i];
        tab.push(vec![
            bins[i].into(),
            bins[i + 1].into(),
            proj.density[i].into(),
            (ulam_mass[i] / w).into(),
        ]);
    }
    out.csv("projected_density.csv", &tab)?;
    Ok(Some(json!({
        "eps": oc.eps,
        "growth": oc.growth,
        "sub": oc.sub,
        "n_tiles": t.setup.cover.n_tiles(),
        "levels": op.levels(),
        "defect": op.defect,
        "lambda": eig.lambda,
        "iterations": eig.iterations,
        "converged": eig.converged,
        "lambda_gap": (eig.lambda - ulam.lambda).abs(),
        "projection_l1": l1,
        "sub_resolution_pieces": proj.sub_resolution,
        "theta": theta,
        "c_tilde": dist.c_tilde,
        "norm_params": params,
        "norms": norms,
        "h1_h2": h,
        "eigenvalue_bounds": bounds,
        "conservation_error": t.model.conservation_error(),
    })))
}

pub fn cmd_accim(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let p = Problem::new(cfg)?;
    let (op, r) = ulam_solve(cfg, &p, cfg.n_cells)?;
    let edges = op.grid.edges.clone();
    let rows = op.row_sums();
    let max_row = rows.iter().copied().fold(0.0, f64::max);
    let min_row = rows.iter().copied().fold(f64::INFINITY, f64::min);
    let closed_row_error = if p.hole.is_empty() {
        Some(rows.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let doubled = if cfg.accim.grid_doubling {
        Some(ulam_solve(cfg, &p, 2 * cfg.n_cells)?.1.lambda)
    } else {
        None
    };
    let srb_l1 = if p.map.a() == 2.0 {
        Some(srb_l1_interior(&p, &edges, &r.density)?)
    } else {
        None
    };
    let dec = density_decomposition_check(&p.map, &p.hole, &edges, &r.density, cfg.accim.spikes);

    let cm = class_m(cfg, &p)?;
    let ha = hole_assumptions(cfg, &p)?;
    let assumptions = if cfg.accim.assumptions {
        let tables = p.tables(cfg, ha.a1.r)?;
        let ps = pilot(cfg, &p, &tables, cm.constants.lambda0)?;
        let hs: HoleSize = hole_size(
            &p,
            &tables,
            ha.eps0,
            &ps.constants,
            cm.constants.lambda0,
            cm.constants.m0,
        );
        Some(json!({
            "A1": ha.a1.pass,
            "A2": ha.a2.pass,
            "A3": hs.pass,
            "A4": ha.a4.pass,
            "all": ha.a1.pass && ha.a2.pass && hs.pass && ha.a4.pass,
            "detail": ha,
            "hole_size": hs,
        }))
    } else {
        None
    };
    let tower = tower_operator_stage(cfg, &p, &ha, cm.constants.lambda0, &r, &edges, out)?;

    let mut tab = Table::new(&[
        ("lo", "x"),
        ("hi", "x"),
        ("psi", "density"),
        ("envelope", "density"),
    ]);
    let weights: Vec<f64> = (0..dec.centers.len())
        .map(|j| 1.9f64.powf(-((j + 1) as f64) / 3.0))
        .collect();
    for i in 0..r.density.len() {
        let x = 0.5 * (edges[i] + edges[i + 1]);
        let s: f64 = dec
            .centers
            .iter()
            .zip(&weights)
            .map(|(&c, w)| w / (x - c).abs().sqrt())
            .sum();
        tab.push(vec![
            edges[i].into(),
            edges[i + 1].into(),
            r.density[i].into(),
            (dec.c_flat + dec.c_spike * s).into(),
        ]);
    }
    out.csv("density.csv", &tab)?;
    let pts: Vec<(f64, f64)> = (0..r.density.len())
        .map(|i| (0.5 * (edges[i] + edges[i + 1]), r.density[i]))
        .collect();
    out.dat("density.dat", ("x", "x"), ("psi", "density"), &pts)?;

    let positivity_ratio = dec.min_density / dec.mean_density;
    let report = json!({
        "command": "accim",
        "n_cells": cfg.n_cells,
        "grid": cfg.grid,
        "cell_measure": cfg.cell_measure,
        "lambda": r.lambda,
        "iterations": r.iterations,
        "residual": r.residual,
        "converged": r.converged,
        "total_escape": r.total_escape,
        "lambda_doubled": doubled,
        "grid_doubling_gap": doubled.map(|l| (l - r.lambda).abs()),
        "row_sums": {"max": max_row, "min": min_row, "closed_max_error": closed_row_error},
        "srb_l1_interior": srb_l1,
        "decomposition": dec,
        "positivity_ratio": positivity_ratio,
        "assumptions": assumptions,
        "tower_operator": tower,
    });
    Ok(Outcome::new(report, true))
}

pub fn cmd_escape(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let p = Problem::new(cfg)?;
    let e = &cfg.escape;
    let spec = SurvivalSpec {
        init: &e.init,
        n_max: e.n_max,
        samples: cfg.samples,
        seed: cfg.seed,
        bins: Bins::uniform(e.bins),
        hist_times: vec![0, e.n_max],
    };
    let run = survival_mc(&p.map, &p.hole, &spec)?;
    let fit = escape_rate_fit(&run.series, e.window, e.skip)?;
    let ulam = if e.ulam {
        Some(ulam_solve(cfg, &p, cfg.n_cells)?.1.lambda)
    } else {
        None
    };
    let conditional = match &e.conditional {
        Some(c) => Some(conditional_limit_test(
            &p.map,
            &p.hole,
            &e.init,
            &c.other,
            c.n_star,
            cfg.samples,
            cfg.seed,
            Bins::uniform(c.bins),
        )?),
        None => None,
    };

    let mut tab = Table::new(&[
        ("n", "step"),
        ("p", "surviving fraction"),
        ("survivors", "samples"),
    ]);
    for (n, (&pn, &k)) in run.series.p.iter().zip(&run.series.survivors).enumerate() {
        tab.push(vec![n.into(), pn.into(), k.into()]);
    }
    out.csv("survival.csv", &tab)?;
    let pts: Vec<(f64, f64)> = run
        .series
        .p
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(n, &x)| (n as f64, x.ln()))
        .collect();
    out.dat(
        "survival.dat",
        ("n", "step"),
        ("log p_n", "log fraction"),
        &pts,
    )?;
    let last = run.histograms.times.len() - 1;
    let dens = run.histograms.density(last);
    let edges = &run.histograms.bins.edges;
    let mut h = Table::new(&[("lo", "x"), ("hi", "x"), ("density", "per unit length")]);
    for (i, d) in dens.iter().enumerate() {
        h.push(vec![edges[i].into(), edges[i + 1].into(), (*d).into()]);
    }
    out.csv("survivor_histogram.csv", &h)?;

    let report = json!({
        "command": "escape",
        "samples": cfg.samples,
        "seed": cfg.seed,
        "generator": GENERATOR,
        "init": e.init,
        "n_max": e.n_max,
        "truncated": run.series.truncated,
        "fit": fit,
        "lambda_mc": fit.lambda,
        "lambda_ulam": ulam,
        "cross_method_gap": ulam.map(|l| (l - fit.lambda).abs()),
        "conditional": conditional,
    });
    Ok(Outcome::new(report, true))
}

pub fn cmd_shrink(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome> {
    let p = Problem::new(cfg)?;
    let family = cfg.family()?;
    let r = shrink_study(
        &p.map,
        &family,
        cfg.grid,
        cfg.n_cells,
        p.partition.delta(),
        cfg.shrink.reference,
    )?;
    let mut tab = Table::new(&[
        ("s", "length"),
        ("hole_measure", "length"),
        ("lambda", "per step"),
        ("l1_to_srb", "L1"),
        ("iterations", "count"),
        ("converged", "bool"),
    ]);
    for x in &r.records {
        tab.push(vec![
            x.s.into(),
            x.hole_measure.into(),
            x.lambda.into(),
            x.l1_to_srb.into(),
            x.iterations.into(),
            x.converged.into(),
        ]);
    }
    out.csv("shrink.csv", &tab)?;
    let pts: Vec<(f64, f64)> = r
        .records
        .iter()
        .map(|x| (x.hole_measure, x.lambda))
        .collect();
    out.dat(
        "shrink_lambda.dat",
        ("m(H)", "length"),
        ("lambda", "per step"),
        &pts,
    )?;
    let pts: Vec<(f64, f64)> = r
        .records
        .iter()
        .map(|x| (x.hole_measure, x.l1_to_srb))
        .collect();
    out.dat(
        "shrink_l1.dat",
        ("m(H)", "length"),
        ("L1 to SRB", "L1"),
        &pts,
    )?;
    let terminal = r.records.last().map(|x| x.l1_to_srb);
    let report = json!({
        "command": "shrink",
        "n_cells": cfg.n_cells,
        "grid": cfg.grid,
        "records": r.records,
        "lambda_increasing": r.lambda_increasing,
        "l1_decreasing": r.l1_decreasing,
        "terminal_l1": terminal,
        "family": r.family,
    });
    Ok(Outcome::new(report, true))
}

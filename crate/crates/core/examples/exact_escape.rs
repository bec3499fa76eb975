//! H = (0, 1) at a = 2: survivors halve each step in tent coordinates.
//! The Ulam grid is the image of a uniform tent grid and Monte Carlo starts
//! from the arcsine density; on a uniform grid from Lebesgue mass the rate
//! seen is 1/4 instead (mass piles up at the fixed point -1).
//!
//! cargo run --release --example exact_escape

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::simulate::{escape_rate_fit, survival_mc, Bins, InitDensity, SurvivalSpec};
use accim::transfer::{
    build_ulam, build_ulam_on, power_iterate, CellMeasure, GridKind, UlamGrid, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.0, 1.0)?;
    let grid = UlamGrid::new(GridKind::Arcsine, 1 << 13, &hole)?
        .with_reference(CellMeasure::Arcsine, &hole);
    let adapted = power_iterate(
        &build_ulam_on(&map, &hole, grid)?,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    );
    let uniform = power_iterate(
        &build_ulam(&map, &hole, 1 << 13)?,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    );
    let spec = SurvivalSpec {
        init: &InitDensity::Arcsine,
        n_max: 20,
        samples: 1_000_000,
        seed: 1,
        bins: Bins::uniform(64),
        hist_times: vec![],
    };
    let run = survival_mc(&map, &hole, &spec)?;
    let fit = escape_rate_fit(&run.series, None, 1)?;
    println!("Ulam, tent-adapted grid   {:.6}", adapted.lambda);
    println!("Ulam, uniform grid        {:.6}", uniform.lambda);
    println!(
        "Monte Carlo, arcsine init {:.6} +- {:.1e} over {} points",
        fit.lambda, fit.stderr, fit.points
    );
    Ok(())
}

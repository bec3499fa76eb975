//! Monte Carlo survival for H = (0.28, 0.30) and the fitted escape rate next
//! to the Ulam eigenvalue.
//!
//! cargo run --release --example escape_rate

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::simulate::{escape_rate_fit, survival_mc, Bins, InitDensity, SurvivalSpec};
use accim::transfer::{build_ulam, power_iterate, DEFAULT_MAX_ITER, DEFAULT_TOL};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.28, 0.30)?;
    let spec = SurvivalSpec {
        init: &InitDensity::Uniform,
        n_max: 60,
        samples: 1_000_000,
        seed: 7,
        bins: Bins::uniform(64),
        hist_times: vec![60],
    };
    let run = survival_mc(&map, &hole, &spec)?;
    let fit = escape_rate_fit(&run.series, None, 5)?;
    let ulam = power_iterate(
        &build_ulam(&map, &hole, 1 << 13)?,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    );
    for n in (0..=60).step_by(10) {
        println!("p_{n:<2} = {:.6}", run.series.p[n]);
    }
    println!("lambda MC   {:.6} +- {:.1e}", fit.lambda, fit.stderr);
    println!("lambda Ulam {:.6}", ulam.lambda);
    Ok(())
}

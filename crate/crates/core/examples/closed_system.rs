//! Ulam eigenpair of the closed map at a = 2 against the arcsine density.
//!
//! cargo run --release --example closed_system

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::simulate::{srb_reference, SrbMode};
use accim::stats::weighted_l1;
use accim::transfer::{build_ulam, power_iterate, DEFAULT_MAX_ITER, DEFAULT_TOL};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let op = build_ulam(&map, &OpenIntervalSet::empty(), 1 << 13)?;
    let r = power_iterate(&op, DEFAULT_TOL, DEFAULT_MAX_ITER);
    let edges = &op.grid.edges;
    let srb = srb_reference(&map, SrbMode::ClosedFormA2, edges)?;
    let n = r.density.len();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                edges[i + 1] - edges[i]
            }
        })
        .collect();
    let worst_row = op
        .row_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    println!("lambda           {:.12}", r.lambda);
    println!("iterations       {}", r.iterations);
    println!("max |row - 1|    {worst_row:e}");
    println!(
        "L1 to arcsine    {:.6} (boundary cells excluded)",
        weighted_l1(&r.density, &srb, &w)
    );
    Ok(())
}

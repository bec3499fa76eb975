//! Spike envelope and positivity of the conditionally invariant density.
//!
//! cargo run --release --example density_shape

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::transfer::{
    build_ulam, density_decomposition_check, power_iterate, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    for (l, r) in [(0.3, 0.3001), (0.285, 0.295)] {
        let hole = OpenIntervalSet::single(l, r)?;
        let op = build_ulam(&map, &hole, 1 << 13)?;
        let s = power_iterate(&op, DEFAULT_TOL, DEFAULT_MAX_ITER);
        let d = density_decomposition_check(&map, &hole, &op.grid.edges, &s.density, 12);
        println!("H = ({l}, {r})  lambda {:.6}", s.lambda);
        println!(
            "  c_flat {:.4e}  c_spike {:.4}  violations {}",
            d.c_flat, d.c_spike, d.violations
        );
        println!(
            "  min psi / mean psi off the hole {:.4}",
            d.min_density / d.mean_density
        );
    }
    Ok(())
}

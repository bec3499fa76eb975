//! Transfer operator on a coarse tower against the Ulam operator on the
//! interval: eigenvalue and projected density.
//!
//! cargo run --release --example tower_operator

use accim::interval_core::{BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, QuadMap};
use accim::report::rebin;
use accim::tower::{build_reference_cover, build_tower, SeedSelection, TowerParams, TowerSetup};
use accim::transfer::{
    build_tower_operator, build_ulam, power_iterate, project_density, tower_eigen,
};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.28, 0.30)?;
    let part = NeighborhoodPartition::new(6, 40)?;
    let tables = BoundRecoveryTables::build(&map, &part, 0.4, 2000, 400)?;
    let (eps, sub) = (2e-3, 2);
    let cover = build_reference_cover(&map, &hole, eps, part.delta())?;
    let mut params = TowerParams::new(eps);
    params.growth = 16.0;
    params.resolve = sub;
    params.record_levels = true;
    let setup = TowerSetup::new(map, hole.clone(), part, tables, cover, params)?;
    let runs = build_tower(&setup, SeedSelection::All)?;
    let op = build_tower_operator(&setup.cover, &runs, sub)?;
    let tower = tower_eigen(&op, 1e-10, 20_000);
    let ulam_op = build_ulam(&map, &hole, 1 << 13)?;
    let ulam = power_iterate(&ulam_op, 1e-10, 100_000);
    let bins: Vec<f64> = (0..=64).map(|i| -1.0 + i as f64 / 32.0).collect();
    let proj = project_density(&op, &setup.cover, &runs, &tower.phi, &bins)?;
    let mass = rebin(&ulam_op.grid.edges, &ulam.density, &bins);
    let l1: f64 = (0..64)
        .map(|i| (proj.density[i] / 32.0 - mass[i]).abs())
        .sum();
    println!("tower levels {}  lambda {:.6}", op.levels(), tower.lambda);
    println!("Ulam               lambda {:.6}", ulam.lambda);
    println!("projected density L1 to Ulam {l1:.4}");
    Ok(())
}

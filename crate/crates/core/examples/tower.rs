//! Builds the Markov tower on evenly spaced reference intervals and prints
//! the tail, hole-fall and distortion audits.
//!
//! cargo run --release --example tower

use accim::interval_core::{BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, QuadMap};
use accim::tower::{
    assemble_tower, build_reference_cover, build_tower, distortion_audit, hole_fall_stats,
    markov_return_check, tail_audit, SeedSelection, TowerParams, TowerSetup,
};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.3, 0.3001)?;
    let part = NeighborhoodPartition::new(6, 40)?;
    let tables = BoundRecoveryTables::build(&map, &part, 0.4, 2000, 400)?;
    let eps = 6e-8;
    let cover = build_reference_cover(&map, &hole, eps, part.delta())?;
    let mut params = TowerParams::new(eps);
    params.keep_histories = true;
    let setup = TowerSetup::new(map, hole.clone(), part, tables, cover, params)?;
    let runs = build_tower(&setup, SeedSelection::Spaced { count: 16_384 })?;
    let model = assemble_tower(&setup, &runs);
    let tails = tail_audit(&model, 1e-6);
    let falls = hole_fall_stats(&runs, &model, hole.measure(), tails.theta);
    let dist = distortion_audit(&setup, &runs, 8, 2000, 1.9f64.ln())?;
    println!("reference intervals  {}", setup.cover.n_tiles());
    println!("conservation error   {:e}", model.conservation_error());
    if let (Some(s), Some(r)) = (&tails.s_fit, &tails.r_fit) {
        println!("S tail slope {:.4} R^2 {:.3}", s.slope, s.r2);
        println!(
            "R tail slope {:.4} R^2 {:.3}  theta {:.4}",
            r.slope, r.r2, tails.theta
        );
    }
    println!("hole fall total {:e} theta {:.4}", falls.total, falls.theta);
    println!(
        "C~ {:.2}  min log4 |(T^R)'| {:.2}",
        dist.c_tilde, dist.min_return_expansion_log4
    );
    let m = markov_return_check(&setup, &runs, 1e-8);
    println!("returned cells {} re-iterated, pass {}", m.cells, m.pass);
    Ok(())
}

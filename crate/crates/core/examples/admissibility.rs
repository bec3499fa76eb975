//! Class M conditions, hole assumptions, bound periods and the covering
//! property for the reference hole.
//!
//! cargo run --release --example admissibility

use accim::admissibility::{
    check_a1, check_a2, check_a4, check_class_m, covering_check, derive_n0, ClassMSettings,
};
use accim::interval_core::{BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, QuadMap};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.3, 0.3001)?;
    let cm = check_class_m(&map, 0.4, 1000, &ClassMSettings::default())?;
    println!(
        "class M: a={} b={} c={} lambda0={:.4} M0={}",
        cm.clause_a, cm.clause_b, cm.clause_c, cm.constants.lambda0, cm.constants.m0
    );
    let a1 = check_a1(&map, &hole, 1000, 0.4);
    let eps0 = check_a2(&map, &hole, 10, 0.0)?.eps0_max;
    let n0 = derive_n0(&map, eps0, 200)?;
    let a4 = check_a4(&map, &hole, n0);
    println!("A1 r={} pass={}", a1.r, a1.pass);
    println!("A2 largest eps0={eps0:.6}");
    println!("n0={n0}, A4 pass={}", a4.pass);
    let part = NeighborhoodPartition::new(6, 40)?;
    let t = BoundRecoveryTables::build(&map, &part, a1.r, 2000, 400)?;
    for k in 6..=14 {
        println!("k={k:2} p={:3} q={:3}", t.p(k), t.q(k));
    }
    println!("eps' = {:.6}", t.eps_prime);
    let c = covering_check(&map, &hole, (0.1, 0.1 + eps0 / 2.0), 2 * n0);
    println!(
        "covering from [0.1, 0.1 + eps0/2] in {} steps: uncovered {:e}",
        c.steps, c.uncovered
    );
    Ok(())
}

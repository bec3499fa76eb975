//! Two initial densities conditioned on survival converge to the same
//! limit: uniform against a bump at 0, for several times.
//!
//! cargo run --release --example conditional_limit

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::simulate::{conditional_limit_test, Bins, InitDensity};

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let hole = OpenIntervalSet::single(0.28, 0.30)?;
    for n in [1, 5, 10, 20, 40] {
        let c = conditional_limit_test(
            &map,
            &hole,
            &InitDensity::Uniform,
            &InitDensity::center_bump(),
            n,
            1_000_000,
            3,
            Bins::uniform(64),
        )?;
        println!("n = {n:2}  L1 = {:.4}  survivors {:?}", c.l1, c.survivors);
    }
    Ok(())
}

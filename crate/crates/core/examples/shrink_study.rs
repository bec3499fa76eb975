//! Nested holes shrinking to a point: the eigenvalue rises to 1 and the
//! conditionally invariant density approaches the invariant one.
//!
//! cargo run --release --example shrink_study

use accim::interval_core::{OpenIntervalSet, QuadMap};
use accim::simulate::{shrink_study, FamilyMember, SrbMode};
use accim::transfer::GridKind;

fn main() -> accim::Result<()> {
    let map = QuadMap::new(2.0)?;
    let family = [4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&m| {
            Ok(FamilyMember {
                s: m,
                hole: OpenIntervalSet::single(0.29 - m / 2.0, 0.29 + m / 2.0)?,
            })
        })
        .collect::<accim::Result<Vec<_>>>()?;
    let r = shrink_study(
        &map,
        &family,
        GridKind::Uniform,
        1 << 13,
        (-6f64).exp(),
        SrbMode::ClosedFormA2,
    )?;
    for x in &r.records {
        println!(
            "m(H) = {:.4}  lambda = {:.6}  L1 to SRB = {:.4}",
            x.hole_measure, x.lambda, x.l1_to_srb
        );
    }
    println!(
        "lambda increasing {}  L1 decreasing {}",
        r.lambda_increasing, r.l1_decreasing
    );
    Ok(())
}

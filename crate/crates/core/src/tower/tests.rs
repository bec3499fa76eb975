use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::interval_core::{BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, QuadMap};

const EPS: f64 = 2e-3;

fn tables() -> &'static (QuadMap, NeighborhoodPartition, BoundRecoveryTables) {
    static T: OnceLock<(QuadMap, NeighborhoodPartition, BoundRecoveryTables)> = OnceLock::new();
    T.get_or_init(|| {
        let m = QuadMap::new(2.0).unwrap();
        let part = NeighborhoodPartition::new(6, 40).unwrap();
        let t = BoundRecoveryTables::build(&m, &part, 0.4, 2000, 400).unwrap();
        (m, part, t)
    })
}

fn setup_with(hole: OpenIntervalSet, keep_histories: bool) -> TowerSetup {
    let (m, part, t) = tables().clone();
    let cover = build_reference_cover(&m, &hole, EPS, part.delta()).unwrap();
    let mut p = TowerParams::new(EPS);
    p.growth = 16.0;
    p.keep_histories = keep_histories;
    TowerSetup::new(m, hole, part, t, cover, p).unwrap()
}

fn reference() -> &'static TowerSetup {
    static S: OnceLock<TowerSetup> = OnceLock::new();
    S.get_or_init(|| setup_with(OpenIntervalSet::single(0.3, 0.3001).unwrap(), true))
}

fn reference_runs() -> &'static Vec<SeedRun> {
    static R: OnceLock<Vec<SeedRun>> = OnceLock::new();
    R.get_or_init(|| build_tower(reference(), SeedSelection::Spaced { count: 24 }).unwrap())
}

#[test]
fn immediate_capture() {
    // f([0.3, 0.302]) lies inside (0.5, 0.9)
    let s = setup_with(OpenIntervalSet::single(0.5, 0.9).unwrap(), false);
    let r = aux_partition(&s, 0.3, 0.3 + EPS).unwrap();
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.cells[0].stop, 1);
    assert_eq!(r.cells[0].outcome, Outcome::FellInHole { component: 0 });
    assert_eq!(r.residual.total(), 0.0);
}

#[test]
fn rejects_straddling_seed() {
    let s = reference();
    let d = s.partition.delta();
    assert!(aux_partition(s, d - 1e-3, d + 1e-3).is_err());
    assert!(aux_partition(s, -1e-3, 1e-3).is_err());
}

#[test]
fn cells_tile_the_seed() {
    for r in reference_runs() {
        let mut cells: Vec<(f64, f64)> = r.cells.iter().map(|c| (c.lo, c.hi)).collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in cells.windows(2) {
            assert!(w[0].1 <= w[1].0 + 1e-15, "overlap {:?}", w);
        }
        let covered: f64 = cells.iter().map(|c| c.1 - c.0).sum();
        let gap = r.mass() - covered - r.residual.total();
        assert!(gap.abs() <= 1e-9 * r.mass(), "gap {gap}");
        assert!(r.conservation_defect() <= 1e-9 * r.mass());
    }
}

#[test]
fn tower_conserves_mass() {
    let s = reference();
    let m = assemble_tower(s, reference_runs());
    assert!(m.conservation_error() <= 1e-9, "{}", m.conservation_error());
    assert_eq!(m.level_mass_tower[0], m.bases.len() as f64);
    // climbing mass never grows
    for w in m.level_mass.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12));
    }
}

#[test]
fn no_stop_while_bound() {
    let s = reference();
    for r in reference_runs() {
        for h in &r.histories {
            for &(t, k) in h.itinerary.iter().filter(|e| e.0 >= h.chain_start) {
                assert!(
                    h.stop as usize >= t as usize + s.tables.q(k as i32),
                    "stop {} entry ({t}, {k})",
                    h.stop
                );
            }
        }
    }
}

#[test]
fn returns_are_markov() {
    let s = reference();
    let c = markov_return_check(s, reference_runs(), 1e-8);
    assert!(c.cells > 0);
    assert!(c.pass, "{c:?}");
}

#[test]
fn grown_cells_reach_the_stop_length() {
    let s = reference();
    let (a, _) = s.cover.tile(200);
    let r = aux_partition(s, a, a + EPS).unwrap();
    assert!(r.cells.iter().any(|c| c.outcome == Outcome::Grown));
    let c = stop_length_check(s, &[r], 1e-9);
    assert!(c.pass, "{c:?}");
}

#[test]
fn growth_lemma_holds() {
    let c = growth_lemma_check(reference(), 20, 3).unwrap();
    assert_eq!(c.failures, 0);
}

#[test]
fn one_piece_at_level_zero() {
    let p = piece_count_audit(reference_runs());
    assert_eq!(p.level_zero, 1);
    assert!(p.max_ratio.is_finite());
}

#[test]
fn no_hole_no_hole_fall() {
    let s = setup_with(OpenIntervalSet::empty(), false);
    let runs = build_tower(&s, SeedSelection::Spaced { count: 6 }).unwrap();
    let m = assemble_tower(&s, &runs);
    let h = hole_fall_stats(&runs, &m, 0.0, 0.5);
    assert!(h.series.iter().all(|&v| v == 0.0));
    assert_eq!(h.total, 0.0);
}

#[test]
fn hole_fall_series_consistent() {
    let s = reference();
    let runs = reference_runs();
    let m = assemble_tower(s, runs);
    let h = hole_fall_stats(runs, &m, s.hole.measure(), 0.6);
    assert!(h.series.iter().all(|&v| v >= 0.0));
    let direct: f64 = m.hole_mass.iter().sum::<f64>() / m.base_total();
    assert!((h.total - direct).abs() <= 1e-15 + 1e-12 * direct);
}

#[test]
fn return_fraction_and_expansion() {
    let s = reference();
    let a = return_audit(reference_runs(), s.params.growth);
    assert!(
        a.min_image_fraction >= a.image_fraction_bound - 1e-12,
        "{a:?}"
    );
    let d = distortion_audit(s, reference_runs(), 4, 200, 1.9f64.ln()).unwrap();
    assert!(d.c_tilde.is_finite() && d.c_tilde > 0.0);
    assert!(d.min_return_expansion_log4.is_finite());
}

#[test]
fn spaced_seed_indices() {
    assert_eq!(SeedSelection::Spaced { count: 2 }.tiles(10), vec![2, 7]);
    assert_eq!(SeedSelection::Spaced { count: 20 }.tiles(3), vec![0, 1, 2]);
    assert_eq!(SeedSelection::All.tiles(3), vec![0, 1, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn aux_partition_conserves(u in 0.0f64..1.0) {
        let s = reference();
        let (lo, hi) = s.map.invariant_range();
        let x = lo + u * (hi - lo - 2.0 * EPS);
        let d = s.partition.delta();
        let y = x + EPS;
        prop_assume!(y <= -d || x >= d);
        prop_assume!(s.hole.overlap(x, y) == 0.0);
        let r = aux_partition(s, x, y).unwrap();
        prop_assert!(r.conservation_defect() <= 1e-9 * r.mass());
        prop_assert!(r.cells.iter().all(|c| c.mass >= 0.0 && c.lo <= c.hi));
    }
}

//! Piece evolution for the auxiliary stopping time and the return chain.
//!
//! A piece is a subinterval of its seed, stored by its seed endpoints and
//! their images at the current time, plus the branch signs of every earlier
//! image. Cut points are located by pulling the cut value back along those
//! branches in closed form, so neighbouring pieces share endpoints exactly
//! and the pieces always tile the seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::{
    BoundRecoveryTables, NeighborhoodPartition, OpenIntervalSet, Pt, QuadMap, ShadowOrbit,
};

use super::cover::ReferenceCover;

/// Offsets from the critical orbit larger than this are kept absolute.
const NEAR_LIMIT: f64 = 1e-3;
/// Image fraction below which an unresolvable cut is skipped.
const SLIVER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TowerParams {
    pub eps: f64,
    /// Stopping length in units of eps (4^8 in the construction).
    pub growth: f64,
    pub time_cap: usize,
    /// Pieces narrower than this fraction of their seed become residual.
    pub width_floor: f64,
    /// Sub-cells per tile whose preimages are stored for returned cells;
    /// 0 stores only the returned range.
    pub resolve: usize,
    /// Store every (piece, level) pair for projection.
    pub record_levels: bool,
    /// Keep branch histories of stopped pieces for the distortion audit.
    pub keep_histories: bool,
}

impl TowerParams {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            growth: crate::admissibility::GROWTH,
            time_cap: 400,
            width_floor: 1e-12,
            resolve: 0,
            record_levels: false,
            keep_histories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::config("eps", "must lie in (0, 1)"));
        }
        if !(self.growth >= 4.0) {
            return Err(Error::config("growth", "must be at least 4"));
        }
        if self.time_cap == 0 || self.time_cap > u16::MAX as usize {
            return Err(Error::config("time_cap", "must lie in [1, 65535]"));
        }
        if !(self.width_floor >= 0.0 && self.width_floor < 1.0) {
            return Err(Error::config("width_floor", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn stop_length(&self) -> f64 {
        self.growth * self.eps
    }
}

/// Everything the construction reads.
#[derive(Debug, Clone)]
pub struct TowerSetup {
    pub map: QuadMap,
    pub hole: OpenIntervalSet,
    pub partition: NeighborhoodPartition,
    pub tables: BoundRecoveryTables,
    pub cover: ReferenceCover,
    pub params: TowerParams,
    shadow: ShadowOrbit,
}

impl TowerSetup {
    pub fn new(
        map: QuadMap,
        hole: OpenIntervalSet,
        partition: NeighborhoodPartition,
        tables: BoundRecoveryTables,
        cover: ReferenceCover,
        params: TowerParams,
    ) -> Result<Self> {
        params.validate()?;
        if tables.k0 != partition.k0() || tables.kmax != partition.kmax() {
            return Err(Error::config("tables", "do not match the partition"));
        }
        let shadow = ShadowOrbit::new(map, params.time_cap + 2);
        Ok(Self {
            map,
            hole,
            partition,
            tables,
            cover,
            params,
            shadow,
        })
    }

    pub fn shadow(&self) -> &ShadowOrbit {
        &self.shadow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Image reached the stopping length (auxiliary runs only).
    Grown,
    /// Image is the union of tiles first..=last.
    Returned { first_tile: u64, last_tile: u64 },
    /// Image lies in hole component j.
    FellInHole { component: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppedCell {
    /// Seed coordinates.
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    /// S for auxiliary runs, R for return runs.
    pub stop: u32,
    pub outcome: Outcome,
    /// Start times of the auxiliary chain (0 first).
    pub chain: Vec<u16>,
    /// Last entry time into (-delta, delta), if any.
    pub bound_anchor: Option<u16>,
    /// Preimages in seed coordinates of the tile (sub-cell) boundaries of a
    /// returned cell, in image order, when resolved.
    pub tile_cuts: Vec<f64>,
    /// Image orientation at the stop.
    pub increasing: bool,
}

/// Branch history of a stopped piece, for the distortion audit.
#[derive(Debug, Clone)]
pub struct StopHistory {
    pub stop: u32,
    pub chain_start: u16,
    pub seed: [Pt; 2],
    pub image: [Pt; 2],
    pub signs: Vec<u64>,
    pub itinerary: Vec<(u16, i8)>,
    /// Image range returned, if any.
    pub returned: Option<(f64, f64)>,
}

impl StopHistory {
    pub fn sign(&self, i: usize) -> bool {
        bit(&self.signs, i)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: u16,
    pub seed_lo: f64,
    pub seed_hi: f64,
    pub img_lo: f64,
    pub img_hi: f64,
    pub bound: bool,
    pub anchor: Option<u16>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Residual {
    /// Unresolved at the time cap.
    pub cap_mass: f64,
    pub cap_count: usize,
    /// Fell into (-e^{-(kmax+1)}, e^{-(kmax+1)}).
    pub core_mass: f64,
    pub core_count: usize,
    /// Below the width floor.
    pub degenerate_mass: f64,
    pub degenerate_count: usize,
}

impl Residual {
    pub fn total(&self) -> f64 {
        self.cap_mass + self.core_mass + self.degenerate_mass
    }

    pub fn add(&mut self, o: &Residual) {
        self.cap_mass += o.cap_mass;
        self.cap_count += o.cap_count;
        self.core_mass += o.core_mass;
        self.core_count += o.core_count;
        self.degenerate_mass += o.degenerate_mass;
        self.degenerate_count += o.degenerate_count;
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunFlags {
    pub fold_splits: usize,
    /// Deadline pieces whose image met H; captured before any adjoin.
    pub deadline_hole_conflicts: usize,
    pub adjoins: usize,
    /// Deadline pieces cut on the deeper side with no live neighbour there.
    pub adjoin_skipped: usize,
    /// Stopped pieces that covered no tile and restarted a chain instead.
    pub uncovered_stops: usize,
}

/// Chain started from an end piece, with the mass it returned at its
/// next stopping time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChainReturn {
    pub start: u16,
    pub mass: f64,
    pub returned: f64,
}

/// Outcome of one seed interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    /// Tile index of the seed (u64::MAX for free-standing intervals).
    pub base: u64,
    pub lo: f64,
    pub hi: f64,
    pub cells: Vec<StoppedCell>,
    /// Tracked mass after step n, n = 0..=cap.
    pub alive: Vec<f64>,
    /// Mass not yet stopped in the first chain after step n.
    pub first_chain_alive: Vec<f64>,
    /// Residual dropped by step n (core and degenerate).
    pub dropped: Vec<f64>,
    /// Unstopped pieces after step n.
    pub piece_counts: Vec<u32>,
    pub residual: Residual,
    pub flags: RunFlags,
    pub chains: Vec<ChainReturn>,
    /// min over return steps of returned image length / stopped image length.
    pub min_return_fraction: f64,
    #[serde(skip)]
    pub histories: Vec<StopHistory>,
    #[serde(skip)]
    pub levels: Vec<LevelRecord>,
}

impl SeedRun {
    pub fn mass(&self) -> f64 {
        self.hi - self.lo
    }

    /// |seed - stopped - residual|.
    pub fn conservation_defect(&self) -> f64 {
        let stopped: f64 = self.cells.iter().map(|c| c.mass).sum();
        (self.mass() - stopped - self.residual.total()).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Free,
    Bound { t: u16, k: i32, deadline: u16 },
}

#[derive(Debug, Clone)]
struct Piece {
    seed: [Pt; 2],
    img: [Pt; 2],
    signs: Vec<u64>,
    state: State,
    /// Seed endpoint facing a deeper cell cut off at the last entry.
    deeper_end: Option<usize>,
    stop_now: bool,
    itinerary: Vec<(u16, i8)>,
    chain_starts: Vec<u16>,
    chain_id: usize,
}

fn bit(v: &[u64], i: usize) -> bool {
    v.get(i / 64).is_some_and(|w| (w >> (i % 64)) & 1 == 1)
}

fn set_bit(v: &mut Vec<u64>, i: usize, b: bool) {
    while v.len() <= i / 64 {
        v.push(0);
    }
    if b {
        v[i / 64] |= 1 << (i % 64);
    } else {
        v[i / 64] &= !(1 << (i % 64));
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Aux,
    Return,
}

struct Engine<'a> {
    s: &'a TowerSetup,
    mode: Mode,
    seed_len: f64,
    run: SeedRun,
    dropped_now: f64,
    /// Index into run.chains for each chain id; usize::MAX for the seed chain.
    chain_slot: Vec<usize>,
}

impl<'a> Engine<'a> {
    fn sh(&self) -> &ShadowOrbit {
        &self.s.shadow
    }

    fn val(&self, p: Pt) -> f64 {
        self.sh().value(p)
    }

    fn range(&self, p: &Piece) -> (f64, f64) {
        let (a, b) = (self.val(p.img[0]), self.val(p.img[1]));
        (a.min(b), a.max(b))
    }

    fn length(&self, p: &Piece) -> f64 {
        self.sh().diff(p.img[0], p.img[1]).abs()
    }

    fn width(&self, p: &Piece) -> f64 {
        self.sh().diff(p.seed[0], p.seed[1]).abs()
    }

    /// y in the representation used by the piece's image.
    fn pt_like(&self, y: f64, p: &Piece) -> Pt {
        for e in p.img {
            if let Pt::Near { j, .. } = e {
                let off = y - self.sh().crit(j as usize);
                if off.abs() <= NEAR_LIMIT {
                    return Pt::Near { j, off };
                }
            }
        }
        Pt::Abs(y)
    }

    fn pullback(&self, y: Pt, p: &Piece, n: usize) -> Pt {
        let entries: Vec<usize> = p.itinerary.iter().map(|e| e.0 as usize).collect();
        self.sh().pullback(y, n, |i| bit(&p.signs, i), &entries)
    }

    /// Cut at the given image values (strictly inside the image), returning
    /// the pieces in seed order, or None when a cut point cannot be resolved
    /// in seed coordinates.
    fn cut(&self, p: &Piece, ys: &[f64], n: usize) -> Option<Vec<Piece>> {
        if ys.is_empty() {
            return Some(vec![p.clone()]);
        }
        let increasing = self.val(p.img[1]) >= self.val(p.img[0]);
        let mut order: Vec<f64> = ys.to_vec();
        order.sort_by(f64::total_cmp);
        if !increasing {
            order.reverse();
        }
        let hi_seed = self.val(p.seed[1]);
        let len = self.length(p);
        let mut out = Vec::with_capacity(order.len() + 1);
        let mut prev_seed = p.seed[0];
        let mut prev_img = p.img[0];
        for y in order {
            let yp = self.pt_like(y, p);
            let s = self.pullback(yp, p, n);
            let sv = self.val(s);
            if !(sv > self.val(prev_seed) && sv < hi_seed) {
                // a sliver below seed resolution: drop the cut if it is a
                // negligible part of the image, else give up on the piece
                let near = if sv <= self.val(prev_seed) {
                    prev_img
                } else {
                    p.img[1]
                };
                if self.sh().diff(near, yp).abs() <= SLIVER * len {
                    continue;
                }
                return None;
            }
            let mut c = p.clone();
            c.seed = [prev_seed, s];
            c.img = [prev_img, yp];
            out.push(c);
            prev_seed = s;
            prev_img = yp;
        }
        let mut last = p.clone();
        last.seed[0] = prev_seed;
        last.img[0] = prev_img;
        out.push(last);
        Some(out)
    }

    /// `cut`, sending unresolvable pieces to the degenerate residual.
    fn split(&mut self, p: Piece, ys: &[f64], n: usize) -> Vec<Piece> {
        match self.cut(&p, ys, n) {
            Some(v) => v,
            None => {
                let w = self.width(&p);
                self.run.residual.degenerate_mass += w;
                self.run.residual.degenerate_count += 1;
                self.dropped_now += w;
                Vec::new()
            }
        }
    }

    fn degenerate(&mut self, p: &Piece) -> bool {
        let w = self.width(p);
        if w <= self.s.params.width_floor * self.seed_len {
            self.run.residual.degenerate_mass += w;
            self.run.residual.degenerate_count += 1;
            self.dropped_now += w;
            true
        } else {
            false
        }
    }

    fn record_cell(&mut self, p: &Piece, n: usize, outcome: Outcome, tile_cuts: Vec<f64>) {
        let lo = self.val(p.seed[0]);
        let hi = self.val(p.seed[1]);
        let mut chain = p.chain_starts.clone();
        chain.push(n as u16);
        let increasing = self.val(p.img[1]) >= self.val(p.img[0]);
        self.run.cells.push(StoppedCell {
            lo,
            hi,
            mass: self.width(p),
            stop: n as u32,
            outcome,
            chain,
            bound_anchor: p.itinerary.last().map(|e| e.0),
            tile_cuts,
            increasing,
        });
    }

    fn history(&mut self, p: &Piece, n: usize, returned: Option<(f64, f64)>) {
        if self.s.params.keep_histories {
            self.run.histories.push(StopHistory {
                stop: n as u32,
                chain_start: *p.chain_starts.last().unwrap_or(&0),
                seed: p.seed,
                image: p.img,
                signs: p.signs.clone(),
                itinerary: p.itinerary.clone(),
                returned,
            });
        }
    }

    /// Cut by Q. With `append`, the boundaries +-delta are skipped so an
    /// outside sliver stays with its I_{+-k0} neighbour.
    fn q_cut(&mut self, p: Piece, n: usize, append: bool, out: &mut Vec<Piece>) {
        let part = self.s.partition;
        let delta = part.delta();
        let core = part.core_radius();
        let (lo, hi) = self.range(&p);
        let mut cuts = Vec::new();
        if hi > -delta && lo < delta {
            for b in part.boundaries() {
                if append && b.abs() == delta {
                    continue;
                }
                if lo < b && b < hi {
                    cuts.push(b);
                }
            }
        }
        let had_cuts = !cuts.is_empty();
        for mut c in self.split(p, &cuts, n) {
            if self.degenerate(&c) {
                continue;
            }
            let (a, b) = self.range(&c);
            let mid = 0.5 * (a + b);
            let k = if a < delta && b > delta {
                Some(part.k0() as i32)
            } else if a < -delta && b > -delta {
                Some(-(part.k0() as i32))
            } else if mid.abs() < delta {
                if b <= core && a >= -core {
                    None
                } else {
                    part.index(mid)
                        .or_else(|| part.index(if mid > 0.0 { b } else { a }))
                }
            } else {
                c.state = State::Free;
                out.push(c);
                continue;
            };
            let Some(k) = k else {
                let w = self.width(&c);
                self.run.residual.core_mass += w;
                self.run.residual.core_count += 1;
                self.dropped_now += w;
                continue;
            };
            let deadline = n + self.s.tables.q(k);
            c.state = State::Bound {
                t: n as u16,
                k,
                deadline: deadline.min(u16::MAX as usize) as u16,
            };
            c.itinerary.push((n as u16, k as i8));
            // the deeper side is toward 0
            c.deeper_end = None;
            if had_cuts {
                let deep_val = if k > 0 { a } else { b };
                let is_cut = cuts.contains(&deep_val);
                if is_cut {
                    let v0 = self.val(c.img[0]);
                    c.deeper_end = Some(if v0 == deep_val { 0 } else { 1 });
                }
            }
            out.push(c);
        }
    }

    /// Start a new auxiliary chain at time n on a piece of Omega type.
    fn chain_start(&mut self, mut p: Piece, n: usize, out: &mut Vec<Piece>) {
        if n > 0 {
            p.chain_starts.push(n as u16);
            let mass = self.width(&p);
            self.chain_slot.push(self.run.chains.len());
            self.run.chains.push(ChainReturn {
                start: n as u16,
                mass,
                returned: 0.0,
            });
            p.chain_id = self.chain_slot.len() - 1;
        }
        p.state = State::Free;
        p.deeper_end = None;
        p.stop_now = false;
        self.q_cut(p, n, false, out);
    }

    fn advance(&mut self, p: Piece, n: usize, out: &mut Vec<Piece>) {
        let (lo, hi) = self.range(&p);
        let parts = if lo < 0.0 && hi > 0.0 {
            self.run.flags.fold_splits += 1;
            self.split(p, &[0.0], n - 1)
        } else {
            vec![p]
        };
        for mut c in parts {
            if self.degenerate(&c) {
                continue;
            }
            let (a, b) = self.range(&c);
            set_bit(&mut c.signs, n - 1, a + b > 0.0);
            c.img = [self.sh().forward(c.img[0]), self.sh().forward(c.img[1])];
            out.push(c);
        }
    }

    fn meets_hole(&self, p: &Piece) -> bool {
        let (lo, hi) = self.range(p);
        self.s.hole.overlap(lo, hi) > 0.0
    }

    /// Deadline pieces cut on the deeper side hand the part beyond their
    /// last fully covered tile to the deeper neighbour.
    fn deadline_adjoins(&mut self, v: &mut [Piece], n: usize) {
        let big = self.s.params.stop_length();
        let mut idx: Vec<usize> = (0..v.len())
            .filter(|&i| {
                matches!(v[i].state, State::Bound { deadline, .. } if deadline as usize == n)
                    && v[i].deeper_end.is_some()
                    && self.length(&v[i]) >= big
                    && !self.meets_hole(&v[i])
            })
            .collect();
        idx.sort_by_key(|&i| match v[i].state {
            State::Bound { k, .. } => k.unsigned_abs(),
            State::Free => 0,
        });
        for i in idx {
            let d = v[i].deeper_end.unwrap();
            let State::Bound { t, .. } = v[i].state else {
                continue;
            };
            let j = if d == 0 {
                i.checked_sub(1)
            } else {
                Some(i + 1)
            };
            let ok = j.filter(|&j| j < v.len()).filter(|&j| {
                v[j].seed[1 - d] == v[i].seed[d]
                    && matches!(v[j].state, State::Bound { t: tj, .. } if tj == t)
            });
            let Some(j) = ok else {
                self.run.flags.adjoin_skipped += 1;
                continue;
            };
            let (lo, hi) = self.range(&v[i]);
            let Some((first, last)) = self.s.cover.covered_range(lo, hi) else {
                self.run.flags.adjoin_skipped += 1;
                continue;
            };
            let yd = self.val(v[i].img[d]);
            let e = if yd >= hi {
                self.s.cover.tile(last).1
            } else {
                self.s.cover.tile(first).0
            };
            v[i].stop_now = true;
            v[i].deeper_end = None;
            if e == yd {
                continue;
            }
            let ep = self.pt_like(e, &v[i]);
            let s = self.pullback(ep, &v[i], n);
            let (slo, shi) = (self.val(v[i].seed[0]), self.val(v[i].seed[1]));
            let sv = self.val(s);
            if !(sv > slo && sv < shi) {
                self.run.flags.adjoin_skipped += 1;
                continue;
            }
            v[i].seed[d] = s;
            v[i].img[d] = ep;
            v[j].seed[1 - d] = s;
            v[j].img[1 - d] = ep;
            self.run.flags.adjoins += 1;
        }
    }

    fn classify(&mut self, mut p: Piece, n: usize, out: &mut Vec<Piece>) {
        if let State::Bound { deadline, .. } = p.state {
            let dl = deadline as usize;
            if n < dl {
                out.push(p);
                return;
            }
            if n == dl {
                if self.meets_hole(&p) {
                    self.run.flags.deadline_hole_conflicts += 1;
                } else if p.stop_now || self.length(&p) >= self.s.params.stop_length() {
                    self.stop_grown(p, n, out);
                    return;
                } else {
                    p.state = State::Free;
                    p.deeper_end = None;
                    out.push(p);
                    return;
                }
            }
        }
        p.state = State::Free;
        p.deeper_end = None;
        self.free_step(p, n, out);
    }

    fn free_step(&mut self, p: Piece, n: usize, out: &mut Vec<Piece>) {
        let (lo, hi) = self.range(&p);
        let mut cuts = Vec::new();
        for &(l, r) in self.s.hole.components() {
            if r <= lo || l >= hi {
                continue;
            }
            if lo < l {
                cuts.push(l);
            }
            if r < hi {
                cuts.push(r);
            }
        }
        let big = self.s.params.stop_length();
        for c in self.split(p, &cuts, n) {
            let (a, b) = self.range(&c);
            if let Some(j) = self.s.hole.component_of(0.5 * (a + b)) {
                if self.width(&c) > 0.0 {
                    self.record_cell(&c, n, Outcome::FellInHole { component: j }, Vec::new());
                }
                continue;
            }
            if self.degenerate(&c) {
                continue;
            }
            if self.length(&c) >= big {
                self.stop_grown(c, n, out);
            } else {
                self.q_cut(c, n, true, out);
            }
        }
    }

    fn stop_grown(&mut self, p: Piece, n: usize, out: &mut Vec<Piece>) {
        match self.mode {
            Mode::Aux => {
                self.history(&p, n, None);
                self.record_cell(&p, n, Outcome::Grown, Vec::new());
            }
            Mode::Return => self.return_step(p, n, out),
        }
    }

    fn return_step(&mut self, p: Piece, n: usize, out: &mut Vec<Piece>) {
        let eps = self.s.params.eps;
        let cover = &self.s.cover;
        let (lo, hi) = self.range(&p);
        let Some((mut first, mut last)) = cover.covered_range(lo, hi) else {
            self.run.flags.uncovered_stops += 1;
            self.chain_start(p, n, out);
            return;
        };
        if first < last {
            let fl = cover.tile(first).0 - lo;
            if fl > 0.0 && fl < eps {
                first += 1;
            }
        }
        if first < last {
            let fr = hi - cover.tile(last).1;
            if fr > 0.0 && fr < eps {
                last -= 1;
            }
        }
        let ret_lo = cover.tile(first).0;
        let ret_hi = cover.tile(last).1;
        let mut cuts = Vec::new();
        if ret_lo > lo {
            cuts.push(ret_lo);
        }
        if ret_hi < hi {
            cuts.push(ret_hi);
        }
        let full = hi - lo;
        self.run.min_return_fraction = self.run.min_return_fraction.min((ret_hi - ret_lo) / full);
        self.history(&p, n, Some((ret_lo, ret_hi)));
        let chain_id = p.chain_id;
        for c in self.split(p, &cuts, n) {
            let (a, b) = self.range(&c);
            let mid = 0.5 * (a + b);
            if mid > ret_lo && mid < ret_hi {
                let tile_cuts = self.resolve_cuts(&c, n, first, last);
                let w = self.width(&c);
                if let Some(&slot) = self.chain_slot.get(chain_id) {
                    if slot != usize::MAX {
                        self.run.chains[slot].returned += w;
                    }
                }
                self.record_cell(
                    &c,
                    n,
                    Outcome::Returned {
                        first_tile: first,
                        last_tile: last,
                    },
                    tile_cuts,
                );
            } else if !self.degenerate(&c) {
                self.chain_start(c, n, out);
            }
        }
    }

    /// Seed preimages of the tile and sub-cell boundaries of a returned cell,
    /// in increasing image order.
    fn resolve_cuts(&self, c: &Piece, n: usize, first: u64, last: u64) -> Vec<f64> {
        let m = self.s.params.resolve;
        if m == 0 {
            return Vec::new();
        }
        let increasing = self.val(c.img[1]) >= self.val(c.img[0]);
        let (s_lo, s_hi) = (self.val(c.seed[0]), self.val(c.seed[1]));
        let mut out = Vec::with_capacity(((last - first + 1) as usize) * m + 1);
        for i in first..=last {
            let (a, b) = self.s.cover.tile(i);
            for j in 0..m {
                let y = if j == 0 {
                    a
                } else {
                    a + (b - a) * j as f64 / m as f64
                };
                let s = if i == first && j == 0 {
                    if increasing {
                        s_lo
                    } else {
                        s_hi
                    }
                } else {
                    self.val(self.pullback(self.pt_like(y, c), c, n))
                        .clamp(s_lo, s_hi)
                };
                out.push(s);
            }
        }
        out.push(if increasing { s_hi } else { s_lo });
        out
    }

    fn record_level(&mut self, pieces: &[Piece], n: usize) {
        if !self.s.params.record_levels {
            return;
        }
        for p in pieces {
            let (a, b) = self.range(p);
            self.run.levels.push(LevelRecord {
                level: n as u16,
                seed_lo: self.val(p.seed[0]),
                seed_hi: self.val(p.seed[1]),
                img_lo: a,
                img_hi: b,
                bound: matches!(p.state, State::Bound { deadline, .. } if deadline as usize > n),
                anchor: p.itinerary.last().map(|e| e.0),
            });
        }
    }

    fn record_stats(&mut self, pieces: &[Piece]) {
        let alive: f64 = pieces.iter().map(|p| self.width(p)).sum();
        let first: f64 = pieces
            .iter()
            .filter(|p| p.chain_starts.len() == 1)
            .map(|p| self.width(p))
            .sum();
        self.run.alive.push(alive);
        self.run.first_chain_alive.push(first);
        let prev = self.run.dropped.last().copied().unwrap_or(0.0);
        self.run.dropped.push(prev + self.dropped_now);
        self.dropped_now = 0.0;
        self.run.piece_counts.push(pieces.len() as u32);
    }

    fn execute(mut self, lo: f64, hi: f64) -> SeedRun {
        let seed = Piece {
            seed: [Pt::Abs(lo), Pt::Abs(hi)],
            img: [Pt::Abs(lo), Pt::Abs(hi)],
            signs: Vec::new(),
            state: State::Free,
            deeper_end: None,
            stop_now: false,
            itinerary: Vec::new(),
            chain_starts: vec![0],
            chain_id: 0,
        };
        self.chain_slot.push(usize::MAX);
        let mut pieces = Vec::new();
        self.chain_start(seed, 0, &mut pieces);
        self.record_level(&pieces, 0);
        self.record_stats(&pieces);
        // level 0 is the seed itself
        self.run.piece_counts[0] = 1;
        let cap = self.s.params.time_cap;
        for n in 1..=cap {
            let mut adv = Vec::with_capacity(pieces.len());
            for p in pieces {
                self.advance(p, n, &mut adv);
            }
            self.deadline_adjoins(&mut adv, n);
            let mut next = Vec::with_capacity(adv.len());
            for p in adv {
                self.classify(p, n, &mut next);
            }
            pieces = next;
            self.record_level(&pieces, n);
            self.record_stats(&pieces);
            if pieces.is_empty() {
                break;
            }
        }
        for p in &pieces {
            self.run.residual.cap_mass += self.width(p);
            self.run.residual.cap_count += 1;
        }
        self.run
    }
}

fn new_run(base: u64, lo: f64, hi: f64) -> SeedRun {
    SeedRun {
        base,
        lo,
        hi,
        cells: Vec::new(),
        alive: Vec::new(),
        first_chain_alive: Vec::new(),
        dropped: Vec::new(),
        piece_counts: Vec::new(),
        residual: Residual::default(),
        flags: RunFlags::default(),
        chains: Vec::new(),
        min_return_fraction: 1.0,
        histories: Vec::new(),
        levels: Vec::new(),
    }
}

fn check_omega(s: &TowerSetup, lo: f64, hi: f64) -> Result<()> {
    let delta = s.partition.delta();
    let (a, b) = s.map.invariant_range();
    if !(lo < hi) || lo < a.min(-1.0) || hi > 1.0 {
        return Err(Error::Seed(format!(
            "[{lo}, {hi}] is not a subinterval of I"
        )));
    }
    let inside = lo >= -delta && hi <= delta && !(lo < 0.0 && hi > 0.0);
    let outside = hi <= -delta || lo >= delta;
    if !(inside || outside) {
        return Err(Error::Seed(format!(
            "[{lo}, {hi}] straddles -delta, 0 or delta"
        )));
    }
    let _ = b;
    Ok(())
}

/// The auxiliary stopping time S and its partition on a seed interval.
/// Pieces stop when their image reaches the stopping length (Grown) or lies
/// in H (FellInHole).
pub fn aux_partition(setup: &TowerSetup, lo: f64, hi: f64) -> Result<SeedRun> {
    check_omega(setup, lo, hi)?;
    let e = Engine {
        s: setup,
        mode: Mode::Aux,
        seed_len: hi - lo,
        run: new_run(u64::MAX, lo, hi),
        dropped_now: 0.0,
        chain_slot: Vec::new(),
    };
    Ok(e.execute(lo, hi))
}

/// The return time R and its partition on reference interval `tile`.
pub fn full_return_partition(setup: &TowerSetup, tile: u64) -> Result<SeedRun> {
    if tile >= setup.cover.n_tiles() {
        return Err(Error::Seed(format!("tile {tile} out of range")));
    }
    let (lo, hi) = setup.cover.tile(tile);
    check_omega(setup, lo, hi)?;
    let e = Engine {
        s: setup,
        mode: Mode::Return,
        seed_len: hi - lo,
        run: new_run(tile, lo, hi),
        dropped_now: 0.0,
        chain_slot: Vec::new(),
    };
    Ok(e.execute(lo, hi))
}

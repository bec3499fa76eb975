use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tower::{Outcome, ReferenceCover, SeedRun};

/// Ulam discretization of the tower map on (base sub-cell, level) states.
///
/// Each reference interval is split into `sub` equal sub-cells. A state
/// (l, s) is the part of sub-cell s with R > l, carried at level l; mass
/// inside a state is taken uniform in seed coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerOperator {
    pub sub: usize,
    pub n_tiles: usize,
    /// |Lambda^(i)| per base.
    pub tile_len: Vec<f64>,
    /// alive[l][s]: Lebesgue measure of {x in sub-cell s : R(x) > l}.
    pub alive: Vec<Vec<f64>>,
    /// returns[l]: (source, target, measure) of {x in s : R(x) = l + 1,
    /// T^R x in sub-cell t}.
    pub returns: Vec<Vec<(u32, u32, f64)>>,
    /// hole[l][s]: measure of {x in s : R(x) = l + 1, T^R x in H}.
    pub hole: Vec<Vec<(u32, f64)>>,
    /// Residual mass (unresolved pieces) over all bases.
    pub defect: f64,
}

/// Per-level, per-sub-cell masses of a function on the tower.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerFunction {
    pub mass: Vec<Vec<f64>>,
}

impl TowerFunction {
    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }
}

struct SubGrid<'a> {
    cover: &'a ReferenceCover,
    sub: usize,
}

impl SubGrid<'_> {
    /// (sub-cell, overlap) pairs of [u, v] inside tile `t`.
    fn overlaps(&self, t: u64, u: f64, v: f64) -> Vec<(u32, f64)> {
        let (a, b) = self.cover.tile(t);
        let w = (b - a) / self.sub as f64;
        let (u, v) = (u.max(a), v.min(b));
        if v <= u {
            return Vec::new();
        }
        let i0 = (((u - a) / w).floor() as usize).min(self.sub - 1);
        let i1 = (((v - a) / w).ceil() as usize).clamp(i0 + 1, self.sub);
        (i0..i1)
            .filter_map(|i| {
                let lo = if i == 0 { a } else { a + i as f64 * w };
                let hi = if i + 1 == self.sub {
                    b
                } else {
                    a + (i + 1) as f64 * w
                };
                let o = v.min(hi) - u.max(lo);
                (o > 0.0).then_some(((t as usize * self.sub + i) as u32, o))
            })
            .collect()
    }
}

fn grow<T: Clone>(v: &mut Vec<T>, len: usize, fill: T) {
    if v.len() < len {
        v.resize(len, fill);
    }
}

/// Builds the tower operator from return runs over every reference
/// interval, in tile order, computed with `resolve = sub`.
pub fn build_tower_operator(
    cover: &ReferenceCover,
    runs: &[SeedRun],
    sub: usize,
) -> Result<TowerOperator> {
    let n = cover.n_tiles() as usize;
    if runs.len() != n || runs.iter().enumerate().any(|(i, r)| r.base != i as u64) {
        return Err(Error::config(
            "seeds",
            "the tower operator needs every reference interval, in order",
        ));
    }
    if sub == 0 {
        return Err(Error::config(
            "resolve",
            "must be at least 1 for the tower operator",
        ));
    }
    let grid = SubGrid { cover, sub };
    let mut op = TowerOperator {
        sub,
        n_tiles: n,
        tile_len: (0..n as u64)
            .map(|t| cover.tile(t).1 - cover.tile(t).0)
            .collect(),
        alive: Vec::new(),
        returns: Vec::new(),
        hole: Vec::new(),
        defect: runs.iter().map(|r| r.residual.total()).sum(),
    };
    for r in runs {
        for c in &r.cells {
            let stop = c.stop as usize;
            grow(&mut op.alive, stop, vec![0.0; n * sub]);
            grow(&mut op.returns, stop, Vec::new());
            grow(&mut op.hole, stop, Vec::new());
            for (s, o) in grid.overlaps(r.base, c.lo, c.hi) {
                for l in 0..stop {
                    op.alive[l][s as usize] += o;
                }
            }
            match c.outcome {
                Outcome::FellInHole { .. } => {
                    for (s, o) in grid.overlaps(r.base, c.lo, c.hi) {
                        op.hole[stop - 1].push((s, o));
                    }
                }
                Outcome::Returned {
                    first_tile,
                    last_tile,
                } => {
                    let cuts = &c.tile_cuts;
                    let expected = (last_tile - first_tile + 1) as usize * sub + 1;
                    if cuts.len() != expected {
                        return Err(Error::config(
                            "resolve",
                            "returned cells lack sub-cell preimages",
                        ));
                    }
                    for (k, w) in cuts.windows(2).enumerate() {
                        let target = (first_tile as usize * sub + k) as u32;
                        let (u, v) = (w[0].min(w[1]), w[0].max(w[1]));
                        for (s, o) in grid.overlaps(r.base, u, v) {
                            op.returns[stop - 1].push((s, target, o));
                        }
                    }
                }
                Outcome::Grown => {}
            }
        }
    }
    for r in &mut op.returns {
        r.sort_unstable_by_key(|e| (e.0, e.1));
        r.dedup_by(|b, a| {
            let same = a.0 == b.0 && a.1 == b.1;
            if same {
                a.2 += b.2;
            }
            same
        });
    }
    for h in &mut op.hole {
        h.sort_unstable_by_key(|e| e.0);
        h.dedup_by(|b, a| {
            let same = a.0 == b.0;
            if same {
                a.1 += b.1;
            }
            same
        });
    }
    Ok(op)
}

/// Norm settings of the weighted space X: xi, and M = b / (1 - a0) with
/// a0 = max(e^{-xi}, 1/gamma), b = 1 + C.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormParams {
    pub xi: f64,
    pub gamma: f64,
    pub c: f64,
    pub a0: f64,
    pub b: f64,
    pub m: f64,
}

impl NormParams {
    /// xi = -log(theta) / 2; None when theta is not in (0, 1).
    pub fn from_theta(theta: f64, gamma: f64, c: f64) -> Option<Self> {
        if !(theta > 0.0 && theta < 1.0) || !(gamma > 1.0) {
            return None;
        }
        let xi = -0.5 * theta.ln();
        let a0 = (-xi).exp().max(1.0 / gamma);
        let b = 1.0 + c;
        Some(Self {
            xi,
            gamma,
            c,
            a0,
            b,
            m: b / (1.0 - a0),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FunctionalNorms {
    pub sup: f64,
    pub regularity: f64,
    /// Level cells spanning fewer than three full sub-cells, skipped by the
    /// regularity norm.
    pub narrow_cells: usize,
    pub nonnegative: bool,
    pub integral: f64,
    /// f in X_M.
    pub in_xm: bool,
}

impl TowerOperator {
    pub fn levels(&self) -> usize {
        self.alive.len()
    }

    fn base_of(&self, s: usize) -> usize {
        s / self.sub
    }

    /// Uniform density on the base with unit total mass.
    pub fn base_uniform(&self) -> TowerFunction {
        let total: f64 = self.alive[0].iter().sum();
        let mut mass = vec![vec![0.0; self.alive[0].len()]; self.levels()];
        for (m, a) in mass[0].iter_mut().zip(&self.alive[0]) {
            *m = a / total;
        }
        TowerFunction { mass }
    }

    /// One step of the transfer operator. Returns P f and the mass that
    /// fell into the hole.
    pub fn apply(&self, f: &TowerFunction) -> (TowerFunction, f64) {
        let n = self.alive[0].len();
        let levels = self.levels();
        let mut out = vec![vec![0.0; n]; levels];
        let climbed: Vec<(usize, Vec<f64>)> = (0..levels.saturating_sub(1))
            .into_par_iter()
            .map(|l| {
                let v = (0..n)
                    .map(|s| {
                        let a = self.alive[l][s];
                        if a > 0.0 {
                            f.mass[l][s] * self.alive[l + 1][s] / a
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (l + 1, v)
            })
            .collect();
        for (l, v) in climbed {
            out[l] = v;
        }
        let mut lost = 0.0;
        for l in 0..levels {
            for &(s, t, m) in &self.returns[l] {
                let a = self.alive[l][s as usize];
                if a > 0.0 {
                    out[0][t as usize] += f.mass[l][s as usize] * m / a;
                }
            }
            for &(s, m) in &self.hole[l] {
                let a = self.alive[l][s as usize];
                if a > 0.0 {
                    lost += f.mass[l][s as usize] * m / a;
                }
            }
        }
        (TowerFunction { mass: out }, lost)
    }

    /// Density of f at state (l, s) in tower units (bases of unit length).
    pub fn density(&self, f: &TowerFunction, l: usize, s: usize) -> Option<f64> {
        let a = self.alive[l][s];
        (a > 0.0).then(|| f.mass[l][s] / (a / self.tile_len[self.base_of(s)]))
    }

    /// Weighted sup and regularity norms of f and the X_M verdict.
    pub fn norms(&self, f: &TowerFunction, p: &NormParams) -> FunctionalNorms {
        let n = self.alive[0].len();
        let mut sup = 0.0f64;
        let mut reg = 0.0f64;
        let mut narrow = 0;
        let mut nonneg = true;
        let h = 1.0 / self.sub as f64;
        for l in 0..self.levels() {
            let w = (-p.xi * l as f64).exp();
            for s in 0..n {
                if let Some(d) = self.density(f, l, s) {
                    sup = sup.max(d.abs() * w);
                    nonneg &= d >= 0.0;
                }
            }
            for base in 0..self.n_tiles {
                let full: Vec<usize> = (base * self.sub..(base + 1) * self.sub)
                    .filter(|&s| {
                        self.alive[l][s] >= self.alive[0][s] * (1.0 - 1e-9)
                            && self.alive[l][s] > 0.0
                    })
                    .collect();
                if full.is_empty() {
                    continue;
                }
                let runs = full.windows(2).filter(|w| w[1] == w[0] + 1).count() + 1;
                if runs < 3 {
                    narrow += 1;
                    continue;
                }
                for win in full.windows(2).filter(|w| w[1] == w[0] + 1) {
                    let (Some(x), Some(y)) =
                        (self.density(f, l, win[0]), self.density(f, l, win[1]))
                    else {
                        continue;
                    };
                    let mid = 0.5 * (x + y);
                    if mid > 0.0 {
                        reg = reg.max(((y - x) / h).abs() / mid * w);
                    }
                }
            }
        }
        let integral = f.total();
        FunctionalNorms {
            sup,
            regularity: reg,
            narrow_cells: narrow,
            nonnegative: nonneg,
            integral,
            in_xm: nonneg && sup.max(reg) <= p.m && (integral - 1.0).abs() < 1e-9,
        }
    }
}

pub fn tower_pf_apply(
    op: &TowerOperator,
    f: &TowerFunction,
    p: &NormParams,
) -> (TowerFunction, f64, FunctionalNorms) {
    let (g, lost) = op.apply(f);
    let norms = op.norms(&g, p);
    (g, lost, norms)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TowerSpectral {
    pub lambda: f64,
    pub phi: TowerFunction,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Fixed point of f -> P f / |P f| from the uniform base density.
pub fn tower_eigen(op: &TowerOperator, tol: f64, max_iter: usize) -> TowerSpectral {
    let mut f = op.base_uniform();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let (g, _) = op.apply(&f);
        let s = g.total();
        if !(s > 0.0) {
            lambda = 0.0;
            break;
        }
        lambda = s;
        let mut g = g;
        residual = 0.0;
        for (gl, fl) in g.mass.iter_mut().zip(&f.mass) {
            for (x, y) in gl.iter_mut().zip(fl) {
                *x /= s;
                residual += (*x - y).abs();
            }
        }
        f = g;
        if residual < tol {
            break;
        }
    }
    TowerSpectral {
        lambda,
        phi: f,
        iterations: it,
        residual,
        converged: residual < tol,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectedDensity {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Level pieces narrower than the grid cell they fall in.
    pub sub_resolution: usize,
}

/// psi = pi_* phi: each recorded level piece carries the phi-mass of its
/// seed range at that level, spread uniformly over its image.
pub fn project_density(
    op: &TowerOperator,
    cover: &ReferenceCover,
    runs: &[SeedRun],
    phi: &TowerFunction,
    edges: &[f64],
) -> Result<ProjectedDensity> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("edges", "must be strictly increasing"));
    }
    if runs.iter().all(|r| r.levels.is_empty()) {
        return Err(Error::config(
            "record_levels",
            "projection needs recorded level pieces",
        ));
    }
    let grid = SubGrid { cover, sub: op.sub };
    let n = edges.len() - 1;
    let mut mass = vec![0.0; n];
    let mut narrow = 0;
    let locate = |x: f64| {
        edges
            .partition_point(|&e| e <= x)
            .saturating_sub(1)
            .min(n - 1)
    };
    for r in runs {
        for rec in &r.levels {
            let l = rec.level as usize;
            if l >= op.levels() {
                continue;
            }
            let (u, v) = (rec.seed_lo.min(rec.seed_hi), rec.seed_lo.max(rec.seed_hi));
            let m: f64 = grid
                .overlaps(r.base, u, v)
                .into_iter()
                .map(|(s, o)| {
                    let a = op.alive[l][s as usize];
                    if a > 0.0 {
                        phi.mass[l][s as usize] * o / a
                    } else {
                        0.0
                    }
                })
                .sum();
            if m <= 0.0 {
                continue;
            }
            let (a, b) = (rec.img_lo, rec.img_hi);
            let (i0, i1) = (locate(a), locate(b));
            if i0 == i1 || b <= a {
                mass[i0] += m;
                narrow += 1;
                continue;
            }
            for (i, slot) in mass.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let o = b.min(edges[i + 1]) - a.max(edges[i]);
                if o > 0.0 {
                    *slot += m * o / (b - a);
                }
            }
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData(
            "projected density has no mass".into(),
        ));
    }
    let density = (0..n)
        .map(|i| mass[i] / total / (edges[i + 1] - edges[i]))
        .collect();
    Ok(ProjectedDensity {
        edges: edges.to_vec(),
        density,
        sub_resolution: narrow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One base, every point returning onto the whole base at R = 1 with
    /// slope 2 on each of two branches.
    fn toy() -> TowerOperator {
        TowerOperator {
            sub: 2,
            n_tiles: 1,
            tile_len: vec![1.0],
            alive: vec![vec![0.5, 0.5]],
            returns: vec![vec![(0, 0, 0.25), (0, 1, 0.25), (1, 0, 0.25), (1, 1, 0.25)]],
            hole: vec![Vec::new()],
            defect: 0.0,
        }
    }

    #[test]
    fn constant_density_single_return() {
        let op = toy();
        let f = op.base_uniform();
        let (g, lost) = op.apply(&f);
        // Pf = f / |F'| * (two branches) = f
        assert_eq!(lost, 0.0);
        for s in 0..2 {
            assert!((op.density(&g, 0, s).unwrap() - 1.0).abs() < 1e-15);
        }
        let e = tower_eigen(&op, 1e-14, 10);
        assert!((e.lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mass_identity_with_hole() {
        let mut op = toy();
        op.returns[0] = vec![(0, 0, 0.25), (0, 1, 0.25), (1, 0, 0.25)];
        op.hole[0] = vec![(1, 0.25)];
        let f = op.base_uniform();
        let (g, lost) = op.apply(&f);
        assert!((g.total() + lost - f.total()).abs() < 1e-15);
        assert!((lost - 0.25).abs() < 1e-15);
        let e = tower_eigen(&op, 1e-13, 1000);
        // the alive mass loses a quarter of sub-cell 1 each step
        assert!(e.lambda > 0.5 && e.lambda < 1.0);
    }

    #[test]
    fn norm_params() {
        let p = NormParams::from_theta(0.25, 2.0, 0.0).unwrap();
        assert!((p.xi - 2f64.ln()).abs() < 1e-15);
        assert!((p.a0 - 0.5).abs() < 1e-15);
        assert!((p.m - 2.0).abs() < 1e-15);
        assert!(NormParams::from_theta(1.0, 2.0, 0.0).is_none());
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::{OpenIntervalSet, TentMap, UnimodalMap};

/// How cell boundaries are laid out on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Equal-width cells.
    Uniform,
    /// Images of an equal-width grid under y -> sin(pi y / 2): equal
    /// arcsine mass per cell, and equal-width cells in tent coordinates.
    Arcsine,
}

/// Reference measure used to spread mass inside a cell.
///
/// Lebesgue is the classical Ulam scheme. Arcsine weights each cell by
/// dx / (pi sqrt(1 - x^2)); on an arcsine grid at a = 2 this is exactly
/// the uniform-grid Ulam scheme of the conjugate tent map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMeasure {
    #[default]
    Lebesgue,
    Arcsine,
}

impl CellMeasure {
    pub fn of(&self, a: f64, b: f64) -> f64 {
        match self {
            CellMeasure::Lebesgue => b - a,
            CellMeasure::Arcsine => {
                (b.clamp(-1.0, 1.0).asin() - a.clamp(-1.0, 1.0).asin()) / std::f64::consts::PI
            }
        }
    }

    fn hole_overlap(&self, hole: &OpenIntervalSet, a: f64, b: f64) -> f64 {
        hole.components()
            .iter()
            .map(|&(l, r)| {
                let (u, v) = (a.max(l), b.min(r));
                if v > u {
                    self.of(u, v)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// A partition of [-1, 1] into cells with the hole rasterized: each cell
/// keeps the reference measure of its part outside H.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UlamGrid {
    pub kind: GridKind,
    pub reference: CellMeasure,
    pub edges: Vec<f64>,
    pub alive: Vec<f64>,
}

impl UlamGrid {
    pub fn new(kind: GridKind, n_cells: usize, hole: &OpenIntervalSet) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::config("n_cells", "need at least two cells"));
        }
        let edges: Vec<f64> = (0..=n_cells)
            .map(|i| {
                let y = -1.0 + 2.0 * i as f64 / n_cells as f64;
                match kind {
                    GridKind::Uniform => y,
                    GridKind::Arcsine => TentMap::conjugacy(y),
                }
            })
            .collect();
        Self::from_edges(kind, edges, hole)
    }

    /// Same cells, different reference measure.
    pub fn with_reference(mut self, reference: CellMeasure, hole: &OpenIntervalSet) -> Self {
        self.reference = reference;
        self.alive = Self::alive_parts(&self.edges, reference, hole);
        self
    }

    fn alive_parts(edges: &[f64], reference: CellMeasure, hole: &OpenIntervalSet) -> Vec<f64> {
        edges
            .windows(2)
            .map(|w| (reference.of(w[0], w[1]) - reference.hole_overlap(hole, w[0], w[1])).max(0.0))
            .collect()
    }

    pub fn from_edges(kind: GridKind, mut edges: Vec<f64>, hole: &OpenIntervalSet) -> Result<Self> {
        let n = edges.len();
        if n < 3 {
            return Err(Error::config("n_cells", "need at least two cells"));
        }
        edges[0] = -1.0;
        edges[n - 1] = 1.0;
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("edges", "must be strictly increasing"));
        }
        let alive = Self::alive_parts(&edges, CellMeasure::Lebesgue, hole);
        Ok(Self {
            kind,
            reference: CellMeasure::Lebesgue,
            edges,
            alive,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Cell holding x (right-closed at the last edge).
    pub fn locate(&self, x: f64) -> usize {
        let i = self.edges.partition_point(|&e| e <= x);
        i.saturating_sub(1).min(self.n_cells() - 1)
    }

    /// Cells that meet the open interval (lo, hi).
    fn span(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let first = self.edges.partition_point(|&e| e <= lo).saturating_sub(1);
        let last = self.edges.partition_point(|&e| e < hi).min(self.n_cells());
        first..last.max(first)
    }
}

/// Sub-stochastic transition masses between cells, stored by target so
/// that one application is a parallel gather.
///
/// Entry (i -> j) is the fraction of the alive part of cell i that lands in
/// the alive part of cell j after one step; the row deficit is the mass
/// that falls into the hole.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub grid: UlamGrid,
    col_ptr: Vec<usize>,
    src: Vec<u32>,
    val: Vec<f64>,
    row_sums: Vec<f64>,
}

impl SparseOperator {
    /// Builds from explicit (source, target, probability) triples.
    pub fn from_entries(grid: UlamGrid, entries: &[(usize, usize, f64)]) -> Self {
        let n = grid.n_cells();
        let mut by_target: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, p) in entries {
            by_target[j].push((i as u32, p));
        }
        Self::assemble(grid, by_target)
    }

    fn assemble(grid: UlamGrid, by_target: Vec<Vec<(u32, f64)>>) -> Self {
        let n = grid.n_cells();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut src = Vec::new();
        let mut val = Vec::new();
        let mut row_sums = vec![0.0; n];
        col_ptr.push(0);
        for col in by_target {
            for (i, p) in col {
                row_sums[i as usize] += p;
                src.push(i);
                val.push(p);
            }
            col_ptr.push(src.len());
        }
        Self {
            grid,
            col_ptr,
            src,
            val,
            row_sums,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Probability of the transition i -> j (linear scan of column j).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (self.col_ptr[j]..self.col_ptr[j + 1])
            .filter(|&e| self.src[e] as usize == i)
            .map(|e| self.val[e])
            .sum()
    }

    /// Pushes a vector of cell masses forward one step.
    pub fn apply(&self, mass: &[f64]) -> Vec<f64> {
        (0..self.n_cells())
            .into_par_iter()
            .map(|j| {
                let mut s = 0.0;
                for e in self.col_ptr[j]..self.col_ptr[j + 1] {
                    s += self.val[e] * mass[self.src[e] as usize];
                }
                s
            })
            .collect()
    }
}

/// Ulam discretization of the open system on a uniform grid.
pub fn build_ulam<M: UnimodalMap>(
    map: &M,
    hole: &OpenIntervalSet,
    n_cells: usize,
) -> Result<SparseOperator> {
    if n_cells < 64 {
        return Err(Error::config("n_cells", "must be at least 64"));
    }
    build_ulam_on(map, hole, UlamGrid::new(GridKind::Uniform, n_cells, hole)?)
}

/// Ulam discretization on a given grid. Transition masses are computed in
/// closed form from the two monotone preimage branches of each target cell,
/// measured with the grid's reference measure.
pub fn build_ulam_on<M: UnimodalMap>(
    map: &M,
    hole: &OpenIntervalSet,
    grid: UlamGrid,
) -> Result<SparseOperator> {
    let n = grid.n_cells();
    let by_target: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc: Vec<(u32, f64)> = Vec::new();
            if grid.alive[j] <= 0.0 {
                return acc;
            }
            for (c, d) in hole.complement_within(grid.edges[j], grid.edges[j + 1]) {
                let Some((p, q)) = map.positive_preimage(c, d) else {
                    continue;
                };
                for (lo, hi) in [(p, q), (-q, -p)] {
                    if hi <= lo {
                        continue;
                    }
                    for i in grid.span(lo, hi) {
                        if grid.alive[i] <= 0.0 {
                            continue;
                        }
                        let a = lo.max(grid.edges[i]);
                        let b = hi.min(grid.edges[i + 1]);
                        if b <= a {
                            continue;
                        }
                        let m = grid.reference.of(a, b) - grid.reference.hole_overlap(hole, a, b);
                        if m > 0.0 {
                            acc.push((i as u32, m / grid.alive[i]));
                        }
                    }
                }
            }
            acc.sort_by_key(|e| e.0);
            // merge the two branches and split target pieces
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(acc.len());
            for (i, p) in acc {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += p,
                    _ => merged.push((i, p)),
                }
            }
            merged
        })
        .collect();
    Ok(SparseOperator::assemble(grid, by_target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_core::QuadMap;

    #[test]
    fn closed_system_is_stochastic() {
        let m = QuadMap::new(2.0).unwrap();
        let op = build_ulam(&m, &OpenIntervalSet::empty(), 1024).unwrap();
        for s in op.row_sums() {
            assert!((s - 1.0).abs() < 1e-12, "{s}");
        }
        let op = build_ulam(&QuadMap::new(1.6).unwrap(), &OpenIntervalSet::empty(), 512).unwrap();
        assert!(op.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn total_escape_rows_vanish() {
        let m = QuadMap::new(1.5).unwrap();
        let h = OpenIntervalSet::single(-0.6, 1.0).unwrap();
        let op = build_ulam(&m, &h, 256).unwrap();
        assert!(op.row_sums().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn entries_match_direct_integration() {
        // independent route: midpoint sampling of each source cell
        let m = QuadMap::new(1.85).unwrap();
        let h = OpenIntervalSet::single(0.1, 0.17).unwrap();
        let op = build_ulam(&m, &h, 64).unwrap();
        let g = &op.grid;
        let samples = 20_000;
        for &i in &[3usize, 20, 31, 32, 40, 63] {
            let mut counts = vec![0usize; 64];
            let mut alive = 0usize;
            for s in 0..samples {
                let x = g.edges[i] + g.width(i) * (s as f64 + 0.5) / samples as f64;
                if h.contains(x) {
                    continue;
                }
                alive += 1;
                let y = m.apply(x);
                if !h.contains(y) {
                    counts[g.locate(y)] += 1;
                }
            }
            for j in 0..64 {
                let want = counts[j] as f64 / alive as f64;
                assert!((op.entry(i, j) - want).abs() < 2e-3, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn rows_substochastic_with_hole() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::new(vec![(0.28, 0.3), (-0.7, -0.65)]).unwrap();
        let op = build_ulam(&m, &h, 2048).unwrap();
        assert!(op
            .row_sums()
            .iter()
            .all(|&s| (0.0..=1.0 + 1e-12).contains(&s)));
        assert!(op.row_sums().iter().any(|&s| s < 0.99));
    }

    #[test]
    fn arcsine_reference_reproduces_tent_scheme() {
        let f = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.0, 1.0).unwrap();
        let g = UlamGrid::new(GridKind::Arcsine, 64, &h)
            .unwrap()
            .with_reference(CellMeasure::Arcsine, &h);
        let quad = build_ulam_on(&f, &h, g).unwrap();
        let th = OpenIntervalSet::single(0.0, 1.0).unwrap();
        let tent = build_ulam_on(
            &TentMap,
            &th,
            UlamGrid::new(GridKind::Uniform, 64, &th).unwrap(),
        )
        .unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert!(
                    (quad.entry(i, j) - tent.entry(i, j)).abs() < 1e-12,
                    "{i} {j}"
                );
            }
        }
    }

    #[test]
    fn arcsine_grid_edges() {
        let g = UlamGrid::new(GridKind::Arcsine, 8, &OpenIntervalSet::empty()).unwrap();
        assert_eq!(g.edges[0], -1.0);
        assert_eq!(g.edges[8], 1.0);
        assert!(g.edges[4].abs() < 1e-16);
    }
}

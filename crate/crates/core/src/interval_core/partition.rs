use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of (-delta, delta) \ {0} into I_k = (e^{-(k+1)}, e^{-k}) and
/// I_{-k} = -I_k for k0 <= k <= kmax, with delta = e^{-k0}. What is left,
/// (-e^{-(kmax+1)}, e^{-(kmax+1)}), is the unresolved core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodPartition {
    k0: u32,
    kmax: u32,
}

impl NeighborhoodPartition {
    pub fn new(k0: u32, kmax: u32) -> Result<Self> {
        if k0 == 0 {
            return Err(Error::config("k0", "must be positive"));
        }
        if kmax < k0 {
            return Err(Error::config("kmax", format!("must be at least k0 = {k0}")));
        }
        Ok(Self { k0, kmax })
    }

    pub fn k0(&self) -> u32 {
        self.k0
    }

    pub fn kmax(&self) -> u32 {
        self.kmax
    }

    pub fn delta(&self) -> f64 {
        (-(self.k0 as f64)).exp()
    }

    pub fn core_radius(&self) -> f64 {
        (-((self.kmax + 1) as f64)).exp()
    }

    /// Open cell I_k; negative k gives the mirrored cell.
    pub fn cell(&self, k: i32) -> Result<(f64, f64)> {
        let m = k.unsigned_abs();
        if m < self.k0 {
            return Err(Error::CellIndex { k, k0: self.k0 });
        }
        let lo = (-((m + 1) as f64)).exp();
        let hi = (-(m as f64)).exp();
        Ok(if k > 0 { (lo, hi) } else { (-hi, -lo) })
    }

    /// Signed cell index of x, or None outside (-delta, delta), at 0 and in the core.
    /// Points on a boundary e^{-k} belong to the cell further from 0.
    pub fn index(&self, x: f64) -> Option<i32> {
        let ax = x.abs();
        if ax >= self.delta() || ax <= self.core_radius() {
            return None;
        }
        let mut k = (-ax.ln()).floor() as u32;
        // guard the floor against rounding at e^{-k}
        while k > self.k0 && ax >= (-(k as f64)).exp() {
            k -= 1;
        }
        while ax < (-((k + 1) as f64)).exp() && k < self.kmax {
            k += 1;
        }
        let k = k.clamp(self.k0, self.kmax) as i32;
        Some(if x > 0.0 { k } else { -k })
    }

    /// All cut points of the partition in increasing order:
    /// -delta, ..., -e^{-(kmax+1)}, 0, e^{-(kmax+1)}, ..., delta.
    pub fn boundaries(&self) -> Vec<f64> {
        let pos: Vec<f64> = (self.k0..=self.kmax + 1)
            .map(|k| (-(k as f64)).exp())
            .collect();
        let mut out: Vec<f64> = pos.iter().map(|v| -v).collect();
        out.push(0.0);
        out.extend(pos.iter().rev());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_tile_the_neighbourhood() {
        let p = NeighborhoodPartition::new(6, 40).unwrap();
        let mut total = 0.0;
        for k in 6..=40 {
            let (l, r) = p.cell(k).unwrap();
            let (ml, mr) = p.cell(-k).unwrap();
            assert_eq!((ml, mr), (-r, -l));
            total += 2.0 * (r - l);
        }
        let expect = 2.0 * (p.delta() - p.core_radius());
        assert!((total - expect).abs() < 1e-15);
        assert!(p.cell(5).is_err());
    }

    #[test]
    fn index_matches_cells() {
        let p = NeighborhoodPartition::new(6, 40).unwrap();
        for k in 6..=40 {
            let (l, r) = p.cell(k).unwrap();
            let mid = (l * r).sqrt();
            assert_eq!(p.index(mid), Some(k));
            assert_eq!(p.index(-mid), Some(-k));
        }
        assert_eq!(p.index(0.0), None);
        assert_eq!(p.index(0.5), None);
        assert_eq!(p.index(1e-30), None);
    }

    #[test]
    fn boundaries_sorted() {
        let p = NeighborhoodPartition::new(3, 8).unwrap();
        let b = p.boundaries();
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(b.len(), 2 * 7 + 1);
    }
}

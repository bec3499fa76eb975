use serde::{Deserialize, Serialize};

use super::ulam::SparseOperator;

/// Dominant pair of the normalized operator f -> Pf / |Pf|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda: f64,
    /// Cell averages, normalized so that sum(density * width) = 1.
    pub density: Vec<f64>,
    /// Cell masses, summing to 1.
    pub mass: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Set when the operator kills all mass in one step.
    pub total_escape: bool,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Power iteration from the uniform density.
pub fn power_iterate(op: &SparseOperator, tol: f64, max_iter: usize) -> SpectralResult {
    let g = &op.grid;
    let n = op.n_cells();
    let total: f64 = g.alive.iter().sum();
    let mut mass: Vec<f64> = g.alive.iter().map(|a| a / total).collect();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let next = op.apply(&mass);
        let s: f64 = next.iter().sum();
        if !(s > 0.0) {
            return SpectralResult {
                lambda: 0.0,
                density: vec![0.0; n],
                mass: vec![0.0; n],
                iterations: it,
                residual: 0.0,
                converged: true,
                total_escape: true,
            };
        }
        lambda = s;
        let next: Vec<f64> = next.iter().map(|v| v / s).collect();
        residual = next.iter().zip(&mass).map(|(a, b)| (a - b).abs()).sum();
        mass = next;
        if residual < tol {
            break;
        }
    }
    let density = (0..n).map(|i| mass[i] / g.width(i)).collect();
    SpectralResult {
        lambda,
        density,
        mass,
        iterations: it,
        residual,
        converged: residual < tol,
        total_escape: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_core::{OpenIntervalSet, QuadMap};
    use crate::transfer::ulam::{build_ulam, GridKind, UlamGrid};

    #[test]
    fn identity_on_two_cells() {
        let g = UlamGrid::new(GridKind::Uniform, 2, &OpenIntervalSet::empty()).unwrap();
        let op = SparseOperator::from_entries(g, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let r = power_iterate(&op, 1e-12, 10);
        assert_eq!(r.lambda, 1.0);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.mass, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_operator_is_total_escape() {
        let g = UlamGrid::new(GridKind::Uniform, 4, &OpenIntervalSet::empty()).unwrap();
        let op = SparseOperator::from_entries(g, &[]);
        let r = power_iterate(&op, 1e-12, 10);
        assert!(r.total_escape);
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn fixed_point_consistency() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.28, 0.3).unwrap();
        let op = build_ulam(&m, &h, 1024).unwrap();
        let r = power_iterate(&op, 1e-12, 100_000);
        assert!(r.converged);
        let next = op.apply(&r.mass);
        let s: f64 = next.iter().sum();
        assert!((s - r.lambda).abs() < 1e-10);
        let norm: f64 = r
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| d * op.grid.width(i))
            .sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(r.lambda > 0.9 && r.lambda < 1.0);
    }

    #[test]
    fn eigenvalue_rises_when_hole_halves() {
        let m = QuadMap::new(2.0).unwrap();
        let big = OpenIntervalSet::single(0.28, 0.3).unwrap();
        let small = big.scaled(0.5).unwrap();
        let l1 = power_iterate(&build_ulam(&m, &big, 1024).unwrap(), 1e-11, 100_000).lambda;
        let l2 = power_iterate(&build_ulam(&m, &small, 1024).unwrap(), 1e-11, 100_000).lambda;
        assert!(l2 > l1);
    }
}

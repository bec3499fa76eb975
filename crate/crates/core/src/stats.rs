//! Small numerical helpers shared by the audits.

use serde::{Deserialize, Serialize};

/// Ordinary least squares y = intercept + slope x.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_stderr = if pts.len() > 2 && sxx > 0.0 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        r2,
        slope_stderr,
        points: pts.len(),
    }
}

/// Log-linear fit of a tail series t_n on the levels where t_n >= floor.
/// Returns None with fewer than three usable levels.
pub fn tail_fit(tail: &[f64], floor: f64) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= floor && v > 0.0)
        .map(|(n, &v)| (n as f64, v.ln()))
        .collect();
    (pts.len() >= 3).then(|| linear_fit(&pts))
}

/// sum |a_i - b_i| w_i
pub fn weighted_l1(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| (x - y).abs() * w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let f = linear_fit(&pts);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-13);
        assert!((f.r2 - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn tail_fit_floor() {
        let t: Vec<f64> = (0..30).map(|n| 0.5f64.powi(n)).collect();
        let f = tail_fit(&t, 1e-6).unwrap();
        assert_eq!(f.points, 20);
        assert!((f.slope - 0.5f64.ln()).abs() < 1e-12);
        assert!(tail_fit(&[1.0, 0.0], 1e-6).is_none());
    }
}

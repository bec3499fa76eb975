use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An even unimodal map of [-1, 1] into itself with its turning point at 0.
///
/// Both branches are monotone, so preimages of intervals can be written down
/// in closed form. The Ulam builder and the Monte Carlo driver only need this
/// much structure, which lets the tent map act as a conjugacy cross-check.
pub trait UnimodalMap: Sync {
    fn eval(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
    /// `{x >= 0 : eval(x) in [lo, hi]}` as a closed interval in [0, 1], if nonempty.
    /// The negative branch is the mirror image.
    fn positive_preimage(&self, lo: f64, hi: f64) -> Option<(f64, f64)>;
    /// Left end of the invariant range; the right end is always 1.
    fn range_min(&self) -> f64;
}

/// The quadratic family f_a(x) = 1 - a x^2 on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadMap {
    a: f64,
}

impl QuadMap {
    pub fn new(a: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&a) {
            return Err(Error::ParamOutOfRange(a));
        }
        Ok(Self { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// [1 - a, 1], the image of [-1, 1].
    pub fn invariant_range(&self) -> (f64, f64) {
        (1.0 - self.a, 1.0)
    }

    /// Checked evaluation; rejects points outside [-1, 1].
    pub fn eval_checked(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::Domain(x));
        }
        Ok(self.apply(x))
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        1.0 - self.a * x * x
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        -2.0 * self.a * x
    }

    /// Orbit `(x, f(x), ..., f^n(x))` and the derivative of f^n at x.
    pub fn orbit_deriv(&self, x: f64, n: usize) -> (Vec<f64>, f64) {
        let mut orbit = Vec::with_capacity(n + 1);
        let mut d = 1.0;
        let mut y = x;
        orbit.push(y);
        for _ in 0..n {
            d *= self.derivative(y);
            y = self.apply(y);
            orbit.push(y);
        }
        (orbit, d)
    }

    /// log |(f^n)'(x)|, summed term by term so long orbits do not overflow.
    pub fn log_deriv(&self, x: f64, n: usize) -> f64 {
        let mut s = 0.0;
        let mut y = x;
        for _ in 0..n {
            s += self.derivative(y).abs().ln();
            y = self.apply(y);
        }
        s
    }

    /// `T^k(0)` for `0 <= k <= n`.
    pub fn critical_orbit(&self, n: usize) -> Vec<f64> {
        self.orbit_deriv(0.0, n).0
    }

    /// Image of the closed interval [lo, hi]; folds at 0 are handled.
    pub fn image(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (fl, fh) = (self.apply(lo), self.apply(hi));
        let (mut a, mut b) = if fl <= fh { (fl, fh) } else { (fh, fl) };
        if lo < 0.0 && hi > 0.0 {
            b = 1.0;
        }
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        (a, b)
    }

    /// Preimage of y on the branch with sign `s` (+1 or -1): s * sqrt((1 - y) / a).
    #[inline]
    pub fn inverse_branch(&self, y: f64, positive: bool) -> f64 {
        let x = ((1.0 - y).max(0.0) / self.a).sqrt().min(1.0);
        if positive {
            x
        } else {
            -x
        }
    }
}

impl UnimodalMap for QuadMap {
    fn eval(&self, x: f64) -> f64 {
        self.apply(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.derivative(x)
    }

    fn positive_preimage(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if self.a == 0.0 {
            return (lo <= 1.0 && 1.0 <= hi).then_some((0.0, 1.0));
        }
        // x^2 in [(1 - hi)/a, (1 - lo)/a] intersected with [0, 1]
        let s_lo = ((1.0 - hi) / self.a).max(0.0);
        let s_hi = ((1.0 - lo) / self.a).min(1.0);
        if s_lo > s_hi {
            return None;
        }
        Some((s_lo.sqrt(), s_hi.sqrt()))
    }

    fn range_min(&self) -> f64 {
        1.0 - self.a
    }
}

/// The full tent map g(y) = 1 - 2|y|. At a = 2 it is conjugate to the
/// quadratic map through h(y) = sin(pi y / 2).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TentMap;

impl TentMap {
    /// h(y) = sin(pi y / 2), with h o g = f_2 o h.
    pub fn conjugacy(y: f64) -> f64 {
        (std::f64::consts::FRAC_PI_2 * y).sin()
    }

    pub fn conjugacy_inverse(x: f64) -> f64 {
        x.clamp(-1.0, 1.0).asin() / std::f64::consts::FRAC_PI_2
    }
}

impl UnimodalMap for TentMap {
    fn eval(&self, y: f64) -> f64 {
        1.0 - 2.0 * y.abs()
    }

    fn deriv(&self, y: f64) -> f64 {
        if y < 0.0 {
            2.0
        } else {
            -2.0
        }
    }

    fn positive_preimage(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let s_lo = ((1.0 - hi) / 2.0).max(0.0);
        let s_hi = ((1.0 - lo) / 2.0).min(1.0);
        (s_lo <= s_hi).then_some((s_lo, s_hi))
    }

    fn range_min(&self) -> f64 {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let m = QuadMap::new(2.0).unwrap();
        assert_eq!(m.eval_checked(0.0).unwrap(), 1.0);
        assert_eq!(m.eval_checked(1.0).unwrap(), -1.0);
        let m = QuadMap::new(1.9).unwrap();
        assert!((m.eval_checked(0.5).unwrap() - 0.525).abs() < 1e-15);
        assert!(matches!(m.eval_checked(1.5), Err(Error::Domain(_))));
        assert!(QuadMap::new(2.1).is_err());
        assert!(QuadMap::new(-0.1).is_err());
    }

    #[test]
    fn orbit_examples() {
        let m = QuadMap::new(2.0).unwrap();
        assert_eq!(m.orbit_deriv(0.0, 3).0, vec![0.0, 1.0, -1.0, -1.0]);
        assert_eq!(m.orbit_deriv(0.5, 2).1, 4.0);
        assert_eq!(m.orbit_deriv(0.25, 1).1, -1.0);
        assert!((m.log_deriv(0.5, 2) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn image_handles_fold() {
        let m = QuadMap::new(2.0).unwrap();
        assert_eq!(m.image(-1.0, 1.0), (-1.0, 1.0));
        assert_eq!(m.image(0.0, 0.5), (0.5, 1.0));
        let (lo, hi) = m.image(-0.1, 0.2);
        assert!((lo - 0.92).abs() < 1e-15 && hi == 1.0);
    }

    #[test]
    fn preimage_round_trip() {
        let m = QuadMap::new(1.7).unwrap();
        let (x0, x1) = m.positive_preimage(0.1, 0.4).unwrap();
        assert!((m.apply(x0) - 0.4).abs() < 1e-14);
        assert!((m.apply(x1) - 0.1).abs() < 1e-14);
        assert!(m.positive_preimage(1.5, 2.0).is_none());
    }

    #[test]
    fn tent_conjugacy() {
        let f = QuadMap::new(2.0).unwrap();
        for i in 0..=100 {
            let y = -1.0 + 0.02 * i as f64;
            let lhs = TentMap::conjugacy(TentMap.eval(y));
            let rhs = f.apply(TentMap::conjugacy(y));
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }
}

//! Points stored as offsets from the critical orbit.
//!
//! In binary64, 1 - a x^2 rounds to exactly 1 once |x| < 1e-8, so every
//! point of I_k with k > 18 would collapse onto the critical value. A point
//! close to T^j(0) is therefore kept as `Near { j, off }` with value
//! T^j(0) + off, and the offset is advanced with the exact identity
//! f(c + d) - f(c) = -a d (2c + d). Points far from the critical orbit are
//! plain absolute coordinates.

use super::map::QuadMap;

/// Points with |x| below this switch to offset form on the next forward step.
const ENTER_NEAR: f64 = 1e-4;
/// Offsets above this are converted back to absolute coordinates.
const LEAVE_NEAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pt {
    Abs(f64),
    Near { j: u32, off: f64 },
}

/// The critical orbit of a map, tabulated for offset arithmetic.
#[derive(Debug, Clone)]
pub struct ShadowOrbit {
    map: QuadMap,
    crit: Vec<f64>,
}

impl ShadowOrbit {
    pub fn new(map: QuadMap, len: usize) -> Self {
        Self {
            map,
            crit: map.critical_orbit(len.max(2)),
        }
    }

    pub fn map(&self) -> &QuadMap {
        &self.map
    }

    /// T^j(0), as tabulated.
    pub fn crit(&self, j: usize) -> f64 {
        self.crit[j]
    }

    pub fn len(&self) -> usize {
        self.crit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crit.is_empty()
    }

    pub fn value(&self, p: Pt) -> f64 {
        match p {
            Pt::Abs(x) => x,
            Pt::Near { j, off } => (self.crit[j as usize] + off).clamp(-1.0, 1.0),
        }
    }

    pub fn forward(&self, p: Pt) -> Pt {
        let a = self.map.a();
        match p {
            Pt::Abs(x) if x.abs() < ENTER_NEAR && a > 0.0 && self.crit.len() > 2 => {
                self.settle(1, -a * x * x)
            }
            Pt::Abs(x) => Pt::Abs(self.map.apply(x)),
            Pt::Near { j, off } => {
                let c = self.crit[j as usize];
                self.settle(j as usize + 1, -a * off * (2.0 * c + off))
            }
        }
    }

    fn settle(&self, j: usize, off: f64) -> Pt {
        if off.abs() > LEAVE_NEAR || j + 1 >= self.crit.len() {
            Pt::Abs((self.crit[j] + off).clamp(-1.0, 1.0))
        } else {
            Pt::Near { j: j as u32, off }
        }
    }

    /// Preimage of `p` on the branch of the given sign.
    pub fn backward(&self, p: Pt, positive: bool) -> Pt {
        let a = self.map.a();
        match p {
            Pt::Abs(y) => Pt::Abs(self.map.inverse_branch(y, positive)),
            Pt::Near { j: 1, off } => {
                let x = ((-off).max(0.0) / a).sqrt();
                Pt::Abs(if positive { x } else { -x })
            }
            Pt::Near { j, off } => {
                let c = self.crit[j as usize - 1];
                if (c > 0.0) != positive || c == 0.0 {
                    return Pt::Abs(self.map.inverse_branch(self.value(p), positive));
                }
                // small root of d^2 + 2 c d + off / a = 0
                let q = off / a;
                let disc = (c * c - q).max(0.0).sqrt();
                let d = -q / (c + c.signum() * disc);
                if d.abs() > LEAVE_NEAR {
                    Pt::Abs((c + d).clamp(-1.0, 1.0))
                } else {
                    Pt::Near { j: j - 1, off: d }
                }
            }
        }
    }

    /// Re-anchors an absolute point at `time` to offset form when it lies
    /// near T^j(0), j counted from the latest of `entries` (ascending times
    /// at which the orbit passed close to 0). The later pullback through 0
    /// then keeps its relative precision.
    pub fn reanchor(&self, y: Pt, time: usize, entries: &[usize]) -> Pt {
        let e = entries.partition_point(|&t| t < time);
        match (y, e.checked_sub(1).map(|i| entries[i])) {
            (Pt::Abs(v), Some(t)) => {
                let j = time - t;
                if j + 1 < self.crit.len() && (v - self.crit[j]).abs() <= LEAVE_NEAR {
                    Pt::Near {
                        j: j as u32,
                        off: v - self.crit[j],
                    }
                } else {
                    y
                }
            }
            _ => y,
        }
    }

    /// Pulls y at time n back to time 0 along the branch signs, re-anchoring
    /// on the critical orbit after each entry time.
    pub fn pullback(
        &self,
        mut y: Pt,
        n: usize,
        sign: impl Fn(usize) -> bool,
        entries: &[usize],
    ) -> Pt {
        for i in (0..n).rev() {
            y = self.backward(self.reanchor(y, i + 1, entries), sign(i));
        }
        y
    }

    /// q - p, exact when both share an offset base.
    pub fn diff(&self, p: Pt, q: Pt) -> f64 {
        match (p, q) {
            (Pt::Near { j: i, off: u }, Pt::Near { j, off: v }) if i == j => v - u,
            _ => self.value(q) - self.value(p),
        }
    }

    /// Sign of the point (which branch it sits on).
    pub fn positive(&self, p: Pt) -> bool {
        self.value(p) > 0.0
    }

    /// |f'(p)|, computed from the absolute value.
    pub fn abs_deriv(&self, p: Pt) -> f64 {
        (2.0 * self.map.a() * self.value(p)).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_deep_cells() {
        let m = QuadMap::new(2.0).unwrap();
        let s = ShadowOrbit::new(m, 64);
        let x = (-30f64).exp();
        let y = (-31f64).exp();
        let (mut p, mut q) = (Pt::Abs(x), Pt::Abs(y));
        for _ in 0..5 {
            p = s.forward(p);
            q = s.forward(q);
        }
        // T^5 near -1: offset is 2 x^2 4^4 up to a relative 1e-12
        let want = 2.0 * (x * x - y * y) * 256.0;
        let got = s.diff(q, p);
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn backward_inverts_forward() {
        let m = QuadMap::new(1.8).unwrap();
        let s = ShadowOrbit::new(m, 64);
        for &x in &[1e-20, -3e-12, 2e-5, 0.3, -0.77] {
            let mut p = Pt::Abs(x);
            let mut signs = Vec::new();
            for _ in 0..6 {
                signs.push(s.positive(p));
                p = s.forward(p);
            }
            for &sg in signs.iter().rev() {
                p = s.backward(p, sg);
            }
            let back = s.value(p);
            assert!(((back - x) / x).abs() < 1e-6, "{x} -> {back}");
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::OpenIntervalSet;

/// 4^8, the growth factor separating eps from the stopping length.
pub const GROWTH: f64 = 65_536.0;

/// Measured inputs to the length scales and the hole-size conditions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScaleInputs {
    /// min over tabulated k of |T^{q(k)} I_k|.
    pub eps_prime: f64,
    pub eps0: f64,
    /// Distortion constant from the tower audit.
    pub c_tilde: f64,
    /// Return-time tail rate.
    pub theta: f64,
    /// Hole-fall prefactor.
    pub d: f64,
    pub lambda0: f64,
    pub m0: usize,
    /// Free-excursion derivative constant.
    pub c0_prime: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LengthScales {
    pub eps_prime: f64,
    pub eps0: f64,
    pub eps: f64,
    #[serde(rename = "C_tilde")]
    pub c_tilde: f64,
    pub theta_target: f64,
    #[serde(rename = "D_measured")]
    pub d_measured: f64,
    /// eps <= 1 / (4^9 C_tilde), the guard behind the return expansion bound.
    pub distortion_guard: bool,
}

/// m(H) against an upper bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoleBound {
    pub hole_measure: f64,
    /// The right side: the largest admissible m(H).
    pub bound: f64,
    /// bound - m(H).
    pub slack: f64,
    pub pass: bool,
}

impl HoleBound {
    fn new(hole_measure: f64, bound: f64, strict: bool) -> Self {
        let slack = bound - hole_measure;
        let pass = if strict { slack > 0.0 } else { slack >= 0.0 };
        Self {
            hole_measure,
            bound,
            slack,
            pass,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoleSizeVerdict {
    pub a3: HoleBound,
    /// The weaker bound used to return part of every piece of length eps.
    pub no_piece_left: HoleBound,
}

impl HoleSizeVerdict {
    pub fn into_result(self) -> Result<Self> {
        if !self.a3.pass {
            return Err(Error::Assumption {
                name: "A3",
                detail: format!(
                    "fails at this hole size: m(H) = {:e}, largest admissible {:e}",
                    self.a3.hole_measure, self.a3.bound
                ),
            });
        }
        Ok(self)
    }
}

/// eps from 4^8 eps = min(eps', eps0, 1 / (4 C_tilde)).
pub fn growth_length(eps_prime: f64, eps0: f64, c_tilde: f64) -> f64 {
    let cap = if c_tilde > 0.0 {
        1.0 / (4.0 * c_tilde)
    } else {
        f64::INFINITY
    };
    eps_prime.min(eps0).min(cap) / GROWTH
}

/// (1 - sqrt(theta))^3 / 3 * eps^2 / (D theta).
pub fn a3_bound(eps: f64, theta: f64, d: f64) -> f64 {
    (1.0 - theta.sqrt()).powi(3) / 3.0 * eps * eps / (d * theta)
}

/// eps / 2 * (e^{lambda0 m0 / 3} - 2) / e^{lambda0 (m0 - 1) / 3} * c0' delta.
pub fn no_piece_left_bound(eps: f64, lambda0: f64, m0: usize, c0_prime: f64, delta: f64) -> f64 {
    let m = m0 as f64;
    eps / 2.0 * ((lambda0 * m / 3.0).exp() - 2.0) / (lambda0 * (m - 1.0) / 3.0).exp()
        * c0_prime
        * delta
}

pub fn derive_length_scales(
    inputs: &ScaleInputs,
    hole: &OpenIntervalSet,
) -> Result<(LengthScales, HoleSizeVerdict)> {
    let i = inputs;
    for (name, v) in [
        ("eps_prime", i.eps_prime),
        ("eps0", i.eps0),
        ("D", i.d),
        ("delta", i.delta),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(name, "must be positive and finite"));
        }
    }
    if !(i.theta > 0.0 && i.theta < 1.0) {
        return Err(Error::config("theta", "must lie in (0, 1)"));
    }
    let eps = growth_length(i.eps_prime, i.eps0, i.c_tilde);
    let scales = LengthScales {
        eps_prime: i.eps_prime,
        eps0: i.eps0,
        eps,
        c_tilde: i.c_tilde,
        theta_target: i.theta,
        d_measured: i.d,
        distortion_guard: eps * 4.0 * GROWTH * i.c_tilde <= 1.0 * (1.0 + 1e-12),
    };
    let m = hole.measure();
    let verdict = HoleSizeVerdict {
        a3: HoleBound::new(m, a3_bound(eps, i.theta, i.d), true),
        no_piece_left: HoleBound::new(
            m,
            no_piece_left_bound(eps, i.lambda0, i.m0, i.c0_prime, i.delta),
            false,
        ),
    };
    Ok((scales, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> ScaleInputs {
        ScaleInputs {
            eps_prime: 0.05,
            eps0: 1e-3,
            c_tilde: 10.0,
            theta: 0.9,
            d: 100.0,
            lambda0: 1.9f64.ln(),
            m0: 10,
            c0_prime: 0.5,
            delta: (-6f64).exp(),
        }
    }

    #[test]
    fn growth_rule() {
        let (s, _) = derive_length_scales(&inputs(), &OpenIntervalSet::empty()).unwrap();
        assert_eq!(s.eps * GROWTH, 1e-3);
        assert!(s.distortion_guard);
        let mut big = inputs();
        big.c_tilde = 1e4;
        let (s, _) = derive_length_scales(&big, &OpenIntervalSet::empty()).unwrap();
        assert!((s.eps * GROWTH - 1.0 / 4e4).abs() < 1e-18);
        assert!(s.distortion_guard);
    }

    #[test]
    fn empty_hole_has_full_slack() {
        let (_, v) = derive_length_scales(&inputs(), &OpenIntervalSet::empty()).unwrap();
        assert!(v.a3.pass);
        assert_eq!(v.a3.slack, v.a3.bound);
        assert!(v.into_result().is_ok());
    }

    #[test]
    fn slack_is_linear_in_hole_measure() {
        let h1 = OpenIntervalSet::single(0.3, 0.3 + 1e-4).unwrap();
        let h2 = OpenIntervalSet::single(0.3, 0.3 + 2e-4).unwrap();
        let (_, v1) = derive_length_scales(&inputs(), &h1).unwrap();
        let (_, v2) = derive_length_scales(&inputs(), &h2).unwrap();
        let m1 = h1.measure();
        let m2 = h2.measure();
        assert!((v1.a3.slack - v2.a3.slack - (m2 - m1)).abs() < 1e-15);
        assert!(!v2.a3.pass);
        match v2.into_result() {
            Err(Error::Assumption { name, .. }) => assert_eq!(name, "A3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn a3_formula() {
        let b = a3_bound(1e-3, 0.25, 2.0);
        assert!((b - 0.125 / 3.0 * 1e-6 / 0.5).abs() < 1e-20);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::QuadMap;

/// Measured constants of the class M conditions on a finite horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMConstants {
    pub delta0: f64,
    pub lambda0: f64,
    #[serde(rename = "M0")]
    pub m0: usize,
    pub c0: f64,
    /// Truncation of the "for all n" in the orbit clause.
    pub horizon: usize,
}

/// Settings for the excursion sweeps behind clauses (b) and (c).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassMSettings {
    /// Longest free excursion followed.
    pub excursion_horizon: usize,
    /// Grid points on [-1, 1] \ (-delta0, delta0) for clause (b).
    pub outside_samples: usize,
    /// Log-spaced points in (-delta0, delta0) for clause (c), per side.
    pub inside_samples: usize,
    /// Smallest |x| sampled for clause (c), relative to delta0.
    pub inside_depth: f64,
    /// Rate that M0 is chosen to reach; log 1.9 near a = 2.
    pub lambda_target: f64,
}

impl Default for ClassMSettings {
    fn default() -> Self {
        Self {
            excursion_horizon: 100,
            outside_samples: 4001,
            inside_samples: 200,
            inside_depth: 1e-6,
            lambda_target: 1.9f64.ln(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMReport {
    pub constants: ClassMConstants,
    /// min_{1 <= n <= horizon} |f^n(0)|.
    pub orbit_distance: f64,
    pub clause_a: bool,
    pub clause_b: bool,
    pub clause_c: bool,
    /// True when M0 was chosen so that lambda0 reaches the target rate.
    pub lambda_target_met: bool,
    /// min over clause (c) samples of max_s (log|(f^s)'(x)| - lambda0 s / 3) + log c0.
    pub recovery_margin: f64,
    /// s0(x) for each clause (c) sample, as (x, s0).
    pub recovery_times: Vec<(f64, usize)>,
    pub excursion_samples: usize,
}

impl ClassMReport {
    pub fn passed(&self) -> bool {
        self.clause_a && self.clause_b && self.clause_c
    }

    /// The first violated clause as an error.
    pub fn into_result(self) -> Result<Self> {
        let c = &self.constants;
        if !self.clause_a {
            return Err(Error::ClassM {
                clause: 'a',
                detail: format!(
                    "critical orbit comes within {} of 0, need > {}",
                    self.orbit_distance,
                    2.0 * c.delta0
                ),
            });
        }
        if !self.clause_b {
            return Err(Error::ClassM {
                clause: 'b',
                detail: format!(
                    "no positive expansion rate outside (-{0}, {0}) up to n = {1}",
                    c.delta0, c.horizon
                ),
            });
        }
        if !self.clause_c {
            return Err(Error::ClassM {
                clause: 'c',
                detail: format!(
                    "derivative recovery falls short by {}",
                    -self.recovery_margin
                ),
            });
        }
        Ok(self)
    }
}

/// One free excursion: log|(f^n)'(x)| for n = 1..len, and whether f^len(x)
/// entered (-delta0, delta0).
struct Excursion {
    logs: Vec<f64>,
    entered: bool,
}

fn excursion(map: &QuadMap, x: f64, delta0: f64, horizon: usize) -> Excursion {
    let mut logs = Vec::new();
    let mut y = x;
    let mut s = 0.0;
    for _ in 0..horizon {
        s += map.derivative(y).abs().ln();
        y = map.apply(y);
        logs.push(s);
        if y.abs() < delta0 {
            return Excursion {
                logs,
                entered: true,
            };
        }
    }
    Excursion {
        logs,
        entered: false,
    }
}

/// Finite-horizon check of the class M conditions at the given delta0.
///
/// Clause (b): lambda0 is the worst rate min L_n / n over sampled excursions
/// of length n >= M0, with M0 the first threshold reaching the target rate
/// (or, failing that, the threshold with the best worst rate). c0 is the
/// largest constant with L_n >= log c0 + lambda0 n on excursions that end
/// inside (-delta0, delta0). Clause (c): each sampled x near 0 takes as
/// s0(x) the time before its first return that maximises
/// L_s - lambda0 s / 3, and must reach -log c0 there.
pub fn check_class_m(
    map: &QuadMap,
    delta0: f64,
    horizon: usize,
    settings: &ClassMSettings,
) -> Result<ClassMReport> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(Error::config("delta0", "must lie in (0, 1)"));
    }
    if horizon < 10 {
        return Err(Error::config("horizon", "must be at least 10"));
    }
    let orbit = map.critical_orbit(horizon);
    let orbit_distance = orbit[1..]
        .iter()
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    let clause_a = orbit_distance > 2.0 * delta0;

    let eh = settings.excursion_horizon.max(2);
    let ns = settings.outside_samples.max(2);
    let mut excursions = Vec::with_capacity(ns);
    for i in 0..ns {
        let x = -1.0 + 2.0 * i as f64 / (ns - 1) as f64;
        if x.abs() >= delta0 {
            excursions.push(excursion(map, x, delta0, eh));
        }
    }
    // worst[n - 1] = min over excursions reaching length n of L_n / n
    let mut worst = vec![f64::INFINITY; eh];
    for e in &excursions {
        for (i, l) in e.logs.iter().enumerate() {
            worst[i] = worst[i].min(l / (i + 1) as f64);
        }
    }
    // tail[m] = min_{n >= m + 1} worst
    let mut tail = worst.clone();
    for i in (0..eh.saturating_sub(1)).rev() {
        tail[i] = tail[i].min(tail[i + 1]);
    }
    // keep M0 <= horizon / 2 so the tail minimum has support
    let search = eh / 2;
    let hit = (0..search).find(|&i| tail[i] >= settings.lambda_target);
    let (m_index, lambda_target_met) = match hit {
        Some(i) => (i, true),
        None => {
            let best = (0..search)
                .max_by(|&i, &j| tail[i].total_cmp(&tail[j]))
                .unwrap_or(0);
            (best, false)
        }
    };
    let lambda0 = tail[m_index];
    let clause_b = lambda0.is_finite() && lambda0 > 0.0;

    let mut log_c0: f64 = 0.0;
    if clause_b {
        for e in excursions.iter().filter(|e| e.entered) {
            let n = e.logs.len();
            log_c0 = log_c0.min(e.logs[n - 1] - lambda0 * n as f64);
        }
    }
    let c0 = log_c0.exp();

    let ni = settings.inside_samples.max(1);
    let lo = (delta0 * settings.inside_depth).ln();
    let hi = delta0.ln();
    let mut recovery_times = Vec::new();
    let mut recovery_margin = f64::INFINITY;
    for i in 0..ni {
        // strictly inside: the last sample stops short of delta0
        let t = i as f64 / ni as f64;
        let ax = (lo + t * (hi - lo)).exp();
        for x in [-ax, ax] {
            let mut s = map.derivative(x).abs().ln();
            let mut y = map.apply(x);
            let mut best = (f64::NEG_INFINITY, 0);
            for step in 1..=eh {
                let v = s - lambda0 * step as f64 / 3.0;
                if v > best.0 {
                    best = (v, step);
                }
                if y.abs() < delta0 {
                    break;
                }
                s += map.derivative(y).abs().ln();
                y = map.apply(y);
            }
            recovery_margin = recovery_margin.min(best.0 + log_c0);
            recovery_times.push((x, best.1));
        }
    }
    let clause_c = clause_b && recovery_margin >= 0.0;

    Ok(ClassMReport {
        constants: ClassMConstants {
            delta0,
            lambda0,
            m0: m_index + 1,
            c0,
            horizon,
        },
        orbit_distance,
        clause_a,
        clause_b,
        clause_c,
        lambda_target_met,
        recovery_margin,
        recovery_times,
        excursion_samples: excursions.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ClassMSettings {
        ClassMSettings {
            outside_samples: 1001,
            inside_samples: 50,
            ..Default::default()
        }
    }

    #[test]
    fn clause_a_at_a2() {
        let m = QuadMap::new(2.0).unwrap();
        let r = check_class_m(&m, 0.4, 100, &quick()).unwrap();
        assert!(r.clause_a);
        assert_eq!(r.orbit_distance, 1.0);
        let r = check_class_m(&m, 0.6, 100, &quick()).unwrap();
        assert!(!r.clause_a);
        match r.into_result() {
            Err(Error::ClassM { clause, .. }) => assert_eq!(clause, 'a'),
            other => panic!("{other:?}"),
        }
        assert!(check_class_m(&m, 0.49, 100, &quick()).unwrap().clause_a);
        assert!(!check_class_m(&m, 0.5, 100, &quick()).unwrap().clause_a);
    }

    // Independent sweep: direct products of |f'| over every grid excursion,
    // no prefix sums, compared with the reported rate.
    #[test]
    fn lambda0_matches_direct_sweep() {
        let m = QuadMap::new(2.0).unwrap();
        let s = quick();
        let r = check_class_m(&m, 0.4, 100, &s).unwrap();
        assert!(r.lambda_target_met);
        assert!(r.constants.lambda0 >= 1.9f64.ln());
        let m0 = r.constants.m0;
        let mut oracle = f64::INFINITY;
        for i in 0..s.outside_samples {
            let x0 = -1.0 + 2.0 * i as f64 / (s.outside_samples - 1) as f64;
            if x0.abs() < 0.4 {
                continue;
            }
            let mut prod = 1.0f64;
            let mut y = x0;
            for n in 1..=s.excursion_horizon {
                prod *= (4.0 * y).abs();
                y = 1.0 - 2.0 * y * y;
                if n >= m0 {
                    oracle = oracle.min(prod.ln() / n as f64);
                }
                if y.abs() < 0.4 {
                    break;
                }
            }
        }
        assert!(
            (oracle - r.constants.lambda0).abs() < 1e-9,
            "{oracle} vs {}",
            r.constants.lambda0
        );
        assert!(r.passed(), "{r:?}");
        assert!(r.constants.c0 > 0.0 && r.constants.c0 <= 1.0);
    }

    #[test]
    fn deterministic() {
        let m = QuadMap::new(1.9).unwrap();
        let a = check_class_m(&m, 0.2, 200, &quick()).unwrap();
        let b = check_class_m(&m, 0.2, 200, &quick()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = QuadMap::new(2.0).unwrap();
        assert!(check_class_m(&m, 0.0, 100, &quick()).is_err());
        assert!(check_class_m(&m, 0.4, 5, &quick()).is_err());
    }
}

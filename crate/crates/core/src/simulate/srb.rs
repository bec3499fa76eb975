use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::QuadMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SrbMode {
    /// 1 / (pi sqrt(1 - x^2)); only valid at a = 2.
    ClosedFormA2,
    /// Long-orbit histogram after a burn-in.
    OrbitHistogram { steps: u64, burn_in: u64, seed: u64 },
}

impl SrbMode {
    pub fn histogram_default(seed: u64) -> Self {
        SrbMode::OrbitHistogram {
            steps: 100_000_000,
            burn_in: 1_000,
            seed,
        }
    }
}

/// Invariant density of the closed map as cell averages over `edges`.
///
/// The closed form is integrated exactly over each cell (arcsine
/// increments), which keeps the boundary cells' singular mass.
pub fn srb_reference(map: &QuadMap, mode: SrbMode, edges: &[f64]) -> Result<Vec<f64>> {
    match mode {
        SrbMode::ClosedFormA2 => {
            if map.a() != 2.0 {
                return Err(Error::config("srb.mode", "closed_form_a2 requires a = 2"));
            }
            Ok(edges
                .windows(2)
                .map(|w| (w[1].asin() - w[0].asin()) / std::f64::consts::PI / (w[1] - w[0]))
                .collect())
        }
        SrbMode::OrbitHistogram {
            steps,
            burn_in,
            seed,
        } => Ok(orbit_histogram(map, edges, steps, burn_in, seed)),
    }
}

fn orbit_histogram(map: &QuadMap, edges: &[f64], steps: u64, burn_in: u64, seed: u64) -> Vec<f64> {
    let nb = edges.len() - 1;
    let chains: u64 = 64;
    let per_chain = steps.div_ceil(chains);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let counts = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = base.clone();
            rng.set_stream(c);
            let mut counts = vec![0u64; nb];
            let mut x: f64 = rng.gen_range(-1.0..1.0);
            for _ in 0..burn_in {
                x = map.apply(x);
            }
            for _ in 0..per_chain {
                x = map.apply(x);
                // binary64 orbits can land on a fixed point; restart from a fresh point
                if x == -1.0 || x == 1.0 || x == map.apply(x) {
                    x = rng.gen_range(-1.0..1.0);
                    for _ in 0..burn_in {
                        x = map.apply(x);
                    }
                }
                let i = edges
                    .partition_point(|&e| e <= x)
                    .saturating_sub(1)
                    .min(nb - 1);
                counts[i] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; nb],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / total as f64 / (edges[i + 1] - edges[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_edges(n: usize) -> Vec<f64> {
        (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
    }

    #[test]
    fn closed_form_normalized() {
        let m = QuadMap::new(2.0).unwrap();
        let e = uniform_edges(1 << 13);
        let d = srb_reference(&m, SrbMode::ClosedFormA2, &e).unwrap();
        let total: f64 = d
            .iter()
            .zip(e.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(srb_reference(&QuadMap::new(1.9).unwrap(), SrbMode::ClosedFormA2, &e).is_err());
    }

    #[test]
    fn histogram_matches_closed_form() {
        let m = QuadMap::new(2.0).unwrap();
        let e = uniform_edges(256);
        let mode = SrbMode::OrbitHistogram {
            steps: 20_000_000,
            burn_in: 1_000,
            seed: 3,
        };
        let h = srb_reference(&m, mode, &e).unwrap();
        let c = srb_reference(&m, SrbMode::ClosedFormA2, &e).unwrap();
        let l1: f64 = h
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b).abs() * 2.0 / 256.0)
            .sum();
        assert!(l1 < 0.05, "{l1}");
        let n = h.len();
        let asym: f64 = (0..n / 2)
            .map(|i| (h[i] - h[n - 1 - i]).abs() * 2.0 / 256.0)
            .sum();
        assert!(asym < 0.02, "{asym}");
    }
}

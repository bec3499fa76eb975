use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_core::{OpenIntervalSet, UnimodalMap};

/// Name recorded in outputs for the per-sample generator.
pub const GENERATOR: &str = "ChaCha8 (seed_from_u64(seed), stream = sample index)";

/// Initial density on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitDensity {
    Uniform,
    /// 1 / (pi sqrt(1 - x^2)), the a = 2 invariant density.
    Arcsine,
    /// Piecewise constant: `weights[i]` is the (unnormalized) density on
    /// `[edges[i], edges[i + 1]]`.
    Piecewise {
        edges: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl InitDensity {
    /// A piecewise-constant bump centred at 0 with support [-1/2, 1/2].
    pub fn center_bump() -> Self {
        let n = 32;
        let edges: Vec<f64> = (0..=n).map(|i| -0.5 + i as f64 / n as f64).collect();
        let weights = (0..n)
            .map(|i| {
                let c = 0.5 * (edges[i] + edges[i + 1]);
                (std::f64::consts::PI * c).cos().powi(2)
            })
            .collect();
        InitDensity::Piecewise { edges, weights }
    }

    pub fn validate(&self) -> Result<()> {
        if let InitDensity::Piecewise { edges, weights } = self {
            if edges.len() != weights.len() + 1 || weights.is_empty() {
                return Err(Error::config(
                    "init.edges",
                    "need one more edge than weights",
                ));
            }
            if edges.windows(2).any(|w| w[0] >= w[1])
                || edges[0] < -1.0
                || edges[edges.len() - 1] > 1.0
            {
                return Err(Error::config("init.edges", "must increase within [-1, 1]"));
            }
            if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().all(|w| *w == 0.0) {
                return Err(Error::config(
                    "init.weights",
                    "must be nonnegative with positive total",
                ));
            }
        }
        Ok(())
    }

    fn sampler(&self) -> Sampler {
        match self {
            InitDensity::Uniform => Sampler::Uniform,
            InitDensity::Arcsine => Sampler::Arcsine,
            InitDensity::Piecewise { edges, weights } => {
                let masses: Vec<f64> = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * (edges[i + 1] - edges[i]))
                    .collect();
                let total: f64 = masses.iter().sum();
                let mut cdf = Vec::with_capacity(masses.len());
                let mut acc = 0.0;
                for m in masses {
                    acc += m / total;
                    cdf.push(acc);
                }
                Sampler::Piecewise {
                    edges: edges.clone(),
                    cdf,
                }
            }
        }
    }
}

enum Sampler {
    Uniform,
    Arcsine,
    Piecewise { edges: Vec<f64>, cdf: Vec<f64> },
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Uniform => rng.gen_range(-1.0..=1.0),
            Sampler::Arcsine => (std::f64::consts::PI * (rng.gen::<f64>() - 0.5)).sin(),
            Sampler::Piecewise { edges, cdf } => {
                let u: f64 = rng.gen();
                let i = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let lo = edges[i];
                lo + rng.gen::<f64>() * (edges[i + 1] - lo)
            }
        }
    }
}

/// Uniform histogram bins on [-1, 1], or any increasing edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    pub edges: Vec<f64>,
}

impl Bins {
    pub fn uniform(n: usize) -> Self {
        Self {
            edges: (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, x: f64) -> usize {
        self.edges
            .partition_point(|&e| e <= x)
            .saturating_sub(1)
            .min(self.len() - 1)
    }
}

/// Survival fractions p_n = survivors(n) / samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub p: Vec<f64>,
    pub survivors: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
    pub n_max: usize,
    /// Set when every sample died before n_max; `p` is then cut after the
    /// first all-dead time.
    pub truncated: bool,
}

/// Normalized survivor histograms at the requested times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivorHistograms {
    pub bins: Bins,
    pub times: Vec<usize>,
    /// `counts[t][b]`: survivors at `times[t]` in bin b.
    pub counts: Vec<Vec<u64>>,
}

impl SurvivorHistograms {
    /// Histogram at `times[t]` as a density normalized over survivors.
    pub fn density(&self, t: usize) -> Vec<f64> {
        let total: u64 = self.counts[t].iter().sum();
        self.counts[t]
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64 / (self.bins.edges[b + 1] - self.bins.edges[b])
                }
            })
            .collect()
    }

    /// Bin masses normalized over survivors.
    pub fn masses(&self, t: usize) -> Vec<f64> {
        let total: u64 = self.counts[t].iter().sum();
        self.counts[t]
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect()
    }
}

pub struct SurvivalRun {
    pub series: SurvivalSeries,
    pub histograms: SurvivorHistograms,
}

/// Parameters of a survival run.
#[derive(Debug, Clone)]
pub struct SurvivalSpec<'a> {
    pub init: &'a InitDensity,
    pub n_max: usize,
    pub samples: u64,
    pub seed: u64,
    pub bins: Bins,
    pub hist_times: Vec<usize>,
}

/// Monte Carlo of the open system: a sample is removed at the first time
/// its orbit lies strictly inside a hole component. Each sample draws from
/// its own ChaCha stream, so results do not depend on thread scheduling.
pub fn survival_mc<M: UnimodalMap>(
    map: &M,
    hole: &OpenIntervalSet,
    spec: &SurvivalSpec,
) -> Result<SurvivalRun> {
    if spec.samples < 10_000 {
        return Err(Error::config("samples", "must be at least 10000"));
    }
    spec.init.validate()?;
    if spec.hist_times.iter().any(|&t| t > spec.n_max) {
        return Err(Error::config("hist_times", "must not exceed n_max"));
    }
    let sampler = spec.init.sampler();
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_max = spec.n_max;
    let nb = spec.bins.len();
    let nh = spec.hist_times.len();
    // slot of each time in the histogram list
    let mut slot = vec![usize::MAX; n_max + 1];
    for (k, &t) in spec.hist_times.iter().enumerate() {
        slot[t] = k;
    }

    const CHUNK: u64 = 4096;
    let n_chunks = spec.samples.div_ceil(CHUNK);
    let (alive, hist) = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut alive = vec![0u64; n_max + 1];
            let mut hist = vec![0u64; nh * nb];
            let start = c * CHUNK;
            let end = (start + CHUNK).min(spec.samples);
            for s in start..end {
                let mut rng = base.clone();
                rng.set_stream(s);
                let mut x = sampler.draw(&mut rng);
                for n in 0..=n_max {
                    if n > 0 {
                        x = map.eval(x);
                    }
                    if hole.contains(x) {
                        break;
                    }
                    alive[n] += 1;
                    if slot[n] != usize::MAX {
                        hist[slot[n] * nb + spec.bins.locate(x)] += 1;
                    }
                }
            }
            (alive, hist)
        })
        .reduce(
            || (vec![0u64; n_max + 1], vec![0u64; nh * nb]),
            |(mut a, mut h), (b, g)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                h.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                (a, h)
            },
        );

    let mut p: Vec<f64> = alive
        .iter()
        .map(|&k| k as f64 / spec.samples as f64)
        .collect();
    let mut survivors = alive;
    let truncated = match survivors.iter().position(|&k| k == 0) {
        Some(i) if i < n_max => {
            p.truncate(i + 1);
            survivors.truncate(i + 1);
            true
        }
        _ => false,
    };
    let counts = (0..nh)
        .map(|k| hist[k * nb..(k + 1) * nb].to_vec())
        .collect();
    Ok(SurvivalRun {
        series: SurvivalSeries {
            p,
            survivors,
            samples: spec.samples,
            seed: spec.seed,
            n_max,
            truncated,
        },
        histograms: SurvivorHistograms {
            bins: spec.bins.clone(),
            times: spec.hist_times.clone(),
            counts,
        },
    })
}

/// Least-squares geometric fit of a survival series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeFit {
    pub lambda: f64,
    pub stderr: f64,
    pub window: (usize, usize),
    pub points: usize,
}

/// Fits log p_n = c + n log(lambda) on the window [start, end] (inclusive),
/// keeping only points with at least `min_count` survivors' worth of mass.
/// With `window = None` the window runs from `skip` to the last usable n.
pub fn escape_rate_fit(
    series: &SurvivalSeries,
    window: Option<(usize, usize)>,
    skip: usize,
) -> Result<EscapeFit> {
    let floor = 100.0 / series.samples as f64;
    let (start, end) = window.unwrap_or((skip, series.p.len().saturating_sub(1)));
    let pts: Vec<(f64, f64)> = (start..=end.min(series.p.len().saturating_sub(1)))
        .filter(|&n| series.p[n] >= floor && series.p[n] > 0.0)
        .map(|n| (n as f64, series.p[n].ln()))
        .collect();
    if pts.len() < 5 {
        let usable = (0..series.p.len())
            .filter(|&n| series.p[n] >= floor)
            .count();
        return Err(Error::InsufficientData(format!(
            "need 5 points with p_n >= {floor:e} in window [{start}, {end}]; found {} ({} usable in the whole series)",
            pts.len(),
            usable
        )));
    }
    let fit = crate::stats::linear_fit(&pts);
    Ok(EscapeFit {
        lambda: fit.slope.exp(),
        stderr: fit.slope.exp() * fit.slope_stderr,
        window: (start, end),
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_core::QuadMap;

    fn spec(init: &InitDensity, n_max: usize, samples: u64) -> SurvivalSpec<'_> {
        SurvivalSpec {
            init,
            n_max,
            samples,
            seed: 7,
            bins: Bins::uniform(16),
            hist_times: vec![0, n_max],
        }
    }

    #[test]
    fn closed_system_survives() {
        let m = QuadMap::new(2.0).unwrap();
        let run = survival_mc(
            &m,
            &OpenIntervalSet::empty(),
            &spec(&InitDensity::Uniform, 20, 10_000),
        )
        .unwrap();
        assert!(run.series.p.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn full_range_hole_kills_at_step_one() {
        let m = QuadMap::new(1.5).unwrap();
        // (1 - a, 1) plus a margin, so f(x) is always inside
        let h = OpenIntervalSet::single(-0.6, 1.0).unwrap();
        let run = survival_mc(&m, &h, &spec(&InitDensity::Uniform, 5, 10_000)).unwrap();
        assert!(run.series.truncated);
        assert!(run.series.p.iter().skip(2).all(|&p| p == 0.0));
        assert_eq!(*run.series.p.last().unwrap(), 0.0);
    }

    #[test]
    fn bitwise_reproducible_across_thread_counts() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::single(0.28, 0.3).unwrap();
        let s = spec(&InitDensity::Uniform, 30, 20_000);
        let a = survival_mc(&m, &h, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| survival_mc(&m, &h, &s).unwrap());
        assert_eq!(a.series.survivors, b.series.survivors);
        assert_eq!(a.histograms.counts, b.histograms.counts);
    }

    #[test]
    fn kill_rule_matches_scalar_reference() {
        let m = QuadMap::new(2.0).unwrap();
        let h = OpenIntervalSet::new(vec![(0.28, 0.3), (-0.6, -0.55)]).unwrap();
        let s = SurvivalSpec {
            init: &InitDensity::Uniform,
            n_max: 25,
            samples: 10_000,
            seed: 99,
            bins: Bins::uniform(4),
            hist_times: vec![],
        };
        let run = survival_mc(&m, &h, &s).unwrap();
        // scalar reference over the first 1000 samples, counted the slow way
        let base = ChaCha8Rng::seed_from_u64(99);
        let mut alive_ref = vec![0u64; 26];
        for i in 0..10_000u64 {
            let mut rng = base.clone();
            rng.set_stream(i);
            let mut x: f64 = rng.gen_range(-1.0..=1.0);
            let mut dead = false;
            for n in 0..=25 {
                if n > 0 {
                    x = 1.0 - 2.0 * x * x;
                }
                let inside = h.components().iter().any(|&(l, r)| l < x && x < r);
                dead |= inside;
                if !dead {
                    alive_ref[n] += 1;
                }
            }
        }
        assert_eq!(run.series.survivors, alive_ref);
    }

    #[test]
    fn fit_exact_geometric() {
        let p: Vec<f64> = (0..40).map(|n| 0.9f64.powi(n)).collect();
        let s = SurvivalSeries {
            survivors: vec![],
            p,
            samples: 1_000_000,
            seed: 0,
            n_max: 39,
            truncated: false,
        };
        let f = escape_rate_fit(&s, None, 0).unwrap();
        assert!((f.lambda - 0.9).abs() < 1e-12);
        let s = SurvivalSeries {
            survivors: vec![],
            p: vec![0.5; 10],
            samples: 1_000_000,
            seed: 0,
            n_max: 9,
            truncated: false,
        };
        assert!((escape_rate_fit(&s, None, 0).unwrap().lambda - 1.0).abs() < 1e-14);
        let s = SurvivalSeries {
            survivors: vec![],
            p: vec![1.0, 1e-9, 0.0],
            samples: 1_000_000,
            seed: 0,
            n_max: 2,
            truncated: true,
        };
        assert!(matches!(
            escape_rate_fit(&s, None, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rejects_small_sample_counts() {
        let m = QuadMap::new(2.0).unwrap();
        let r = survival_mc(
            &m,
            &OpenIntervalSet::empty(),
            &spec(&InitDensity::Uniform, 5, 10),
        );
        assert!(matches!(r, Err(Error::Config { ref field, .. }) if field == "samples"));
    }
}

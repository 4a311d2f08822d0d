//! Ensemble accumulation and small statistics helpers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::qubit::Bloch;

/// Trajectories per work unit. Partitioning is fixed so that the merge
/// order, and therefore every output bit, is independent of worker count.
pub const CHUNK: usize = 256;

/// Running sums of Bloch components on a fixed time grid.
#[derive(Debug, Clone)]
pub struct BlochAccumulator {
    n: u64,
    sum: Vec<[f64; 3]>,
    sum_sq: Vec<[f64; 3]>,
}

impl BlochAccumulator {
    pub fn new(points: usize) -> Self {
        BlochAccumulator {
            n: 0,
            sum: vec![[0.0; 3]; points],
            sum_sq: vec![[0.0; 3]; points],
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, samples: &[Bloch]) {
        debug_assert_eq!(samples.len(), self.sum.len());
        for ((s, q), b) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(samples) {
            let v = [b.x, b.y, b.z];
            for k in 0..3 {
                s[k] += v[k];
                q[k] += v[k] * v[k];
            }
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &BlochAccumulator) {
        assert_eq!(self.sum.len(), other.sum.len());
        for i in 0..self.sum.len() {
            for k in 0..3 {
                self.sum[i][k] += other.sum[i][k];
                self.sum_sq[i][k] += other.sum_sq[i][k];
            }
        }
        self.n += other.n;
    }

    pub fn finish(&self, times: Vec<f64>, master_seed: u64) -> EnsembleResult {
        assert_eq!(times.len(), self.sum.len());
        let n = self.n.max(1) as f64;
        let mut mean = [Vec::new(), Vec::new(), Vec::new()];
        let mut stderr = [Vec::new(), Vec::new(), Vec::new()];
        for (s, q) in self.sum.iter().zip(&self.sum_sq) {
            for k in 0..3 {
                let m = s[k] / n;
                let var = if self.n > 1 {
                    ((q[k] - n * m * m) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                mean[k].push(m);
                stderr[k].push((var / n).sqrt());
            }
        }
        let [x, y, z] = mean;
        let [x_err, y_err, z_err] = stderr;
        let p1 = z.iter().map(|z| (0.5 * (1.0 + z)).clamp(0.0, 1.0)).collect();
        EnsembleResult {
            times,
            x,
            y,
            z,
            x_err,
            y_err,
            z_err,
            p1,
            trajectories: self.n,
            master_seed,
        }
    }
}

/// Nonselective estimate from averaging selective trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x_err: Vec<f64>,
    pub y_err: Vec<f64>,
    pub z_err: Vec<f64>,
    pub p1: Vec<f64>,
    pub trajectories: u64,
    pub master_seed: u64,
}

impl EnsembleResult {
    pub fn z_series(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.z.iter().copied()).collect()
    }
}

/// Average `m` trajectories on a shared grid of `points` samples. `sample`
/// gets the trajectory index and must fill exactly `points` Bloch vectors.
pub fn run_ensemble<F>(m: usize, points: usize, sample: F) -> BlochAccumulator
where
    F: Fn(u64) -> Vec<Bloch> + Sync,
{
    let chunks = m.div_ceil(CHUNK);
    let partial: Vec<BlochAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = BlochAccumulator::new(points);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(m);
            for i in lo..hi {
                acc.push(&sample(i as u64));
            }
            acc
        })
        .collect();
    let mut total = BlochAccumulator::new(points);
    for acc in &partial {
        total.merge(acc);
    }
    total
}

/// Run `f` on a pool with the requested worker count (or rayon's default).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let pool = match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new().num_threads(n).build().ok(),
        _ => None,
    };
    match pool {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at alpha = 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

pub fn normal_cdf(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
    let d = statrs::distribution::Normal::new(mean, sd).expect("valid normal");
    move |x| d.cdf(x)
}

//! Telegraph (jump) statistics of selective trajectories via a two-threshold
//! hysteresis detector on `z`.

use serde::{Deserialize, Serialize};

use super::{RateEstimate, RateMethod};
use crate::error::{Error, Result};
use crate::trajectory::TrajectoryRecord;

pub const DEFAULT_HI: f64 = 0.8;
pub const DEFAULT_LO: f64 = -0.8;

/// Transition counts and dwell times; sums over trajectories merge exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpCounts {
    /// Transitions from the `|1>` level to the `|0>` level.
    pub down: u64,
    pub up: u64,
    pub time_high: f64,
    pub time_low: f64,
}

impl JumpCounts {
    pub fn merge(&mut self, other: &JumpCounts) {
        self.down += other.down;
        self.up += other.up;
        self.time_high += other.time_high;
        self.time_low += other.time_low;
    }

    pub fn total(&self) -> u64 {
        self.down + self.up
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEstimate {
    /// Combined rate: all transitions over all classified time.
    pub rate: RateEstimate,
    /// Rate out of the `|1>` level, if any time was spent there.
    pub rate_down: Option<f64>,
    pub rate_up: Option<f64>,
    /// Set when one of the levels was never occupied, so only one direction
    /// contributes.
    pub one_sided: bool,
    pub counts: JumpCounts,
}

fn check_thresholds(hi: f64, lo: f64) -> Result<()> {
    if !(-1.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::invalid(format!(
            "thresholds must satisfy -1 < lo < hi < 1, got lo = {lo}, hi = {hi}"
        )));
    }
    Ok(())
}

/// Classify a `(t, z)` series. Time before the first threshold crossing is
/// not assigned to either level.
pub fn count_jumps(times: &[f64], z: &[f64], hi: f64, lo: f64) -> Result<JumpCounts> {
    check_thresholds(hi, lo)?;
    if times.len() != z.len() {
        return Err(Error::invalid("times and values differ in length"));
    }
    let mut c = JumpCounts::default();
    let mut level: Option<bool> = None;
    for i in 0..z.len() {
        let v = z[i];
        match level {
            None if v >= hi => level = Some(true),
            None if v <= lo => level = Some(false),
            Some(true) if v <= lo => {
                c.down += 1;
                level = Some(false);
            }
            Some(false) if v >= hi => {
                c.up += 1;
                level = Some(true);
            }
            _ => {}
        }
        if let (Some(l), Some(&t_next)) = (level, times.get(i + 1)) {
            let dt = t_next - times[i];
            if l {
                c.time_high += dt;
            } else {
                c.time_low += dt;
            }
        }
    }
    Ok(c)
}

pub fn trajectory_jump_counts(traj: &TrajectoryRecord, hi: f64, lo: f64) -> Result<JumpCounts> {
    traj.validate()?;
    let z: Vec<f64> = traj.states.iter().map(|b| b.z).collect();
    count_jumps(&traj.times, &z, hi, lo)
}

/// Rate estimate from accumulated counts with Poisson standard error.
pub fn jump_rate_from_counts(c: &JumpCounts, window: (f64, f64)) -> JumpEstimate {
    let time = c.time_high + c.time_low;
    let n = c.total() as f64;
    let (value, stderr) = if time > 0.0 {
        (n / time, n.sqrt() / time)
    } else {
        (0.0, 0.0)
    };
    let per = |k: u64, t: f64| (t > 0.0).then(|| k as f64 / t);
    JumpEstimate {
        rate: RateEstimate {
            value,
            stderr,
            method: RateMethod::DwellTime,
            fit_window: window,
        },
        rate_down: per(c.down, c.time_high),
        rate_up: per(c.up, c.time_low),
        one_sided: c.time_high == 0.0 || c.time_low == 0.0,
        counts: *c,
    }
}

pub fn estimate_jump_rate(traj: &TrajectoryRecord, hi: f64, lo: f64) -> Result<JumpEstimate> {
    let c = trajectory_jump_counts(traj, hi, lo)?;
    let window = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    Ok(jump_rate_from_counts(&c, window))
}

/// Pooled estimate over many trajectories.
pub fn estimate_jump_rate_pooled(trajs: &[TrajectoryRecord], hi: f64, lo: f64) -> Result<JumpEstimate> {
    let mut total = JumpCounts::default();
    let mut window = (f64::INFINITY, f64::NEG_INFINITY);
    for t in trajs {
        total.merge(&trajectory_jump_counts(t, hi, lo)?);
        if let (Some(&a), Some(&b)) = (t.times.first(), t.times.last()) {
            window = (window.0.min(a), window.1.max(b));
        }
    }
    if trajs.is_empty() {
        window = (0.0, 0.0);
    }
    Ok(jump_rate_from_counts(&total, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsed::{simulate_pulsed_trajectory, PulsedConfig};
    use crate::qubit::{Bloch, ModelParams, QubitState};
    use crate::rng::{rng_from_seed, stream_seed};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::Exp;

    fn record(times: Vec<f64>, z: Vec<f64>) -> TrajectoryRecord {
        TrajectoryRecord {
            readouts: vec![0.0; times.len()],
            states: z.iter().map(|&z| Bloch::new(0.0, 0.0, z)).collect(),
            times,
            seed: 0,
            path: Vec::new(),
        }
    }

    /// Telegraph signal sampled every `dt` with the given dwell times,
    /// alternating from the high level.
    fn telegraph(dwells: &[f64], dt: f64) -> TrajectoryRecord {
        let total: f64 = dwells.iter().sum();
        let n = (total / dt) as usize;
        let mut edges = Vec::new();
        let mut acc = 0.0;
        for d in dwells {
            acc += d;
            edges.push(acc);
        }
        let mut k = 0;
        let (mut times, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let t = i as f64 * dt;
            while k < edges.len() && t >= edges[k] {
                k += 1;
            }
            times.push(t);
            z.push(if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        record(times, z)
    }

    #[test]
    fn constant_trajectory_has_no_jumps() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let e = estimate_jump_rate(&record(t, vec![1.0; 100]), DEFAULT_HI, DEFAULT_LO).unwrap();
        assert_eq!(e.rate.value, 0.0);
        assert!(e.one_sided);
        assert_eq!(e.rate_up, None);
    }

    #[test]
    fn hysteresis_ignores_small_excursions() {
        let z = vec![1.0, 0.5, -0.5, 0.9, -0.9, -0.2, 0.3, 0.85, 1.0];
        let t: Vec<f64> = (0..z.len()).map(|i| i as f64).collect();
        let c = count_jumps(&t, &z, 0.8, -0.8).unwrap();
        assert_eq!((c.down, c.up), (1, 1));
        assert_eq!(c.time_high, 4.0 + 1.0);
        assert_eq!(c.time_low, 3.0);
        assert!(count_jumps(&t, &z, -0.5, 0.5).is_err());
    }

    #[test]
    fn stratified_telegraph_recovers_rate() {
        // exponential quantiles in shuffled order: a sample with the exact
        // mean dwell 1/rate but no Poisson scatter in the count
        let rate = 0.05;
        let n = 100;
        let mut dwells: Vec<f64> = (0..n)
            .map(|k| -(1.0 - (k as f64 + 0.5) / n as f64).ln() / rate)
            .collect();
        dwells.shuffle(&mut rng_from_seed(3));
        let scale = 2000.0 / dwells.iter().sum::<f64>();
        dwells.iter_mut().for_each(|d| *d *= scale);
        let traj = telegraph(&dwells, 0.01);
        let est = estimate_jump_rate(&traj, DEFAULT_HI, DEFAULT_LO).unwrap();
        // the final dwell runs past the end of the record
        let want = (n - 1) as f64 / 2000.0;
        assert!((est.rate.value - want).abs() / want < 1e-3);
        assert!((est.rate.value - rate).abs() / rate < 0.1, "{}", est.rate.value);
    }

    #[test]
    fn random_telegraph_within_poisson_error() {
        let rate = 0.05;
        let mut rng = rng_from_seed(10);
        let exp = Exp::new(rate).unwrap();
        let mut dwells = Vec::new();
        let mut total = 0.0;
        while total < 2000.0 {
            let d: f64 = rng.sample(exp);
            dwells.push(d);
            total += d;
        }
        let est = estimate_jump_rate(&telegraph(&dwells, 0.05), DEFAULT_HI, DEFAULT_LO).unwrap();
        assert!((est.rate.value - rate).abs() < 3.0 * est.rate.stderr, "{est:?}");
        assert!(!est.one_sided);
    }

    #[test]
    fn pulsed_jump_rate_matches_asymptote() {
        let p = ModelParams::new(1.0, 0.0, 5.0).unwrap();
        let trajs: Vec<TrajectoryRecord> = (0..500)
            .map(|i| {
                let cfg = PulsedConfig {
                    substeps: 0,
                    ..PulsedConfig::new(p, 1000, stream_seed(2, i)).unwrap()
                };
                simulate_pulsed_trajectory(&cfg, &QubitState::one()).unwrap()
            })
            .collect();
        let est = estimate_jump_rate_pooled(&trajs, DEFAULT_HI, DEFAULT_LO).unwrap();
        assert!((est.rate.value - 0.05).abs() / 0.05 < 0.1, "{est:?}");
        let (d, u) = (est.rate_down.unwrap(), est.rate_up.unwrap());
        assert!((d - u).abs() < 4.0 * (est.rate.stderr * 2f64.sqrt()).max(0.005));
    }
}

//! Pulsed projective measurements of sigma_z every `dt = 1/gamma`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{unitary_propagator, Bloch, ModelParams, QubitState, Unitary};
use crate::rng::{rng_from_seed, stream_seed, TrajectoryRng};
use crate::stats::{run_ensemble, EnsembleResult};
use crate::trajectory::{PathPoint, TrajectoryRecord};

/// Smallest Born probability for which [`project`] will collapse.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-15;

pub const DEFAULT_SUBSTEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsedConfig {
    pub params: ModelParams,
    pub dt_pulse: f64,
    pub n_pulses: usize,
    pub rng_seed: u64,
    /// Interpolation points per interval in the trajectory path; 0 disables.
    pub substeps: usize,
}

impl PulsedConfig {
    pub fn new(params: ModelParams, n_pulses: usize, rng_seed: u64) -> Result<Self> {
        if !(params.gamma > 0.0) {
            return Err(Error::invalid("pulsed measurements need gamma > 0"));
        }
        let c = PulsedConfig {
            params,
            dt_pulse: 1.0 / params.gamma,
            n_pulses,
            rng_seed,
            substeps: DEFAULT_SUBSTEPS,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.params.gamma > 0.0) {
            return Err(Error::invalid("pulsed measurements need gamma > 0"));
        }
        let expect = 1.0 / self.params.gamma;
        if !((self.dt_pulse - expect).abs() <= 1e-12 * expect) {
            return Err(Error::ContractViolation(format!(
                "dt_pulse = {} but 1/gamma = {expect}",
                self.dt_pulse
            )));
        }
        Ok(())
    }
}

/// Collapse onto `|outcome>`, returning the post-measurement state and the
/// Born probability of that outcome.
pub fn project(state: &QubitState, outcome: u8) -> Result<(QubitState, f64)> {
    if outcome > 1 {
        return Err(Error::invalid(format!("outcome must be 0 or 1, got {outcome}")));
    }
    state.validate()?;
    let p = if outcome == 1 { state.p1() } else { state.p0() }.clamp(0.0, 1.0);
    if p < MIN_OUTCOME_PROBABILITY {
        return Err(Error::ZeroProbabilityOutcome {
            outcome,
            probability: p,
        });
    }
    Ok((QubitState::eigenstate(outcome), p))
}

/// Flip probability per interval, `sin^2(omega/2gamma) sin^2(theta)`.
pub fn jump_probability(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.gamma == 0.0 {
        return Err(Error::invalid("jump probability undefined for gamma = 0"));
    }
    let s = (0.5 * params.omega() / params.gamma).sin();
    let st = params.sin_theta();
    Ok(s * s * st * st)
}

/// `(P_stay, P_flip)` for one interval; they sum to one by construction.
pub fn stay_flip_probabilities(params: &ModelParams) -> Result<(f64, f64)> {
    let flip = jump_probability(params)?;
    Ok((1.0 - flip, flip))
}

/// Split a time into completed pulses and the time since the last one.
/// Times within 1e-9 of a pulse count the pulse as having happened.
pub fn pulse_index(t: f64, dt_pulse: f64) -> (u64, f64) {
    let n = (t / dt_pulse + 1e-9).floor().max(0.0);
    let since = (t - n * dt_pulse).max(0.0);
    (n as u64, since)
}

/// Ensemble-averaged z after `n` pulses plus `since` of free evolution,
/// starting from `|1>`.
pub fn analytic_z_pulsed(params: &ModelParams, n: u64, since: f64) -> Result<f64> {
    let pj = jump_probability(params)?;
    let dt = 1.0 / params.gamma;
    if !(since >= 0.0 && since < dt) {
        return Err(Error::invalid(format!(
            "time since last pulse must lie in [0, {dt}), got {since}"
        )));
    }
    let base = 1.0 - 2.0 * pj;
    let decay = if n <= i32::MAX as u64 {
        base.powi(n as i32)
    } else {
        base.powf(n as f64)
    };
    let s = (0.5 * params.omega() * since).sin();
    let st = params.sin_theta();
    Ok(decay * (1.0 - 2.0 * s * s * st * st))
}

/// [`analytic_z_pulsed`] at absolute time `t` (first pulse at `t = 1/gamma`).
pub fn analytic_z_pulsed_at(params: &ModelParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("time must be >= 0, got {t}")));
    }
    if params.gamma == 0.0 {
        return Err(Error::invalid("pulsed solution needs gamma > 0"));
    }
    let dt = 1.0 / params.gamma;
    let (n, since) = pulse_index(t, dt);
    analytic_z_pulsed(params, n, since.min(dt * (1.0 - f64::EPSILON)))
}

/// Decay rate of the pulsed envelope, `gamma ln[1/(1 - 2 P_jump)]`.
pub fn gamma_mix_pulsed(params: &ModelParams) -> Result<f64> {
    let pj = jump_probability(params)?;
    // P = 1/2 up to rounding is the boundary itself
    if pj >= 0.5 - 1e-12 {
        return Err(Error::OutOfRegime(format!(
            "P_jump = {pj} >= 1/2: the pulsed envelope alternates sign and has no decay rate"
        )));
    }
    Ok(-params.gamma * (-2.0 * pj).ln_1p())
}

/// Probability of a binary record from `|1>` on resonance. Flips are counted
/// against the previous outcome, with the outcome before the first pulse
/// taken to be 1.
pub fn record_probability(config: &PulsedConfig, record: &[u8]) -> Result<f64> {
    config.validate()?;
    if config.params.delta != 0.0 {
        return Err(Error::invalid("record_probability closed form requires delta = 0"));
    }
    if let Some(bad) = record.iter().find(|&&r| r > 1) {
        return Err(Error::invalid(format!("record entries must be 0 or 1, got {bad}")));
    }
    let (stay, flip) = stay_flip_probabilities(&config.params)?;
    let mut prev = 1u8;
    let mut flips = 0i32;
    for &r in record {
        if r != prev {
            flips += 1;
        }
        prev = r;
    }
    let n = record.len() as i32;
    Ok(stay.powi(n - flips) * flip.powi(flips))
}

/// A single pulsed trajectory advanced one interval at a time.
pub struct PulsedStepper {
    params: ModelParams,
    u_pulse: Unitary,
    state: QubitState,
    pulses: u64,
    rng: TrajectoryRng,
}

impl PulsedStepper {
    pub fn new(params: &ModelParams, initial: QubitState, seed: u64) -> Result<Self> {
        if !initial.is_pure_form() {
            return Err(Error::invalid("pulsed trajectories need a pure initial state"));
        }
        initial.validate()?;
        if !(params.gamma > 0.0) {
            return Err(Error::invalid("pulsed measurements need gamma > 0"));
        }
        Ok(PulsedStepper {
            params: *params,
            u_pulse: unitary_propagator(params, 1.0 / params.gamma)?,
            state: initial,
            pulses: 0,
            rng: rng_from_seed(seed),
        })
    }

    pub fn pulses(&self) -> u64 {
        self.pulses
    }

    pub fn state(&self) -> &QubitState {
        &self.state
    }

    /// Evolve for one interval, then measure. Returns the readout.
    pub fn pulse(&mut self) -> u8 {
        let mut pre = self.u_pulse.apply(&self.state);
        pre.renormalize();
        let u: f64 = self.rng.random();
        let r = u8::from(u < pre.p1());
        self.state = QubitState::eigenstate(r);
        self.pulses += 1;
        r
    }

    /// State a time `since` after the last pulse, without measuring.
    pub fn state_after(&self, since: f64) -> Result<QubitState> {
        Ok(unitary_propagator(&self.params, since)?.apply(&self.state))
    }
}

pub fn simulate_pulsed_trajectory(config: &PulsedConfig, initial: &QubitState) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut stepper = PulsedStepper::new(&config.params, *initial, config.rng_seed)?;
    let n = config.n_pulses;
    let dt = config.dt_pulse;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        readouts: Vec::with_capacity(n),
        seed: config.rng_seed,
        path: Vec::new(),
    };
    let sub: Vec<Unitary> = (0..config.substeps)
        .map(|k| unitary_propagator(&config.params, dt * k as f64 / config.substeps as f64))
        .collect::<Result<_>>()?;
    for i in 0..n {
        let t0 = i as f64 * dt;
        for (k, u) in sub.iter().enumerate() {
            rec.path.push(PathPoint {
                t: t0 + dt * k as f64 / config.substeps as f64,
                bloch: u.apply(stepper.state()).bloch(),
            });
        }
        let r = stepper.pulse();
        rec.times.push((i + 1) as f64 * dt);
        rec.states.push(stepper.state().bloch());
        rec.readouts.push(r as f64);
    }
    if config.substeps > 0 {
        rec.path.push(PathPoint {
            t: n as f64 * dt,
            bloch: stepper.state().bloch(),
        });
    }
    Ok(rec)
}

/// Bloch vector of one pulsed trajectory sampled on an increasing grid.
pub fn sample_pulsed_trajectory(
    params: &ModelParams,
    initial: &QubitState,
    times: &[f64],
    seed: u64,
) -> Result<Vec<Bloch>> {
    let mut stepper = PulsedStepper::new(params, *initial, seed)?;
    let dt = 1.0 / params.gamma;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let (n, since) = pulse_index(t, dt);
        while stepper.pulses() < n {
            stepper.pulse();
        }
        out.push(stepper.state_after(since)?.bloch());
    }
    Ok(out)
}

/// Average of `m` pulsed trajectories; trajectory `i` uses
/// `stream_seed(master_seed, i)`.
pub fn pulsed_ensemble(
    params: &ModelParams,
    initial: &QubitState,
    times: &[f64],
    m: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    check_grid(times)?;
    if m == 0 {
        return Err(Error::invalid("ensemble size must be >= 1"));
    }
    // surface configuration errors before fanning out
    PulsedStepper::new(params, *initial, 0)?;
    let acc = run_ensemble(m, times.len(), |i| {
        sample_pulsed_trajectory(params, initial, times, stream_seed(master_seed, i)).expect("validated above")
    });
    Ok(acc.finish(times.to_vec(), master_seed))
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("time grid must be finite and >= 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

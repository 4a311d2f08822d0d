//! Continuous weak measurement of sigma_z: Gaussian readouts, the quantum
//! Bayes update, and diffusive trajectories.
//!
//! Readouts are calibrated so the eigenstate means are `+1` (for `|1>`) and
//! `-1` (for `|0>`), with per-step variance `1/(4 gamma dt)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{unitary_propagator, Bloch, Ket, Mat2, ModelParams, QubitState, Unitary, C64};
use crate::rng::{rng_from_seed, stream_seed, TrajectoryRng};
use crate::stats::{run_ensemble, EnsembleResult};
use crate::trajectory::TrajectoryRecord;

/// Upper bound on `dt * omega` and `dt * gamma`.
pub const MAX_STEP_PHASE: f64 = 0.05;
pub const MAX_STEPS: u64 = 1_000_000_000;
/// Readout normalization below which the Bayes update is refused.
pub const MIN_READOUT_DENSITY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousConfig {
    pub params: ModelParams,
    pub dt_step: f64,
    pub t_final: f64,
    pub rng_seed: u64,
    pub record_filter_tau: Option<f64>,
}

/// `min(0.05/omega, 0.05/gamma)`, ignoring whichever rate is zero.
pub fn default_dt(params: &ModelParams) -> f64 {
    let fastest = params.omega().max(params.gamma);
    if fastest > 0.0 {
        MAX_STEP_PHASE / fastest
    } else {
        MAX_STEP_PHASE
    }
}

impl ContinuousConfig {
    pub fn new(params: ModelParams, t_final: f64, rng_seed: u64) -> Result<Self> {
        let c = ContinuousConfig {
            params,
            dt_step: default_dt(&params),
            t_final,
            rng_seed,
            record_filter_tau: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        check_step(&self.params, self.dt_step)?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::invalid(format!(
                "t_final must be finite and >= 0, got {}",
                self.t_final
            )));
        }
        if let Some(tau) = self.record_filter_tau {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::invalid(format!("filter time constant must be > 0, got {tau}")));
            }
        }
        self.n_steps()?;
        Ok(())
    }

    pub fn n_steps(&self) -> Result<u64> {
        step_count(self.t_final, self.dt_step)
    }
}

pub(crate) fn check_step(params: &ModelParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be finite and > 0, got {dt}")));
    }
    if !(params.gamma > 0.0) {
        return Err(Error::invalid("continuous measurement needs gamma > 0"));
    }
    let limit = default_dt(params);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            reason: format!(
                "dt*omega = {:.3e}, dt*gamma = {:.3e}; both must be <= {MAX_STEP_PHASE}",
                dt * params.omega(),
                dt * params.gamma
            ),
            suggested: limit,
        });
    }
    Ok(())
}

pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<u64> {
    let n = (t_final / dt - 1e-9).ceil().max(0.0);
    if !(n <= MAX_STEPS as f64) {
        return Err(Error::Configuration(format!(
            "{n:.3e} steps exceeds the limit of {MAX_STEPS}"
        )));
    }
    Ok(n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSample {
    pub value: f64,
    pub step: u64,
}

fn check_strength(gamma: f64, dt: f64) -> Result<f64> {
    let k = 2.0 * gamma * dt;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid(format!("gamma*dt must be > 0, got {}", gamma * dt)));
    }
    Ok(k)
}

/// Readout density `P(r | lambda)` for eigenvalue mean `mu`.
pub fn readout_likelihood(r: f64, mu: f64, gamma: f64, dt: f64) -> Result<f64> {
    let k = check_strength(gamma, dt)?;
    Ok((k / std::f64::consts::PI).sqrt() * (-k * (r - mu) * (r - mu)).exp())
}

/// Kraus operator `diag(sqrt P(r|1), sqrt P(r|0))` for readout `r`.
pub fn gaussian_kraus(r: f64, gamma: f64, dt: f64) -> Result<Mat2> {
    let a = readout_likelihood(r, 1.0, gamma, dt)?.sqrt();
    let b = readout_likelihood(r, -1.0, gamma, dt)?.sqrt();
    Ok(Mat2::new(C64::from(a), C64::from(0.0), C64::from(0.0), C64::from(b)))
}

/// Draw a readout: pick an eigenvalue branch with Born weights, then add
/// Gaussian noise of variance `1/(4 gamma dt)`.
/// Trapezoid quadrature of `M_r^dagger M_r` over the readout axis, over
/// +-12 standard deviations beyond the outcome means. Returns the two
/// diagonal entries and the summed magnitude of the off-diagonal one.
pub fn povm_completeness(gamma: f64, dt: f64) -> Result<(f64, f64, f64)> {
    let sd = (1.0 / (4.0 * gamma * dt)).sqrt();
    let (lo, hi) = (-1.0 - 12.0 * sd, 1.0 + 12.0 * sd);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let (mut a, mut b, mut off) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        let m = gaussian_kraus(lo + i as f64 * h, gamma, dt)?;
        let e = m.adjoint() * m;
        a += w * e[(0, 0)].re;
        b += w * e[(1, 1)].re;
        off += w * e[(0, 1)].norm();
    }
    Ok((a, b, off))
}

pub fn sample_readout(
    state: &QubitState,
    gamma: f64,
    dt: f64,
    step: u64,
    rng: &mut TrajectoryRng,
) -> Result<ReadoutSample> {
    let k = check_strength(gamma, dt)?;
    let u: f64 = rng.random();
    let mu = if u < state.p1() { 1.0 } else { -1.0 };
    let n: f64 = rng.sample(StandardNormal);
    Ok(ReadoutSample {
        value: mu + n / (2.0 * k).sqrt(),
        step,
    })
}

/// Apply `M_r` and renormalize. Works in log space so that large readouts
/// do not overflow the amplitudes.
pub fn bayesian_update(state: &QubitState, r: &ReadoutSample, gamma: f64, dt: f64) -> Result<QubitState> {
    let k = check_strength(gamma, dt)?;
    let QubitState::Pure(psi) = state else {
        return Err(Error::invalid("bayesian_update needs a pure state"));
    };
    let r = r.value;
    if !r.is_finite() {
        return Err(Error::invalid(format!("readout must be finite, got {r}")));
    }
    // log sqrt P(r|lambda) without the common prefactor
    let l1 = -0.5 * k * (r - 1.0) * (r - 1.0);
    let l0 = -0.5 * k * (r + 1.0) * (r + 1.0);
    let (p1, p0) = (psi[0].norm_sqr(), psi[1].norm_sqr());
    let density = (k / std::f64::consts::PI).sqrt() * (p1 * (2.0 * l1).exp() + p0 * (2.0 * l0).exp());
    if !(density > MIN_READOUT_DENSITY) {
        return Err(Error::NumericalUnderflow(format!(
            "readout density P(r = {r}) = {density:e}; reduce gamma*dt (now {:e})",
            gamma * dt
        )));
    }
    let m = l1.max(l0);
    let out = Ket::new(psi[0] * (l1 - m).exp(), psi[1] * (l0 - m).exp());
    let mut s = QubitState::Pure(out);
    s.renormalize();
    Ok(s)
}

/// One Euler-Maruyama step of the linear stochastic Schrodinger equation
/// `d psi = (H/i - gamma/2) psi dt + sqrt(gamma) sigma_z psi dY`, then
/// renormalization.
///
/// `dw` is the innovation, `Normal(0, dt)`. The equation is linear only in
/// the measurement record `dY = dW + 2 sqrt(gamma) <sigma_z> dt`, which is
/// formed here from the current state.
pub fn sse_step_euler(state: &QubitState, dw: f64, params: &ModelParams, dt: f64) -> Result<QubitState> {
    let QubitState::Pure(psi) = state else {
        return Err(Error::invalid("sse_step_euler needs a pure state"));
    };
    if !(dw.is_finite() && dt.is_finite() && dt >= 0.0) {
        return Err(Error::invalid("dW and dt must be finite, dt >= 0"));
    }
    let g = params.gamma;
    let z = psi[0].norm_sqr() - psi[1].norm_sqr();
    let dy = dw + 2.0 * g.sqrt() * z * dt;
    let h = params.hamiltonian();
    let drift = h * psi * C64::new(0.0, -dt) - psi * C64::from(0.5 * g * dt);
    let kick = Ket::new(psi[0], -psi[1]) * C64::from(g.sqrt() * dy);
    let mut s = QubitState::Pure(psi + drift + kick);
    s.renormalize();
    Ok(s)
}

/// Single-pole exponential moving average, `alpha = 1 - exp(-dt/tau)`,
/// seeded with the first readout. Display only.
pub fn filter_readouts(raw: &[f64], dt: f64, tau: f64) -> Vec<f64> {
    let alpha = -(-dt / tau).exp_m1();
    let mut y = match raw.first() {
        Some(&r) => r,
        None => return Vec::new(),
    };
    raw.iter()
        .map(|&r| {
            y += alpha * (r - y);
            y
        })
        .collect()
}

/// Diffusive trajectory stepped by propagate, read out, update.
pub struct ContinuousStepper {
    gamma: f64,
    dt: f64,
    u_step: Unitary,
    state: QubitState,
    step: u64,
    rng: TrajectoryRng,
}

impl ContinuousStepper {
    pub fn new(params: &ModelParams, dt: f64, initial: QubitState, seed: u64) -> Result<Self> {
        check_step(params, dt)?;
        if !initial.is_pure_form() {
            return Err(Error::invalid("continuous trajectories need a pure initial state"));
        }
        initial.validate()?;
        Ok(ContinuousStepper {
            gamma: params.gamma,
            dt,
            u_step: unitary_propagator(params, dt)?,
            state: initial,
            step: 0,
            rng: rng_from_seed(seed),
        })
    }

    pub fn state(&self) -> &QubitState {
        &self.state
    }

    /// Advance one step; returns the readout and the pre-update `z` it was
    /// drawn against.
    pub fn advance(&mut self) -> Result<(ReadoutSample, f64)> {
        let pre = self.u_step.apply(&self.state);
        let z = pre.bloch().z;
        self.step += 1;
        let r = sample_readout(&pre, self.gamma, self.dt, self.step, &mut self.rng)?;
        self.state = bayesian_update(&pre, &r, self.gamma, self.dt)?;
        Ok((r, z))
    }
}

pub fn simulate_continuous_trajectory(config: &ContinuousConfig, initial: &QubitState) -> Result<TrajectoryRecord> {
    config.validate()?;
    let n = config.n_steps()? as usize;
    let mut stepper = ContinuousStepper::new(&config.params, config.dt_step, *initial, config.rng_seed)?;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        readouts: Vec::with_capacity(n),
        seed: config.rng_seed,
        path: Vec::new(),
    };
    for i in 0..n {
        let (r, _) = stepper.advance()?;
        rec.times.push((i + 1) as f64 * config.dt_step);
        rec.states.push(stepper.state().bloch());
        rec.readouts.push(r.value);
    }
    Ok(rec)
}

/// Bloch vector of one diffusive trajectory every `stride` steps, starting
/// with the initial state at `t = 0`.
pub fn sample_continuous_trajectory(
    params: &ModelParams,
    initial: &QubitState,
    dt: f64,
    n_steps: u64,
    stride: u64,
    seed: u64,
) -> Result<Vec<Bloch>> {
    let stride = stride.max(1);
    let mut stepper = ContinuousStepper::new(params, dt, *initial, seed)?;
    let mut out = Vec::with_capacity((n_steps / stride + 1) as usize);
    out.push(initial.bloch());
    for i in 1..=n_steps {
        stepper.advance()?;
        if i % stride == 0 {
            out.push(stepper.state().bloch());
        }
    }
    Ok(out)
}

/// Sample times produced by [`sample_continuous_trajectory`].
pub fn strided_times(dt: f64, n_steps: u64, stride: u64) -> Vec<f64> {
    let stride = stride.max(1);
    (0..=n_steps / stride).map(|k| (k * stride) as f64 * dt).collect()
}

/// Average of `m` diffusive trajectories; trajectory `i` uses
/// `stream_seed(master_seed, i)`.
pub fn continuous_ensemble(
    params: &ModelParams,
    initial: &QubitState,
    dt: f64,
    t_final: f64,
    stride: u64,
    m: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    if m == 0 {
        return Err(Error::invalid("ensemble size must be >= 1"));
    }
    let n_steps = step_count(t_final, dt)?;
    ContinuousStepper::new(params, dt, *initial, 0)?;
    let times = strided_times(dt, n_steps, stride);
    let acc = run_ensemble(m, times.len(), |i| {
        sample_continuous_trajectory(params, initial, dt, n_steps, stride, stream_seed(master_seed, i))
            .unwrap_or_else(|e| panic!("trajectory {i} failed: {e}"))
    });
    Ok(acc.finish(times, master_seed))
}

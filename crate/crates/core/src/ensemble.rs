//! Nonselective dynamics: the dephasing master equation, its closed-form
//! solutions, the memory-kernel representation, the optional T1 channel and
//! Poisson-randomized projective measurements.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::analysis::fit::{fit_decay_envelope_opts, FitMethod, FitOptions};
use crate::analysis::RateEstimate;
use crate::error::{Error, Result};
use crate::pulsed::check_grid;
use crate::qubit::{min_eigenvalue, sigma_z, unitary_propagator, Bloch, Mat2, ModelParams, QubitState, C64};
use crate::rng::{rng_from_seed, stream_seed, TrajectoryRng};
use crate::stats::{run_ensemble, EnsembleResult};

/// Upper bound on `dt * max(omega, 2 gamma, gamma_one)` for RK4.
pub const RK4_MAX_PHASE: f64 = 0.05;
/// Upper bound on `dt * max(omega, 2 gamma)` for the memory kernel.
pub const KERNEL_MAX_PHASE: f64 = 0.02;
pub const KERNEL_MAX_STEPS: usize = 100_000;
/// Upper bound on the per-step event probability `2 gamma dt`.
pub const POISSON_MAX_EVENT_PROB: f64 = 0.1;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum T1Direction {
    /// Loss `|1> -> |0>`, jump operator `|0><1|`.
    #[default]
    #[serde(rename = "toward_0")]
    TowardState0,
    /// Jump operator `|1><0|` with anticommutator on `|0><0|`.
    #[serde(rename = "toward_1")]
    TowardState1,
}

impl T1Direction {
    pub fn jump_operator(&self) -> Mat2 {
        let (z, o) = (C64::from(0.0), C64::from(1.0));
        match self {
            T1Direction::TowardState0 => Mat2::new(z, z, o, z),
            T1Direction::TowardState1 => Mat2::new(z, o, z, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    pub model: ModelParams,
    pub gamma_one: f64,
    pub t1_direction: T1Direction,
}

impl LindbladParams {
    pub fn new(model: ModelParams) -> Self {
        LindbladParams {
            model,
            gamma_one: 0.0,
            t1_direction: T1Direction::default(),
        }
    }

    pub fn with_t1(model: ModelParams, gamma_one: f64, t1_direction: T1Direction) -> Result<Self> {
        let p = LindbladParams {
            model,
            gamma_one,
            t1_direction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.gamma_one.is_finite() && self.gamma_one >= 0.0) {
            return Err(Error::invalid(format!(
                "gamma_one must be >= 0, got {}",
                self.gamma_one
            )));
        }
        Ok(())
    }

    /// Fastest rate the integrator has to resolve.
    pub fn stiffness(&self) -> f64 {
        self.model.omega().max(2.0 * self.model.gamma).max(self.gamma_one)
    }
}

/// Precomputed operators for repeated right-hand-side evaluations.
struct Generator {
    minus_i_h: Mat2,
    gamma: f64,
    gamma_one: f64,
    l: Mat2,
    l_dag: Mat2,
    half_ldl: Mat2,
}

impl Generator {
    fn new(p: &LindbladParams) -> Self {
        let l = p.t1_direction.jump_operator();
        let l_dag = l.adjoint();
        Generator {
            minus_i_h: p.model.hamiltonian() * C64::new(0.0, -1.0),
            gamma: p.model.gamma,
            gamma_one: p.gamma_one,
            l,
            l_dag,
            half_ldl: l_dag * l * C64::from(0.5),
        }
    }

    fn coherent_and_t1(&self, rho: &Mat2) -> Mat2 {
        let comm = self.minus_i_h * rho - rho * self.minus_i_h;
        if self.gamma_one == 0.0 {
            return comm;
        }
        let t1 = self.l * rho * self.l_dag - self.half_ldl * rho - rho * self.half_ldl;
        comm + t1 * C64::from(self.gamma_one)
    }

    fn rhs(&self, rho: &Mat2) -> Mat2 {
        // gamma (sigma_z rho sigma_z - rho) only touches the coherences
        let mut d = self.coherent_and_t1(rho);
        let g = C64::from(2.0 * self.gamma);
        d[(0, 1)] -= g * rho[(0, 1)];
        d[(1, 0)] -= g * rho[(1, 0)];
        d
    }

    fn rk4(&self, rho: &Mat2, dt: f64, f: impl Fn(&Self, &Mat2) -> Mat2) -> Mat2 {
        let h = C64::from(dt);
        let half = C64::from(0.5 * dt);
        let k1 = f(self, rho);
        let k2 = f(self, &(rho + k1 * half));
        let k3 = f(self, &(rho + k2 * half));
        let k4 = f(self, &(rho + k3 * h));
        let next = rho + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (h / C64::from(6.0));
        (next + next.adjoint()) * C64::from(0.5)
    }
}

/// `d rho / dt` for dephasing at rate `gamma` plus the optional T1 channel.
pub fn lindblad_rhs(rho: &Mat2, p: &LindbladParams) -> Mat2 {
    let sz = sigma_z();
    let g = Generator::new(p);
    let mut d = g.coherent_and_t1(rho);
    d += (sz * rho * sz - rho) * C64::from(p.model.gamma);
    d
}

/// Bloch-vector form `dr/dt = M r + b` of the master equation.
pub fn bloch_generator(p: &LindbladParams) -> (Matrix3<f64>, Vector3<f64>) {
    let center = Bloch::default().to_density();
    let b = Bloch::from_density(&lindblad_rhs(&center, p));
    let mut m = Matrix3::zeros();
    for (j, e) in [
        Bloch::new(1.0, 0.0, 0.0),
        Bloch::new(0.0, 1.0, 0.0),
        Bloch::new(0.0, 0.0, 1.0),
    ]
    .into_iter()
    .enumerate()
    {
        let c = Bloch::from_density(&lindblad_rhs(&(e.to_density() - center), p));
        m[(0, j)] = c.x;
        m[(1, j)] = c.y;
        m[(2, j)] = c.z;
    }
    (m, Vector3::new(b.x, b.y, b.z))
}

/// Fixed point of the master equation, if unique.
pub fn steady_state(p: &LindbladParams) -> Result<Bloch> {
    let (m, b) = bloch_generator(p);
    let r = m
        .lu()
        .solve(&(-b))
        .ok_or_else(|| Error::invalid("master equation has no unique steady state"))?;
    Ok(Bloch::new(r[0], r[1], r[2]))
}

fn check_rk4_step(p: &LindbladParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be finite and > 0, got {dt}")));
    }
    let s = p.stiffness();
    if dt * s > RK4_MAX_PHASE * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            reason: format!("dt*max(omega, 2 gamma, gamma_one) = {:.3e} > {RK4_MAX_PHASE}", dt * s),
            suggested: RK4_MAX_PHASE / s,
        });
    }
    Ok(())
}

/// Largest RK4 step permitted for these parameters.
pub fn max_rk4_step(p: &LindbladParams) -> f64 {
    let s = p.stiffness();
    if s > 0.0 {
        RK4_MAX_PHASE / s
    } else {
        RK4_MAX_PHASE
    }
}

fn check_positive(rho: &Mat2, t: f64, dt: f64) -> Result<()> {
    let l = min_eigenvalue(rho);
    if !(l >= -POSITIVITY_TOL) {
        return Err(Error::StepSize {
            reason: format!("rho lost positivity at t = {t} (min eigenvalue {l:e})"),
            suggested: 0.5 * dt,
        });
    }
    Ok(())
}

/// Classical RK4 with a fixed step. The step is shrunk slightly so that an
/// integer number of steps lands exactly on `t_final`. Returns every step,
/// starting with `(0, initial)`.
pub fn integrate_master_equation(
    p: &LindbladParams,
    initial: &Mat2,
    t_final: f64,
    dt: f64,
) -> Result<Vec<(f64, Mat2)>> {
    p.validate()?;
    check_rk4_step(p, dt)?;
    QubitState::Mixed(*initial).validate()?;
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::invalid(format!(
            "t_final must be finite and >= 0, got {t_final}"
        )));
    }
    let n = (t_final / dt).ceil() as usize;
    let h = if n > 0 { t_final / n as f64 } else { dt };
    let g = Generator::new(p);
    let mut out = Vec::with_capacity(n + 1);
    let mut rho = *initial;
    out.push((0.0, rho));
    for i in 1..=n {
        rho = g.rk4(&rho, h, Generator::rhs);
        let t = i as f64 * h;
        check_positive(&rho, t, h)?;
        out.push((t, rho));
    }
    Ok(out)
}

/// Density matrices at the requested times (increasing, from `t = 0`),
/// integrating with steps no larger than `dt_max`.
pub fn evolve_sampled(p: &LindbladParams, initial: &Mat2, times: &[f64], dt_max: f64) -> Result<Vec<Mat2>> {
    p.validate()?;
    check_rk4_step(p, dt_max)?;
    check_grid(times)?;
    QubitState::Mixed(*initial).validate()?;
    let g = Generator::new(p);
    let mut rho = *initial;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        let n = (span / dt_max).ceil() as usize;
        if n > 0 {
            let h = span / n as f64;
            for _ in 0..n {
                rho = g.rk4(&rho, h, Generator::rhs);
            }
            check_positive(&rho, target, h)?;
        }
        t = target;
        out.push(rho);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingRegime {
    Underdamped,
    Critical,
    Overdamped,
}

/// Closed-form nonselective solution on resonance, from `|1>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSolution {
    pub regime: DampingRegime,
    /// Real parts of the two eigenrates of `z'' + 2 gamma z' + omega_r^2 z = 0`.
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub gamma_mix: f64,
    /// `gamma_plus - gamma_minus`; zero unless overdamped.
    pub transient_rate: f64,
    /// `sqrt(omega_r^2 - gamma^2)`; zero unless underdamped.
    pub oscillation_frequency: f64,
    gamma: f64,
}

impl AnalyticSolution {
    pub fn z_at(&self, t: f64) -> f64 {
        let g = self.gamma;
        match self.regime {
            DampingRegime::Critical => (-g * t).exp() * (1.0 + g * t),
            DampingRegime::Overdamped => {
                let big = self.transient_rate;
                let gm = self.gamma_minus;
                (-gm * t).exp() * (1.0 - gm * (-big * t).exp_m1() / big)
            }
            DampingRegime::Underdamped => {
                let w = self.oscillation_frequency;
                let (s, c) = (w * t).sin_cos();
                (-g * t).exp() * (c + g / w * s)
            }
        }
    }
}

pub fn analytic_solution_orthogonal(model: &ModelParams) -> Result<AnalyticSolution> {
    model.validate()?;
    if model.delta != 0.0 {
        return Err(Error::OutOfRegime(
            "orthogonal closed form requires delta = 0; use the stabilized rates".into(),
        ));
    }
    let (g, w) = (model.gamma, model.omega_r);
    let disc = g * g - w * w;
    let critical = (g - w).abs() <= 1e-12 * g.max(w);
    let s = if critical { 0.0 } else { disc.abs().sqrt() };
    Ok(if critical {
        AnalyticSolution {
            regime: DampingRegime::Critical,
            gamma_plus: g,
            gamma_minus: g,
            gamma_mix: g,
            transient_rate: 0.0,
            oscillation_frequency: 0.0,
            gamma: g,
        }
    } else if disc > 0.0 {
        // gamma - s without cancellation
        let gm = w * w / (g + s);
        AnalyticSolution {
            regime: DampingRegime::Overdamped,
            gamma_plus: g + s,
            gamma_minus: gm,
            gamma_mix: gm,
            transient_rate: 2.0 * s,
            oscillation_frequency: 0.0,
            gamma: g,
        }
    } else {
        AnalyticSolution {
            regime: DampingRegime::Underdamped,
            gamma_plus: g,
            gamma_minus: g,
            gamma_mix: g,
            transient_rate: 0.0,
            oscillation_frequency: s,
            gamma: g,
        }
    })
}

/// Lowest-order decay rate `2 gamma omega_r^2 / (omega^2 + 4 gamma^2)`.
pub fn gamma0_stabilized(model: &ModelParams) -> Result<f64> {
    model.validate()?;
    let (g, wr, w) = (model.gamma, model.omega_r, model.omega());
    if wr == 0.0 || g == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * g * wr * wr / (w * w + 4.0 * g * g))
}

/// The same rate written as `(omega_r^2/(2 omega)) sech(ln(gamma/gamma_crit))`.
pub fn gamma0_sech(model: &ModelParams) -> Result<f64> {
    model.validate()?;
    let w = model.omega();
    if !(model.gamma > 0.0 && w > 0.0) {
        return Err(Error::invalid("sech form needs gamma > 0 and omega > 0"));
    }
    let chi = (model.gamma / (0.5 * w)).ln();
    Ok(0.5 * model.omega_r * model.omega_r / w / chi.cosh())
}

/// Broadened mixing rate `Gamma_0 / (1 - 2 (Gamma_0/omega_r)^2)`.
pub fn gamma_mix_stabilized(model: &ModelParams) -> Result<f64> {
    let g0 = gamma0_stabilized(model)?;
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let ratio = g0 / model.omega_r;
    let denom = 1.0 - 2.0 * ratio * ratio;
    if !(denom > 0.0) {
        return Err(Error::OutOfRegime(format!(
            "1 - 2 (Gamma_0/omega_r)^2 = {denom} <= 0: first-derivative truncation invalid"
        )));
    }
    Ok(g0 / denom)
}

/// Dimensionless rates `(xi_0, xi)` with `Gamma_0 = xi_0 omega_r` and
/// `Gamma_mix = xi omega_r`.
pub fn xi_rates(model: &ModelParams) -> Result<(f64, f64)> {
    model.validate()?;
    let w = model.omega();
    if w == 0.0 {
        return Ok((0.0, 0.0));
    }
    let gt = 2.0 * model.gamma / w;
    let xi0 = gt / (1.0 + gt * gt) * model.sin_theta();
    let denom = 1.0 - 2.0 * xi0 * xi0;
    if !(denom > 0.0) {
        return Err(Error::OutOfRegime(format!("1 - 2 xi_0^2 = {denom} <= 0")));
    }
    Ok((xi0, xi0 / denom))
}

/// `A = 2 gamma omega_r^2 / omega`, the memory-kernel amplitude.
pub fn kernel_amplitude(model: &ModelParams) -> f64 {
    let w = model.omega();
    if w == 0.0 {
        0.0
    } else {
        2.0 * model.gamma * model.omega_r * model.omega_r / w
    }
}

/// Exact z(t) from `|1>` via the integro-differential equation
///
/// `z'(t) = F(t) - A int_0^t exp(-2 gamma s) sin(omega s) z(t - s) ds`
///
/// with source `F(t) = -(omega_r^2/omega) exp(-2 gamma t) sin(omega t)`
/// carrying the initial coherence in the tilted frame. Trapezoidal history
/// and time stepping; the kernel vanishes at `s = 0` so each step is
/// explicit.
pub fn memory_kernel_z(model: &ModelParams, t_final: f64, dt: f64) -> Result<Vec<(f64, f64)>> {
    model.validate()?;
    if !(t_final.is_finite() && t_final >= 0.0 && dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("t_final must be >= 0 and dt > 0"));
    }
    let w = model.omega();
    let stiff = w.max(2.0 * model.gamma);
    if dt * stiff > KERNEL_MAX_PHASE * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            reason: format!("dt*max(omega, 2 gamma) = {:.3e} > {KERNEL_MAX_PHASE}", dt * stiff),
            suggested: KERNEL_MAX_PHASE / stiff,
        });
    }
    let n = (t_final / dt).ceil() as usize;
    if n > KERNEL_MAX_STEPS {
        return Err(Error::Configuration(format!(
            "memory kernel needs {n} steps; history is capped at {KERNEL_MAX_STEPS}"
        )));
    }
    let h = if n > 0 { t_final / n as f64 } else { dt };
    if w == 0.0 {
        return Ok((0..=n).map(|i| (i as f64 * h, 1.0)).collect());
    }
    let a = kernel_amplitude(model);
    let src = model.omega_r * model.omega_r / w;
    let two_g = 2.0 * model.gamma;
    let kernel: Vec<f64> = (0..=n)
        .map(|j| {
            let s = j as f64 * h;
            (-two_g * s).exp() * (w * s).sin()
        })
        .collect();
    let force = |t: f64| -src * (-two_g * t).exp() * (w * t).sin();
    let mut z = Vec::with_capacity(n + 1);
    z.push(1.0);
    let mut zdot_prev = force(0.0);
    for i in 1..=n {
        let mut conv = 0.0;
        for j in 1..i {
            conv += kernel[j] * z[i - j];
        }
        conv += 0.5 * kernel[i] * z[0];
        let zdot = force(i as f64 * h) - a * h * conv;
        let next = z[i - 1] + 0.5 * h * (zdot_prev + zdot);
        z.push(next);
        zdot_prev = zdot;
    }
    Ok(z.into_iter().enumerate().map(|(i, z)| (i as f64 * h, z)).collect())
}

/// One step of Poisson-randomized projective measurement: with probability
/// `2 gamma dt` the coherences are erased, otherwise the coherent (and T1)
/// part is advanced by one RK4 step. Returns whether a measurement fired.
pub fn poisson_pulsed_step(rho: &Mat2, p: &LindbladParams, dt: f64, rng: &mut TrajectoryRng) -> Result<(Mat2, bool)> {
    let prob = 2.0 * p.model.gamma * dt;
    if !(dt > 0.0 && prob <= POISSON_MAX_EVENT_PROB) {
        return Err(Error::StepSize {
            reason: format!("event probability 2 gamma dt = {prob:.3e} exceeds {POISSON_MAX_EVENT_PROB}"),
            suggested: POISSON_MAX_EVENT_PROB / (2.0 * p.model.gamma).max(f64::MIN_POSITIVE),
        });
    }
    let u: f64 = rng.random();
    if u < prob {
        let mut out = *rho;
        out[(0, 1)] = C64::from(0.0);
        out[(1, 0)] = C64::from(0.0);
        return Ok((out, true));
    }
    let g = Generator::new(p);
    Ok((g.rk4(rho, dt, Generator::coherent_and_t1), false))
}

/// One Poisson-measured trajectory from `|1>` sampled on a grid, using
/// exponential waiting times and exact propagation between events.
pub fn sample_poisson_trajectory(model: &ModelParams, times: &[f64], seed: u64) -> Result<Vec<Bloch>> {
    let mut rng = rng_from_seed(seed);
    let wait = if model.gamma > 0.0 {
        Some(Exp::new(2.0 * model.gamma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let draw = |rng: &mut TrajectoryRng| wait.map_or(f64::INFINITY, |d| rng.sample(d));
    let mut state = QubitState::Mixed(QubitState::one().density());
    let mut t_last = 0.0;
    let mut next = draw(&mut rng);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        while next <= t {
            let mut rho = unitary_propagator(model, next - t_last)?.apply(&state).density();
            rho[(0, 1)] = C64::from(0.0);
            rho[(1, 0)] = C64::from(0.0);
            state = QubitState::Mixed(rho);
            t_last = next;
            next += draw(&mut rng);
        }
        out.push(unitary_propagator(model, t - t_last)?.apply(&state).bloch());
    }
    Ok(out)
}

pub fn poisson_ensemble(model: &ModelParams, times: &[f64], m: usize, master_seed: u64) -> Result<EnsembleResult> {
    model.validate()?;
    check_grid(times)?;
    if m == 0 {
        return Err(Error::invalid("ensemble size must be >= 1"));
    }
    let acc = run_ensemble(m, times.len(), |i| {
        sample_poisson_trajectory(model, times, stream_seed(master_seed, i)).expect("validated grid")
    });
    Ok(acc.finish(times.to_vec(), master_seed))
}

/// Envelope rate of the relaxation of `z` toward its steady state, from an
/// RK4 solution started in `|1>`. Integration runs until the normalized
/// deviation has stayed below 3% for a full oscillation period.
pub fn fit_lindblad_rate(p: &LindbladParams, dt: Option<f64>) -> Result<RateEstimate> {
    p.validate()?;
    let dt = dt.unwrap_or_else(|| 0.5 * max_rk4_step(p));
    check_rk4_step(p, dt)?;
    let z_ss = steady_state(p)?.z;
    let scale = 1.0 - z_ss;
    if !(scale.abs() > 1e-6) {
        return Err(Error::InsufficientData("initial state is already stationary".into()));
    }
    let w = p.model.omega();
    let guard = 1.5 * if w > 0.0 { 2.0 * std::f64::consts::PI / w } else { 0.0 }
        + 1.5 / (2.0 * p.model.gamma + p.gamma_one).max(1e-300);
    const MAX_STEPS: u64 = 50_000_000;
    const KEEP: usize = 100_000;
    let g = Generator::new(p);
    let mut rho = QubitState::one().density();
    let mut series = vec![(0.0, 1.0)];
    let mut stride = 1u64;
    let mut last_above = 0.0;
    let mut step = 0u64;
    loop {
        rho = g.rk4(&rho, dt, Generator::rhs);
        step += 1;
        let t = step as f64 * dt;
        let dev = ((rho[(0, 0)] - rho[(1, 1)]).re - z_ss) / scale;
        if step.is_multiple_of(stride) {
            series.push((t, dev));
            if series.len() > 2 * KEEP {
                series = series.into_iter().step_by(2).collect();
                stride *= 2;
            }
        }
        if dev.abs() >= 0.03 {
            last_above = t;
        } else if t - last_above > guard {
            break;
        }
        if step >= MAX_STEPS {
            return Err(Error::InsufficientData(format!(
                "no relaxation within {MAX_STEPS} steps (t = {t})"
            )));
        }
    }
    check_positive(&rho, step as f64 * dt, dt)?;
    // noise-free series: a low floor keeps enough peaks near critical damping
    let opts = FitOptions {
        window: (1e-4, 0.8),
        weights: None,
    };
    fit_decay_envelope_opts(&series, FitMethod::Auto, &opts)
}

/// Fitted relaxation rates with T1 loss across a measurement-rate grid and
/// the finite-difference response `-d rate / d gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Response {
    pub gamma_grid: Vec<f64>,
    pub rates: Vec<f64>,
    pub response: Vec<f64>,
}

pub fn zeno_response_t1(p: &LindbladParams, gamma_grid: &[f64]) -> Result<T1Response> {
    p.validate()?;
    if gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid("gamma grid must be positive"));
    }
    let rates = gamma_grid
        .iter()
        .map(|&g| {
            let q = LindbladParams {
                model: p.model.with_gamma(g),
                ..*p
            };
            fit_lindblad_rate(&q, None).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let response = crate::analysis::response::log_grid_derivative(gamma_grid, &rates)?
        .into_iter()
        .map(|d| -d)
        .collect();
    Ok(T1Response {
        gamma_grid: gamma_grid.to_vec(),
        rates,
        response,
    })
}

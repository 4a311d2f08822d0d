//! Invariant suite behind the `validate` subcommand: conservation laws,
//! closed-form cross-checks and determinism, each with a fixed tolerance.

use std::time::Instant;

use rand::Rng;

use crate::analysis::spectral_identity_defect;
use crate::continuous::{povm_completeness, ContinuousStepper};
use crate::ensemble::{
    analytic_solution_orthogonal, evolve_sampled, gamma0_stabilized, gamma_mix_stabilized, integrate_master_equation,
    lindblad_rhs, max_rk4_step, memory_kernel_z, poisson_ensemble, steady_state, xi_rates, LindbladParams, T1Direction,
    KERNEL_MAX_PHASE,
};
use crate::error::Result;
use crate::pulsed::{analytic_z_pulsed, pulsed_ensemble, record_probability, PulsedConfig, PulsedStepper};
use crate::qubit::{min_eigenvalue, unitarity_defect, unitary_propagator, Bloch, ModelParams, QubitState};
use crate::rng::{rng_from_seed, stream_seed};
use crate::stats::with_workers;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity against its bound.
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<44} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Check = (&'static str, fn() -> Result<(bool, String)>);

fn bound(value: f64, tol: f64) -> (bool, String) {
    (value < tol, format!("{value:.3e} < {tol:.0e}"))
}

fn unitarity() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(1);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let m = ModelParams::new(rng.random_range(0.0..5.0), rng.random_range(-5.0..5.0), 0.0)?;
        let u = unitary_propagator(&m, rng.random_range(0.0..100.0))?;
        worst = worst.max(unitarity_defect(u.matrix()));
    }
    Ok(bound(worst, 1e-12))
}

fn pulsed_norm() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let m = ModelParams::new(1.0, 0.3 * i as f64, 0.5 + 0.25 * i as f64)?;
        let mut s = PulsedStepper::new(&m, QubitState::one(), stream_seed(2, i))?;
        for _ in 0..1000 {
            s.pulse();
            let st = s.state_after(0.37 / m.gamma)?;
            st.validate()?;
            worst = worst.max((st.bloch().length() - 1.0).abs());
        }
    }
    Ok(bound(worst, 1e-12))
}

fn bayes_norm() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let m = ModelParams::new(1.0, 0.5, 0.2 + 0.2 * i as f64)?;
        let dt = 0.01 / m.omega().max(m.gamma);
        let mut s = ContinuousStepper::new(&m, dt, QubitState::one(), stream_seed(3, i))?;
        for _ in 0..10_000 {
            s.advance()?;
            s.state().validate()?;
            worst = worst.max((s.state().bloch().length() - 1.0).abs());
        }
    }
    Ok(bound(worst, 1e-9))
}

fn lindblad_physicality() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for (delta, gamma, g1, dir) in [
        (0.0, 0.3, 0.0, T1Direction::TowardState0),
        (3.0, 0.7, 0.2, T1Direction::TowardState0),
        (1.0, 5.0, 1.0, T1Direction::TowardState1),
    ] {
        let p = LindbladParams::with_t1(ModelParams::new(1.0, delta, gamma)?, g1, dir)?;
        for (_, rho) in integrate_master_equation(&p, &QubitState::one().density(), 20.0, max_rk4_step(&p))? {
            worst = worst
                .max((rho.trace().re - 1.0).abs())
                .max((rho - rho.adjoint()).norm());
            min_eig = min_eig.min(min_eigenvalue(&rho));
        }
    }
    let ok = worst < 1e-12 && min_eig > -1e-12;
    Ok((
        ok,
        format!("trace/hermiticity {worst:.3e} < 1e-12, min eigenvalue {min_eig:.3e} > -1e-12"),
    ))
}

fn closed_forms() -> Result<(bool, String)> {
    let times: Vec<f64> = (0..=400).map(|i| 0.05 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for g in [0.3, 1.0, 3.0] {
        let m = ModelParams::new(1.0, 0.0, g)?;
        let sol = analytic_solution_orthogonal(&m)?;
        let p = LindbladParams::new(m);
        let rk = evolve_sampled(&p, &QubitState::one().density(), &times, 0.2 * max_rk4_step(&p))?;
        for (t, rho) in times.iter().zip(&rk) {
            worst = worst.max((Bloch::from_density(rho).z - sol.z_at(*t)).abs());
        }
    }
    Ok(bound(worst, 1e-6))
}

fn memory_kernel() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (delta, scale) in [(0.0, 0.5), (3.0, 1.0), (3.0, 0.3)] {
        let m = ModelParams::new(1.0, delta, 0.0)?;
        let m = m.with_gamma(scale * m.gamma_crit());
        let dt = KERNEL_MAX_PHASE / m.omega().max(2.0 * m.gamma);
        let mk = memory_kernel_z(&m, 20.0, dt)?;
        let times: Vec<f64> = mk.iter().map(|p| p.0).collect();
        let p = LindbladParams::new(m);
        let rk = evolve_sampled(&p, &QubitState::one().density(), &times, 0.2 * max_rk4_step(&p))?;
        for ((_, z), rho) in mk.iter().zip(&rk) {
            worst = worst.max((z - Bloch::from_density(rho).z).abs());
        }
    }
    Ok(bound(worst, 1e-3))
}

fn povm() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (gamma, dt) in [(1.0, 0.005), (1.0, 0.05), (2.0, 0.25)] {
        let (a, b, off) = povm_completeness(gamma, dt)?;
        worst = worst.max((a - 1.0).abs()).max((b - 1.0).abs()).max(off);
    }
    Ok(bound(worst, 1e-8))
}

fn pulsed_enumeration() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (ratio, n) in [(std::f64::consts::FRAC_PI_4, 4usize), (0.5, 7), (2.0, 10)] {
        let m = ModelParams::new(ratio, 0.0, 1.0)?;
        let cfg = PulsedConfig::new(m, n, 0)?;
        let mut p1 = 0.0;
        let mut total = 0.0;
        for bits in 0u32..(1 << n) {
            let rec: Vec<u8> = (0..n).map(|k| ((bits >> k) & 1) as u8).collect();
            let p = record_probability(&cfg, &rec)?;
            total += p;
            if rec[n - 1] == 1 {
                p1 += p;
            }
        }
        let z = analytic_z_pulsed(&m, n as u64, 0.0)?;
        worst = worst.max((p1 - 0.5 * (1.0 + z)).abs()).max((total - 1.0).abs());
    }
    Ok(bound(worst, 1e-12))
}

fn stabilized_identities() -> Result<(bool, String)> {
    let m = ModelParams::new(1.0, 3.0, 0.0)?;
    let gc = m.gamma_crit();
    let mut worst: f64 = 0.0;
    for s in [2.0, 5.0, 10.0] {
        let a = gamma0_stabilized(&m.with_gamma(gc * s))?;
        let b = gamma0_stabilized(&m.with_gamma(gc / s))?;
        worst = worst.max((a - b).abs());
    }
    for k in 0..50 {
        let g = gc * 10f64.powf(-2.0 + 4.0 * k as f64 / 49.0);
        let mg = m.with_gamma(g);
        worst = worst.max(spectral_identity_defect(&mg)?);
        let (xi0, xi) = xi_rates(&mg)?;
        worst = worst
            .max((xi0 * m.omega_r - gamma0_stabilized(&mg)?).abs())
            .max((xi * m.omega_r - gamma_mix_stabilized(&mg)?).abs());
    }
    Ok(bound(worst, 1e-12))
}

fn steady_states() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (delta, gamma, g1) in [(0.0, 1.0, 0.0), (3.0, 0.5, 0.3), (1.0, 4.0, 2.0)] {
        let p = LindbladParams::with_t1(ModelParams::new(1.0, delta, gamma)?, g1, T1Direction::TowardState0)?;
        let ss = steady_state(&p)?;
        worst = worst.max(lindblad_rhs(&ss.to_density(), &p).norm());
    }
    Ok(bound(worst, 1e-12))
}

fn determinism() -> Result<(bool, String)> {
    let m = ModelParams::new(1.0, 0.5, 2.0)?;
    let times: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
    let run = |w| with_workers(Some(w), || pulsed_ensemble(&m, &QubitState::one(), &times, 1000, 9));
    let (a, b) = (run(1)?, run(4)?);
    let same = a == b;
    Ok((same, format!("1 vs 4 workers bit-identical: {same}")))
}

fn poisson_average() -> Result<(bool, String)> {
    let m = ModelParams::new(1.0, 0.0, 2.0)?;
    let times: Vec<f64> = (0..=100).map(|i| 0.1 * i as f64).collect();
    let e = poisson_ensemble(&m, &times, 100_000, 11)?;
    let p = LindbladParams::new(m);
    let rk = evolve_sampled(&p, &QubitState::one().density(), &times, max_rk4_step(&p))?;
    let sup =
        e.p1.iter()
            .zip(&rk)
            .map(|(p1, rho)| (p1 - Bloch::from_density(rho).p1()).abs())
            .fold(0.0, f64::max);
    // z_err/2 is the standard error of P_1; take its largest value on the grid
    let tol = 4.0 * 0.5 * e.z_err.iter().cloned().fold(0.0, f64::max);
    Ok((sup < tol, format!("{sup:.3e} < 4 stderr = {tol:.3e}")))
}

const CHECKS: &[Check] = &[
    ("unitary propagators", unitarity),
    ("pulsed state normalization", pulsed_norm),
    ("Bayesian update norm and purity", bayes_norm),
    ("master equation trace and positivity", lindblad_physicality),
    ("RK4 vs orthogonal closed forms", closed_forms),
    ("memory kernel vs RK4", memory_kernel),
    ("Gaussian POVM completeness", povm),
    ("pulsed records vs closed form", pulsed_enumeration),
    ("stabilized-rate identities", stabilized_identities),
    ("master equation steady states", steady_states),
    ("ensemble determinism", determinism),
    ("Poisson average vs master equation", poisson_average),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

/// Run every check, calling `report` as each finishes. An error inside a
/// check counts as a failure.
pub fn run_suite(mut report: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            let r = CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            };
            report(&r);
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_checks_pass() {
        for f in [
            unitarity,
            pulsed_enumeration,
            stabilized_identities,
            steady_states,
            povm,
        ] {
            let (ok, detail) = f().unwrap();
            assert!(ok, "{detail}");
        }
    }

    #[test]
    fn names_are_unique() {
        let mut n = check_names();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), CHECKS.len());
    }
}

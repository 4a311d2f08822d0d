//! Two-level states, the driven-qubit Hamiltonian and its propagator.
//!
//! Basis convention: component 0 is the measurement eigenstate `|1>`
//! (sigma_z = +1) and component 1 is `|0>` (sigma_z = -1). The Hamiltonian
//! is `H = (omega_r/2) sigma_x + (delta/2) sigma_z = (omega/2) sigma_theta`.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Ket = Vector2<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub const NORM_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const BLOCH_TOL: f64 = 1e-9;

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// Hamiltonian parameters plus the measurement rate.
///
/// `omega_r` and `delta` are angular frequencies, `gamma` is the measurement
/// rate (pulse repetition rate for projective measurements).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_r: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(omega_r: f64, delta: f64, gamma: f64) -> Result<Self> {
        let p = ModelParams { omega_r, delta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r.is_finite() && self.delta.is_finite() && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("non-finite model parameters {self:?}")));
        }
        if self.omega_r < 0.0 {
            return Err(Error::invalid(format!("omega_r must be >= 0, got {}", self.omega_r)));
        }
        if self.gamma < 0.0 {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Same Hamiltonian, different measurement rate.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        ModelParams { gamma, ..*self }
    }

    /// Dressed oscillation frequency `sqrt(omega_r^2 + delta^2)`.
    pub fn omega(&self) -> f64 {
        self.omega_r.hypot(self.delta)
    }

    /// Tilt of the oscillation axis from the measurement axis, in `[0, pi]`.
    pub fn theta(&self) -> f64 {
        if self.delta == 0.0 && self.omega_r > 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            self.omega_r.atan2(self.delta)
        }
    }

    pub fn sin_theta(&self) -> f64 {
        let w = self.omega();
        if w > 0.0 {
            self.omega_r / w
        } else {
            0.0
        }
    }

    pub fn cos_theta(&self) -> f64 {
        let w = self.omega();
        if w > 0.0 {
            self.delta / w
        } else {
            1.0
        }
    }

    /// Anti-Zeno / Zeno transition rate: `omega_r` for orthogonal axes,
    /// `omega/2` once a detuning is present.
    pub fn gamma_crit(&self) -> f64 {
        if self.delta == 0.0 {
            self.omega_r
        } else {
            0.5 * self.omega()
        }
    }

    /// `H / hbar` as a matrix.
    pub fn hamiltonian(&self) -> Mat2 {
        sigma_x() * C64::from(0.5 * self.omega_r) + sigma_z() * C64::from(0.5 * self.delta)
    }
}

/// Bloch vector `(x, y, z)` of Pauli expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bloch {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Bloch {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Bloch { x, y, z }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn length(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Population of `|1>`.
    pub fn p1(&self) -> f64 {
        (0.5 * (1.0 + self.z)).clamp(0.0, 1.0)
    }

    pub fn to_density(&self) -> Mat2 {
        Mat2::new(
            C64::new(0.5 * (1.0 + self.z), 0.0),
            C64::new(0.5 * self.x, -0.5 * self.y),
            C64::new(0.5 * self.x, 0.5 * self.y),
            C64::new(0.5 * (1.0 - self.z), 0.0),
        )
    }

    pub fn from_density(rho: &Mat2) -> Self {
        let c = rho[(0, 1)];
        Bloch {
            x: 2.0 * c.re,
            y: -2.0 * c.im,
            z: (rho[(0, 0)] - rho[(1, 1)]).re,
        }
    }

    pub fn from_ket(psi: &Ket) -> Self {
        let c = psi[0] * psi[1].conj();
        Bloch {
            x: 2.0 * c.re,
            y: -2.0 * c.im,
            z: psi[0].norm_sqr() - psi[1].norm_sqr(),
        }
    }
}

/// Express a bare-frame Bloch vector in the frame whose z axis is the tilted
/// Hamiltonian axis `sigma_theta`.
pub fn rotate_frame(b: Bloch, theta: f64) -> Bloch {
    let (s, c) = theta.sin_cos();
    Bloch {
        x: b.x * c - b.z * s,
        y: b.y,
        z: b.z * c + b.x * s,
    }
}

/// Inverse of [`rotate_frame`].
pub fn unrotate_frame(b: Bloch, theta: f64) -> Bloch {
    let (s, c) = theta.sin_cos();
    Bloch {
        x: b.x * c + b.z * s,
        y: b.y,
        z: -b.x * s + b.z * c,
    }
}

/// A qubit state, pure or mixed. Global phase of pure states is irrelevant
/// everywhere; comparisons go through [`QubitState::bloch`] or
/// [`QubitState::density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QubitState {
    Pure(Ket),
    Mixed(Mat2),
}

impl QubitState {
    /// The eigenstate `|1>`.
    pub fn one() -> Self {
        QubitState::Pure(Ket::new(ONE, ZERO))
    }

    /// The eigenstate `|0>`.
    pub fn zero() -> Self {
        QubitState::Pure(Ket::new(ZERO, ONE))
    }

    pub fn eigenstate(outcome: u8) -> Self {
        if outcome == 1 {
            Self::one()
        } else {
            Self::zero()
        }
    }

    pub fn maximally_mixed() -> Self {
        QubitState::Mixed(Bloch::default().to_density())
    }

    /// Pure state from amplitudes of `|1>` and `|0>`; must be normalized.
    pub fn pure(a1: C64, a0: C64) -> Result<Self> {
        let s = QubitState::Pure(Ket::new(a1, a0));
        s.validate()?;
        Ok(s)
    }

    pub fn mixed(rho: Mat2) -> Result<Self> {
        let s = QubitState::Mixed(rho);
        s.validate()?;
        Ok(s)
    }

    pub fn from_bloch(b: Bloch) -> Result<Self> {
        Self::mixed(b.to_density())
    }

    pub fn is_pure_form(&self) -> bool {
        matches!(self, QubitState::Pure(_))
    }

    pub fn density(&self) -> Mat2 {
        match self {
            QubitState::Pure(psi) => psi * psi.adjoint(),
            QubitState::Mixed(rho) => *rho,
        }
    }

    pub fn bloch(&self) -> Bloch {
        match self {
            QubitState::Pure(psi) => Bloch::from_ket(psi),
            QubitState::Mixed(rho) => Bloch::from_density(rho),
        }
    }

    /// Population of `|1>`.
    pub fn p1(&self) -> f64 {
        match self {
            QubitState::Pure(psi) => psi[0].norm_sqr(),
            QubitState::Mixed(rho) => rho[(0, 0)].re,
        }
    }

    pub fn p0(&self) -> f64 {
        match self {
            QubitState::Pure(psi) => psi[1].norm_sqr(),
            QubitState::Mixed(rho) => rho[(1, 1)].re,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QubitState::Pure(psi) => {
                let n = psi.norm_squared();
                if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
                    return Err(Error::ContractViolation(format!("pure state norm^2 = {n}, expected 1")));
                }
            }
            QubitState::Mixed(rho) => {
                let tr = rho.trace();
                if !(tr.re.is_finite() && tr.im.is_finite()) || (tr - ONE).norm() > NORM_TOL {
                    return Err(Error::ContractViolation(format!("trace(rho) = {tr}")));
                }
                let herm = (rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
                if herm > HERMITIAN_TOL {
                    return Err(Error::ContractViolation(format!(
                        "rho not Hermitian (deviation {herm:e})"
                    )));
                }
                let lmin = min_eigenvalue(rho);
                if lmin < -NORM_TOL {
                    return Err(Error::ContractViolation(format!(
                        "rho has negative eigenvalue {lmin:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Restore unit norm (pure) or unit trace (mixed).
    pub fn renormalize(&mut self) {
        match self {
            QubitState::Pure(psi) => {
                let n = psi.norm();
                if n > 0.0 {
                    *psi /= C64::from(n);
                }
            }
            QubitState::Mixed(rho) => {
                let tr = rho.trace().re;
                if tr > 0.0 {
                    *rho /= C64::from(tr);
                }
            }
        }
    }
}

/// Smallest eigenvalue of a Hermitian 2x2 matrix.
pub fn min_eigenvalue(rho: &Mat2) -> f64 {
    let a = rho[(0, 0)].re;
    let d = rho[(1, 1)].re;
    let b = rho[(0, 1)];
    let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    0.5 * (a + d) - half_gap
}

/// Largest deviation of `u^dagger u` from the identity.
pub fn unitarity_defect(u: &Mat2) -> f64 {
    (u.adjoint() * u - Mat2::identity())
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// A 2x2 matrix known to be unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary(Mat2);

impl Unitary {
    pub fn new(m: Mat2) -> Result<Self> {
        let defect = unitarity_defect(&m);
        if !(defect <= NORM_TOL) {
            return Err(Error::ContractViolation(format!(
                "matrix is not unitary (defect {defect:e})"
            )));
        }
        Ok(Unitary(m))
    }

    pub fn identity() -> Self {
        Unitary(Mat2::identity())
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn compose(&self, later: &Unitary) -> Unitary {
        Unitary(later.0 * self.0)
    }

    pub fn apply(&self, state: &QubitState) -> QubitState {
        match state {
            QubitState::Pure(psi) => QubitState::Pure(self.0 * psi),
            QubitState::Mixed(rho) => QubitState::Mixed(self.0 * rho * self.0.adjoint()),
        }
    }
}

/// `exp(-i omega t sigma_theta / 2)`.
pub fn unitary_propagator(params: &ModelParams, t: f64) -> Result<Unitary> {
    params.validate()?;
    if !t.is_finite() {
        return Err(Error::invalid(format!("propagation time must be finite, got {t}")));
    }
    let omega = params.omega();
    if omega == 0.0 {
        return Ok(Unitary::identity());
    }
    let (s, c) = (0.5 * omega * t).sin_cos();
    let (st, ct) = (params.sin_theta(), params.cos_theta());
    // cos(a) I - i sin(a) sigma_theta
    let m = Mat2::new(
        C64::new(c, -s * ct),
        C64::new(0.0, -s * st),
        C64::new(0.0, -s * st),
        C64::new(c, s * ct),
    );
    Ok(Unitary(m))
}

/// Apply an arbitrary matrix that is required to be unitary.
pub fn apply_unitary(state: &QubitState, u: &Mat2) -> Result<QubitState> {
    Ok(Unitary::new(*u)?.apply(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: &Mat2, b: &Mat2) -> f64 {
        (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn theta_is_exactly_half_pi_on_resonance() {
        let p = ModelParams::new(0.7, 0.0, 1.0).unwrap();
        assert_eq!(p.theta(), PI / 2.0);
        let p = ModelParams::new(1.0, 3.0, 1.0).unwrap();
        assert!((p.omega().powi(2) - 10.0).abs() < 1e-12 * 10.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(-1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, -1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.0, 1.0).is_err());
        let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(unitary_propagator(&p, f64::INFINITY).is_err());
    }

    #[test]
    fn zero_time_is_identity() {
        let p = ModelParams::new(1.3, 0.4, 1.0).unwrap();
        let u = unitary_propagator(&p, 0.0).unwrap();
        assert!(close(u.matrix(), &Mat2::identity()) < 1e-15);
    }

    #[test]
    fn half_rabi_period_flips_one_to_minus_i_zero() {
        let p = ModelParams::new(1.0, 0.0, 0.0).unwrap();
        let s = unitary_propagator(&p, PI).unwrap().apply(&QubitState::one());
        let QubitState::Pure(psi) = s else { panic!() };
        assert!(psi[0].norm() < 1e-15);
        assert!((psi[1] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(s.p1() < 1e-30);
    }

    #[test]
    fn full_orbit_is_minus_identity() {
        let p = ModelParams::new(1.0, 3.0, 0.0).unwrap();
        let u = unitary_propagator(&p, 2.0 * PI / p.omega()).unwrap();
        assert!(close(u.matrix(), &(-Mat2::identity())) < 1e-12);
    }

    #[test]
    fn apply_identity_and_bit_flip() {
        let s = QubitState::pure(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        assert_eq!(apply_unitary(&s, &Mat2::identity()).unwrap(), s);
        let flipped = apply_unitary(&QubitState::one(), &sigma_x()).unwrap();
        assert_eq!(flipped.bloch(), QubitState::zero().bloch());
    }

    #[test]
    fn non_unitary_is_rejected() {
        let m = Mat2::identity() * C64::from(1.1);
        assert!(matches!(
            apply_unitary(&QubitState::one(), &m),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn two_quarter_periods_equal_one_half_period() {
        let p = ModelParams::new(1.0, 0.0, 0.0).unwrap();
        let q = unitary_propagator(&p, PI / 2.0).unwrap();
        let h = unitary_propagator(&p, PI).unwrap();
        // compose numerically by explicit product
        let prod = q.matrix() * q.matrix();
        assert!(close(&prod, h.matrix()) < 1e-14);
        let s = QubitState::pure(C64::new(0.8, 0.0), C64::new(0.36, 0.48)).unwrap();
        let a = q.apply(&q.apply(&s)).bloch();
        let b = h.apply(&s).bloch();
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-14);
        assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-14);
        assert_abs_diff_eq!(a.z, b.z, epsilon = 1e-14);
    }

    #[test]
    fn rotate_frame_examples() {
        let b = Bloch::new(0.1, -0.4, 0.7);
        assert_eq!(rotate_frame(b, 0.0), b);
        let r = rotate_frame(b, PI / 2.0);
        assert_abs_diff_eq!(r.x, -0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn tilted_axis_is_z_prime() {
        // the Hamiltonian axis (sin theta, 0, cos theta) maps to z' = 1
        let p = ModelParams::new(1.0, 3.0, 0.0).unwrap();
        let axis = Bloch::new(p.sin_theta(), 0.0, p.cos_theta());
        let r = rotate_frame(axis, p.theta());
        assert_abs_diff_eq!(r.z, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_preserved_over_a_million_steps() {
        let p = ModelParams::new(1.0, 0.3, 0.0).unwrap();
        let u = unitary_propagator(&p, 1e-3).unwrap();
        let mut pure = QubitState::one();
        let mut mixed = QubitState::from_bloch(Bloch::new(0.3, 0.1, 0.5)).unwrap();
        let len0 = mixed.bloch().length();
        for _ in 0..1_000_000 {
            pure = u.apply(&pure);
            mixed = u.apply(&mixed);
        }
        pure.validate().unwrap();
        mixed.validate().unwrap();
        assert!((pure.bloch().length() - 1.0).abs() < BLOCH_TOL);
        assert!((mixed.bloch().length() - len0).abs() < BLOCH_TOL);
    }

    #[test]
    fn mixed_state_validation() {
        assert!(QubitState::from_bloch(Bloch::new(0.0, 0.0, 1.2)).is_err());
        let mut rho = Bloch::new(0.1, 0.2, 0.3).to_density();
        rho[(0, 1)] += C64::new(0.1, 0.0);
        assert!(QubitState::mixed(rho).is_err());
        assert!(QubitState::maximally_mixed().validate().is_ok());
    }

    fn arb_ket() -> impl Strategy<Value = QubitState> {
        (0.0..PI, 0.0..2.0 * PI).prop_map(|(polar, phase)| {
            let a = C64::from((0.5 * polar).cos());
            let b = C64::from_polar((0.5 * polar).sin(), phase);
            QubitState::pure(a, b).unwrap()
        })
    }

    proptest! {
        #[test]
        fn propagator_is_a_one_parameter_group(
            wr in 0.0..5.0f64, d in -5.0..5.0f64, t1 in -10.0..10.0f64, t2 in -10.0..10.0f64,
        ) {
            let p = ModelParams::new(wr, d, 0.0).unwrap();
            let a = unitary_propagator(&p, t1).unwrap();
            let b = unitary_propagator(&p, t2).unwrap();
            let ab = unitary_propagator(&p, t1 + t2).unwrap();
            prop_assert!(close(&(b.matrix() * a.matrix()), ab.matrix()) < 1e-10);
            prop_assert!(unitarity_defect(ab.matrix()) < 1e-12);
        }

        #[test]
        fn unitaries_preserve_bloch_length(s in arb_ket(), wr in 0.0..5.0f64, d in -5.0..5.0f64, t in 0.0..20.0f64) {
            let p = ModelParams::new(wr, d, 0.0).unwrap();
            let out = unitary_propagator(&p, t).unwrap().apply(&s);
            prop_assert!((out.bloch().length() - 1.0).abs() < BLOCH_TOL);
            let m = QubitState::Mixed(s.density());
            let out_m = unitary_propagator(&p, t).unwrap().apply(&m);
            prop_assert!((out_m.bloch().length() - 1.0).abs() < BLOCH_TOL);
        }

        #[test]
        fn rotate_frame_round_trips(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, th in 0.0..PI) {
            let b = Bloch::new(x, y, z);
            let r = unrotate_frame(rotate_frame(b, th), th);
            prop_assert!((r.x - x).abs() < 1e-12 && (r.y - y).abs() < 1e-12 && (r.z - z).abs() < 1e-12);
            prop_assert_eq!(rotate_frame(b, th).y, y);
        }

        #[test]
        fn bloch_length_is_one_iff_pure(s in arb_ket(), shrink in 0.0..0.99f64) {
            prop_assert!((s.bloch().length() - 1.0).abs() < BLOCH_TOL);
            let b = s.bloch();
            let m = QubitState::from_bloch(Bloch::new(b.x * shrink, b.y * shrink, b.z * shrink)).unwrap();
            prop_assert!(m.bloch().norm_sqr() < 1.0 - 1e-9 || shrink > 0.9999);
        }
    }
}

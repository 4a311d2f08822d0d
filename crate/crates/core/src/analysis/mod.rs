//! Rate extraction and regime classification.

pub mod fit;
pub mod heatmap;
pub mod jumps;
pub mod response;

use serde::{Deserialize, Serialize};

use crate::ensemble::gamma0_stabilized;
use crate::error::{Error, Result};
use crate::qubit::{Bloch, Mat2, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    LogLinearFit,
    PeakEnvelopeFit,
    DwellTime,
    Analytic,
}

/// A fitted or computed decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: RateMethod,
    /// Time span of the data that entered the estimate.
    pub fit_window: (f64, f64),
}

impl RateEstimate {
    pub fn analytic(value: f64) -> Self {
        RateEstimate {
            value,
            stderr: 0.0,
            method: RateMethod::Analytic,
            fit_window: (0.0, 0.0),
        }
    }
}

/// `P_1 = (1 + z)/2` for a `(t, z)` series.
pub fn survival_probability(z_series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    z_series
        .iter()
        .map(|&(t, z)| (t, Bloch::new(0.0, 0.0, z).p1()))
        .collect()
}

/// `P_1` read off a density-matrix trajectory.
pub fn survival_from_density(traj: &[(f64, Mat2)]) -> Vec<(f64, f64)> {
    traj.iter()
        .map(|(t, rho)| (*t, Bloch::from_density(rho).p1()))
        .collect()
}

/// Unit-area Lorentzian centred at `center` with half-width `width`.
pub fn lorentzian(omega: f64, center: f64, width: f64) -> f64 {
    width / std::f64::consts::PI / ((omega - center).powi(2) + width * width)
}

/// Overlap of the measurement-broadened drive line with zero frequency,
/// `pi omega_r^2 L(0)` for a Lorentzian at `omega` of half-width `2 gamma`.
pub fn spectral_overlap(model: &ModelParams) -> Result<f64> {
    model.validate()?;
    if !(model.gamma > 0.0) {
        return Err(Error::invalid("spectral overlap needs gamma > 0"));
    }
    let l0 = lorentzian(0.0, model.omega(), 2.0 * model.gamma);
    Ok(std::f64::consts::PI * model.omega_r * model.omega_r * l0)
}

/// Check `spectral_overlap` against the rational rate formula.
pub fn spectral_identity_defect(model: &ModelParams) -> Result<f64> {
    Ok((spectral_overlap(model)? - gamma0_stabilized(model)?).abs())
}

//! `P_1(gamma, t)` matrices for figure-style sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{analytic_solution_orthogonal, evolve_sampled, max_rk4_step, LindbladParams};
use crate::error::{Error, Result};
use crate::pulsed::{analytic_z_pulsed_at, check_grid};
use crate::qubit::{Bloch, ModelParams, QubitState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsSource {
    AnalyticOrthogonal,
    AnalyticPulsed,
    NumericLindblad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub gamma_crit: f64,
    pub gamma_over_crit: Vec<f64>,
    pub times: Vec<f64>,
    /// One row per measurement rate, one column per time.
    pub p1: Vec<Vec<f64>>,
}

fn row(model: &ModelParams, times: &[f64], source: DynamicsSource) -> Result<Vec<f64>> {
    let z: Vec<f64> = match source {
        DynamicsSource::AnalyticOrthogonal => {
            let sol = analytic_solution_orthogonal(model)?;
            times.iter().map(|&t| sol.z_at(t)).collect()
        }
        DynamicsSource::AnalyticPulsed => times
            .iter()
            .map(|&t| analytic_z_pulsed_at(model, t))
            .collect::<Result<_>>()?,
        DynamicsSource::NumericLindblad => {
            let p = LindbladParams::new(*model);
            evolve_sampled(&p, &QubitState::one().density(), times, max_rk4_step(&p))?
                .iter()
                .map(|rho| Bloch::from_density(rho).z)
                .collect()
        }
    };
    Ok(z.into_iter().map(|z| Bloch::new(0.0, 0.0, z).p1()).collect())
}

/// Survival probability from `|1>` for every `(gamma, t)` pair. Rows are
/// computed in parallel and assembled in grid order.
pub fn heatmap_grid(
    model: &ModelParams,
    gamma_grid: &[f64],
    time_grid: &[f64],
    source: DynamicsSource,
) -> Result<Heatmap> {
    model.validate()?;
    check_grid(time_grid)?;
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::invalid("gamma grid must be non-empty and positive"));
    }
    let gc = model.gamma_crit();
    if !(gc > 0.0) {
        return Err(Error::invalid("critical rate is zero; set omega_r or delta"));
    }
    let p1 = gamma_grid
        .par_iter()
        .map(|&g| row(&model.with_gamma(g), time_grid, source))
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap {
        gamma_crit: gc,
        gamma_over_crit: gamma_grid.iter().map(|g| g / gc).collect(),
        times: time_grid.to_vec(),
        p1,
    })
}

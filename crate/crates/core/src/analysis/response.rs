//! Zeno response `R_Z = -d Gamma_mix / d gamma` and critical-rate location.

use serde::{Deserialize, Serialize};

use crate::ensemble::{analytic_solution_orthogonal, gamma_mix_stabilized};
use crate::error::{Error, Result};
use crate::pulsed::gamma_mix_pulsed;
use crate::qubit::ModelParams;

pub const DEFAULT_LABEL_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    AntiZeno,
    Critical,
    Zeno,
}

impl RegimeLabel {
    pub fn from_response(r: f64, eps: f64) -> Self {
        if r.abs() < eps {
            RegimeLabel::Critical
        } else if r < 0.0 {
            RegimeLabel::AntiZeno
        } else {
            RegimeLabel::Zeno
        }
    }
}

/// Where mixing rates come from. Analytic variants take the Hamiltonian
/// from the model and ignore its `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    AnalyticPulsed(ModelParams),
    AnalyticOrthogonal(ModelParams),
    AnalyticStabilized(ModelParams),
    /// Precomputed rates (Monte Carlo or numerical fits), one per grid point.
    Tabulated(Vec<f64>),
}

impl RateSource {
    pub fn name(&self) -> &'static str {
        match self {
            RateSource::AnalyticPulsed(_) => "analytic_pulsed",
            RateSource::AnalyticOrthogonal(_) => "analytic_orthogonal",
            RateSource::AnalyticStabilized(_) => "analytic_stabilized",
            RateSource::Tabulated(_) => "tabulated",
        }
    }

    /// Mixing rate at measurement rate `gamma`, for analytic sources.
    pub fn rate_at(&self, gamma: f64) -> Result<f64> {
        match self {
            RateSource::AnalyticPulsed(m) => gamma_mix_pulsed(&m.with_gamma(gamma)),
            RateSource::AnalyticOrthogonal(m) => Ok(analytic_solution_orthogonal(&m.with_gamma(gamma))?.gamma_mix),
            RateSource::AnalyticStabilized(m) => gamma_mix_stabilized(&m.with_gamma(gamma)),
            RateSource::Tabulated(_) => Err(Error::invalid("tabulated rates have no continuous form")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoResponseCurve {
    pub gamma_grid: Vec<f64>,
    pub gamma_mix_values: Vec<f64>,
    pub response_values: Vec<f64>,
    pub regime_labels: Vec<RegimeLabel>,
    pub source: RateSource,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 grid points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::invalid("gamma grid must be finite and positive"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("gamma grid must be strictly increasing"));
    }
    Ok(())
}

/// `dy/dgamma` on a (typically log-spaced) grid: derivative of the parabola
/// through three neighbouring nodes, centred inside and one-sided at the
/// ends. Exact for `y` quadratic in `gamma`.
pub fn log_grid_derivative(grid: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid)?;
    if values.len() != grid.len() {
        return Err(Error::invalid("values and grid differ in length"));
    }
    let n = grid.len();
    let three = |i0: usize, at: usize| {
        let (x0, x1, x2) = (grid[i0], grid[i0 + 1], grid[i0 + 2]);
        let (y0, y1, y2) = (values[i0], values[i0 + 1], values[i0 + 2]);
        let x = grid[at];
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    Ok((0..n)
        .map(|i| match i {
            0 => three(0, 0),
            i if i == n - 1 => three(n - 3, n - 1),
            i => three(i - 1, i),
        })
        .collect())
}

pub fn zeno_response_scan(gamma_grid: &[f64], source: RateSource) -> Result<ZenoResponseCurve> {
    zeno_response_scan_eps(gamma_grid, source, DEFAULT_LABEL_EPS)
}

pub fn zeno_response_scan_eps(gamma_grid: &[f64], source: RateSource, eps: f64) -> Result<ZenoResponseCurve> {
    check_grid(gamma_grid)?;
    let rates = match &source {
        RateSource::Tabulated(v) => {
            if v.len() != gamma_grid.len() {
                return Err(Error::invalid("tabulated rates and grid differ in length"));
            }
            v.clone()
        }
        s => gamma_grid.iter().map(|&g| s.rate_at(g)).collect::<Result<_>>()?,
    };
    let response: Vec<f64> = log_grid_derivative(gamma_grid, &rates)?
        .into_iter()
        .map(|d| -d)
        .collect();
    let labels = response.iter().map(|&r| RegimeLabel::from_response(r, eps)).collect();
    Ok(ZenoResponseCurve {
        gamma_grid: gamma_grid.to_vec(),
        gamma_mix_values: rates,
        response_values: response,
        regime_labels: labels,
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRate {
    pub value: f64,
    /// Neighbouring grid points enclosing the transition.
    pub bracket: (f64, f64),
}

/// Response from a centred difference in `ln gamma` with relative step `h`.
fn local_response(source: &RateSource, gamma: f64, h: f64) -> Result<f64> {
    let up = source.rate_at(gamma * h.exp())?;
    let dn = source.rate_at(gamma * (-h).exp())?;
    Ok(-(up - dn) / (2.0 * h * gamma))
}

/// First anti-Zeno to Zeno transition of the curve. Analytic sources are
/// refined by bisection on the local response; tabulated ones by linear
/// interpolation of the response in `ln gamma`.
pub fn locate_critical_rate(curve: &ZenoResponseCurve) -> Result<CriticalRate> {
    let labels = &curve.regime_labels;
    let g = &curve.gamma_grid;
    let r = &curve.response_values;
    let mut last_anti: Option<usize> = None;
    let mut found = None;
    for (i, l) in labels.iter().enumerate() {
        match l {
            RegimeLabel::AntiZeno => last_anti = Some(i),
            RegimeLabel::Zeno => {
                if let Some(a) = last_anti {
                    found = Some((a, i));
                    break;
                }
            }
            RegimeLabel::Critical => {}
        }
    }
    let (a, b) = found.ok_or_else(|| Error::NotFound("no anti-Zeno to Zeno transition in the scan".into()))?;
    let bracket = (g[a], g[b]);
    let interpolated = {
        let (ua, ub) = (g[a].ln(), g[b].ln());
        (ua + r[a] / (r[a] - r[b]) * (ub - ua)).exp()
    };
    if let RateSource::Tabulated(_) = curve.source {
        return Ok(CriticalRate {
            value: interpolated,
            bracket,
        });
    }
    let h = 1e-5;
    let mut lo = g[a.saturating_sub(1)];
    let mut hi = g[(b + 1).min(g.len() - 1)];
    let f_lo = local_response(&curve.source, lo, h);
    let f_hi = local_response(&curve.source, hi, h);
    match (f_lo, f_hi) {
        (Ok(x), Ok(y)) if x < 0.0 && y > 0.0 => {}
        _ => {
            lo = g[a];
            hi = g[b];
            match (
                local_response(&curve.source, lo, h),
                local_response(&curve.source, hi, h),
            ) {
                (Ok(x), Ok(y)) if x < 0.0 && y > 0.0 => {}
                _ => {
                    return Ok(CriticalRate {
                        value: interpolated,
                        bracket,
                    })
                }
            }
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        match local_response(&curve.source, mid, h) {
            Ok(v) if v < 0.0 => lo = mid,
            Ok(_) => hi = mid,
            Err(_) => break,
        }
    }
    let value = (lo * hi).sqrt();
    // report the grid cell holding the refined value
    let k = g.partition_point(|&x| x <= value).clamp(1, g.len() - 1);
    Ok(CriticalRate {
        value,
        bracket: (g[k - 1], g[k]),
    })
}

/// `n` points, log-spaced from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn lin_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

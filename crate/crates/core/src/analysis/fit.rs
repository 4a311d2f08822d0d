//! Exponential envelope fits to `(t, z)` series.

use super::{RateEstimate, RateMethod};
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 10;
const NOISE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    /// Least squares on `ln|z|` over the contiguous window after `|z|` first
    /// drops below the upper bound.
    LogLinear,
    /// Least squares on the log of the local maxima of `|z|`.
    PeakEnvelope,
    /// Peak envelope if `z` changes sign at least twice inside the window,
    /// log-linear otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Range of `|z|` admitted to the fit.
    pub window: (f64, f64),
    /// Standard error of each `z` sample. When given, the log-linear fit is
    /// weighted by `(z/stderr)^2` and the reported error uses those weights.
    pub weights: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            window: (0.05, 0.8),
            weights: None,
        }
    }
}

pub fn fit_decay_envelope(series: &[(f64, f64)], method: FitMethod) -> Result<RateEstimate> {
    fit_decay_envelope_opts(series, method, &FitOptions::default())
}

pub fn fit_decay_envelope_opts(series: &[(f64, f64)], method: FitMethod, opts: &FitOptions) -> Result<RateEstimate> {
    let (lo, hi) = opts.window;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::invalid(format!(
            "fit window must satisfy 0 < lo < hi, got {:?}",
            opts.window
        )));
    }
    if series.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {MIN_SAMPLES}",
            series.len()
        )));
    }
    if let Some(w) = &opts.weights {
        if w.len() != series.len() {
            return Err(Error::invalid("weights and series differ in length"));
        }
    }
    if series.iter().any(|(t, z)| !(t.is_finite() && z.is_finite())) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    if series.iter().all(|(_, z)| z.abs() < NOISE_FLOOR) {
        return Err(Error::InsufficientData("all samples below the noise floor".into()));
    }
    match method {
        FitMethod::LogLinear => log_linear(series, lo, hi, opts.weights.as_deref()),
        FitMethod::PeakEnvelope => peak_envelope(series, lo, hi),
        FitMethod::Auto => {
            if sign_changes(series, lo) >= 2 {
                peak_envelope(series, lo, hi)
            } else {
                log_linear(series, lo, hi, opts.weights.as_deref())
            }
        }
    }
}

/// Sign changes between consecutive samples with `|z| >= floor`.
fn sign_changes(series: &[(f64, f64)], floor: f64) -> usize {
    let signs: Vec<bool> = series
        .iter()
        .filter(|(_, z)| z.abs() >= floor)
        .map(|(_, z)| *z > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn log_linear(series: &[(f64, f64)], lo: f64, hi: f64, sd: Option<&[f64]>) -> Result<RateEstimate> {
    let start = series
        .iter()
        .position(|(_, z)| z.abs() <= hi)
        .ok_or_else(|| Error::InsufficientData("|z| never enters the fit window".into()))?;
    let end = series[start..]
        .iter()
        .position(|(_, z)| z.abs() < lo)
        .map_or(series.len(), |k| start + k);
    let mut pts = Vec::new();
    for i in start..end {
        let (t, z) = series[i];
        let a = z.abs();
        if a < lo || a > hi {
            continue;
        }
        let w = match sd {
            Some(sd) => (a / sd[i].max(1e-300)).powi(2),
            None => 1.0,
        };
        pts.push((t, a.ln(), w));
    }
    let (slope, se) = regress(&pts, sd.is_some())?;
    finish(-slope, se, RateMethod::LogLinearFit, &pts)
}

fn peak_envelope(series: &[(f64, f64)], lo: f64, hi: f64) -> Result<RateEstimate> {
    let mut pts = Vec::new();
    for i in 1..series.len() - 1 {
        let (a, b, c) = (series[i - 1].1.abs(), series[i].1.abs(), series[i + 1].1.abs());
        if !(b > a && b >= c) {
            continue;
        }
        // parabola through the three samples
        let curv = a - 2.0 * b + c;
        let (height, shift) = if curv < 0.0 {
            (b - (a - c).powi(2) / (8.0 * curv), 0.5 * (a - c) / curv)
        } else {
            (b, 0.0)
        };
        let h = 0.5 * (series[i + 1].0 - series[i - 1].0);
        let t = series[i].0 + shift * h;
        if (lo..=hi).contains(&height) {
            pts.push((t, height.ln(), 1.0));
        }
    }
    let (slope, se) = regress(&pts, false)?;
    finish(-slope, se, RateMethod::PeakEnvelopeFit, &pts)
}

/// Weighted least-squares slope and its standard error. With `absolute`
/// the weights are inverse variances; otherwise the residual scatter sets
/// the error.
fn regress(pts: &[(f64, f64, f64)], absolute: bool) -> Result<(f64, f64)> {
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable points in the fit window, need 3",
            pts.len()
        )));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("fit window spans zero time".into()));
    }
    let slope = sxy / sxx;
    let se = if absolute {
        (1.0 / sxx).sqrt()
    } else {
        let icpt = ym - slope * xm;
        let ssr: f64 = pts.iter().map(|p| p.2 * (p.1 - icpt - slope * p.0).powi(2)).sum();
        (ssr / (pts.len() - 2) as f64 / sxx).sqrt()
    };
    Ok((slope, se))
}

fn finish(value: f64, stderr: f64, method: RateMethod, pts: &[(f64, f64, f64)]) -> Result<RateEstimate> {
    if !(value >= 0.0) {
        return Err(Error::InsufficientData(format!(
            "series grows inside the fit window (rate {value})"
        )));
    }
    Ok(RateEstimate {
        value,
        stderr,
        method,
        fit_window: (pts[0].0, pts[pts.len() - 1].0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::analytic_solution_orthogonal;
    use crate::qubit::ModelParams;

    fn sample(f: impl Fn(f64) -> f64, t_end: f64, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let t = t_end * i as f64 / n as f64;
                (t, f(t))
            })
            .collect()
    }

    #[test]
    fn pure_exponential() {
        let s = sample(|t| (-0.3 * t).exp(), 20.0, 2000);
        let r = fit_decay_envelope(&s, FitMethod::LogLinear).unwrap();
        assert!((r.value - 0.3).abs() < 1e-6);
        assert_eq!(r.method, RateMethod::LogLinearFit);
        assert!(r.fit_window.0 > 0.7 && r.fit_window.1 < 10.0);
        assert_eq!(
            fit_decay_envelope(&s, FitMethod::Auto).unwrap().method,
            RateMethod::LogLinearFit
        );
    }

    #[test]
    fn damped_cosine_peaks() {
        let s = sample(|t| (10.0 * t).cos() * (-0.7 * t).exp(), 8.0, 8000);
        let r = fit_decay_envelope(&s, FitMethod::PeakEnvelope).unwrap();
        assert!((r.value - 0.7).abs() / 0.7 < 0.02, "{r:?}");
        assert_eq!(
            fit_decay_envelope(&s, FitMethod::Auto).unwrap().method,
            RateMethod::PeakEnvelopeFit
        );
    }

    #[test]
    fn critical_fit_is_biased_low() {
        let s = sample(|t| (-t).exp() * (1.0 + t), 15.0, 3000);
        let r = fit_decay_envelope(&s, FitMethod::LogLinear).unwrap();
        assert!(r.value > 0.5 && r.value < 1.0, "{}", r.value);
    }

    #[test]
    fn overdamped_recovers_slow_eigenrate() {
        for g in [1.5, 2.0, 5.0, 20.0] {
            let sol = analytic_solution_orthogonal(&ModelParams::new(1.0, 0.0, g).unwrap()).unwrap();
            let t_end = 5.0 / sol.gamma_minus;
            let s = sample(|t| sol.z_at(t), t_end, 5000);
            let r = fit_decay_envelope(&s, FitMethod::Auto).unwrap();
            let rel = (r.value - sol.gamma_minus).abs() / sol.gamma_minus;
            assert!(rel < 0.01, "g={g}: {} vs {} ({rel})", r.value, sol.gamma_minus);
        }
    }

    #[test]
    fn insufficient_data() {
        let short = sample(|t| (-t).exp(), 1.0, 5);
        assert!(matches!(
            fit_decay_envelope(&short, FitMethod::LogLinear),
            Err(Error::InsufficientData(_))
        ));
        let flat = sample(|_| 1e-4, 1.0, 50);
        assert!(matches!(
            fit_decay_envelope(&flat, FitMethod::LogLinear),
            Err(Error::InsufficientData(_))
        ));
        // window skipped in one step
        let jump: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, if i < 10 { 1.0 } else { 0.01 })).collect();
        assert!(matches!(
            fit_decay_envelope(&jump, FitMethod::LogLinear),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn weighted_fit_reports_inverse_variance_error() {
        let s = sample(|t| (-0.5 * t).exp(), 10.0, 100);
        let opts = FitOptions {
            weights: Some(vec![0.01; s.len()]),
            ..FitOptions::default()
        };
        let r = fit_decay_envelope_opts(&s, FitMethod::LogLinear, &opts).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9);
        assert!(r.stderr > 0.0 && r.stderr < 0.05);
    }
}

//! Run configuration: a flat `key = value` text format plus overrides.
//!
//! Rates are in units of `omega_r` (default 1) and times in its inverse,
//! unless a `time_unit` key names another unit. In that case every number
//! is read in that unit (rates per unit time) and the label is carried into
//! the outputs; no conversion is applied.
//!
//! ```text
//! # comment
//! mode = ensemble_ode
//! omega_r = 1
//! delta = 0
//! gamma = 2
//! t_final = 10
//! dt = 0.001
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::heatmap::DynamicsSource;
use crate::analysis::jumps::{DEFAULT_HI, DEFAULT_LO};
use crate::analysis::response::{lin_grid, log_grid};
use crate::ensemble::T1Direction;
use crate::error::{Error, Result};
use crate::qubit::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PulsedTraj,
    ContinuousTraj,
    EnsembleOde,
    PoissonEnsemble,
    SweepHeatmap,
    RatesScan,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "pulsed_traj" => Mode::PulsedTraj,
            "continuous_traj" => Mode::ContinuousTraj,
            "ensemble_ode" => Mode::EnsembleOde,
            "poisson_ensemble" => Mode::PoissonEnsemble,
            "sweep_heatmap" => Mode::SweepHeatmap,
            "rates_scan" => Mode::RatesScan,
            _ => return Err(format!("unknown mode `{s}`")),
        })
    }
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::PulsedTraj => "pulsed_traj",
            Mode::ContinuousTraj => "continuous_traj",
            Mode::EnsembleOde => "ensemble_ode",
            Mode::PoissonEnsemble => "poisson_ensemble",
            Mode::SweepHeatmap => "sweep_heatmap",
            Mode::RatesScan => "rates_scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    Log,
    Lin,
}

/// `log:a:b:n` or `lin:a:b:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub scale: GridScale,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self.scale {
            GridScale::Log => log_grid(self.start, self.stop, self.count),
            GridScale::Lin => lin_grid(self.start, self.stop, self.count),
        }
    }
}

impl FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [scale, a, b, n] = parts[..] else {
            return Err(format!("grid spec `{s}` is not scale:start:stop:count"));
        };
        let scale = match scale {
            "log" => GridScale::Log,
            "lin" => GridScale::Lin,
            _ => return Err(format!("grid scale `{scale}` is not log or lin")),
        };
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
        let (start, stop) = (num(a)?, num(b)?);
        let count: usize = n.parse().map_err(|_| format!("`{n}` is not a point count"))?;
        if !(start.is_finite() && stop.is_finite() && start < stop) {
            return Err(format!("grid needs start < stop, got {start} and {stop}"));
        }
        if count < 2 {
            return Err(format!("grid needs at least 2 points, got {count}"));
        }
        if scale == GridScale::Log && !(start > 0.0) {
            return Err("log grid needs start > 0".into());
        }
        Ok(GridSpec {
            scale,
            start,
            stop,
            count,
        })
    }
}

/// Where `rates_scan` takes its mixing rates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSource {
    AnalyticPulsed,
    AnalyticOrthogonal,
    AnalyticStabilized,
    /// Envelope fits to RK4 solutions of the master equation.
    LindbladFit,
}

impl FromStr for ScanSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "analytic_pulsed" => ScanSource::AnalyticPulsed,
            "analytic_orthogonal" => ScanSource::AnalyticOrthogonal,
            "analytic_stabilized" => ScanSource::AnalyticStabilized,
            "lindblad_fit" => ScanSource::LindbladFit,
            _ => return Err(format!("unknown rate source `{s}`")),
        })
    }
}

fn parse_dynamics(s: &str) -> std::result::Result<DynamicsSource, String> {
    Ok(match s {
        "analytic_orthogonal" => DynamicsSource::AnalyticOrthogonal,
        "analytic_pulsed" => DynamicsSource::AnalyticPulsed,
        "numeric_lindblad" => DynamicsSource::NumericLindblad,
        _ => return Err(format!("unknown dynamics source `{s}`")),
    })
}

fn parse_t1(s: &str) -> std::result::Result<T1Direction, String> {
    match s {
        "toward_0" | "toward_state0" => Ok(T1Direction::TowardState0),
        "toward_1" | "toward_state1" => Ok(T1Direction::TowardState1),
        _ => Err(format!("unknown t1 direction `{s}` (toward_0 or toward_1)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub omega_r: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    /// Measurement rates relative to the critical rate.
    pub gamma_grid: Option<GridSpec>,
    pub t_final: f64,
    /// Integration step; module defaults when absent.
    pub dt: Option<f64>,
    /// Output time points on `[0, t_final]`.
    pub samples: Option<usize>,
    pub ensemble_size: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub workers: Option<usize>,
    pub gamma_one: f64,
    pub t1_direction: T1Direction,
    pub filter_tau: Option<f64>,
    pub time_unit: Option<String>,
    pub rate_source: ScanSource,
    pub dynamics: DynamicsSource,
    /// Jump detector levels `(hi, lo)` in `z`.
    pub thresholds: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            omega_r: 1.0,
            delta: 0.0,
            gamma: None,
            gamma_grid: None,
            t_final: 10.0,
            dt: None,
            samples: None,
            ensemble_size: 1,
            seed: 0,
            out: None,
            format: OutputFormat::Csv,
            workers: None,
            gamma_one: 0.0,
            t1_direction: T1Direction::TowardState0,
            filter_tau: None,
            time_unit: None,
            rate_source: ScanSource::AnalyticStabilized,
            dynamics: DynamicsSource::NumericLindblad,
            thresholds: (DEFAULT_HI, DEFAULT_LO),
        }
    }
}

pub const KEYS: &[&str] = &[
    "mode",
    "omega_r",
    "delta",
    "gamma",
    "gamma_grid",
    "t_final",
    "dt",
    "samples",
    "ensemble_size",
    "seed",
    "out",
    "format",
    "workers",
    "gamma_one",
    "t1_direction",
    "filter_tau",
    "time_unit",
    "rate_source",
    "dynamics",
    "thresholds",
];

fn perr(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| perr(line, key, format!("`{v}` is not a valid number")))
}

fn rate(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(perr(line, key, format!("must be finite and >= 0, got {x}")));
    }
    Ok(x)
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = num(line, key, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(perr(line, key, format!("must be finite and > 0, got {x}")));
    }
    Ok(x)
}

fn parsed<T>(line: usize, key: &str, r: std::result::Result<T, String>) -> Result<T> {
    r.map_err(|m| perr(line, key, m))
}

impl RunConfig {
    /// Set one key. `line` is reported in errors (0 for command-line flags).
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        match key {
            "mode" => self.mode = Some(parsed(line, key, v.parse())?),
            "omega_r" => self.omega_r = rate(line, key, v)?,
            "delta" => {
                let d: f64 = num(line, key, v)?;
                if !d.is_finite() {
                    return Err(perr(line, key, "must be finite"));
                }
                self.delta = d;
            }
            "gamma" => self.gamma = Some(rate(line, key, v)?),
            "gamma_grid" => self.gamma_grid = Some(parsed(line, key, v.parse())?),
            "t_final" => self.t_final = rate(line, key, v)?,
            "dt" => self.dt = Some(positive(line, key, v)?),
            "samples" => {
                let n: usize = num(line, key, v)?;
                if n < 2 {
                    return Err(perr(line, key, "need at least 2 samples"));
                }
                self.samples = Some(n);
            }
            "ensemble_size" => {
                let m: usize = num(line, key, v)?;
                if m < 1 {
                    return Err(perr(line, key, "ensemble size must be >= 1"));
                }
                self.ensemble_size = m;
            }
            "seed" => self.seed = num(line, key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "format" => self.format = parsed(line, key, v.parse())?,
            "workers" => {
                let w: usize = num(line, key, v)?;
                if w < 1 {
                    return Err(perr(line, key, "worker count must be >= 1"));
                }
                self.workers = Some(w);
            }
            "gamma_one" => self.gamma_one = rate(line, key, v)?,
            "t1_direction" => self.t1_direction = parsed(line, key, parse_t1(v))?,
            "filter_tau" => self.filter_tau = Some(positive(line, key, v)?),
            "time_unit" => {
                if v.is_empty() {
                    return Err(perr(line, key, "empty unit"));
                }
                self.time_unit = Some(v.to_string());
            }
            "rate_source" => self.rate_source = parsed(line, key, v.parse())?,
            "dynamics" => self.dynamics = parsed(line, key, parse_dynamics(v))?,
            "thresholds" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                let [hi, lo] = parts[..] else {
                    return Err(perr(line, key, "expected `hi,lo`"));
                };
                let (hi, lo): (f64, f64) = (num(line, key, hi)?, num(line, key, lo)?);
                if !(-1.0 < lo && lo < hi && hi < 1.0) {
                    return Err(perr(line, key, "need -1 < lo < hi < 1"));
                }
                self.thresholds = (hi, lo);
            }
            _ => return Err(perr(line, key, "unknown key")),
        }
        Ok(())
    }

    /// Apply a `key = value` document on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(perr(line, content, "expected `key = value`"));
            };
            self.set(line, k.trim(), v)?;
        }
        Ok(())
    }

    /// Apply a `key=value` command-line override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(perr(0, kv, "override must be `key=value`"));
        };
        self.set(0, k.trim(), v)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Model parameters with the single measurement rate.
    pub fn model(&self) -> Result<ModelParams> {
        let gamma = self
            .gamma
            .ok_or_else(|| Error::Configuration(format!("{} needs `gamma`", self.mode_name())))?;
        ModelParams::new(self.omega_r, self.delta, gamma)
    }

    /// Hamiltonian-only parameters for grid modes.
    pub fn model_without_gamma(&self) -> Result<ModelParams> {
        ModelParams::new(self.omega_r, self.delta, 0.0)
    }

    pub fn mode_name(&self) -> &'static str {
        self.mode.map_or("run", |m| m.name())
    }

    /// Uniform output grid on `[0, t_final]`.
    pub fn time_grid(&self, default_samples: usize) -> Vec<f64> {
        lin_grid(0.0, self.t_final, self.samples.unwrap_or(default_samples))
    }

    /// Cross-key checks that need the mode.
    pub fn validate(&self) -> Result<()> {
        let mode = self
            .mode
            .ok_or_else(|| Error::Configuration("no `mode` given".into()))?;
        match mode {
            Mode::SweepHeatmap | Mode::RatesScan => {
                if self.gamma_grid.is_none() {
                    return Err(Error::Configuration(format!("{} needs `gamma_grid`", mode.name())));
                }
                self.model_without_gamma()?;
            }
            _ => {
                self.model()?;
            }
        }
        if mode == Mode::RatesScan && self.gamma_grid.is_some_and(|g| g.count < 3) {
            return Err(Error::Configuration("rates_scan needs at least 3 grid points".into()));
        }
        if matches!(mode, Mode::PulsedTraj) && self.gamma == Some(0.0) {
            return Err(Error::Configuration("pulsed_traj needs gamma > 0".into()));
        }
        if !(self.t_final > 0.0) && !matches!(mode, Mode::RatesScan) {
            return Err(Error::Configuration("t_final must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse("mode=ensemble_ode\nomega_r=1\ndelta=0\ngamma=2\nt_final=10\ndt=0.001\n").unwrap();
        assert_eq!(c.mode, Some(Mode::EnsembleOde));
        assert_eq!(c.gamma, Some(2.0));
        assert_eq!(c.dt, Some(0.001));
        c.validate().unwrap();
    }

    #[test]
    fn comments_spaces_and_quotes() {
        let c =
            RunConfig::parse("# header\n\n  mode = pulsed_traj   # trailing\nout = \"a b.csv\"\ngamma=1\n").unwrap();
        assert_eq!(c.mode, Some(Mode::PulsedTraj));
        assert_eq!(c.out, Some(PathBuf::from("a b.csv")));
    }

    #[test]
    fn grid_spec() {
        let c = RunConfig::parse("gamma_grid = log:0.05:20:100").unwrap();
        let g = c.gamma_grid.unwrap();
        let p = g.points();
        assert_eq!(p.len(), 100);
        assert!((p[0] - 0.05).abs() < 1e-15 && (p[99] - 20.0).abs() < 1e-12);
        let r = p[1] / p[0];
        assert!(p.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
        for bad in ["log:1:0.5:10", "lin:0:1:1", "log:0:1:5", "cube:1:2:3", "log:1:2"] {
            assert!(
                matches!(RunConfig::parse(&format!("gamma_grid={bad}")), Err(Error::Parse { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn errors_name_key_and_line() {
        match RunConfig::parse("mode=ensemble_ode\ngamma = -1\n") {
            Err(Error::Parse { line, key, .. }) => assert_eq!((line, key.as_str()), (2, "gamma")),
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("omega_r = 1\ncolour = blue\n") {
            Err(Error::Parse { line, key, message }) => {
                assert_eq!((line, key.as_str()), (2, "colour"));
                assert!(message.contains("unknown"));
            }
            other => panic!("{other:?}"),
        }
        match RunConfig::parse("dt = 1e-3x") {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("just words"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("ensemble_size = 0"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            RunConfig::parse("thresholds = 0.5,0.8"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::parse("gamma = 2\nseed = 5").unwrap();
        c.apply_override("gamma=3").unwrap();
        c.apply_override("seed = 9").unwrap();
        assert_eq!((c.gamma, c.seed), (Some(3.0), 9));
        assert!(matches!(c.apply_override("gamma"), Err(Error::Parse { line: 0, .. })));
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("mode", "rates_scan"),
            ("omega_r", "1"),
            ("delta", "-3"),
            ("gamma", "0.5"),
            ("gamma_grid", "lin:0.1:2:5"),
            ("t_final", "4"),
            ("dt", "0.01"),
            ("samples", "11"),
            ("ensemble_size", "4"),
            ("seed", "18446744073709551615"),
            ("out", "x.csv"),
            ("format", "json"),
            ("workers", "2"),
            ("gamma_one", "0.1"),
            ("t1_direction", "toward_1"),
            ("filter_tau", "0.2"),
            ("time_unit", "us"),
            ("rate_source", "lindblad_fit"),
            ("dynamics", "analytic_pulsed"),
            ("thresholds", "0.7,-0.6"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut c = RunConfig::default();
        for (k, v) in samples {
            assert!(KEYS.contains(&k));
            c.set(1, k, v).unwrap();
        }
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.thresholds, (0.7, -0.6));
        c.validate().unwrap();
    }

    #[test]
    fn validation_needs_mode_and_rates() {
        assert!(matches!(
            RunConfig::parse("gamma=1").unwrap().validate(),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            RunConfig::parse("mode=ensemble_ode").unwrap().validate(),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            RunConfig::parse("mode=sweep_heatmap").unwrap().validate(),
            Err(Error::Configuration(_))
        ));
        assert!(RunConfig::parse("mode=sweep_heatmap\ngamma_grid=log:0.1:10:5")
            .unwrap()
            .validate()
            .is_ok());
    }
}

//! Dispatch of a validated [`RunConfig`] to the simulation modules.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::heatmap::heatmap_grid;
use crate::analysis::jumps::count_jumps;
use crate::analysis::response::{locate_critical_rate, zeno_response_scan, RateSource, RegimeLabel};
use crate::config::{Mode, OutputFormat, RunConfig, ScanSource};
use crate::continuous::{
    continuous_ensemble, default_dt, filter_readouts, step_count, strided_times, ContinuousStepper,
};
use crate::ensemble::{
    evolve_sampled, fit_lindblad_rate, max_rk4_step, poisson_ensemble, sample_poisson_trajectory, LindbladParams,
};
use crate::error::{Error, Result};
use crate::output::{self, Meta, RateTable, Series};
use crate::pulsed::{pulse_index, pulsed_ensemble, PulsedStepper};
use crate::qubit::{Bloch, ModelParams, QubitState};
use crate::stats::{with_workers, EnsembleResult};

const DEFAULT_SAMPLES: usize = 201;
const DEFAULT_CONTINUOUS_SAMPLES: usize = 1001;

/// What a run produced, for the one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub trajectories: usize,
    pub wall_seconds: f64,
    pub out: Option<PathBuf>,
    /// Mode-specific key figures, `name=value`.
    pub notes: Vec<String>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let out = self
            .out
            .as_ref()
            .map_or("<stdout>".to_string(), |p| p.display().to_string());
        let mut s = format!(
            "mode={} M={} wall={:.3}s out={}",
            self.mode.name(),
            self.trajectories,
            self.wall_seconds,
            out
        );
        for n in &self.notes {
            s.push(' ');
            s.push_str(n);
        }
        s
    }
}

enum Payload {
    Series(Series),
    Matrix(crate::analysis::heatmap::Heatmap),
    Rates(RateTable),
}

struct Produced {
    payload: Payload,
    trajectories: usize,
    notes: Vec<String>,
}

/// Run the configuration and return the rendered output without writing it.
pub fn render(cfg: &RunConfig) -> Result<(String, RunSummary)> {
    cfg.validate()?;
    let mode = cfg.mode.expect("validated");
    let start = Instant::now();
    let produced = with_workers(cfg.workers, || produce(cfg, mode))?;
    let meta = Meta {
        seed: cfg.seed,
        mode: mode.name().to_string(),
        time_unit: cfg.time_unit.clone(),
        config: serde_json::to_value(cfg).map_err(|e| Error::DataIntegrity(e.to_string()))?,
    };
    let text = match (&produced.payload, cfg.format) {
        (Payload::Series(s), OutputFormat::Csv) => output::series_csv(s, &meta)?,
        (Payload::Series(s), OutputFormat::Json) => output::series_json(s, &meta)?,
        (Payload::Matrix(h), OutputFormat::Csv) => output::matrix_csv(h, &meta)?,
        (Payload::Matrix(h), OutputFormat::Json) => output::matrix_json(h, &meta)?,
        (Payload::Rates(t), OutputFormat::Csv) => output::rates_csv(t, &meta)?,
        (Payload::Rates(t), OutputFormat::Json) => output::rates_json(t, &meta)?,
    };
    let summary = RunSummary {
        mode,
        trajectories: produced.trajectories,
        wall_seconds: start.elapsed().as_secs_f64(),
        out: cfg.out.clone(),
        notes: produced.notes,
    };
    Ok((text, summary))
}

/// Run the configuration and write its output (stdout when `out` is unset).
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let (text, summary) = render(cfg)?;
    output::emit(&text, cfg.out.as_deref())?;
    Ok(summary)
}

fn no_t1(cfg: &RunConfig) -> Result<()> {
    if cfg.gamma_one != 0.0 {
        return Err(Error::Configuration(format!(
            "gamma_one is only supported by ensemble_ode and rates_scan with lindblad_fit, not {}",
            cfg.mode_name()
        )));
    }
    Ok(())
}

fn produce(cfg: &RunConfig, mode: Mode) -> Result<Produced> {
    match mode {
        Mode::PulsedTraj => pulsed(cfg),
        Mode::ContinuousTraj => continuous(cfg),
        Mode::EnsembleOde => ensemble_ode(cfg),
        Mode::PoissonEnsemble => poisson(cfg),
        Mode::SweepHeatmap => sweep(cfg),
        Mode::RatesScan => rates(cfg),
    }
}

fn from_blochs(times: Vec<f64>, states: &[Bloch]) -> Series {
    Series {
        x: states.iter().map(|b| b.x).collect(),
        y: states.iter().map(|b| b.y).collect(),
        z: states.iter().map(|b| b.z).collect(),
        p1: states.iter().map(|b| b.p1()).collect(),
        t: times,
        ..Series::default()
    }
}

fn from_ensemble(e: EnsembleResult) -> Series {
    Series {
        t: e.times,
        x: e.x,
        y: e.y,
        z: e.z,
        p1: e.p1,
        x_err: Some(e.x_err),
        y_err: Some(e.y_err),
        z_err: Some(e.z_err),
        ..Series::default()
    }
}

fn jump_note(cfg: &RunConfig, s: &Series) -> Result<String> {
    let (hi, lo) = cfg.thresholds;
    let c = count_jumps(&s.t, &s.z, hi, lo)?;
    let time = c.time_high + c.time_low;
    let rate = if time > 0.0 { c.total() as f64 / time } else { 0.0 };
    Ok(format!("jumps={} jump_rate={rate:.6e}", c.total()))
}

/// Uniform spacing of a grid, for the display filter.
fn spacing(times: &[f64]) -> f64 {
    if times.len() < 2 {
        1.0
    } else {
        (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
    }
}

/// Single pulsed trajectory on a grid with the most recent readout mapped
/// to `+-1`; the outcome before the first pulse counts as 1. The Bloch
/// samples equal `sample_pulsed_trajectory` for the same seed.
pub fn pulsed_single(model: &ModelParams, times: &[f64], seed: u64) -> Result<(Vec<Bloch>, Vec<f64>)> {
    let mut stepper = PulsedStepper::new(model, QubitState::one(), seed)?;
    let dt = 1.0 / model.gamma;
    let mut last = 1u8;
    let mut states = Vec::with_capacity(times.len());
    let mut readouts = Vec::with_capacity(times.len());
    for &t in times {
        let (n, since) = pulse_index(t, dt);
        while stepper.pulses() < n {
            last = stepper.pulse();
        }
        states.push(stepper.state_after(since)?.bloch());
        readouts.push(2.0 * last as f64 - 1.0);
    }
    Ok((states, readouts))
}

fn pulsed(cfg: &RunConfig) -> Result<Produced> {
    no_t1(cfg)?;
    let model = cfg.model()?;
    let times = match cfg.samples {
        Some(_) => cfg.time_grid(DEFAULT_SAMPLES),
        None => {
            let n = (cfg.t_final * model.gamma + 1e-9).floor() as usize;
            (0..=n).map(|k| k as f64 / model.gamma).collect()
        }
    };
    let m = cfg.ensemble_size;
    if m == 1 {
        let (states, raw) = pulsed_single(&model, &times, cfg.seed)?;
        let tau = cfg.filter_tau.unwrap_or(5.0 / model.gamma);
        let mut s = from_blochs(times, &states);
        s.r_filtered = Some(filter_readouts(&raw, spacing(&s.t), tau));
        s.r_raw = Some(raw);
        let notes = vec![jump_note(cfg, &s)?];
        return Ok(Produced {
            payload: Payload::Series(s),
            trajectories: 1,
            notes,
        });
    }
    let e = pulsed_ensemble(&model, &QubitState::one(), &times, m, cfg.seed)?;
    Ok(Produced {
        notes: vec![format!("final_p1={:.6e}", e.p1.last().copied().unwrap_or(f64::NAN))],
        payload: Payload::Series(from_ensemble(e)),
        trajectories: m,
    })
}

/// Single diffusive trajectory every `stride` steps with the last readout
/// of each stride and its exponential filter; both are 0 at `t = 0`. The
/// Bloch samples equal `sample_continuous_trajectory` for the same seed.
pub fn continuous_single(
    model: &ModelParams,
    dt: f64,
    n_steps: u64,
    stride: u64,
    tau: f64,
    seed: u64,
) -> Result<(Vec<Bloch>, Vec<f64>, Vec<f64>)> {
    let stride = stride.max(1);
    let initial = QubitState::one();
    let mut stepper = ContinuousStepper::new(model, dt, initial, seed)?;
    let alpha = -(-dt / tau).exp_m1();
    let cap = (n_steps / stride + 1) as usize;
    let (mut states, mut raw, mut filt) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    states.push(initial.bloch());
    raw.push(0.0);
    filt.push(0.0);
    let mut y: Option<f64> = None;
    for i in 1..=n_steps {
        let (r, _) = stepper.advance()?;
        let f = match y {
            None => r.value,
            Some(prev) => prev + alpha * (r.value - prev),
        };
        y = Some(f);
        if i % stride == 0 {
            states.push(stepper.state().bloch());
            raw.push(r.value);
            filt.push(f);
        }
    }
    Ok((states, raw, filt))
}

fn continuous(cfg: &RunConfig) -> Result<Produced> {
    no_t1(cfg)?;
    let model = cfg.model()?;
    let dt = cfg.dt.unwrap_or_else(|| default_dt(&model));
    let n_steps = step_count(cfg.t_final, dt)?;
    let samples = cfg.samples.unwrap_or(DEFAULT_CONTINUOUS_SAMPLES) as u64;
    let stride = (n_steps / (samples - 1).max(1)).max(1);
    let m = cfg.ensemble_size;
    if m == 1 {
        let tau = match cfg.filter_tau {
            Some(t) => t,
            None if model.gamma > 0.0 => 1.0 / model.gamma,
            None => 10.0 * dt,
        };
        let (states, raw, filt) = continuous_single(&model, dt, n_steps, stride, tau, cfg.seed)?;
        let mut s = from_blochs(strided_times(dt, n_steps, stride), &states);
        s.r_raw = Some(raw);
        s.r_filtered = Some(filt);
        let notes = vec![format!("dt={dt:e} steps={n_steps}"), jump_note(cfg, &s)?];
        return Ok(Produced {
            payload: Payload::Series(s),
            trajectories: 1,
            notes,
        });
    }
    let e = continuous_ensemble(&model, &QubitState::one(), dt, cfg.t_final, stride, m, cfg.seed)?;
    Ok(Produced {
        notes: vec![
            format!("dt={dt:e} steps={n_steps}"),
            format!("final_p1={:.6e}", e.p1.last().copied().unwrap_or(f64::NAN)),
        ],
        payload: Payload::Series(from_ensemble(e)),
        trajectories: m,
    })
}

fn ensemble_ode(cfg: &RunConfig) -> Result<Produced> {
    let p = LindbladParams::with_t1(cfg.model()?, cfg.gamma_one, cfg.t1_direction)?;
    let times = cfg.time_grid(DEFAULT_SAMPLES);
    let dt = cfg.dt.unwrap_or_else(|| max_rk4_step(&p));
    let rhos = evolve_sampled(&p, &QubitState::one().density(), &times, dt)?;
    let states: Vec<Bloch> = rhos.iter().map(Bloch::from_density).collect();
    let s = from_blochs(times, &states);
    Ok(Produced {
        notes: vec![format!("final_p1={:.6e}", s.p1.last().copied().unwrap_or(f64::NAN))],
        payload: Payload::Series(s),
        trajectories: 1,
    })
}

fn poisson(cfg: &RunConfig) -> Result<Produced> {
    no_t1(cfg)?;
    let model = cfg.model()?;
    let times = cfg.time_grid(DEFAULT_SAMPLES);
    let m = cfg.ensemble_size;
    let s = if m == 1 {
        from_blochs(times.clone(), &sample_poisson_trajectory(&model, &times, cfg.seed)?)
    } else {
        from_ensemble(poisson_ensemble(&model, &times, m, cfg.seed)?)
    };
    Ok(Produced {
        notes: vec![format!("final_p1={:.6e}", s.p1.last().copied().unwrap_or(f64::NAN))],
        payload: Payload::Series(s),
        trajectories: m,
    })
}

fn sweep(cfg: &RunConfig) -> Result<Produced> {
    no_t1(cfg)?;
    let model = cfg.model_without_gamma()?;
    let gc = model.gamma_crit();
    let grid: Vec<f64> = cfg
        .gamma_grid
        .expect("validated")
        .points()
        .iter()
        .map(|s| s * gc)
        .collect();
    let times = cfg.time_grid(DEFAULT_SAMPLES);
    let h = heatmap_grid(&model, &grid, &times, cfg.dynamics)?;
    Ok(Produced {
        notes: vec![format!(
            "gamma_crit={gc:.6e} rows={} cols={}",
            h.p1.len(),
            h.times.len()
        )],
        payload: Payload::Matrix(h),
        trajectories: 0,
    })
}

fn rates(cfg: &RunConfig) -> Result<Produced> {
    let model = cfg.model_without_gamma()?;
    let gc = model.gamma_crit();
    if !(gc > 0.0) {
        return Err(Error::Configuration(
            "critical rate is zero; set omega_r or delta".into(),
        ));
    }
    let rel = cfg.gamma_grid.expect("validated").points();
    let grid: Vec<f64> = rel.iter().map(|s| s * gc).collect();
    let source = match cfg.rate_source {
        ScanSource::AnalyticPulsed => RateSource::AnalyticPulsed(model),
        ScanSource::AnalyticOrthogonal => RateSource::AnalyticOrthogonal(model),
        ScanSource::AnalyticStabilized => RateSource::AnalyticStabilized(model),
        ScanSource::LindbladFit => {
            let rates = grid
                .par_iter()
                .map(|&g| {
                    let p = LindbladParams::with_t1(model.with_gamma(g), cfg.gamma_one, cfg.t1_direction)?;
                    fit_lindblad_rate(&p, cfg.dt).map(|r| r.value)
                })
                .collect::<Result<Vec<f64>>>()?;
            RateSource::Tabulated(rates)
        }
    };
    if cfg.gamma_one != 0.0 && cfg.rate_source != ScanSource::LindbladFit {
        return Err(Error::Configuration(
            "gamma_one needs rate_source = lindblad_fit".into(),
        ));
    }
    let curve = zeno_response_scan(&grid, source)?;
    let critical = match locate_critical_rate(&curve) {
        Ok(c) => Some(c.value),
        Err(Error::NotFound(_)) => None,
        Err(e) => return Err(e),
    };
    let label = |l: &RegimeLabel| match l {
        RegimeLabel::AntiZeno => "anti_zeno",
        RegimeLabel::Critical => "critical",
        RegimeLabel::Zeno => "zeno",
    };
    let note = match critical {
        Some(c) => format!("critical_rate={c:.6e} (gamma_crit={gc:.6e})"),
        None => "critical_rate=none".to_string(),
    };
    Ok(Produced {
        payload: Payload::Rates(RateTable {
            gamma_over_crit: rel,
            regime: curve.regime_labels.iter().map(|l| label(l).to_string()).collect(),
            gamma: curve.gamma_grid,
            gamma_mix: curve.gamma_mix_values,
            response: curve.response_values,
            critical_rate: critical,
        }),
        trajectories: 0,
        notes: vec![note],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::sample_continuous_trajectory;
    use crate::ensemble::analytic_solution_orthogonal;
    use crate::output::parse_csv;
    use crate::pulsed::sample_pulsed_trajectory;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    #[test]
    fn single_runs_match_library_samplers() {
        let m = ModelParams::new(1.0, 0.5, 2.0).unwrap();
        let times: Vec<f64> = (0..40).map(|i| 0.13 * i as f64).collect();
        let (a, r) = pulsed_single(&m, &times, 77).unwrap();
        assert_eq!(a, sample_pulsed_trajectory(&m, &QubitState::one(), &times, 77).unwrap());
        assert!(r.iter().all(|v| *v == 1.0 || *v == -1.0));
        let (b, raw, filt) = continuous_single(&m, 0.01, 500, 7, 0.5, 5).unwrap();
        assert_eq!(
            b,
            sample_continuous_trajectory(&m, &QubitState::one(), 0.01, 500, 7, 5).unwrap()
        );
        assert_eq!((raw.len(), filt.len()), (b.len(), b.len()));
    }

    #[test]
    fn ensemble_ode_final_row_matches_closed_form() {
        let c = cfg("mode=ensemble_ode\nomega_r=1\ndelta=0\ngamma=2\nt_final=10\ndt=0.001\n");
        let (text, summary) = render(&c).unwrap();
        assert_eq!(summary.mode, Mode::EnsembleOde);
        let p = parse_csv(&text).unwrap();
        assert_eq!(p.header, ["t", "x", "y", "z", "p1"]);
        let last = p.rows.last().unwrap();
        assert_eq!(last[0], 10.0);
        let z = analytic_solution_orthogonal(&ModelParams::new(1.0, 0.0, 2.0).unwrap())
            .unwrap()
            .z_at(10.0);
        assert!(
            (last[4] - 0.5 * (1.0 + z)).abs() < 1e-6,
            "{} vs {}",
            last[4],
            0.5 * (1.0 + z)
        );
    }

    #[test]
    fn renders_are_deterministic_across_workers() {
        for text in [
            "mode=pulsed_traj\ngamma=3\nt_final=5\nensemble_size=300\nseed=4",
            "mode=continuous_traj\ngamma=1\nt_final=2\nensemble_size=40\nseed=4\nsamples=21",
            "mode=poisson_ensemble\ngamma=2\nt_final=3\nensemble_size=300\nseed=4",
        ] {
            let mut a = cfg(text);
            a.workers = Some(1);
            let mut b = a.clone();
            b.workers = Some(3);
            let (ta, _) = render(&a).unwrap();
            let (tb, _) = render(&b).unwrap();
            assert_eq!(ta, tb, "{text}");
        }
    }

    #[test]
    fn rates_scan_finds_both_critical_rates() {
        let critical = |s: &RunSummary| -> f64 {
            s.notes[0].split_whitespace().next().unwrap()["critical_rate=".len()..]
                .parse()
                .unwrap()
        };
        let (t, s) = render(&cfg(
            "mode=rates_scan\nrate_source=analytic_orthogonal\ngamma_grid=log:0.05:20:60",
        ))
        .unwrap();
        assert!((critical(&s) - 1.0).abs() < 0.02, "{:?}", s.notes);
        assert!(t.contains("# critical_rate="));
        let (_, s) = render(&cfg("mode=rates_scan\ndelta=3\ngamma_grid=log:0.05:20:100")).unwrap();
        assert!((critical(&s) - 10f64.sqrt() / 2.0).abs() < 0.02 * 10f64.sqrt() / 2.0);
    }

    #[test]
    fn sweep_heatmap_shape() {
        let c = cfg(
            "mode=sweep_heatmap\ndelta=3\ngamma_grid=log:0.1:10:7\nt_final=30\nsamples=31\ndynamics=analytic_pulsed",
        );
        let (text, _) = render(&c).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body.len(), 8);
        assert!(body.iter().all(|l| l.split(',').count() == 32));
    }

    #[test]
    fn t1_rejected_where_unsupported() {
        let c = cfg("mode=pulsed_traj\ngamma=1\ngamma_one=0.1");
        assert!(matches!(render(&c), Err(Error::Configuration(_))));
    }
}

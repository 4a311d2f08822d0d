use std::path::Path;
use std::process::{Command, Output};

use zeno_lab::ensemble::analytic_solution_orthogonal;
use zeno_lab::output::parse_csv;
use zeno_lab::qubit::ModelParams;
use zeno_lab::rng::stream_seed;

fn zeno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zeno-lab"))
        .args(args)
        .env_remove("ZENO_LAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = zeno(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for (name, workers) in [("a.csv", "1"), ("b.csv", "3")] {
        let path = dir.path().join(name);
        let p = path.to_str().unwrap();
        let args = [
            "simulate",
            "--set",
            "mode=continuous_traj",
            "--set",
            "gamma=1.5",
            "--set",
            "t_final=3",
            "--set",
            "ensemble_size=50",
            "--seed",
            "99",
            "--workers",
            workers,
            "--out",
            p,
        ];
        let out = zeno(&args);
        assert!(out.status.success());
        let summary = String::from_utf8(out.stderr).unwrap();
        assert!(summary.contains("mode=continuous_traj") && summary.contains("M=50") && summary.contains(p));
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn ensemble_is_mean_of_seeded_single_runs() {
    let base = [
        "simulate",
        "--set",
        "mode=pulsed_traj",
        "--set",
        "gamma=3",
        "--set",
        "delta=0.5",
        "--set",
        "t_final=4",
    ];
    let master = 17u64;
    let m = 16;
    let mut args = base.to_vec();
    let size = format!("ensemble_size={m}");
    let seed = master.to_string();
    args.extend(["--set", &size, "--seed", &seed]);
    let ens = parse_csv(&ok(&args)).unwrap();
    assert_eq!(ens.seed, master);
    let z = column(&ens.header, "z");
    assert!(ens.header.iter().any(|h| h == "z_err"));

    let mut sum = vec![0.0; ens.rows.len()];
    for i in 0..m {
        let s = stream_seed(master, i).to_string();
        let mut args = base.to_vec();
        args.extend(["--seed", &s]);
        let single = parse_csv(&ok(&args)).unwrap();
        assert_eq!(single.rows.len(), ens.rows.len());
        let zs = column(&single.header, "z");
        for (acc, row) in sum.iter_mut().zip(&single.rows) {
            *acc += row[zs];
        }
    }
    for (acc, row) in sum.iter().zip(&ens.rows) {
        assert!(
            (acc / m as f64 - row[z]).abs() < 1e-12,
            "{} vs {}",
            acc / m as f64,
            row[z]
        );
    }
}

#[test]
fn ensemble_ode_matches_closed_form() {
    let text = ok(&[
        "ensemble",
        "--set",
        "gamma=2",
        "--set",
        "t_final=10",
        "--set",
        "dt=0.001",
    ]);
    let csv = parse_csv(&text).unwrap();
    assert_eq!(csv.header, ["t", "x", "y", "z", "p1"]);
    let last = csv.rows.last().unwrap();
    let sol = analytic_solution_orthogonal(&ModelParams::new(1.0, 0.0, 2.0).unwrap()).unwrap();
    let want = 0.5 * (1.0 + sol.z_at(10.0));
    assert!((last[0] - 10.0).abs() < 1e-12);
    assert!((last[4] - want).abs() < 1e-6, "{} vs {want}", last[4]);
}

#[test]
fn heatmap_matrix_shape() {
    let text = ok(&[
        "sweep",
        "--set",
        "delta=3",
        "--set",
        "gamma_grid=log:0.1:10:25",
        "--set",
        "t_final=30",
        "--set",
        "samples=61",
    ]);
    let csv = parse_csv(&text).unwrap();
    assert_eq!(csv.header.len(), 62);
    assert_eq!(csv.header[0], "gamma_over_crit\t");
    assert_eq!(csv.rows.len(), 25);
    assert!((csv.rows[0][0] - 0.1).abs() < 1e-12 && (csv.rows[24][0] - 10.0).abs() < 1e-12);
    for row in &csv.rows {
        assert_eq!(row.len(), 62);
        assert_eq!(row[1], 1.0);
        assert!(row[1..].iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn config_errors_name_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# pulsed run\nmode = pulsed_traj\n\ngamma = -2\n").unwrap();
    let out = zeno(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(12));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4") && err.contains("gamma"), "{err}");

    let out = zeno(&["simulate", "--set", "mode=pulsed_traj", "--set", "gama=2"]);
    assert_eq!(out.status.code(), Some(12));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown key"));
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "mode = ensemble_ode\ngamma = 1\nt_final = 2\nseed = 5\n").unwrap();
    let text = ok(&[
        "ensemble",
        "--config",
        path.to_str().unwrap(),
        "--set",
        "t_final=3",
        "--seed",
        "8",
    ]);
    let csv = parse_csv(&text).unwrap();
    assert_eq!(csv.seed, 8);
    assert!((csv.rows.last().unwrap()[0] - 3.0).abs() < 1e-12);
}

fn only_file(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn failed_runs_leave_existing_output_alone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    std::fs::write(&path, "previous\n").unwrap();
    // gamma_one is rejected for pulsed runs, after the output path is known
    let out = zeno(&[
        "simulate",
        "--set",
        "mode=pulsed_traj",
        "--set",
        "gamma=1",
        "--set",
        "gamma_one=0.1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "previous\n");
    assert_eq!(only_file(dir.path()), ["out.csv"]);

    ok(&[
        "ensemble",
        "--set",
        "gamma=1",
        "--set",
        "t_final=1",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(only_file(dir.path()), ["out.csv"]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["schema"], "zeno-lab/json/1");
    assert_eq!(doc["mode"], "ensemble_ode");
}

#[test]
fn rates_scan_reports_critical_rate() {
    let text = ok(&["rates", "--set", "delta=3", "--set", "gamma_grid=log:0.05:20:100"]);
    let crit = text
        .lines()
        .find_map(|l| l.strip_prefix("# critical_rate="))
        .expect("critical rate line")
        .parse::<f64>()
        .unwrap();
    let want = 10f64.sqrt() / 2.0;
    assert!((crit - want).abs() / want < 0.02, "{crit} vs {want}");
}

#[test]
fn validate_subcommand_passes() {
    let text = ok(&["validate"]);
    assert!(text.trim_end().ends_with("12 checks, 0 failed"), "{text}");
}

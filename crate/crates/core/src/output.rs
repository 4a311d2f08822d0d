//! CSV and JSON emission. Every value is checked to be finite before any
//! byte is written; files are written to a temporary sibling and renamed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::heatmap::Heatmap;
use crate::error::{Error, Result};

pub const CSV_SCHEMA: &str = "zeno-lab/csv/1";
pub const JSON_SCHEMA: &str = "zeno-lab/json/1";
/// Corner cell of matrix CSVs.
pub const MATRIX_CORNER: &str = "gamma_over_crit\t";

/// A time series of Bloch components, optionally with a readout record or
/// ensemble standard errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub p1: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_raw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_filtered: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_err: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_err: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_err: Option<Vec<f64>>,
}

impl Series {
    fn columns(&self) -> Vec<(&'static str, &[f64])> {
        let mut c: Vec<(&'static str, &[f64])> = vec![
            ("t", &self.t),
            ("x", &self.x),
            ("y", &self.y),
            ("z", &self.z),
            ("p1", &self.p1),
        ];
        if let (Some(r), Some(f)) = (&self.r_raw, &self.r_filtered) {
            c.push(("r_raw", r));
            c.push(("r_filtered", f));
        }
        for (name, v) in [("x_err", &self.x_err), ("y_err", &self.y_err), ("z_err", &self.z_err)] {
            if let Some(v) = v {
                c.push((name, v));
            }
        }
        c
    }

    fn check(&self) -> Result<()> {
        let n = self.t.len();
        let all = self.columns();
        if self.r_raw.is_some() != self.r_filtered.is_some() {
            return Err(Error::DataIntegrity("r_raw and r_filtered must come together".into()));
        }
        for (name, col) in all {
            if col.len() != n {
                return Err(Error::DataIntegrity(format!(
                    "column {name} has {} rows, expected {n}",
                    col.len()
                )));
            }
            check_finite(name, col)?;
        }
        Ok(())
    }
}

/// Rates and response on a measurement-rate grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub gamma: Vec<f64>,
    pub gamma_over_crit: Vec<f64>,
    pub gamma_mix: Vec<f64>,
    pub response: Vec<f64>,
    pub regime: Vec<String>,
    /// Located anti-Zeno to Zeno transition, if any.
    pub critical_rate: Option<f64>,
}

/// Provenance carried into every output.
#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub seed: u64,
    pub mode: String,
    pub time_unit: Option<String>,
    /// Serialized run configuration.
    pub config: Value,
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::DataIntegrity(format!("{name}[{i}] = {} is not finite", v[i])));
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_preamble(meta: &Meta) -> String {
    let mut s = format!("# schema={CSV_SCHEMA} seed={} mode={}", meta.seed, meta.mode);
    if let Some(u) = &meta.time_unit {
        let _ = write!(s, " time_unit={u}");
    }
    s.push('\n');
    s
}

pub fn series_csv(data: &Series, meta: &Meta) -> Result<String> {
    data.check()?;
    let cols = data.columns();
    let mut s = csv_preamble(meta);
    s.push_str(&cols.iter().map(|c| c.0).collect::<Vec<_>>().join(","));
    s.push('\n');
    for i in 0..data.t.len() {
        let row: Vec<String> = cols.iter().map(|c| num(c.1[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Matrix CSV: header row of times after the corner cell, then one row per
/// measurement rate led by `gamma / gamma_crit`.
pub fn matrix_csv(h: &Heatmap, meta: &Meta) -> Result<String> {
    check_heatmap(h)?;
    let mut s = csv_preamble(meta);
    let _ = writeln!(s, "# gamma_crit={}", num(h.gamma_crit));
    s.push_str(MATRIX_CORNER);
    for t in &h.times {
        s.push(',');
        s.push_str(&num(*t));
    }
    s.push('\n');
    for (g, row) in h.gamma_over_crit.iter().zip(&h.p1) {
        s.push_str(&num(*g));
        for p in row {
            s.push(',');
            s.push_str(&num(*p));
        }
        s.push('\n');
    }
    Ok(s)
}

fn check_heatmap(h: &Heatmap) -> Result<()> {
    check_finite("gamma_crit", &[h.gamma_crit])?;
    check_finite("gamma_over_crit", &h.gamma_over_crit)?;
    check_finite("times", &h.times)?;
    if h.p1.len() != h.gamma_over_crit.len() {
        return Err(Error::DataIntegrity(
            "matrix row count differs from the rate grid".into(),
        ));
    }
    for (i, r) in h.p1.iter().enumerate() {
        if r.len() != h.times.len() {
            return Err(Error::DataIntegrity(format!("matrix row {i} has {} columns", r.len())));
        }
        check_finite("p1", r)?;
    }
    Ok(())
}

fn check_table(t: &RateTable) -> Result<()> {
    let n = t.gamma.len();
    for (name, col) in [
        ("gamma", &t.gamma),
        ("gamma_over_crit", &t.gamma_over_crit),
        ("gamma_mix", &t.gamma_mix),
        ("response", &t.response),
    ] {
        if col.len() != n {
            return Err(Error::DataIntegrity(format!(
                "column {name} has {} rows, expected {n}",
                col.len()
            )));
        }
        check_finite(name, col)?;
    }
    if t.regime.len() != n {
        return Err(Error::DataIntegrity("regime labels differ in length".into()));
    }
    if let Some(c) = t.critical_rate {
        check_finite("critical_rate", &[c])?;
    }
    Ok(())
}

pub fn rates_csv(t: &RateTable, meta: &Meta) -> Result<String> {
    check_table(t)?;
    let mut s = csv_preamble(meta);
    if let Some(c) = t.critical_rate {
        let _ = writeln!(s, "# critical_rate={}", num(c));
    }
    s.push_str("gamma,gamma_over_crit,gamma_mix,response,regime\n");
    for i in 0..t.gamma.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(t.gamma[i]),
            num(t.gamma_over_crit[i]),
            num(t.gamma_mix[i]),
            num(t.response[i]),
            t.regime[i]
        );
    }
    Ok(s)
}

fn json_doc(meta: &Meta, data: Value) -> Result<String> {
    let doc = json!({
        "schema": JSON_SCHEMA,
        "seed": meta.seed,
        "mode": meta.mode,
        "time_unit": meta.time_unit,
        "config": meta.config,
        "data": data,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::DataIntegrity(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::DataIntegrity(e.to_string()))
}

pub fn series_json(data: &Series, meta: &Meta) -> Result<String> {
    data.check()?;
    json_doc(meta, to_value(data)?)
}

pub fn matrix_json(h: &Heatmap, meta: &Meta) -> Result<String> {
    check_heatmap(h)?;
    json_doc(meta, to_value(h)?)
}

pub fn rates_json(t: &RateTable, meta: &Meta) -> Result<String> {
    check_table(t)?;
    json_doc(meta, to_value(t)?)
}

/// Write `text` to `path` via a temporary file in the same directory, or to
/// stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            });
    };
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".zeno-lab-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Parsed CSV: the seed from the schema line, column names, numeric rows.
/// Non-numeric cells (such as regime labels) are returned as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub seed: u64,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let bad = |line: usize, message: &str| Error::Parse {
        line,
        key: "csv".into(),
        message: message.into(),
    };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let seed = first
        .strip_prefix("# ")
        .filter(|s| s.contains(&format!("schema={CSV_SCHEMA}")))
        .and_then(|s| s.split_whitespace().find_map(|w| w.strip_prefix("seed=")))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(1, "missing schema line"))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if header.is_none() {
            header = Some(cells.iter().map(|c| c.to_string()).collect::<Vec<_>>());
            continue;
        }
        rows.push(
            cells
                .iter()
                .map(|c| c.parse().unwrap_or(f64::NAN))
                .collect::<Vec<f64>>(),
        );
        if rows.last().map(Vec::len) != header.as_ref().map(Vec::len) {
            return Err(bad(i + 1, "row width differs from header"));
        }
    }
    Ok(ParsedCsv {
        seed,
        header: header.ok_or_else(|| bad(2, "missing header"))?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Meta {
        Meta {
            seed: 42,
            mode: "test".into(),
            time_unit: None,
            config: json!({}),
        }
    }

    fn series(n: usize) -> Series {
        let t: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        Series {
            x: t.iter().map(|t| t.sin() / 3.0).collect(),
            y: t.iter().map(|t| -t.cos() / 7.0).collect(),
            z: t.iter().map(|t| (-t).exp()).collect(),
            p1: t.iter().map(|t| 0.5 * (1.0 + (-t).exp())).collect(),
            t,
            ..Series::default()
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let s = series_csv(&Series::default(), &meta()).unwrap();
        assert_eq!(s, format!("# schema={CSV_SCHEMA} seed=42 mode=test\nt,x,y,z,p1\n"));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut d = series(50);
        d.r_raw = Some(d.t.iter().map(|t| 1.0 / (1.0 + t)).collect());
        d.r_filtered = Some(d.t.iter().map(|t| std::f64::consts::PI * t).collect());
        let text = series_csv(&d, &meta()).unwrap();
        assert!(text.ends_with('\n'));
        let p = parse_csv(&text).unwrap();
        assert_eq!(p.seed, 42);
        assert_eq!(p.header, ["t", "x", "y", "z", "p1", "r_raw", "r_filtered"]);
        let cols = d.columns();
        for (i, row) in p.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(v.to_bits(), cols[j].1[i].to_bits());
            }
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn non_finite_values_are_rejected_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let mut d = series(5);
        d.z[3] = f64::NAN;
        let r = series_csv(&d, &meta()).and_then(|s| emit(&s, Some(&path)));
        assert!(matches!(r, Err(Error::DataIntegrity(_))));
        assert!(!path.exists());
        let mut d = series(5);
        d.x_err = Some(vec![0.0, 0.0, f64::INFINITY, 0.0, 0.0]);
        assert!(matches!(series_json(&d, &meta()), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn matrix_shape_and_corner() {
        let h = Heatmap {
            gamma_crit: 1.5,
            gamma_over_crit: vec![0.1, 1.0, 10.0],
            times: vec![0.0, 1.0, 2.0, 3.0],
            p1: vec![vec![1.0, 0.5, 0.25, 0.125]; 3],
        };
        let text = matrix_csv(&h, &meta()).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body.len(), 4);
        assert!(body[0].starts_with("gamma_over_crit\t,"));
        assert!(body.iter().all(|l| l.split(',').count() == 5));
        assert!(body[2].starts_with(&num(1.0)));
        let mut bad = h.clone();
        bad.p1[1].pop();
        assert!(matches!(matrix_csv(&bad, &meta()), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn json_embeds_schema_and_seed() {
        let text = series_json(&series(3), &meta()).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema"], JSON_SCHEMA);
        assert_eq!(v["seed"], 42);
        assert_eq!(v["data"]["t"].as_array().unwrap().len(), 3);
        assert!(v["data"].get("r_raw").is_none());
    }

    #[test]
    fn atomic_replace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        emit("first\n", Some(&path)).unwrap();
        emit("second\n", Some(&path)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("nope").join("a.csv");
        assert!(matches!(emit("x", Some(&missing)), Err(Error::Io { .. })));
    }

    #[test]
    fn rates_table() {
        let t = RateTable {
            gamma: vec![1.0, 2.0],
            gamma_over_crit: vec![0.5, 1.0],
            gamma_mix: vec![0.1, 0.2],
            response: vec![-0.1, 0.1],
            regime: vec!["anti_zeno".into(), "zeno".into()],
            critical_rate: Some(1.5),
        };
        let p = parse_csv(&rates_csv(&t, &meta()).unwrap()).unwrap();
        assert_eq!(p.header.len(), 5);
        assert_eq!(p.rows.len(), 2);
        assert_eq!(p.rows[1][2], 0.2);
    }
}

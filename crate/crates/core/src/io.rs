//! CSV tables and JSON run manifests.
//!
//! Floats are written with 17 significant digits so that parsing a CSV
//! cell gives back the same f64.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::Profile;
use crate::params::ModelParams;

/// Lossless decimal form of x.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Parses a cell written by [`fmt_f64`].
pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Input(format!("not a number: {s:?}")))
}

/// A CSV table with a mandatory header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Input(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push_f64(&mut self, row: &[f64]) -> Result<()> {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(String::from).collect()).map_err(csv_err))
            .collect::<Result<_>>()?;
        Ok(Self { header, rows })
    }

    /// Column by header name, parsed as floats.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("no column {name:?}")))?;
        self.rows.iter().map(|r| parse_f64(&r[i])).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

/// Profile CSV: a metadata header and row, then `rho,value` rows.
pub fn profile_csv(profile: &Profile, params: &ModelParams) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(["n", "p", "lambda", "l", "tail_exponent"])
        .map_err(csv_err)?;
    let tail = profile.tail.map(|t| fmt_f64(t.exponent)).unwrap_or_default();
    w.write_record([
        params.n.to_string(),
        fmt_f64(params.p),
        fmt_f64(params.lambda),
        profile.l.to_string(),
        tail,
    ])
    .map_err(csv_err)?;
    w.write_record(["rho", "value"]).map_err(csv_err)?;
    for (x, v) in profile.grid.nodes.iter().zip(&profile.values) {
        w.write_record([fmt_f64(*x), fmt_f64(*v)]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Metadata and samples read back from a profile CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    pub n: usize,
    pub p: f64,
    pub lambda: f64,
    pub l: usize,
    pub tail_exponent: Option<f64>,
    pub rho: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn parse_profile_csv(text: &str) -> Result<ProfileRecord> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let recs: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    if recs.len() < 3 || &recs[2][0] != "rho" {
        return Err(Error::Input("malformed profile CSV".into()));
    }
    let m = &recs[1];
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Input(format!("not an integer: {s:?}")))
    };
    let mut out = ProfileRecord {
        n: int(&m[0])?,
        p: parse_f64(&m[1])?,
        lambda: parse_f64(&m[2])?,
        l: int(&m[3])?,
        tail_exponent: if m[4].is_empty() { None } else { Some(parse_f64(&m[4])?) },
        rho: Vec::new(),
        values: Vec::new(),
    };
    for rec in &recs[3..] {
        out.rho.push(parse_f64(&rec[0])?);
        out.values.push(parse_f64(&rec[1])?);
    }
    Ok(out)
}

/// Machine-readable failure record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

/// Run manifest. Field order is fixed by the struct and map keys are
/// sorted, so the JSON layout is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub results: Value,
    pub error: Option<ErrorRecord>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(path, s + "\n").map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(io_err)?;
        serde_json::from_str(&s).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Human-readable summary: one `key = value` line per scalar in
/// `results`, keys as JSON paths, floats rounded to 6 significant digits.
pub fn summary_lines(results: &Value) -> Vec<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let p = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&p, x, out);
                }
            }
            Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) && a.len() <= 8 => {
                let items: Vec<String> = a.iter().map(scalar).collect();
                out.push(format!("{prefix} = [{}]", items.join(", ")));
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}[{i}]"), x, out);
                }
            }
            _ => out.push(format!("{prefix} = {}", scalar(v))),
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::Number(x) if x.is_f64() => format!("{:.6e}", x.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let mut out = Vec::new();
    walk("", results, &mut out);
    out
}

/// Creates `dir` and returns the path of `name` inside it.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err)?;
    Ok(dir.join(name))
}

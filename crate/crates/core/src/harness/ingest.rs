//! CSV trace readers.
//!
//! * price traces: header `hour,dayahead,realtime`, one row per slot.
//! * wind trace: header `day,hour,power_100mw`, one row per (day, hour).
//! * distribution dump: header `slot,value,weight`, one row per atom.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::distributions::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::market::{MarketProcess, MarketState};

use super::output::fmt_num;

fn ingest_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| ingest_err(path, 0, e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| ingest_err(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(ingest_err(
            path,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), got.join(",")),
        ));
    }
    Ok(rdr)
}

/// Yields `(line, fields)` with numeric parsing of every column.
fn numeric_rows(path: &Path, expected: &[&str]) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = open(path, expected)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ingest_err(path, line, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(ingest_err(path, line, format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let vals = rec
            .iter()
            .zip(expected)
            .map(|(f, name)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ingest_err(path, line, format!("{name}: '{f}' is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((line, vals));
    }
    Ok(out)
}

fn as_index(path: &Path, line: usize, name: &str, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(ingest_err(path, line, format!("{name} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

/// One market state from a `hour,dayahead,realtime` file with exactly
/// `slots` rows covering hours `0..slots`.
pub fn read_price_trace(path: &Path, slots: usize) -> Result<MarketState> {
    let rows = numeric_rows(path, &["hour", "dayahead", "realtime"])?;
    if rows.len() != slots {
        return Err(ingest_err(
            path,
            rows.len() + 1,
            format!("expected {slots} data rows, found {}", rows.len()),
        ));
    }
    let mut beta = vec![f64::NAN; slots];
    let mut alpha = vec![f64::NAN; slots];
    for (line, v) in rows {
        let h = as_index(path, line, "hour", v[0])?;
        if h >= slots {
            return Err(ingest_err(path, line, format!("hour {h} outside 0..{slots}")));
        }
        if !beta[h].is_nan() {
            return Err(ingest_err(path, line, format!("duplicate hour {h}")));
        }
        if v[1] < 0.0 || v[2] < 0.0 {
            return Err(ingest_err(path, line, "prices must be non-negative"));
        }
        beta[h] = v[1];
        alpha[h] = v[2];
    }
    MarketState::new(beta, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceIngest {
    pub process: MarketProcess,
    pub beta_max: f64,
    pub alpha_max: f64,
    pub files: Vec<PathBuf>,
}

/// One state per file, drawn uniformly at random each day.
pub fn ingest_price_traces(paths: &[PathBuf], slots: usize) -> Result<PriceIngest> {
    if paths.is_empty() {
        return Err(Error::config("no price trace files given"));
    }
    let states = paths
        .iter()
        .map(|p| read_price_trace(p, slots))
        .collect::<Result<Vec<_>>>()?;
    let m = states.len();
    let process = MarketProcess::iid(states, vec![1.0 / m as f64; m])?;
    Ok(PriceIngest {
        beta_max: process.beta_max(),
        alpha_max: process.alpha_max(),
        process,
        files: paths.to_vec(),
    })
}

/// Per-hour equal-weight distributions over the daily values.
pub fn ingest_wind_trace(path: &Path, slots: usize) -> Result<Vec<EmpiricalDistribution>> {
    let rows = numeric_rows(path, &["day", "hour", "power_100mw"])?;
    let mut by_day: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (line, v) in rows {
        let day = as_index(path, line, "day", v[0])?;
        let hour = as_index(path, line, "hour", v[1])?;
        if hour >= slots {
            return Err(ingest_err(path, line, format!("hour {hour} outside 0..{slots}")));
        }
        if v[2] < 0.0 {
            return Err(ingest_err(path, line, format!("negative power {}", v[2])));
        }
        let cell = &mut by_day.entry(day).or_insert_with(|| vec![None; slots])[hour];
        if cell.is_some() {
            return Err(ingest_err(path, line, format!("duplicate entry for day {day}, hour {hour}")));
        }
        *cell = Some(v[2]);
    }
    if by_day.is_empty() {
        return Err(ingest_err(path, 1, "no data rows"));
    }
    let mut samples = vec![Vec::with_capacity(by_day.len()); slots];
    for (day, hours) in &by_day {
        for (h, v) in hours.iter().enumerate() {
            let v = v.ok_or_else(|| ingest_err(path, 0, format!("missing entry for day {day}, hour {h}")))?;
            samples[h].push(v);
        }
    }
    samples.iter().map(|s| EmpiricalDistribution::from_samples(s)).collect()
}

/// Writes per-slot distributions as `slot,value,weight` rows.
pub fn write_distribution_dump<W: Write>(out: W, dists: &[EmpiricalDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "value", "weight"])?;
    for (t, d) in dists.iter().enumerate() {
        for (v, p) in d.atoms() {
            w.write_record([t.to_string(), fmt_num(v), fmt_num(p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_distribution_dump(path: &Path) -> Result<Vec<EmpiricalDistribution>> {
    let rows = numeric_rows(path, &["slot", "value", "weight"])?;
    let mut atoms: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, v) in rows {
        let t = as_index(path, line, "slot", v[0])?;
        if v[2] <= 0.0 {
            return Err(ingest_err(path, line, "weights must be positive"));
        }
        atoms.entry(t).or_default().push((v[1], v[2]));
    }
    let slots = atoms.keys().next_back().map_or(0, |t| t + 1);
    (0..slots)
        .map(|t| {
            let a = atoms
                .remove(&t)
                .ok_or_else(|| ingest_err(path, 0, format!("no atoms for slot {t}")))?;
            EmpiricalDistribution::from_atoms(renormalize(a)).map_err(|e| ingest_err(path, 0, format!("slot {t}: {e}")))
        })
        .collect()
}

/// Dumps carry 12 significant digits, so weights are rescaled to sum to
/// one exactly before validation.
fn renormalize(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() < 1e-9 {
        for a in &mut atoms {
            a.1 /= total;
        }
    }
    atoms
}

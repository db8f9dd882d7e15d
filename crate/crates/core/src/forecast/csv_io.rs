//! CSV readers and writers for power series and long-format forecast sets.
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read cycle
//! reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{ForecastError, ForecastSet, PowerSeries};
use crate::time::{parse_timestamp, Timestamp};

fn parse_err(line: u64, msg: impl std::fmt::Display) -> ForecastError {
    ForecastError::Parse(format!("line {line}: {msg}"))
}

fn csv_err(e: csv::Error) -> ForecastError {
    ForecastError::Parse(e.to_string())
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<(), ForecastError> {
    let header = rdr.headers().map_err(csv_err)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(ForecastError::Parse(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field_time(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Timestamp, ForecastError> {
    let raw = rec.get(i).ok_or_else(|| parse_err(line, "missing field"))?;
    parse_timestamp(raw).ok_or_else(|| parse_err(line, format!("invalid timestamp `{raw}`")))
}

fn field_power(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64, ForecastError> {
    let raw = rec.get(i).ok_or_else(|| parse_err(line, "missing field"))?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid power `{raw}`")))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(parse_err(line, format!("power must be finite and non-negative, got {v}")));
    }
    Ok(v)
}

/// Reads a `timestamp,power` CSV with uniformly spaced timestamps.
pub fn read_power_series(path: &Path) -> Result<PowerSeries, ForecastError> {
    parse_power_series(File::open(path)?)
}

pub(crate) fn parse_power_series(reader: impl Read) -> Result<PowerSeries, ForecastError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["timestamp", "power"])?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k as u64 + 2;
        times.push(field_time(&rec, 0, line)?);
        values.push(field_power(&rec, 1, line)?);
    }
    if times.len() < 2 {
        return Err(ForecastError::InvalidSeries("need at least two samples".into()));
    }
    let dt = times[1] - times[0];
    if dt <= 0 {
        return Err(ForecastError::NonUniformGrid(format!("non-increasing timestamps at line 3 (dt = {dt})")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] - w[0] != dt) {
        return Err(ForecastError::NonUniformGrid(format!(
            "spacing {} s at line {} differs from {} s",
            times[i + 1] - times[i],
            i + 3,
            dt
        )));
    }
    PowerSeries::new(times[0], dt, values)
}

pub fn write_power_series(path: &Path, series: &PowerSeries) -> Result<(), ForecastError> {
    let mut out = File::create(path)?;
    writeln!(out, "timestamp,power")?;
    for (i, v) in series.values.iter().enumerate() {
        writeln!(out, "{},{}", series.time(i), v)?;
    }
    Ok(())
}

/// Reads an `issue_time,target_time,power` CSV. Each issue's targets must start
/// one interval after the issue and advance by that same interval.
pub fn read_forecast_set(path: &Path) -> Result<ForecastSet, ForecastError> {
    parse_forecast_set(File::open(path)?)
}

pub(crate) fn parse_forecast_set(reader: impl Read) -> Result<ForecastSet, ForecastError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &["issue_time", "target_time", "power"])?;
    let mut grouped: BTreeMap<Timestamp, BTreeMap<Timestamp, f64>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k as u64 + 2;
        let issue = field_time(&rec, 0, line)?;
        let target = field_time(&rec, 1, line)?;
        let power = field_power(&rec, 2, line)?;
        if target <= issue {
            return Err(parse_err(line, "target_time must be after issue_time"));
        }
        if grouped.entry(issue).or_default().insert(target, power).is_some() {
            return Err(parse_err(line, format!("duplicate row for issue {issue}, target {target}")));
        }
    }
    let mut dt = None;
    let mut set = ForecastSet::default();
    for (issue, targets) in grouped {
        let mut prev = issue;
        let mut window = Vec::with_capacity(targets.len());
        for (target, power) in targets {
            let step = target - prev;
            let interval = *dt.get_or_insert(step);
            if step != interval {
                return Err(ForecastError::NonUniformGrid(format!(
                    "issue {issue}: target {target} breaks the {interval} s spacing"
                )));
            }
            prev = target;
            window.push(power);
        }
        set.windows.insert(issue, window);
    }
    set.dt = dt.ok_or(ForecastError::EmptySet)?;
    Ok(set)
}

pub fn write_forecast_set(path: &Path, set: &ForecastSet) -> Result<(), ForecastError> {
    let mut out = File::create(path)?;
    writeln!(out, "issue_time,target_time,power")?;
    for (&issue, window) in &set.windows {
        for (h, v) in window.iter().enumerate() {
            writeln!(out, "{},{},{}", issue, issue + (h as i64 + 1) * set.dt, v)?;
        }
    }
    Ok(())
}

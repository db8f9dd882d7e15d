//! Power-availability series and the forecast scenarios fed to the scheduler.

mod csv_io;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{deserialize_timestamp, Timestamp};

pub use csv_io::{read_forecast_set, read_power_series, write_forecast_set, write_power_series};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid clear-sky profile: {0}")]
    InvalidProfile(String),
    #[error("time {0} is outside the series")]
    OutOfRange(Timestamp),
    #[error("series are not on the same grid: {0}")]
    GridMismatch(String),
    #[error("forecast issued at {issue} does not cover {needed} samples")]
    CoverageGap { issue: Timestamp, needed: usize },
    #[error("non-uniform time grid: {0}")]
    NonUniformGrid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("forecast set is empty")]
    EmptySet,
    #[error("mean actual power over the forecast targets is zero")]
    ZeroNormalizer,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniformly sampled power.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSeries {
    pub t0: Timestamp,
    /// Sample spacing, seconds.
    pub dt: i64,
    pub values: Vec<f64>,
}

impl PowerSeries {
    pub fn new(t0: Timestamp, dt: i64, values: Vec<f64>) -> Result<Self, ForecastError> {
        if dt <= 0 {
            return Err(ForecastError::InvalidSeries(format!("dt must be positive, got {dt}")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(ForecastError::InvalidSeries(format!(
                "sample {i} is {v}; values must be finite and non-negative"
            )));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> Timestamp {
        self.t0 + i as i64 * self.dt
    }

    pub fn end(&self) -> Timestamp {
        self.time(self.len().saturating_sub(1))
    }

    /// Sample index of `t`, if `t` lies on the grid and inside the series.
    pub fn index_of(&self, t: Timestamp) -> Option<usize> {
        let off = t - self.t0;
        if off < 0 || off % self.dt != 0 {
            return None;
        }
        let i = (off / self.dt) as usize;
        (i < self.len()).then_some(i)
    }

    pub fn at(&self, t: Timestamp) -> Result<f64, ForecastError> {
        self.index_of(t)
            .map(|i| self.values[i])
            .ok_or(ForecastError::OutOfRange(t))
    }

    /// The `count` samples following `issue`, that is at `issue + dt ..= issue + count*dt`.
    pub fn window_after(&self, issue: Timestamp, count: usize) -> Result<&[f64], ForecastError> {
        let start = self.index_of(issue + self.dt).ok_or(ForecastError::OutOfRange(issue + self.dt))?;
        let end = start + count;
        if end > self.len() {
            return Err(ForecastError::OutOfRange(self.time(end - 1)));
        }
        Ok(&self.values[start..end])
    }

    pub fn same_grid(&self, other: &PowerSeries) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.len() == other.len()
    }

    /// Sub-series covering `[from, to]`.
    pub fn slice(&self, from: Timestamp, to: Timestamp) -> Result<PowerSeries, ForecastError> {
        let a = self.index_of(from).ok_or(ForecastError::OutOfRange(from))?;
        let b = self.index_of(to).ok_or(ForecastError::OutOfRange(to))?;
        Ok(PowerSeries {
            t0: from,
            dt: self.dt,
            values: self.values[a..=b].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearSkyShape {
    #[default]
    HalfSine,
}

/// Idealized cloud-free production curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearSkyProfile {
    pub p_peak: f64,
    #[serde(deserialize_with = "deserialize_timestamp")]
    pub t_rise: Timestamp,
    #[serde(deserialize_with = "deserialize_timestamp")]
    pub t_set: Timestamp,
    #[serde(default)]
    pub shape: ClearSkyShape,
}

impl ClearSkyProfile {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if !(self.p_peak > 0.0 && self.p_peak.is_finite()) {
            return Err(ForecastError::InvalidProfile(format!("p_peak must be positive, got {}", self.p_peak)));
        }
        if self.t_rise >= self.t_set {
            return Err(ForecastError::InvalidProfile(format!(
                "t_rise ({}) must precede t_set ({})",
                self.t_rise, self.t_set
            )));
        }
        Ok(())
    }

    pub fn value(&self, t: Timestamp) -> f64 {
        if t <= self.t_rise || t >= self.t_set {
            return 0.0;
        }
        let phase = (t - self.t_rise) as f64 / (self.t_set - self.t_rise) as f64;
        match self.shape {
            ClearSkyShape::HalfSine => (self.p_peak * (PI * phase).sin()).max(0.0),
        }
    }
}

pub fn clear_sky(
    profile: &ClearSkyProfile,
    t0: Timestamp,
    dt: i64,
    count: usize,
) -> Result<PowerSeries, ForecastError> {
    profile.validate()?;
    if count == 0 {
        return Err(ForecastError::InvalidSeries("count must be at least 1".into()));
    }
    let values = (0..count).map(|i| profile.value(t0 + i as i64 * dt)).collect();
    PowerSeries::new(t0, dt, values)
}

pub fn perfect_forecast(actual: &PowerSeries, issue: Timestamp, horizon: usize) -> Result<Vec<f64>, ForecastError> {
    actual.window_after(issue, horizon).map(<[f64]>::to_vec)
}

/// Clear-sky index at `issue`, or 0 when the clear-sky value is at or below `guard`.
pub fn clear_sky_index(
    measured: &PowerSeries,
    clearsky: &PowerSeries,
    issue: Timestamp,
    guard: f64,
) -> Result<f64, ForecastError> {
    let cs = clearsky.at(issue)?;
    let m = measured.at(issue)?;
    Ok(if cs > guard { m / cs } else { 0.0 })
}

/// Holds the clear-sky index at `issue` constant over the horizon.
pub fn persistence_forecast(
    measured: &PowerSeries,
    clearsky: &PowerSeries,
    issue: Timestamp,
    horizon: usize,
    guard: f64,
) -> Result<Vec<f64>, ForecastError> {
    if measured.dt != clearsky.dt || (measured.t0 - clearsky.t0) % measured.dt != 0 {
        return Err(ForecastError::GridMismatch(format!(
            "measured (t0={}, dt={}) vs clear sky (t0={}, dt={})",
            measured.t0, measured.dt, clearsky.t0, clearsky.dt
        )));
    }
    let kt = clear_sky_index(measured, clearsky, issue, guard)?;
    Ok(clearsky
        .window_after(issue, horizon)?
        .iter()
        .map(|cs| (kt * cs).max(0.0))
        .collect())
}

/// Forecast windows keyed by issue time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForecastSet {
    pub dt: i64,
    pub windows: BTreeMap<Timestamp, Vec<f64>>,
}

impl ForecastSet {
    pub fn new(dt: i64) -> Self {
        Self {
            dt,
            windows: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Checks that every issue time in `issues` has at least `horizon` samples.
    pub fn check_coverage(&self, issues: impl IntoIterator<Item = Timestamp>, horizon: usize) -> Result<(), ForecastError> {
        for issue in issues {
            match self.windows.get(&issue) {
                Some(w) if w.len() >= horizon => {}
                _ => return Err(ForecastError::CoverageGap { issue, needed: horizon }),
            }
        }
        Ok(())
    }

    /// Builds persistence windows for every issue time in `issues`.
    pub fn persistence(
        measured: &PowerSeries,
        clearsky: &PowerSeries,
        issues: impl IntoIterator<Item = Timestamp>,
        horizon: usize,
        guard: f64,
    ) -> Result<Self, ForecastError> {
        let mut set = Self::new(measured.dt);
        for issue in issues {
            set.windows
                .insert(issue, persistence_forecast(measured, clearsky, issue, horizon, guard)?);
        }
        Ok(set)
    }
}

/// Source of forecast windows for the closed loop.
pub trait ForecastProvider {
    /// The `horizon` forecast samples following `issue`.
    fn window(&self, issue: Timestamp, horizon: usize) -> Result<Vec<f64>, ForecastError>;
}

/// Forecasts equal to the realized power.
pub struct Perfect<'a>(pub &'a PowerSeries);

impl ForecastProvider for Perfect<'_> {
    fn window(&self, issue: Timestamp, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        perfect_forecast(self.0, issue, horizon)
    }
}

pub struct Persistence<'a> {
    pub measured: &'a PowerSeries,
    pub clearsky: &'a PowerSeries,
    pub guard: f64,
}

impl ForecastProvider for Persistence<'_> {
    fn window(&self, issue: Timestamp, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        persistence_forecast(self.measured, self.clearsky, issue, horizon, self.guard)
    }
}

impl ForecastProvider for ForecastSet {
    fn window(&self, issue: Timestamp, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        match self.windows.get(&issue) {
            Some(w) if w.len() >= horizon => Ok(w[..horizon].to_vec()),
            _ => Err(ForecastError::CoverageGap { issue, needed: horizon }),
        }
    }
}

/// Pooled relative forecast errors, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastErrors {
    pub rrmse: f64,
    pub rmbe: f64,
    pub rmae: f64,
    pub pairs: usize,
}

/// Pools every (issue, horizon) pair whose target has positive actual power and
/// normalizes by the mean actual power over those targets.
pub fn forecast_errors(set: &ForecastSet, actual: &PowerSeries) -> Result<ForecastErrors, ForecastError> {
    if set.is_empty() {
        return Err(ForecastError::EmptySet);
    }
    let (mut n, mut sum_a, mut sum_e, mut sum_abs, mut sum_sq) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for (&issue, window) in &set.windows {
        for (h, f) in window.iter().enumerate() {
            let a = actual.at(issue + (h as i64 + 1) * set.dt)?;
            if a <= 0.0 {
                continue;
            }
            let e = f - a;
            n += 1;
            sum_a += a;
            sum_e += e;
            sum_abs += e.abs();
            sum_sq += e * e;
        }
    }
    if n == 0 {
        return Err(ForecastError::ZeroNormalizer);
    }
    let n_f = n as f64;
    let mean_a = sum_a / n_f;
    Ok(ForecastErrors {
        rrmse: 100.0 * (sum_sq / n_f).sqrt() / mean_a,
        rmbe: 100.0 * (sum_e / n_f) / mean_a,
        rmae: 100.0 * (sum_abs / n_f) / mean_a,
        pairs: n,
    })
}

//! Post-hoc evaluation of a schedule against the power that was actually available.

use serde::Serialize;
use thiserror::Error;

use crate::forecast::PowerSeries;
use crate::loads::LoadSpec;
use crate::time::Timestamp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series are not on the same grid: {0}")]
    GridMismatch(String),
    #[error("total available energy is zero")]
    ZeroSolarEnergy,
}

/// A maximal run of samples where demand exceeds supply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceEvent {
    /// Time of the first violated sample.
    pub start: Timestamp,
    /// Time of the last violated sample.
    pub end: Timestamp,
    pub peak_pe: f64,
    /// Exceedance energy, power x seconds.
    pub ee: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ExceedanceReport {
    pub events: Vec<ExceedanceEvent>,
    pub total_ee: f64,
    pub violation_steps: usize,
    pub max_event_ee: f64,
}

impl ExceedanceReport {
    pub fn event_count(&self) -> usize {
        self.events.len()
    }
}

fn check_grid(a: &PowerSeries, b: &PowerSeries) -> Result<(), MetricsError> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(MetricsError::GridMismatch(format!(
            "(t0={}, dt={}, n={}) vs (t0={}, dt={}, n={})",
            a.t0,
            a.dt,
            a.len(),
            b.t0,
            b.dt,
            b.len()
        )))
    }
}

/// Segments `max(0, demand - actual)` into events where it exceeds `tol`.
pub fn exceedance(actual: &PowerSeries, demand: &PowerSeries, tol: f64) -> Result<ExceedanceReport, MetricsError> {
    check_grid(actual, demand)?;
    let dt = actual.dt as f64;
    let mut report = ExceedanceReport::default();
    let mut open: Option<ExceedanceEvent> = None;
    for (i, (a, d)) in actual.values.iter().zip(&demand.values).enumerate() {
        let pe = (d - a).max(0.0);
        if pe > tol {
            let t = actual.time(i);
            let ev = open.get_or_insert(ExceedanceEvent {
                start: t,
                end: t,
                peak_pe: 0.0,
                ee: 0.0,
                steps: 0,
            });
            ev.end = t;
            ev.peak_pe = ev.peak_pe.max(pe);
            ev.ee += pe * dt;
            ev.steps += 1;
        } else if let Some(ev) = open.take() {
            report.events.push(ev);
        }
    }
    report.events.extend(open);
    for ev in &report.events {
        report.total_ee += ev.ee;
        report.violation_steps += ev.steps;
        report.max_event_ee = report.max_event_ee.max(ev.ee);
    }
    Ok(report)
}

/// Fraction of available energy that was served: `sum min(demand, actual) / sum actual`.
pub fn efficiency(actual: &PowerSeries, demand: &PowerSeries) -> Result<f64, MetricsError> {
    check_grid(actual, demand)?;
    let available: f64 = actual.values.iter().sum();
    if available <= 0.0 {
        return Err(MetricsError::ZeroSolarEnergy);
    }
    let served: f64 = actual.values.iter().zip(&demand.values).map(|(a, d)| a.min(*d)).sum();
    Ok(served / available)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryEstimate {
    /// Largest single exceedance event.
    pub max_event_ee: f64,
    /// Rated power of the largest unit times its minimum on time.
    pub largest_unit_rule: f64,
}

pub fn battery_estimate(report: &ExceedanceReport, loads: &[LoadSpec]) -> BatteryEstimate {
    let largest = loads
        .iter()
        .fold(None::<&LoadSpec>, |best, l| match best {
            Some(b) if b.rated_power >= l.rated_power => Some(b),
            _ => Some(l),
        });
    BatteryEstimate {
        max_event_ee: report.max_event_ee,
        largest_unit_rule: largest.map_or(0.0, |l| l.rated_power * l.min_on),
    }
}

//! Scenario orchestration: resolve inputs, run the closed loop, evaluate, and
//! emit artifacts; plus parameter sweeps and scenario comparisons.

mod config;
mod output;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use config::{Attenuation, PowerUnit, ScenarioConfig, ScenarioKind};
pub use output::{render_comparison, render_sweep, trajectory_csv, write_artifacts, TableFormat};

use crate::forecast::{
    clear_sky, read_forecast_set, read_power_series, ForecastError, ForecastProvider, ForecastSet, Perfect,
    Persistence, PowerSeries,
};
use crate::loads::LoadSpec;
use crate::metrics::{battery_estimate, efficiency, exceedance, ExceedanceReport, MetricsError};
use crate::mpc::{run_closed_loop, LoopConfig, MpcError, ScenarioTrajectory};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("scenarios cannot be compared: {0}")]
    IncompatibleScenarios(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ScenarioError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

/// Fully resolved inputs of one run.
#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    pub actual: PowerSeries,
    /// Unattenuated clear-sky series on the actual grid, when a profile is configured.
    pub clearsky: Option<PowerSeries>,
    pub forecast_set: Option<ForecastSet>,
    pub loop_config: LoopConfig,
}

fn attenuate(series: &mut PowerSeries, events: &[Attenuation]) {
    let (t0, dt) = (series.t0, series.dt);
    for (i, v) in series.values.iter_mut().enumerate() {
        let t = t0 + i as i64 * dt;
        for a in events {
            if t >= a.start && t < a.end {
                *v *= a.factor;
            }
        }
    }
}

fn profile_of(cfg: &ScenarioConfig) -> Result<&crate::forecast::ClearSkyProfile, ScenarioError> {
    cfg.clearsky
        .as_ref()
        .ok_or_else(|| ScenarioError::invalid("clearsky", "required to synthesize actual power"))
}

/// Actual power synthesized from the clear-sky profile and attenuation events,
/// covering `[start, max(end, sunset) + horizon]`.
pub fn synthesize_actual(cfg: &ScenarioConfig) -> Result<PowerSeries, ScenarioError> {
    let profile = profile_of(cfg)?;
    let start = cfg.start.unwrap_or(profile.t_rise);
    let end = cfg.end.unwrap_or(profile.t_set).max(profile.t_set);
    let count = ((end + cfg.horizon - start) / cfg.dt) as usize + 1;
    let mut series = clear_sky(profile, start, cfg.dt, count)?;
    attenuate(&mut series, &cfg.attenuation);
    Ok(series)
}

/// The synthesized day from sunrise to sunset on the `dt` grid.
pub fn synthesize_day(cfg: &ScenarioConfig) -> Result<PowerSeries, ScenarioError> {
    let profile = profile_of(cfg)?;
    if cfg.dt <= 0 {
        return Err(ScenarioError::invalid("dt", format!("must be positive, got {}", cfg.dt)));
    }
    let count = ((profile.t_set - profile.t_rise) / cfg.dt) as usize + 1;
    let mut series = clear_sky(profile, profile.t_rise, cfg.dt, count)?;
    attenuate(&mut series, &cfg.attenuation);
    Ok(series)
}

fn loop_config(cfg: &ScenarioConfig, start: Timestamp, end: Timestamp) -> LoopConfig {
    LoopConfig {
        dt: cfg.dt,
        decision_interval: cfg.decision_interval,
        horizon: cfg.horizon,
        end_rule: cfg.end_rule,
        first_step_fixed: cfg.first_step_fixed,
        dwell_rounding: cfg.dwell_rounding,
        criterion: cfg.criterion,
        start,
        end,
    }
}

/// Validates the config and loads or synthesizes every input series.
pub fn resolve_inputs(cfg: &ScenarioConfig) -> Result<ScenarioInputs, ScenarioError> {
    cfg.validate()?;
    let actual = match &cfg.actual_power {
        Some(path) => read_power_series(path)?,
        None => synthesize_actual(cfg)?,
    };
    if actual.dt != cfg.dt {
        return Err(ScenarioError::invalid(
            "dt",
            format!("actual power is sampled every {} s, config says {} s", actual.dt, cfg.dt),
        ));
    }
    let start = cfg
        .start
        .or(cfg.clearsky.as_ref().filter(|_| cfg.actual_power.is_none()).map(|p| p.t_rise))
        .unwrap_or(actual.t0);
    let end = cfg
        .end
        .or(cfg
            .clearsky
            .as_ref()
            .filter(|_| cfg.actual_power.is_none())
            .map(|p| p.t_set - cfg.horizon))
        .unwrap_or(actual.end() - cfg.horizon + 1);
    if end <= start {
        return Err(ScenarioError::invalid(
            "actual_power",
            "series is too short to cover one decision plus the horizon",
        ));
    }
    let clearsky = match &cfg.clearsky {
        Some(p) => Some(clear_sky(p, actual.t0, actual.dt, actual.len())?),
        None => None,
    };
    let forecast_set = match (&cfg.scenario, &cfg.forecast_file) {
        (ScenarioKind::External, Some(path)) => {
            let set = read_forecast_set(path)?;
            if set.dt != cfg.dt {
                return Err(ScenarioError::invalid(
                    "forecast_file",
                    format!("forecast step is {} s, config dt is {} s", set.dt, cfg.dt),
                ));
            }
            Some(set)
        }
        _ => None,
    };
    let loop_config = loop_config(cfg, start, end);
    if let Some(set) = &forecast_set {
        set.check_coverage(loop_config.decision_times(), loop_config.horizon_samples())?;
    }
    Ok(ScenarioInputs {
        actual,
        clearsky,
        forecast_set,
        loop_config,
    })
}

/// Flat summary of one run. Everything here is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub power_unit: String,
    pub loads: usize,
    pub dt: i64,
    pub decision_interval: i64,
    pub horizon_seconds: i64,
    pub horizon_decisions: usize,
    pub horizon_samples: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    pub decision_steps: usize,
    pub samples: usize,
    pub efficiency: f64,
    pub total_ee: f64,
    pub max_event_ee: f64,
    pub violation_events: usize,
    pub violation_steps: usize,
    pub infeasible_steps: usize,
    pub candidates_min: u64,
    pub candidates_mean: f64,
    pub candidates_max: u64,
    pub battery_largest_unit_rule: f64,
}

impl Summary {
    /// `key = value` lines in field order.
    pub fn to_key_values(&self) -> String {
        let value = serde_json::to_value(self).expect("summary serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub trajectory: ScenarioTrajectory,
    pub report: ExceedanceReport,
    pub summary: Summary,
}

/// Evaluates a finished trajectory.
pub fn summarize(
    cfg: &ScenarioConfig,
    inputs: &ScenarioInputs,
    trajectory: &ScenarioTrajectory,
) -> Result<(ExceedanceReport, Summary), ScenarioError> {
    let actual = trajectory.actual_series();
    let demand = trajectory.demand_series();
    let report = exceedance(&actual, &demand, cfg.exceedance_tol)?;
    let eff = efficiency(&actual, &demand)?;
    let battery = battery_estimate(&report, &cfg.loads);
    let counts: Vec<u64> = trajectory.decisions.iter().map(|d| d.candidates).collect();
    let lc = &inputs.loop_config;
    let summary = Summary {
        scenario: cfg.scenario.name().to_string(),
        power_unit: match cfg.power_unit {
            PowerUnit::Fraction => "fraction",
            PowerUnit::Watts => "watts",
        }
        .to_string(),
        loads: cfg.loads.len(),
        dt: cfg.dt,
        decision_interval: cfg.decision_interval,
        horizon_seconds: cfg.horizon,
        horizon_decisions: lc.horizon_columns(),
        horizon_samples: lc.horizon_samples(),
        start: lc.start,
        end: lc.end,
        decision_steps: trajectory.decisions.len(),
        samples: trajectory.len(),
        efficiency: eff,
        total_ee: report.total_ee,
        max_event_ee: report.max_event_ee,
        violation_events: report.event_count(),
        violation_steps: report.violation_steps,
        infeasible_steps: trajectory.decisions.iter().filter(|d| !d.feasible).count(),
        candidates_min: counts.iter().copied().min().unwrap_or(0),
        candidates_mean: if counts.is_empty() {
            0.0
        } else {
            counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64
        },
        candidates_max: counts.iter().copied().max().unwrap_or(0),
        battery_largest_unit_rule: battery.largest_unit_rule,
    };
    Ok((report, summary))
}

/// Runs one scenario end to end.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let inputs = resolve_inputs(cfg)?;
    let lc = &inputs.loop_config;
    let trajectory = match cfg.scenario {
        ScenarioKind::Perfect => run_closed_loop(&cfg.loads, lc, &inputs.actual, &Perfect(&inputs.actual), None)?,
        ScenarioKind::Persistence => {
            let clearsky = inputs.clearsky.as_ref().expect("validated");
            let guard = cfg
                .persistence_guard
                .unwrap_or_else(|| 0.01 * cfg.clearsky.as_ref().expect("validated").p_peak);
            let provider = Persistence {
                measured: &inputs.actual,
                clearsky,
                guard,
            };
            run_closed_loop(&cfg.loads, lc, &inputs.actual, &provider, None)?
        }
        ScenarioKind::External => {
            let set: &(dyn ForecastProvider + Sync) = inputs.forecast_set.as_ref().expect("validated");
            run_closed_loop(&cfg.loads, lc, &inputs.actual, set, None)?
        }
    };
    let (report, summary) = summarize(cfg, &inputs, &trajectory)?;
    Ok(RunOutput {
        config: cfg.clone(),
        trajectory,
        report,
        summary,
    })
}

/// Efficiency and exceedance of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub efficiency: f64,
    pub total_ee: f64,
    pub violation_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub decision_intervals: Vec<i64>,
    pub horizons: Vec<i64>,
    /// `cells[i][j]` for `decision_intervals[i]` and `horizons[j]`; `None` where the
    /// nesting rule `dt | decision_interval | horizon` fails.
    pub cells: Vec<Vec<Option<SweepCell>>>,
}

/// Whether a (decision interval, horizon) pair nests on a `dt` grid.
pub fn nests(dt: i64, decision_interval: i64, horizon: i64) -> bool {
    dt > 0 && decision_interval > 0 && horizon > 0 && decision_interval % dt == 0 && horizon % decision_interval == 0
}

pub fn sweep(cfg: &ScenarioConfig, horizons: &[i64], decision_intervals: &[i64]) -> Result<SweepTable, ScenarioError> {
    if horizons.is_empty() || decision_intervals.is_empty() {
        return Err(ScenarioError::invalid("sweep", "horizon and decision interval lists must be non-empty"));
    }
    // every cell covers the same decisions window so efficiencies compare
    let longest = horizons.iter().copied().max().unwrap_or(cfg.horizon);
    let end = cfg.end.or(cfg
        .clearsky
        .as_ref()
        .filter(|_| cfg.actual_power.is_none())
        .map(|p| p.t_set - longest));
    let mut cells = Vec::with_capacity(decision_intervals.len());
    for &tk in decision_intervals {
        let mut row = Vec::with_capacity(horizons.len());
        for &h in horizons {
            if !nests(cfg.dt, tk, h) {
                row.push(None);
                continue;
            }
            let cell_cfg = ScenarioConfig {
                decision_interval: tk,
                horizon: h,
                end,
                ..cfg.clone()
            };
            let out = run_scenario(&cell_cfg)?;
            row.push(Some(SweepCell {
                efficiency: out.summary.efficiency,
                total_ee: out.summary.total_ee,
                violation_events: out.summary.violation_events,
            }));
        }
        cells.push(row);
    }
    Ok(SweepTable {
        decision_intervals: decision_intervals.to_vec(),
        horizons: horizons.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub scenario: String,
    pub efficiency: f64,
    pub total_ee: f64,
    pub max_event_ee: f64,
    pub violation_events: usize,
    pub violation_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn same_loads(a: &[LoadSpec], b: &[LoadSpec]) -> bool {
    a == b
}

/// Runs several scenarios that share loads, grid, and actual power.
pub fn compare(configs: &[(String, ScenarioConfig)]) -> Result<Comparison, ScenarioError> {
    let Some((first_name, first)) = configs.first() else {
        return Err(ScenarioError::IncompatibleScenarios("no scenarios given".into()));
    };
    let base = resolve_inputs(first)?;
    for (name, cfg) in &configs[1..] {
        let inputs = resolve_inputs(cfg)?;
        let mismatch = if !same_loads(&cfg.loads, &first.loads) {
            Some("loads differ")
        } else if cfg.dt != first.dt {
            Some("dt differs")
        } else if inputs.loop_config.start != base.loop_config.start || inputs.loop_config.end != base.loop_config.end {
            Some("simulated period differs")
        } else if inputs.actual != base.actual {
            Some("actual power differs")
        } else {
            None
        };
        if let Some(why) = mismatch {
            return Err(ScenarioError::IncompatibleScenarios(format!("`{name}` vs `{first_name}`: {why}")));
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (name, cfg) in configs {
        let out = run_scenario(cfg)?;
        rows.push(ComparisonRow {
            name: name.clone(),
            scenario: out.summary.scenario.clone(),
            efficiency: out.summary.efficiency,
            total_ee: out.summary.total_ee,
            max_event_ee: out.summary.max_event_ee,
            violation_events: out.summary.violation_events,
            violation_steps: out.summary.violation_steps,
        });
    }
    Ok(Comparison { rows })
}

/// Reads a config and labels it with the file stem.
pub fn load_named(path: &Path) -> Result<(String, ScenarioConfig), ScenarioError> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((name, ScenarioConfig::load(path)?))
}

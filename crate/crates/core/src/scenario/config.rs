//! TOML scenario configuration.
//!
//! ```toml
//! dt = 60                   # simulation step, s
//! decision_interval = 60    # s, multiple of dt
//! horizon = 360             # s, multiple of decision_interval
//! scenario = "perfect"      # perfect | persistence | external
//! end_rule = "extendable"   # strict | extendable
//! dwell_rounding = "up"     # exact | up
//! power_unit = "fraction"   # fraction | watts
//!
//! [clearsky]
//! p_peak = 1.0
//! t_rise = 21600
//! t_set = 64800
//!
//! [criterion]
//! barrier_weight = 0.001
//!
//! [[loads]]
//! id = "L1"
//! rated_power = 0.6
//! tau_on = 120
//! tau_off = 45
//! min_on = 600
//! min_off = 450
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::forecast::ClearSkyProfile;
use crate::loads::{DwellRounding, LoadSpec};
use crate::mpc::CriterionConfig;
use crate::schedule_space::EndRule;
use crate::time::{deserialize_opt_timestamp, deserialize_timestamp, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Perfect,
    Persistence,
    External,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Perfect => "perfect",
            ScenarioKind::Persistence => "persistence",
            ScenarioKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnit {
    /// Fractions of plant nominal power.
    #[default]
    Fraction,
    Watts,
}

/// Multiplies the synthesized clear-sky power by `factor` over `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attenuation {
    #[serde(deserialize_with = "deserialize_timestamp")]
    pub start: Timestamp,
    #[serde(deserialize_with = "deserialize_timestamp")]
    pub end: Timestamp,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: i64,
    pub decision_interval: i64,
    pub horizon: i64,
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub end_rule: EndRule,
    #[serde(default)]
    pub first_step_fixed: bool,
    #[serde(default)]
    pub dwell_rounding: DwellRounding,
    #[serde(default)]
    pub power_unit: PowerUnit,
    /// First decision instant; defaults to sunrise or the first actual sample.
    #[serde(default, deserialize_with = "deserialize_opt_timestamp")]
    pub start: Option<Timestamp>,
    /// Decisions stop before this time; defaults to sunset minus the horizon for
    /// synthesized days, else the last instant whose window the data covers.
    #[serde(default, deserialize_with = "deserialize_opt_timestamp")]
    pub end: Option<Timestamp>,
    /// Absolute tolerance for counting power exceedance.
    #[serde(default)]
    pub exceedance_tol: f64,
    /// Clear-sky level below which persistence forecasts zero; defaults to 1 % of `p_peak`.
    #[serde(default)]
    pub persistence_guard: Option<f64>,
    #[serde(default)]
    pub clearsky: Option<ClearSkyProfile>,
    #[serde(default)]
    pub attenuation: Vec<Attenuation>,
    /// `timestamp,power` CSV; synthesized from `clearsky` when absent.
    #[serde(default)]
    pub actual_power: Option<PathBuf>,
    /// `issue_time,target_time,power` CSV for the external scenario.
    #[serde(default)]
    pub forecast_file: Option<PathBuf>,
    #[serde(default)]
    pub criterion: CriterionConfig,
    pub loads: Vec<LoadSpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.actual_power, &mut self.forecast_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field-level invariant.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |field: &str, msg: String| Err(ScenarioError::invalid(field, msg));
        if self.dt <= 0 {
            return invalid("dt", format!("must be positive, got {}", self.dt));
        }
        if self.decision_interval <= 0 || self.decision_interval % self.dt != 0 {
            return invalid(
                "decision_interval",
                format!("{} s is not a positive multiple of dt = {} s", self.decision_interval, self.dt),
            );
        }
        if self.horizon <= 0 || self.horizon % self.decision_interval != 0 {
            return invalid(
                "horizon",
                format!(
                    "{} s is not a positive multiple of decision_interval = {} s",
                    self.horizon, self.decision_interval
                ),
            );
        }
        if self.first_step_fixed {
            return invalid(
                "first_step_fixed",
                "pins the applied column to the current command; only usable when counting schedules".into(),
            );
        }
        if self.loads.is_empty() {
            return invalid("loads", "at least one load is required".into());
        }
        for (i, l) in self.loads.iter().enumerate() {
            l.validate().map_err(|e| ScenarioError::invalid(&format!("loads[{i}]"), e.to_string()))?;
        }
        if let Some(cs) = &self.clearsky {
            cs.validate().map_err(|e| ScenarioError::invalid("clearsky", e.to_string()))?;
        }
        for (i, a) in self.attenuation.iter().enumerate() {
            if a.end <= a.start || !(a.factor >= 0.0 && a.factor.is_finite()) {
                return invalid(
                    &format!("attenuation[{i}]"),
                    "needs start < end and a finite non-negative factor".into(),
                );
            }
        }
        if self.actual_power.is_none() && self.clearsky.is_none() {
            return invalid("actual_power", "required when no clearsky profile is given".into());
        }
        if self.scenario == ScenarioKind::Persistence && self.clearsky.is_none() {
            return invalid("clearsky", "required by the persistence scenario".into());
        }
        if self.scenario == ScenarioKind::External && self.forecast_file.is_none() {
            return invalid("forecast_file", "required by the external scenario".into());
        }
        if !(self.exceedance_tol >= 0.0) {
            return invalid("exceedance_tol", format!("must be >= 0, got {}", self.exceedance_tol));
        }
        if let Some(g) = self.persistence_guard {
            if !(g >= 0.0) {
                return invalid("persistence_guard", format!("must be >= 0, got {g}"));
            }
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e <= s {
                return invalid("end", format!("{e} is not after start {s}"));
            }
        }
        self.criterion
            .validate()
            .map_err(|e| ScenarioError::invalid("criterion", e.to_string()))?;
        Ok(())
    }
}

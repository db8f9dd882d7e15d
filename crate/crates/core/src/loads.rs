//! Switched first-order load models and their exact zero-order-hold discretization.
//!
//! Each load follows `tau * dp/dt + p = x * w` where the time constant depends on
//! whether the command `w` is on or off. With `w` held constant over a sample the
//! recursion `p[k] = a * p[k-1] + b * w[k-1]` is exact at the sample points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule_space::ScheduleCandidate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadError {
    #[error("load `{id}`: parameter `{field}` must be positive, got {value}")]
    NonPositiveParameter {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("load `{id}`: p_off must satisfy 0 <= p_off < rated_power, got {value}")]
    InvalidOffPower { id: String, value: f64 },
    #[error("load `{id}`: `{field}` = {duration} s is not a whole multiple of {step} s")]
    NonDivisibleDwell {
        id: String,
        field: &'static str,
        duration: f64,
        step: f64,
    },
    #[error("sampling interval must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// How a dwell time that is not a whole number of samples is converted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwellRounding {
    /// Reject durations that are not whole multiples of the sample interval.
    #[default]
    Exact,
    /// Round up to the next whole sample, never shortening the physical minimum.
    Up,
}

/// Physical parameters of one switchable load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub id: String,
    /// Steady-state demand when on.
    pub rated_power: f64,
    /// Time constant of the on-transition, seconds.
    pub tau_on: f64,
    /// Time constant of the off-transition, seconds.
    pub tau_off: f64,
    /// Minimum on time, seconds.
    pub min_on: f64,
    /// Minimum off time, seconds.
    pub min_off: f64,
    /// Standby demand when off.
    #[serde(default)]
    pub p_off: f64,
}

impl LoadSpec {
    pub fn new(
        id: impl Into<String>,
        rated_power: f64,
        tau_on: f64,
        tau_off: f64,
        min_on: f64,
        min_off: f64,
    ) -> Self {
        Self {
            id: id.into(),
            rated_power,
            tau_on,
            tau_off,
            min_on,
            min_off,
            p_off: 0.0,
        }
    }

    /// Three units sized at 60 %, 26 % and 12 % of plant nominal power.
    pub fn reference_fleet() -> Vec<LoadSpec> {
        vec![
            LoadSpec::new("L1", 0.60, 120.0, 45.0, 600.0, 450.0),
            LoadSpec::new("L2", 0.26, 45.0, 30.0, 510.0, 300.0),
            LoadSpec::new("L3", 0.12, 15.0, 15.0, 450.0, 240.0),
        ]
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        let positive = [
            ("rated_power", self.rated_power),
            ("tau_on", self.tau_on),
            ("tau_off", self.tau_off),
            ("min_on", self.min_on),
            ("min_off", self.min_off),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LoadError::NonPositiveParameter {
                    id: self.id.clone(),
                    field,
                    value,
                });
            }
        }
        if !(self.p_off >= 0.0 && self.p_off < self.rated_power) {
            return Err(LoadError::InvalidOffPower {
                id: self.id.clone(),
                value: self.p_off,
            });
        }
        Ok(())
    }
}

/// Converts a duration into a whole number of samples of length `step`.
pub fn whole_samples(
    id: &str,
    field: &'static str,
    duration: f64,
    step: f64,
    rounding: DwellRounding,
) -> Result<usize, LoadError> {
    let ratio = duration / step;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) && nearest >= 1.0 {
        return Ok(nearest as usize);
    }
    match rounding {
        DwellRounding::Up => Ok(ratio.ceil().max(1.0) as usize),
        DwellRounding::Exact => Err(LoadError::NonDivisibleDwell {
            id: id.to_string(),
            field,
            duration,
            step,
        }),
    }
}

/// Sample-domain model of a load at a fixed sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedLoad {
    pub spec: LoadSpec,
    pub dt: f64,
    pub a_on: f64,
    pub b_on: f64,
    pub a_off: f64,
    pub b_off: f64,
    /// Minimum on time in samples of `dt`.
    pub n_on: usize,
    /// Minimum off time in samples of `dt`.
    pub n_off: usize,
}

/// ZOH discretization; dwell times must be whole multiples of `dt`.
pub fn discretize(spec: &LoadSpec, dt: f64) -> Result<DiscretizedLoad, LoadError> {
    discretize_with(spec, dt, DwellRounding::Exact)
}

pub fn discretize_with(
    spec: &LoadSpec,
    dt: f64,
    rounding: DwellRounding,
) -> Result<DiscretizedLoad, LoadError> {
    spec.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LoadError::NonPositiveStep(dt));
    }
    let n_on = whole_samples(&spec.id, "min_on", spec.min_on, dt, rounding)?;
    let n_off = whole_samples(&spec.id, "min_off", spec.min_off, dt, rounding)?;
    let a_on = (-dt / spec.tau_on).exp();
    let a_off = (-dt / spec.tau_off).exp();
    Ok(DiscretizedLoad {
        spec: spec.clone(),
        dt,
        a_on,
        b_on: spec.rated_power * (1.0 - a_on),
        a_off,
        b_off: spec.rated_power * (1.0 - a_off),
        n_on,
        n_off,
    })
}

/// Dynamic state of one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadState {
    pub power: f64,
    /// Command currently applied.
    pub on: bool,
    /// Consecutive samples the current command has been applied, counting the
    /// sample in which it was switched to.
    pub dwell: usize,
}

impl LoadState {
    /// Off at standby power with every dwell requirement long satisfied.
    pub fn settled_off(p_off: f64) -> Self {
        Self {
            power: p_off,
            on: false,
            dwell: usize::MAX,
        }
    }
}

impl DiscretizedLoad {
    /// Applies command `w` for one sample.
    pub fn step(&self, state: &LoadState, w: bool) -> LoadState {
        let power = if w {
            self.b_on + self.a_on * state.power
        } else if self.spec.p_off > 0.0 {
            self.spec.p_off + self.a_off * (state.power - self.spec.p_off)
        } else {
            self.a_off * state.power
        };
        let dwell = if w == state.on {
            state.dwell.saturating_add(1)
        } else {
            1
        };
        LoadState {
            power,
            on: w,
            dwell,
        }
    }

    pub fn settled_off(&self) -> LoadState {
        LoadState::settled_off(self.spec.p_off)
    }
}

/// Free-function form of [`DiscretizedLoad::step`].
pub fn step(load: &DiscretizedLoad, state: &LoadState, w: bool) -> LoadState {
    load.step(state, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetState {
    pub loads: Vec<LoadState>,
}

impl FleetState {
    pub fn settled_off(loads: &[DiscretizedLoad]) -> Self {
        Self {
            loads: loads.iter().map(DiscretizedLoad::settled_off).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn commands(&self) -> Vec<bool> {
        self.loads.iter().map(|s| s.on).collect()
    }

    /// Aggregate demand, summed in declaration order.
    pub fn total_power(&self) -> f64 {
        self.loads.iter().fold(0.0, |acc, s| acc + s.power)
    }
}

/// Result of driving a fleet through a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetRun {
    /// Aggregate demand after each simulated sample.
    pub demand: Vec<f64>,
    /// `per_load[i][j]` is the power of load `i` after sample `j`.
    pub per_load: Vec<Vec<f64>>,
    pub final_state: FleetState,
}

/// Simulates one load through `commands`, each held for `hold` samples, and
/// returns the power after every sample.
pub fn simulate_load(
    load: &DiscretizedLoad,
    commands: impl IntoIterator<Item = bool>,
    hold: usize,
    init: LoadState,
) -> (Vec<f64>, LoadState) {
    let mut state = init;
    let mut trace = Vec::new();
    for w in commands {
        for _ in 0..hold {
            state = load.step(&state, w);
            trace.push(state.power);
        }
    }
    (trace, state)
}

/// Simulates every load with one schedule column per sample.
pub fn simulate_fleet(
    loads: &[DiscretizedLoad],
    schedule: &ScheduleCandidate,
    init: &FleetState,
) -> Result<FleetRun, LoadError> {
    simulate_fleet_held(loads, schedule, init, 1)
}

/// Simulates every load with each schedule column held for `hold` samples.
pub fn simulate_fleet_held(
    loads: &[DiscretizedLoad],
    schedule: &ScheduleCandidate,
    init: &FleetState,
    hold: usize,
) -> Result<FleetRun, LoadError> {
    let commands: Vec<Vec<bool>> = schedule.rows().iter().map(|r| r.to_bools()).collect();
    simulate_fleet_commands(loads, &commands, init, hold)
}

/// Like [`simulate_fleet_held`] for command sequences of any length.
pub fn simulate_fleet_commands(
    loads: &[DiscretizedLoad],
    commands: &[Vec<bool>],
    init: &FleetState,
    hold: usize,
) -> Result<FleetRun, LoadError> {
    if commands.len() != loads.len() || init.len() != loads.len() {
        return Err(LoadError::DimensionMismatch(format!(
            "{} loads, {} command rows, {} initial states",
            loads.len(),
            commands.len(),
            init.len()
        )));
    }
    let columns = commands.first().map_or(0, Vec::len);
    if commands.iter().any(|c| c.len() != columns) {
        return Err(LoadError::DimensionMismatch("command rows differ in length".into()));
    }
    let mut per_load = Vec::with_capacity(loads.len());
    let mut final_states = Vec::with_capacity(loads.len());
    for ((load, row), state) in loads.iter().zip(commands).zip(&init.loads) {
        let (trace, last) = simulate_load(load, row.iter().copied(), hold, *state);
        per_load.push(trace);
        final_states.push(last);
    }
    let mut demand = vec![0.0; columns * hold];
    for trace in &per_load {
        for (d, p) in demand.iter_mut().zip(trace) {
            *d += p;
        }
    }
    Ok(FleetRun {
        demand,
        per_load,
        final_state: FleetState {
            loads: final_states,
        },
    })
}

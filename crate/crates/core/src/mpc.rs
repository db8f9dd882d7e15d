//! Moving-horizon scheduling.
//!
//! At each decision instant every admissible fleet schedule is scored against the
//! forecast window with a barrier-penalized tracking cost, the first column of the
//! best schedule is applied for one decision interval, and the horizon moves on.
//!
//! Loads do not interact, so each load's power trajectory under each of its
//! admissible rows is simulated once per step and candidates are scored from
//! partial sums in a depth-first search over loads. A subtree is skipped when,
//! with the remaining loads at their smallest and largest possible powers, no
//! positive margin is left somewhere (hard barrier) or the per-sample cost
//! minima already exceed the best cost found.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastError, ForecastProvider, PowerSeries};
use crate::loads::{
    discretize_with, simulate_fleet_commands, simulate_load, DiscretizedLoad, DwellRounding, FleetRun, FleetState,
    LoadError, LoadSpec, LoadState,
};
use crate::schedule_space::{enumerate_rows, DwellConstraint, EndRule, Row, ScheduleCandidate, ScheduleError};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no admissible schedule for load {0}")]
    EmptyAdmissibleSet(usize),
    #[error("forecast for decision at {issue} is unavailable: {source}")]
    CoverageGap {
        issue: Timestamp,
        #[source]
        source: ForecastError,
    },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    /// A non-positive margin anywhere makes the candidate infeasible.
    #[default]
    HardBarrier,
    /// Margins are floored before the logarithm, so every candidate has a finite cost.
    SoftFallback,
}

/// Tracking cost `sum_l (e_l / P_ref)^2 - mu * ln(max(e_l, floor) / P_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    #[serde(default = "default_weight")]
    pub barrier_weight: f64,
    /// Margin floor inside the logarithm, in power units. Defaults to `1e-9 * reference_power`.
    #[serde(default)]
    pub barrier_floor: Option<f64>,
    /// Normalizing power, usually plant nominal.
    #[serde(default = "default_reference")]
    pub reference_power: f64,
    #[serde(default)]
    pub mode: BarrierMode,
}

fn default_weight() -> f64 {
    1.0
}

fn default_reference() -> f64 {
    1.0
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            barrier_weight: default_weight(),
            barrier_floor: None,
            reference_power: default_reference(),
            mode: BarrierMode::HardBarrier,
        }
    }
}

impl CriterionConfig {
    pub fn floor(&self) -> f64 {
        self.barrier_floor.unwrap_or(1e-9 * self.reference_power)
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if !(self.barrier_weight >= 0.0 && self.barrier_weight.is_finite()) {
            return Err(MpcError::Config(format!(
                "criterion.barrier_weight must be >= 0, got {}",
                self.barrier_weight
            )));
        }
        if !(self.reference_power > 0.0 && self.reference_power.is_finite()) {
            return Err(MpcError::Config(format!(
                "criterion.reference_power must be > 0, got {}",
                self.reference_power
            )));
        }
        if !(self.floor() > 0.0 && self.floor().is_finite()) {
            return Err(MpcError::Config(format!("criterion.barrier_floor must be > 0, got {}", self.floor())));
        }
        Ok(())
    }

    /// Cost of one error sample; `None` means outside the barrier domain.
    #[inline]
    fn sample_cost(&self, e: f64) -> Option<f64> {
        if self.mode == BarrierMode::HardBarrier && e <= 0.0 {
            return None;
        }
        let z = e / self.reference_power;
        let barrier = if self.barrier_weight == 0.0 {
            0.0
        } else {
            self.barrier_weight * (e.max(self.floor()) / self.reference_power).ln()
        };
        Some(z * z - barrier)
    }

    /// Lower bound of the floored per-sample cost over margins in `[lo, hi]`.
    fn min_sample_cost(&self, lo: f64, hi: f64) -> f64 {
        let lo = if self.mode == BarrierMode::HardBarrier { lo.max(0.0) } else { lo };
        if lo > hi {
            return f64::INFINITY;
        }
        let f = |e: f64| {
            let z = e / self.reference_power;
            let barrier = if self.barrier_weight == 0.0 {
                0.0
            } else {
                self.barrier_weight * (e.max(self.floor()) / self.reference_power).ln()
            };
            z * z - barrier
        };
        let stationary = self.reference_power * (self.barrier_weight / 2.0).sqrt();
        [lo, hi, stationary, 0.0, self.floor()]
            .into_iter()
            .map(|e| f(e.clamp(lo, hi)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `forecast[l] - demand[l]` for every sample.
pub fn tracking_error(forecast: &[f64], demand: &[f64]) -> Result<Vec<f64>, MpcError> {
    if forecast.len() != demand.len() {
        return Err(MpcError::LengthMismatch(format!(
            "forecast has {} samples, demand has {}",
            forecast.len(),
            demand.len()
        )));
    }
    Ok(forecast.iter().zip(demand).map(|(p, d)| p - d).collect())
}

/// Candidate cost; `f64::INFINITY` when a hard barrier is violated.
pub fn candidate_cost(errors: &[f64], cfg: &CriterionConfig) -> f64 {
    let mut cost = 0.0;
    for &e in errors {
        match cfg.sample_cost(e) {
            Some(c) => cost += c,
            None => return f64::INFINITY,
        }
    }
    cost
}

/// Predicted exceedance `sum_l max(0, -e_l)^2`, the fallback objective.
pub fn predicted_exceedance(errors: &[f64]) -> f64 {
    errors.iter().fold(0.0, |acc, &e| {
        let x = (-e).max(0.0);
        acc + x * x
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// First column of `chosen`.
    pub applied: Vec<bool>,
    pub chosen: ScheduleCandidate,
    /// `f64::INFINITY` when no candidate satisfied the hard barrier.
    pub cost: f64,
    /// Predicted exceedance of `chosen`.
    pub exceedance: f64,
    /// Size of the admissible set for this step.
    pub candidates_evaluated: u64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
struct Best {
    key: (f64, usize),
    picks: Vec<usize>,
}

/// Smallest cost seen by any worker; only ever used to discard subtrees that
/// cannot reach it, so the result does not depend on scheduling.
struct SharedBound(AtomicU64);

impl SharedBound {
    fn new() -> Self {
        Self(AtomicU64::new(f64::INFINITY.to_bits()))
    }

    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    fn offer(&self, cost: f64) {
        let _ = self
            .0
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
                (cost < f64::from_bits(bits)).then_some(cost.to_bits())
            });
    }
}

/// Whether a lower bound `lb` rules out beating `bound`, with a relative margin
/// that absorbs rounding differences between the bound and the exact cost.
fn exceeds(lb: f64, bound: f64) -> bool {
    lb > bound && lb - bound > 1e-9 * (lb.abs() + bound.abs()) + 1e-12
}

struct Search<'a> {
    window: &'a [f64],
    rows: &'a [Vec<Row>],
    traces: &'a [Vec<Vec<f64>>],
    cfg: &'a CriterionConfig,
    /// `rest_min[d][l]`: smallest possible power of loads after `d` at sample `l`.
    rest_min: Vec<Vec<f64>>,
    rest_max: Vec<Vec<f64>>,
    bound: SharedBound,
}

impl<'a> Search<'a> {
    fn new(window: &'a [f64], rows: &'a [Vec<Row>], traces: &'a [Vec<Vec<f64>>], cfg: &'a CriterionConfig) -> Self {
        let n = rows.len();
        let len = window.len();
        let mut rest_min = vec![vec![0.0; len]; n];
        let mut rest_max = vec![vec![0.0; len]; n];
        for d in (0..n.saturating_sub(1)).rev() {
            for l in 0..len {
                let (lo, hi) = traces[d + 1]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t[l]), hi.max(t[l])));
                rest_min[d][l] = rest_min[d + 1][l] + lo;
                rest_max[d][l] = rest_max[d + 1][l] + hi;
            }
        }
        Self {
            window,
            rows,
            traces,
            cfg,
            rest_min,
            rest_max,
            bound: SharedBound::new(),
        }
    }

    fn depth(&self) -> usize {
        self.rows.len()
    }

    fn accumulate(&self, d: usize, row: usize, acc: &mut [Vec<f64>]) {
        let (before, rest) = acc.split_at_mut(d);
        let cur = &mut rest[0];
        let trace = &self.traces[d][row];
        match before.last() {
            Some(prev) => {
                for ((c, p), t) in cur.iter_mut().zip(prev).zip(trace) {
                    *c = p + t;
                }
            }
            None => {
                for (c, t) in cur.iter_mut().zip(trace) {
                    *c = 0.0 + t;
                }
            }
        }
    }

    /// First candidate (in lexicographic order) of minimal cost with all margins positive
    /// (hard barrier) or of minimal floored cost (soft).
    fn best_cost(&self, first: usize) -> Option<Best> {
        let n = self.depth();
        let mut acc = vec![vec![0.0; self.window.len()]; n];
        let mut picks = vec![0; n];
        let mut best = None;
        self.cost_level(0, first, &mut acc, &mut picks, &mut best);
        best
    }

    fn cost_level(&self, d: usize, row: usize, acc: &mut [Vec<f64>], picks: &mut [usize], best: &mut Option<Best>) {
        picks[d] = row;
        self.accumulate(d, row, acc);
        let cur = &acc[d];
        if d + 1 < self.depth() {
            let hard = self.cfg.mode == BarrierMode::HardBarrier;
            let mut lb = 0.0;
            for (l, (p, c)) in self.window.iter().zip(cur).enumerate() {
                let hi = p - c - self.rest_min[d][l];
                if hard && hi <= 0.0 {
                    return;
                }
                lb += self.cfg.min_sample_cost(p - c - self.rest_max[d][l], hi);
            }
            if exceeds(lb, self.bound.get()) {
                return;
            }
            for next in 0..self.rows[d + 1].len() {
                self.cost_level(d + 1, next, acc, picks, best);
            }
            return;
        }
        let mut cost = 0.0;
        for (p, c) in self.window.iter().zip(cur) {
            match self.cfg.sample_cost(p - c) {
                Some(v) => cost += v,
                None => return,
            }
        }
        if best.as_ref().is_none_or(|b| cost < b.key.0) {
            self.bound.offer(cost);
            *best = Some(Best {
                key: (cost, 0),
                picks: picks.to_vec(),
            });
        }
    }

    /// First candidate minimizing (predicted exceedance, loads on in the first column).
    fn best_fallback(&self, first: usize) -> Option<Best> {
        let n = self.depth();
        let mut acc = vec![vec![0.0; self.window.len()]; n];
        let mut picks = vec![0; n];
        let mut best = None;
        self.fallback_level(0, first, 0, &mut acc, &mut picks, &mut best);
        best
    }

    fn fallback_level(
        &self,
        d: usize,
        row: usize,
        ons: usize,
        acc: &mut [Vec<f64>],
        picks: &mut [usize],
        best: &mut Option<Best>,
    ) {
        picks[d] = row;
        let ons = ons + self.rows[d][row].get(0) as usize;
        self.accumulate(d, row, acc);
        let cur = &acc[d];
        let leaf = d + 1 == self.depth();
        let exc = self.window.iter().zip(cur).enumerate().fold(0.0, |acc, (l, (p, c))| {
            let rest = if leaf { 0.0 } else { self.rest_min[d][l] };
            let x = (c + rest - p).max(0.0);
            acc + x * x
        });
        let key = (exc, ons);
        if let Some(b) = best {
            if leaf {
                if key.0 > b.key.0 || (key.0 == b.key.0 && key.1 >= b.key.1) {
                    return;
                }
            } else if exceeds(key.0, b.key.0) {
                return;
            }
        }
        if !leaf {
            for next in 0..self.rows[d + 1].len() {
                self.fallback_level(d + 1, next, ons, acc, picks, best);
            }
            return;
        }
        *best = Some(Best {
            key,
            picks: picks.to_vec(),
        });
    }
}

/// Keeps the smaller key; on equal keys the earlier (left) candidate wins.
fn pick_first(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let b_wins = b.key.0 < a.key.0 || (b.key.0 == a.key.0 && b.key.1 < a.key.1);
            Some(if b_wins { b } else { a })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

/// Scheduling view of a load's state: dwell counted in decision intervals.
fn decision_state(state: &LoadState, hold: usize) -> LoadState {
    LoadState {
        dwell: state.dwell / hold,
        ..*state
    }
}

/// Chooses the schedule for one decision instant.
///
/// `window` holds the forecast for the `horizon * hold` simulation samples after the
/// decision; each schedule column is held for `hold` samples.
pub fn plan_step(
    fleet: &FleetState,
    loads: &[DiscretizedLoad],
    constraints: &[DwellConstraint],
    window: &[f64],
    cfg: &CriterionConfig,
    hold: usize,
) -> Result<PlanResult, MpcError> {
    let n = loads.len();
    if fleet.len() != n || constraints.len() != n {
        return Err(MpcError::DimensionMismatch(format!(
            "{n} loads, {} states, {} constraints",
            fleet.len(),
            constraints.len()
        )));
    }
    if n == 0 {
        return Err(MpcError::DimensionMismatch("empty fleet".into()));
    }
    if hold == 0 {
        return Err(MpcError::Config("hold must be at least one sample".into()));
    }
    let horizon = constraints[0].horizon;
    if constraints.iter().any(|c| c.horizon != horizon) {
        return Err(MpcError::DimensionMismatch("constraints disagree on the horizon".into()));
    }
    if window.len() != horizon * hold {
        return Err(MpcError::LengthMismatch(format!(
            "window has {} samples, expected {} columns x {hold}",
            window.len(),
            horizon
        )));
    }

    let mut rows = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    for (i, ((load, c), state)) in loads.iter().zip(constraints).zip(&fleet.loads).enumerate() {
        c.validate()?;
        let load_rows: Vec<Row> = enumerate_rows(c, &decision_state(state, hold)).collect();
        if load_rows.is_empty() {
            return Err(MpcError::EmptyAdmissibleSet(i));
        }
        traces.push(
            load_rows
                .iter()
                .map(|r| simulate_load(load, r.iter(), hold, *state).0)
                .collect::<Vec<_>>(),
        );
        rows.push(load_rows);
    }
    let total = rows.iter().fold(1u64, |acc, r| acc.saturating_mul(r.len() as u64));

    let search = Search::new(window, &rows, &traces, cfg);
    let first_rows = rows[0].len();
    let best = (0..first_rows)
        .into_par_iter()
        .map(|r| search.best_cost(r))
        .reduce(|| None, pick_first);

    let (best, feasible_search) = match best {
        Some(b) => (b, true),
        None => {
            let b = (0..first_rows)
                .into_par_iter()
                .map(|r| search.best_fallback(r))
                .reduce(|| None, pick_first)
                .ok_or(MpcError::EmptyAdmissibleSet(0))?;
            (b, false)
        }
    };

    let chosen = ScheduleCandidate::new(best.picks.iter().zip(&rows).map(|(&p, r)| r[p]).collect());
    let mut demand = vec![0.0; window.len()];
    for (i, &p) in best.picks.iter().enumerate() {
        for (d, t) in demand.iter_mut().zip(&traces[i][p]) {
            *d += t;
        }
    }
    let errors = tracking_error(window, &demand)?;
    let cost = if feasible_search { best.key.0 } else { f64::INFINITY };
    Ok(PlanResult {
        applied: chosen.column(0),
        feasible: feasible_search && errors.iter().all(|&e| e > 0.0),
        exceedance: predicted_exceedance(&errors),
        cost,
        chosen,
        candidates_evaluated: total,
    })
}

/// Timing and constraint settings of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Simulation step, seconds.
    pub dt: i64,
    /// Decision interval, seconds.
    pub decision_interval: i64,
    /// Horizon, seconds.
    pub horizon: i64,
    pub end_rule: EndRule,
    pub first_step_fixed: bool,
    pub dwell_rounding: DwellRounding,
    pub criterion: CriterionConfig,
    /// First decision instant.
    pub start: Timestamp,
    /// Decisions are taken at `start + j * decision_interval < end`.
    pub end: Timestamp,
}

impl LoopConfig {
    /// Checks the nesting rule `dt | decision_interval | horizon`.
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.dt <= 0 {
            return Err(MpcError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.decision_interval <= 0 || self.decision_interval % self.dt != 0 {
            return Err(MpcError::Config(format!(
                "decision_interval ({} s) must be a positive multiple of dt ({} s)",
                self.decision_interval, self.dt
            )));
        }
        if self.horizon <= 0 || self.horizon % self.decision_interval != 0 {
            return Err(MpcError::Config(format!(
                "horizon ({} s) must be a positive multiple of decision_interval ({} s)",
                self.horizon, self.decision_interval
            )));
        }
        if self.first_step_fixed {
            return Err(MpcError::Config(
                "first_step_fixed pins the applied column to the current command and cannot drive a closed loop"
                    .into(),
            ));
        }
        if self.end <= self.start {
            return Err(MpcError::Config(format!("end ({}) must be after start ({})", self.end, self.start)));
        }
        self.criterion.validate()
    }

    pub fn hold(&self) -> usize {
        (self.decision_interval / self.dt) as usize
    }

    /// Horizon length in decision intervals.
    pub fn horizon_columns(&self) -> usize {
        (self.horizon / self.decision_interval) as usize
    }

    /// Horizon length in simulation samples.
    pub fn horizon_samples(&self) -> usize {
        (self.horizon / self.dt) as usize
    }

    pub fn decision_times(&self) -> impl Iterator<Item = Timestamp> + '_ {
        (0..)
            .map(move |j| self.start + j * self.decision_interval)
            .take_while(move |&t| t < self.end)
    }

    pub fn discretize(&self, specs: &[LoadSpec]) -> Result<Vec<DiscretizedLoad>, MpcError> {
        specs
            .iter()
            .map(|s| discretize_with(s, self.dt as f64, self.dwell_rounding).map_err(MpcError::from))
            .collect()
    }

    pub fn constraints(&self, specs: &[LoadSpec]) -> Result<Vec<DwellConstraint>, MpcError> {
        specs
            .iter()
            .map(|s| {
                DwellConstraint::for_load(
                    s,
                    self.decision_interval as f64,
                    self.horizon_columns(),
                    self.end_rule,
                    self.dwell_rounding,
                )
                .map(|c| c.with_first_step_fixed(self.first_step_fixed))
                .map_err(MpcError::from)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub time: Timestamp,
    pub applied: Vec<bool>,
    pub cost: f64,
    pub feasible: bool,
    pub candidates: u64,
    /// Forecast used, one value per simulation sample of the horizon.
    pub window: Vec<f64>,
}

/// Everything recorded by a closed-loop run, one entry per simulation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrajectory {
    pub t0: Timestamp,
    pub dt: i64,
    pub actual: Vec<f64>,
    /// Forecast for each sample from the decision that covered it; none for the first.
    pub forecast: Vec<Option<f64>>,
    pub demand: Vec<f64>,
    /// `load_power[i][s]`.
    pub load_power: Vec<Vec<f64>>,
    /// `commands[i][s]` is applied from sample `s` to `s + 1`; one shorter than the powers.
    pub commands: Vec<Vec<bool>>,
    pub decisions: Vec<DecisionRecord>,
    pub initial_state: FleetState,
    pub final_state: FleetState,
}

impl ScenarioTrajectory {
    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn time(&self, s: usize) -> Timestamp {
        self.t0 + s as i64 * self.dt
    }

    pub fn actual_series(&self) -> PowerSeries {
        PowerSeries {
            t0: self.t0,
            dt: self.dt,
            values: self.actual.clone(),
        }
    }

    pub fn demand_series(&self) -> PowerSeries {
        PowerSeries {
            t0: self.t0,
            dt: self.dt,
            values: self.demand.clone(),
        }
    }

    /// Re-simulates the applied decisions from the initial state.
    pub fn replay(&self, loads: &[DiscretizedLoad], hold: usize) -> Result<FleetRun, LoadError> {
        let commands: Vec<Vec<bool>> = (0..loads.len())
            .map(|i| self.decisions.iter().map(|d| d.applied[i]).collect())
            .collect();
        simulate_fleet_commands(loads, &commands, &self.initial_state, hold)
    }
}

/// Runs the moving-horizon scheduler over `[cfg.start, cfg.end)`.
///
/// `actual` must be on the `cfg.dt` grid and cover the simulated samples; the
/// forecast provider must cover every decision instant.
pub fn run_closed_loop(
    specs: &[LoadSpec],
    cfg: &LoopConfig,
    actual: &PowerSeries,
    forecast: &(dyn ForecastProvider + Sync),
    init: Option<FleetState>,
) -> Result<ScenarioTrajectory, MpcError> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(MpcError::Config("loads: at least one load is required".into()));
    }
    if actual.dt != cfg.dt {
        return Err(MpcError::Config(format!(
            "actual power is sampled every {} s but dt is {} s",
            actual.dt, cfg.dt
        )));
    }
    let loads = cfg.discretize(specs)?;
    let constraints = cfg.constraints(specs)?;
    let hold = cfg.hold();
    let samples = cfg.horizon_samples();
    let decisions: Vec<Timestamp> = cfg.decision_times().collect();
    let total_samples = decisions.len() * hold + 1;

    let first = actual.index_of(cfg.start).ok_or(MpcError::CoverageGap {
        issue: cfg.start,
        source: ForecastError::OutOfRange(cfg.start),
    })?;
    if first + total_samples > actual.len() {
        let t = actual.time(first + total_samples - 1);
        return Err(MpcError::CoverageGap {
            issue: t,
            source: ForecastError::OutOfRange(t),
        });
    }

    let mut state = init.unwrap_or_else(|| FleetState::settled_off(&loads));
    if state.len() != loads.len() {
        return Err(MpcError::DimensionMismatch(format!(
            "initial state has {} loads, fleet has {}",
            state.len(),
            loads.len()
        )));
    }
    let initial_state = state.clone();
    let n = loads.len();
    let mut traj = ScenarioTrajectory {
        t0: cfg.start,
        dt: cfg.dt,
        actual: actual.values[first..first + total_samples].to_vec(),
        forecast: Vec::with_capacity(total_samples),
        demand: Vec::with_capacity(total_samples),
        load_power: vec![Vec::with_capacity(total_samples); n],
        commands: vec![Vec::with_capacity(total_samples - 1); n],
        decisions: Vec::with_capacity(decisions.len()),
        initial_state: initial_state.clone(),
        final_state: initial_state.clone(),
    };
    traj.forecast.push(None);
    traj.demand.push(state.total_power());
    for (i, s) in state.loads.iter().enumerate() {
        traj.load_power[i].push(s.power);
    }

    for issue in decisions {
        let window = forecast
            .window(issue, samples)
            .map_err(|source| MpcError::CoverageGap { issue, source })?;
        let plan = plan_step(&state, &loads, &constraints, &window, &cfg.criterion, hold)?;
        for s in 0..hold {
            for (i, load) in loads.iter().enumerate() {
                state.loads[i] = load.step(&state.loads[i], plan.applied[i]);
                traj.load_power[i].push(state.loads[i].power);
                traj.commands[i].push(plan.applied[i]);
            }
            traj.demand.push(state.total_power());
            traj.forecast.push(Some(window[s]));
        }
        traj.decisions.push(DecisionRecord {
            time: issue,
            applied: plan.applied,
            cost: plan.cost,
            feasible: plan.feasible,
            candidates: plan.candidates_evaluated,
            window,
        });
    }
    traj.final_state = state;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::discretize;
    use approx::assert_relative_eq;

    fn soft(mu: f64) -> CriterionConfig {
        CriterionConfig {
            barrier_weight: mu,
            mode: BarrierMode::SoftFallback,
            ..Default::default()
        }
    }

    #[test]
    fn tracking_error_examples() {
        assert_eq!(tracking_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(tracking_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let e = tracking_error(&[1.0, 0.8], &[0.6, 0.9]).unwrap();
        assert_relative_eq!(e[0], 0.4, max_relative = 1e-15);
        assert_relative_eq!(e[1], -0.1, max_relative = 1e-14);
        assert!(matches!(tracking_error(&[1.0], &[]), Err(MpcError::LengthMismatch(_))));
    }

    #[test]
    fn cost_examples() {
        let hard = CriterionConfig::default();
        assert_eq!(candidate_cost(&[0.0, 0.0], &hard), f64::INFINITY);
        assert_eq!(candidate_cost(&[0.5, -1e-12], &hard), f64::INFINITY);
        assert_relative_eq!(candidate_cost(&[0.4, -0.1], &soft(0.0)), 0.17, max_relative = 1e-14);
        // soft mode stays finite below the floor
        assert!(candidate_cost(&[-0.5], &soft(1.0)).is_finite());
        // larger margins lower the barrier part
        let mu = CriterionConfig { barrier_weight: 0.5, ..Default::default() };
        let a = candidate_cost(&[0.3, 0.4], &mu);
        let b = candidate_cost(&[0.4, 0.3], &mu);
        assert_relative_eq!(a, b, max_relative = 1e-15);
        let squares = 0.3f64 * 0.3 + 0.4 * 0.4;
        assert_relative_eq!(a, squares - 0.5 * (0.3f64.ln() + 0.4f64.ln()), max_relative = 1e-14);
    }

    fn single_load() -> (Vec<DiscretizedLoad>, Vec<DwellConstraint>) {
        let spec = LoadSpec::new("a", 0.5, 30.0, 30.0, 60.0, 60.0);
        let loads = vec![discretize(&spec, 30.0).unwrap()];
        let constraints = vec![DwellConstraint::new(2, 2, 4, EndRule::Extendable)];
        (loads, constraints)
    }

    #[test]
    fn zero_forecast_keeps_everything_off() {
        let (loads, constraints) = single_load();
        let fleet = FleetState::settled_off(&loads);
        let plan = plan_step(&fleet, &loads, &constraints, &[0.0; 4], &CriterionConfig::default(), 1).unwrap();
        assert_eq!(plan.applied, vec![false]);
        assert!(!plan.feasible);
        assert_eq!(plan.cost, f64::INFINITY);
        assert_eq!(plan.exceedance, 0.0);
        assert_eq!(plan.candidates_evaluated, 8);
    }

    #[test]
    fn ample_forecast_switches_on() {
        let (loads, constraints) = single_load();
        let fleet = FleetState::settled_off(&loads);
        let cfg = CriterionConfig { barrier_weight: 1e-3, ..Default::default() };
        let plan = plan_step(&fleet, &loads, &constraints, &[0.52; 4], &cfg, 1).unwrap();
        assert_eq!(plan.applied, vec![true]);
        assert_eq!(plan.chosen.rows()[0].to_string(), "1111");
        assert!(plan.feasible);
    }

    #[test]
    fn hold_expands_columns() {
        let (loads, constraints) = single_load();
        let fleet = FleetState::settled_off(&loads);
        let cfg = CriterionConfig { barrier_weight: 1e-3, ..Default::default() };
        assert!(matches!(
            plan_step(&fleet, &loads, &constraints, &[0.52; 4], &cfg, 2),
            Err(MpcError::LengthMismatch(_))
        ));
        let plan = plan_step(&fleet, &loads, &constraints, &[0.52; 8], &cfg, 2).unwrap();
        assert_eq!(plan.applied, vec![true]);
    }

    #[test]
    fn nesting_rule() {
        let base = LoopConfig {
            dt: 30,
            decision_interval: 60,
            horizon: 360,
            end_rule: EndRule::Extendable,
            first_step_fixed: false,
            dwell_rounding: DwellRounding::Up,
            criterion: CriterionConfig::default(),
            start: 0,
            end: 3600,
        };
        assert!(base.validate().is_ok());
        assert_eq!((base.hold(), base.horizon_columns(), base.horizon_samples()), (2, 6, 12));
        assert_eq!(base.decision_times().count(), 60);
        for bad in [
            LoopConfig { decision_interval: 45, ..base.clone() },
            LoopConfig { horizon: 210, ..base.clone() },
            LoopConfig { first_step_fixed: true, ..base.clone() },
            LoopConfig { end: 0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(MpcError::Config(_))), "{bad:?}");
        }
    }
}

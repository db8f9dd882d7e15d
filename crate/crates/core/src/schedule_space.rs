//! The admissible set of binary switching schedules under minimum on/off dwell times.
//!
//! A row is a load's command sequence over the horizon. Its admissibility is decided
//! by a run-length automaton: the state is the current command and how long it has
//! been held, and a switch is only allowed once the current run has reached its
//! minimum. Every admissible prefix extends to an admissible row by holding the last
//! command, so depth-first enumeration never enters a dead branch.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loads::{whole_samples, DwellRounding, LoadError, LoadSpec, LoadState};

/// Rows are packed into a `u64`, so a horizon is limited to this many samples.
pub const MAX_HORIZON: usize = 63;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("row has {got} samples, constraint horizon is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dwell constraint: {0}")]
    InvalidConstraint(String),
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// What happens to runs that reach the end of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndRule {
    /// A switch-on must leave room for the full minimum on-run inside the horizon.
    #[default]
    Strict,
    /// Trailing runs of any length are allowed; commitments continue past the horizon.
    Extendable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DwellConstraint {
    /// Minimum on-run, samples.
    pub n_on: usize,
    /// Minimum off-run, samples.
    pub n_off: usize,
    /// Horizon length, samples.
    pub horizon: usize,
    pub end_rule: EndRule,
    /// Pin the first sample to the current command.
    #[serde(default)]
    pub first_step_fixed: bool,
}

impl DwellConstraint {
    pub fn new(n_on: usize, n_off: usize, horizon: usize, end_rule: EndRule) -> Self {
        Self {
            n_on,
            n_off,
            horizon,
            end_rule,
            first_step_fixed: false,
        }
    }

    pub fn with_first_step_fixed(mut self, fixed: bool) -> Self {
        self.first_step_fixed = fixed;
        self
    }

    /// Dwell constraint of `spec` at a decision interval of `interval` seconds.
    pub fn for_load(
        spec: &LoadSpec,
        interval: f64,
        horizon: usize,
        end_rule: EndRule,
        rounding: DwellRounding,
    ) -> Result<Self, ScheduleError> {
        let n_on = whole_samples(&spec.id, "min_on", spec.min_on, interval, rounding)?;
        let n_off = whole_samples(&spec.id, "min_off", spec.min_off, interval, rounding)?;
        let c = Self::new(n_on, n_off, horizon, end_rule);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.n_on == 0 || self.n_off == 0 || self.horizon == 0 {
            return Err(ScheduleError::InvalidConstraint(format!(
                "n_on, n_off and horizon must be >= 1 (got {}, {}, {})",
                self.n_on, self.n_off, self.horizon
            )));
        }
        if self.horizon > MAX_HORIZON {
            return Err(ScheduleError::InvalidConstraint(format!(
                "horizon of {} samples exceeds the supported maximum of {MAX_HORIZON}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn minimum(&self, on: bool) -> usize {
        if on {
            self.n_on
        } else {
            self.n_off
        }
    }

    /// Run-length automaton transition for placing `bit` at position `pos`.
    fn advance(&self, prev: bool, run: usize, pos: usize, bit: bool, init_on: bool) -> Option<usize> {
        if pos == 0 && self.first_step_fixed && bit != init_on {
            return None;
        }
        if bit == prev {
            return Some(run.saturating_add(1));
        }
        if run < self.minimum(prev) {
            return None;
        }
        if bit && self.end_rule == EndRule::Strict && pos + self.n_on > self.horizon {
            return None;
        }
        Some(1)
    }
}

/// One load's command sequence, leftmost sample most significant.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row {
    bits: u64,
    len: u8,
}

impl Row {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_HORIZON, "row longer than {MAX_HORIZON}");
        Self { bits: 0, len: len as u8 }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut row = Self::zeros(bits.len());
        for &b in bits {
            row.bits = (row.bits << 1) | b as u64;
        }
        row
    }

    /// Parses a string of `0` and `1` characters.
    pub fn parse(s: &str) -> Option<Self> {
        let bits: Option<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        let bits = bits?;
        (bits.len() <= MAX_HORIZON).then(|| Self::from_bools(&bits))
    }

    /// Row whose samples are the binary digits of `value`.
    pub fn from_value(value: u64, len: usize) -> Self {
        assert!(len <= MAX_HORIZON);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self {
            bits: value & mask,
            len: len as u8,
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.len(), "index {j} out of row of length {}", self.len);
        (self.bits >> (self.len() - 1 - j)) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|j| self.get(j))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    fn push(self, bit: bool) -> Self {
        Self {
            bits: (self.bits << 1) | bit as u64,
            len: self.len + 1,
        }
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Row({self})")
    }
}

/// An n x N binary decision matrix, one row per load.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleCandidate {
    rows: Vec<Row>,
}

impl ScheduleCandidate {
    pub fn new(rows: Vec<Row>) -> Self {
        if let Some(first) = rows.first() {
            assert!(
                rows.iter().all(|r| r.len() == first.len()),
                "schedule rows must share one length"
            );
        }
        Self { rows }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn columns(&self) -> usize {
        self.rows.first().map_or(0, Row::len)
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r.get(j)).collect()
    }
}

/// Whether `row` is admissible for a load that starts in `init` (dwell in samples).
pub fn is_admissible(
    row: &Row,
    constraint: &DwellConstraint,
    init: &LoadState,
) -> Result<bool, ScheduleError> {
    if row.len() != constraint.horizon {
        return Err(ScheduleError::LengthMismatch {
            expected: constraint.horizon,
            got: row.len(),
        });
    }
    let mut prev = init.on;
    let mut run = init.dwell;
    for (pos, bit) in row.iter().enumerate() {
        match constraint.advance(prev, run, pos, bit, init.on) {
            Some(next) => {
                prev = bit;
                run = next;
            }
            None => return Ok(false),
        }
    }
    Ok(true)
}

/// Lazy depth-first generator of admissible rows in increasing binary order.
#[derive(Debug, Clone)]
pub struct AdmissibleRows {
    constraint: DwellConstraint,
    init_on: bool,
    // (prefix, last command, run length) frames still to expand
    stack: Vec<(Row, bool, usize)>,
}

impl Iterator for AdmissibleRows {
    type Item = Row;

    fn next(&mut self) -> Option<Row> {
        while let Some((prefix, prev, run)) = self.stack.pop() {
            let pos = prefix.len();
            if pos == self.constraint.horizon {
                return Some(prefix);
            }
            // push 1 first so 0 is expanded first
            for bit in [true, false] {
                if let Some(next) = self.constraint.advance(prev, run, pos, bit, self.init_on) {
                    self.stack.push((prefix.push(bit), bit, next));
                }
            }
        }
        None
    }
}

pub fn enumerate_rows(constraint: &DwellConstraint, init: &LoadState) -> AdmissibleRows {
    let stack = if constraint.validate().is_ok() {
        vec![(Row::zeros(0), init.on, init.dwell)]
    } else {
        Vec::new()
    };
    AdmissibleRows {
        constraint: *constraint,
        init_on: init.on,
        stack,
    }
}

/// Number of admissible rows, by dynamic programming over run-length states.
pub fn count_admissible(constraint: &DwellConstraint, init: &LoadState) -> u64 {
    if constraint.validate().is_err() {
        return 0;
    }
    // Runs longer than the largest minimum behave identically, so cap them.
    let cap = constraint.n_on.max(constraint.n_off);
    let idx = |on: bool, run: usize| on as usize * (cap + 1) + run.min(cap);
    let mut counts = vec![0u64; 2 * (cap + 1)];
    counts[idx(init.on, init.dwell)] = 1;
    for pos in 0..constraint.horizon {
        let mut next = vec![0u64; counts.len()];
        for on in [false, true] {
            for run in 0..=cap {
                let c = counts[idx(on, run)];
                if c == 0 {
                    continue;
                }
                for bit in [false, true] {
                    if let Some(r) = constraint.advance(on, run, pos, bit, init.on) {
                        next[idx(bit, r)] += c;
                    }
                }
            }
        }
        counts = next;
    }
    counts.iter().sum()
}

/// Lazy Cartesian product of per-load admissible rows, first load most significant.
#[derive(Debug, Clone)]
pub struct FleetCandidates {
    rows: Vec<Vec<Row>>,
    cursor: Vec<usize>,
    done: bool,
}

impl FleetCandidates {
    /// Total number of candidates, `None` on overflow.
    pub fn total(&self) -> Option<u64> {
        self.rows
            .iter()
            .try_fold(1u64, |acc, r| acc.checked_mul(r.len() as u64))
    }

    pub fn per_load(&self) -> &[Vec<Row>] {
        &self.rows
    }
}

impl Iterator for FleetCandidates {
    type Item = ScheduleCandidate;

    fn next(&mut self) -> Option<ScheduleCandidate> {
        if self.done {
            return None;
        }
        let cand = ScheduleCandidate::new(
            self.cursor
                .iter()
                .zip(&self.rows)
                .map(|(&c, rows)| rows[c])
                .collect(),
        );
        // odometer, last load fastest
        let mut i = self.cursor.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.cursor[i] += 1;
            if self.cursor[i] < self.rows[i].len() {
                break;
            }
            self.cursor[i] = 0;
        }
        Some(cand)
    }
}

pub fn enumerate_fleet(
    constraints: &[DwellConstraint],
    inits: &[LoadState],
) -> Result<FleetCandidates, ScheduleError> {
    if constraints.len() != inits.len() {
        return Err(ScheduleError::DimensionMismatch(format!(
            "{} constraints for {} initial states",
            constraints.len(),
            inits.len()
        )));
    }
    if let Some(c) = constraints.iter().find(|c| c.horizon != constraints[0].horizon) {
        return Err(ScheduleError::DimensionMismatch(format!(
            "horizons differ ({} vs {})",
            c.horizon, constraints[0].horizon
        )));
    }
    for c in constraints {
        c.validate()?;
    }
    let rows: Vec<Vec<Row>> = constraints
        .iter()
        .zip(inits)
        .map(|(c, s)| enumerate_rows(c, s).collect())
        .collect();
    let done = rows.is_empty() || rows.iter().any(Vec::is_empty);
    Ok(FleetCandidates {
        cursor: vec![0; rows.len()],
        rows,
        done,
    })
}

pub fn count_fleet(constraints: &[DwellConstraint], inits: &[LoadState]) -> Option<u64> {
    constraints
        .iter()
        .zip(inits)
        .try_fold(1u64, |acc, (c, s)| acc.checked_mul(count_admissible(c, s)))
}

//! Straight-line reference implementations shared by the integration tests.
//! Nothing here calls into the scheduler, the enumerator or the simulator.

#![allow(dead_code)]

use loadsched::forecast::ClearSkyProfile;
use loadsched::scenario::{Attenuation, ScenarioConfig, ScenarioKind};
use loadsched::{BarrierMode, CriterionConfig, DwellRounding, EndRule, LoadSpec};

/// Admissibility by splitting the row into maximal runs. The run in progress at
/// the start continues the initial state's run of `init_dwell` samples.
pub fn brute_admissible(
    bits: &[bool],
    n_on: usize,
    n_off: usize,
    end_rule: EndRule,
    first_step_fixed: bool,
    init_on: bool,
    init_dwell: usize,
) -> bool {
    let horizon = bits.len();
    if first_step_fixed && horizon > 0 && bits[0] != init_on {
        return false;
    }
    // (value, start, length); the first run may be inherited
    let mut runs: Vec<(bool, isize, usize)> = vec![(init_on, -(init_dwell.min(1 << 20) as isize), 0)];
    for (pos, &b) in bits.iter().enumerate() {
        let last = runs.last_mut().unwrap();
        if last.0 == b {
            last.2 += 1;
        } else {
            runs.push((b, pos as isize, 1));
        }
    }
    for w in runs.windows(2) {
        let (value, start, len) = w[0];
        let total = if start < 0 { (-start) as usize + len } else { len };
        let needed = if value { n_on } else { n_off };
        if total < needed {
            return false;
        }
        let (next, next_start, _) = w[1];
        if next && end_rule == EndRule::Strict && next_start as usize + n_on > horizon {
            return false;
        }
    }
    true
}

/// Bits of `value` over `len` columns, leftmost most significant.
pub fn bits_of(value: u64, len: usize) -> Vec<bool> {
    (0..len).map(|j| (value >> (len - 1 - j)) & 1 == 1).collect()
}

/// Closed-form first-order response from the segment start, re-anchored at every
/// switch: `target + (p0 - target) * exp(-k dt / tau)`.
pub fn analytic_response(spec: &LoadSpec, dt: f64, commands: &[bool], p0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(commands.len());
    let mut anchor = p0;
    let mut k = 0usize;
    for (s, &w) in commands.iter().enumerate() {
        if s > 0 && w != commands[s - 1] {
            anchor = *out.last().unwrap();
            k = 0;
        }
        k += 1;
        let (target, tau) = if w {
            (spec.rated_power, spec.tau_on)
        } else {
            (spec.p_off, spec.tau_off)
        };
        out.push(target + (anchor - target) * (-(k as f64) * dt / tau).exp());
    }
    out
}

/// One load for the reference optimizer, with its own step recursion.
#[derive(Debug, Clone, Copy)]
pub struct RefLoad {
    pub a_on: f64,
    pub b_on: f64,
    pub a_off: f64,
    pub p_off: f64,
    pub n_on: usize,
    pub n_off: usize,
    pub init_on: bool,
    pub init_dwell: usize,
    pub init_power: f64,
}

impl RefLoad {
    fn next(&self, p: f64, w: bool) -> f64 {
        if w {
            self.b_on + self.a_on * p
        } else if self.p_off > 0.0 {
            self.p_off + self.a_off * (p - self.p_off)
        } else {
            self.a_off * p
        }
    }
}

pub fn ref_sample_cost(e: f64, cfg: &CriterionConfig) -> Option<f64> {
    if cfg.mode == BarrierMode::HardBarrier && e <= 0.0 {
        return None;
    }
    let floor = cfg.barrier_floor.unwrap_or(1e-9 * cfg.reference_power);
    let z = e / cfg.reference_power;
    let barrier = if cfg.barrier_weight == 0.0 {
        0.0
    } else {
        cfg.barrier_weight * (e.max(floor) / cfg.reference_power).ln()
    };
    Some(z * z - barrier)
}

/// Exhaustive argmin over all `2^(n * horizon)` matrices, visited in lexicographic
/// order (first load most significant, leftmost column most significant).
/// Returns the chosen rows as integers and whether a finite-cost candidate existed.
pub fn brute_plan(
    loads: &[RefLoad],
    horizon: usize,
    hold: usize,
    end_rule: EndRule,
    window: &[f64],
    cfg: &CriterionConfig,
) -> (Vec<u64>, bool) {
    let n = loads.len();
    let per = 1u64 << horizon;
    let total = per.pow(n as u32);
    let mut best_cost: Option<(f64, Vec<u64>)> = None;
    let mut best_fallback: Option<((f64, usize), Vec<u64>)> = None;
    for code in 0..total {
        let rows: Vec<u64> = (0..n).map(|i| (code / per.pow((n - 1 - i) as u32)) % per).collect();
        let bits: Vec<Vec<bool>> = rows.iter().map(|&r| bits_of(r, horizon)).collect();
        let admissible = loads.iter().zip(&bits).all(|(l, b)| {
            brute_admissible(b, l.n_on, l.n_off, end_rule, false, l.init_on, l.init_dwell / hold)
        });
        if !admissible {
            continue;
        }
        let mut demand = vec![0.0; window.len()];
        for (l, b) in loads.iter().zip(&bits) {
            let mut p = l.init_power;
            for (s, d) in demand.iter_mut().enumerate() {
                p = l.next(p, b[s / hold]);
                *d += p;
            }
        }
        let mut cost = Some(0.0);
        for (f, d) in window.iter().zip(&demand) {
            cost = match (cost, ref_sample_cost(f - d, cfg)) {
                (Some(c), Some(v)) => Some(c + v),
                _ => None,
            };
        }
        if let Some(c) = cost {
            if best_cost.as_ref().is_none_or(|(b, _)| c < *b) {
                best_cost = Some((c, rows.clone()));
            }
        }
        let exc: f64 = window.iter().zip(&demand).fold(0.0, |acc, (f, d)| {
            let x = (d - f).max(0.0);
            acc + x * x
        });
        let ons = bits.iter().filter(|b| b[0]).count();
        let key = (exc, ons);
        if best_fallback
            .as_ref()
            .is_none_or(|(k, _)| key.0 < k.0 || (key.0 == k.0 && key.1 < k.1))
        {
            best_fallback = Some((key, rows));
        }
    }
    match best_cost {
        Some((_, rows)) => (rows, true),
        None => (best_fallback.expect("all-hold candidate is admissible").1, false),
    }
}

pub const T_RISE: i64 = 6 * 3600;
pub const T_SET: i64 = 18 * 3600;

/// Half-sine clear day from 06:00 to 18:00 with the reference fleet.
pub fn clear_day(dt: i64, decision_interval: i64, horizon: i64) -> ScenarioConfig {
    ScenarioConfig {
        dt,
        decision_interval,
        horizon,
        scenario: ScenarioKind::Perfect,
        end_rule: EndRule::Extendable,
        first_step_fixed: false,
        dwell_rounding: DwellRounding::Up,
        power_unit: Default::default(),
        start: None,
        end: None,
        exceedance_tol: 0.0,
        persistence_guard: None,
        clearsky: Some(ClearSkyProfile {
            p_peak: 1.0,
            t_rise: T_RISE,
            t_set: T_SET,
            shape: Default::default(),
        }),
        attenuation: vec![],
        actual_power: None,
        forecast_file: None,
        criterion: CriterionConfig::default(),
        loads: LoadSpec::reference_fleet(),
    }
}

/// The clear day with two passing clouds that cut power to 20 %.
pub fn variable_day(dt: i64, decision_interval: i64, horizon: i64) -> ScenarioConfig {
    ScenarioConfig {
        attenuation: vec![
            Attenuation { start: 10 * 3600, end: 11 * 3600, factor: 0.2 },
            Attenuation { start: 13 * 3600, end: 13 * 3600 + 2700, factor: 0.2 },
        ],
        ..clear_day(dt, decision_interval, horizon)
    }
}

/// Three loads of one third nominal power with the reference dynamics and dwell times.
pub fn equal_units() -> Vec<LoadSpec> {
    LoadSpec::reference_fleet()
        .into_iter()
        .map(|mut l| {
            l.rated_power = 1.0 / 3.0;
            l
        })
        .collect()
}

//! Acceptance suite: one PASS/FAIL line per criterion; nonzero exit on any FAIL with ACCEPTANCE_STRICT=1.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use common::*;
use loadsched::forecast::{forecast_errors, ForecastSet};
use loadsched::loads::simulate_load;
use loadsched::mpc::plan_step;
use loadsched::scenario::{run_scenario, sweep, write_artifacts, ScenarioConfig, ScenarioKind};
use loadsched::schedule_space::count_fleet;
use loadsched::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn zoh_fidelity() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let dt = 15.0;
    let mut worst: f64 = 0.0;
    let mut bad = 0usize;
    for spec in LoadSpec::reference_fleet() {
        let load = discretize(&spec, dt).expect("reference loads nest on a 15 s grid");
        for _ in 0..5 {
            let mut commands = Vec::new();
            let mut w = rng.random_bool(0.5);
            while commands.len() < 2000 {
                let run = rng.random_range(1..=40);
                commands.extend(std::iter::repeat_n(w, run));
                w = !w;
            }
            let p0 = rng.random_range(0.0..spec.rated_power);
            let init = LoadState { power: p0, on: false, dwell: usize::MAX };
            let (discrete, _) = simulate_load(&load, commands.iter().copied(), 1, init);
            let exact = analytic_response(&spec, dt, &commands, p0);
            for (d, a) in discrete.iter().zip(&exact) {
                let rel = if *a == 0.0 { d.abs() } else { ((d - a) / a).abs() };
                worst = worst.max(rel);
                if rel > 1e-9 || *d > spec.rated_power || *d < 0.0 {
                    bad += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        bad == 0 && elapsed < Duration::from_secs(1),
        format!("worst relative error {worst:.2e} over 3 loads x 5 patterns x 2000 samples, {bad} violations, {elapsed:.2?}"),
    )
}

fn enumeration_oracle() -> Outcome {
    let started = Instant::now();
    let mut cases = 0usize;
    let mut mismatches = Vec::new();
    let inits = [
        LoadState::settled_off(0.0),
        LoadState { power: 1.0, on: true, dwell: usize::MAX },
        LoadState { power: 0.0, on: false, dwell: 1 },
        LoadState { power: 1.0, on: true, dwell: 2 },
    ];
    for n_on in 1..=5 {
        for n_off in 1..=5 {
            for horizon in 1..=12 {
                for end_rule in [EndRule::Strict, EndRule::Extendable] {
                    for fixed in [false, true] {
                        for init in &inits {
                            let c = DwellConstraint::new(n_on, n_off, horizon, end_rule).with_first_step_fixed(fixed);
                            let got: Vec<u64> = enumerate_rows(&c, init).map(|r| r.value()).collect();
                            let expected: Vec<u64> = (0..1u64 << horizon)
                                .filter(|&v| {
                                    brute_admissible(&bits_of(v, horizon), n_on, n_off, end_rule, fixed, init.on, init.dwell)
                                })
                                .collect();
                            cases += 1;
                            if got != expected || count_admissible(&c, init) != expected.len() as u64 {
                                mismatches.push(format!("{c:?} {init:?}"));
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{cases} configurations, {} mismatches{}, {elapsed:.2?}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn combinatorial_reduction() -> Outcome {
    let mut all_below = true;
    let mut table = Vec::new();
    let inits = [("off", LoadState::settled_off(0.0)), ("on", LoadState { power: 1.0, on: true, dwell: usize::MAX })];
    for end_rule in [EndRule::Strict, EndRule::Extendable] {
        for fixed in [false, true] {
            for (label, init) in &inits {
                let c = DwellConstraint::new(4, 4, 6, end_rule).with_first_step_fixed(fixed);
                let per_load = count_admissible(&c, init);
                let fleet = count_fleet(&[c; 3], &[*init; 3]).unwrap();
                all_below &= fleet < 32768;
                table.push(format!("{end_rule:?}/fixed={fixed}/init={label}: {per_load}^3={fleet}"));
            }
        }
    }
    outcome(all_below, format!("all < 32768; {}", table.join(", ")))
}

fn timed_run(cfg: &ScenarioConfig) -> (RunOutput, Duration) {
    let started = Instant::now();
    let out = run_scenario(cfg).expect("scenario runs");
    (out, started.elapsed())
}

fn perfect_zero_exceedance() -> Outcome {
    let (out, elapsed) = timed_run(&clear_day(60, 60, 360));
    let s = &out.summary;
    outcome(
        out.report.events.is_empty() && out.report.total_ee == 0.0 && elapsed < Duration::from_secs(60),
        format!(
            "{} events, total_ee {}, {} decisions, efficiency {:.4}, {elapsed:.2?}",
            s.violation_events, s.total_ee, s.decision_steps, s.efficiency
        ),
    )
}

fn horizon_plateau() -> Outcome {
    let horizons = [210, 270, 360, 540, 720];
    let table = sweep(&clear_day(30, 30, 360), &horizons, &[30]).expect("sweep runs");
    let eff: Vec<f64> = table.cells[0].iter().map(|c| c.expect("all cells nest").efficiency).collect();
    let non_decreasing = eff.windows(2).all(|w| w[1] >= w[0]);
    let tail = &eff[1..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tail.iter().copied().fold(f64::INFINITY, f64::min);
    let cells: Vec<String> = horizons.iter().zip(&eff).map(|(h, e)| format!("{h}s={e:.5}")).collect();
    outcome(
        non_decreasing && spread <= 0.005,
        format!(
            "{}; non-decreasing: {non_decreasing}; spread for N >= 270 s: {spread:.5}",
            cells.join(" ")
        ),
    )
}

fn persistence_degradation() -> Outcome {
    let day = variable_day(60, 60, 360);
    let (perfect, _) = timed_run(&day);
    let (persistence, _) = timed_run(&ScenarioConfig { scenario: ScenarioKind::Persistence, ..day });
    let (p, q) = (&perfect.summary, &persistence.summary);
    outcome(
        p.violation_events == 0 && q.violation_events >= 1 && q.efficiency < p.efficiency,
        format!(
            "perfect: {} events, efficiency {:.4}; persistence: {} events (ee {:.3}), efficiency {:.4}",
            p.violation_events, p.efficiency, q.violation_events, q.total_ee, q.efficiency
        ),
    )
}

fn equal_units_monotonicity() -> Outcome {
    let intervals = [30, 60, 90, 120, 180];
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [ScenarioKind::Perfect, ScenarioKind::Persistence] {
        let day = ScenarioConfig { scenario: kind, ..variable_day(30, 30, 360) };
        let equal = sweep(&ScenarioConfig { loads: equal_units(), ..day.clone() }, &[360], &intervals).expect("sweep runs");
        let unequal = sweep(&day, &[360], &intervals).expect("sweep runs");
        let eq: Vec<f64> = equal.cells.iter().map(|r| r[0].unwrap().efficiency).collect();
        let uneq: Vec<f64> = unequal.cells.iter().map(|r| r[0].unwrap().efficiency).collect();
        let monotone = eq.windows(2).all(|w| w[1] <= w[0]);
        let below = eq.iter().zip(&uneq).all(|(e, u)| e < u);
        pass &= monotone && below;
        let cells: Vec<String> = intervals
            .iter()
            .zip(eq.iter().zip(&uneq))
            .map(|(k, (e, u))| format!("{k}s={e:.4}/{u:.4}"))
            .collect();
        details.push(format!(
            "{}: equal/unequal {} (non-increasing: {monotone}, below: {below})",
            kind.name(),
            cells.join(" ")
        ));
    }
    outcome(pass, details.join("; "))
}

fn metric_identities() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(2..120);
        let dt = rng.random_range(1..600);
        let zero_p = rng.random_range(0.0..0.5);
        let actual: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(zero_p) { 0.0 } else { rng.random_range(0.0..2.0) })
            .collect();
        let demand: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let a = PowerSeries::new(0, dt, actual.clone()).unwrap();
        let d = PowerSeries::new(0, dt, demand.clone()).unwrap();
        match efficiency(&a, &d) {
            Ok(e) if !(0.0..=1.0).contains(&e) => failures.push(format!("case {case}: efficiency {e}")),
            Err(MetricsError::ZeroSolarEnergy) if actual.iter().sum::<f64>() == 0.0 => {}
            Err(e) => failures.push(format!("case {case}: {e}")),
            Ok(_) => {}
        }

        let tol = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.3) };
        let r = exceedance(&a, &d, tol).unwrap();
        let violated: Vec<bool> = actual.iter().zip(&demand).map(|(a, d)| (d - a).max(0.0) > tol).collect();
        let runs = violated.iter().enumerate().filter(|&(i, &v)| v && (i == 0 || !violated[i - 1])).count();
        let total = r.events.iter().fold(0.0, |acc, e| acc + e.ee);
        let max = r.events.iter().fold(0.0f64, |acc, e| acc.max(e.ee));
        let steps: usize = r.events.iter().map(|e| e.steps).sum();
        let consistent = r.total_ee == total
            && r.max_event_ee == max
            && r.violation_steps == steps
            && steps == violated.iter().filter(|&&v| v).count()
            && r.events.len() == runs
            && r.events.iter().all(|e| e.ee > 0.0 && e.peak_pe > tol && (e.end - e.start) / dt + 1 == e.steps as i64);
        if !consistent {
            failures.push(format!("case {case}: inconsistent exceedance report"));
        }

        let mut set = ForecastSet::new(dt);
        let issues = rng.random_range(1..n.min(20));
        let h = rng.random_range(1..=(n - issues));
        for k in 0..issues {
            let w = (0..h).map(|_| rng.random_range(0.0..2.0)).collect();
            set.windows.insert(k as i64 * dt, w);
        }
        if let Ok(fe) = forecast_errors(&set, &a) {
            let slack = 1e-12 * fe.rrmse.abs().max(1.0);
            if !(fe.rrmse + slack >= fe.rmae && fe.rmae + slack >= fe.rmbe.abs()) {
                failures.push(format!("case {case}: {fe:?}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "1000 random cases, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn optimizer_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut mismatches = Vec::new();
    let mut infeasible = 0;
    for case in 0..100 {
        let horizon = rng.random_range(2..=8);
        let hold = if rng.random_bool(0.3) { 2 } else { 1 };
        let dt = 10.0;
        let end_rule = if rng.random_bool(0.5) { EndRule::Strict } else { EndRule::Extendable };
        let mut specs = Vec::new();
        let mut states = Vec::new();
        let mut refs = Vec::new();
        let mut constraints = Vec::new();
        for i in 0..2 {
            let n_on = rng.random_range(1..=4);
            let n_off = rng.random_range(1..=4);
            let x = rng.random_range(0.1..0.7);
            let p_off = if rng.random_bool(0.3) { rng.random_range(0.0..0.05) } else { 0.0 };
            let decision = dt * hold as f64;
            let mut spec = LoadSpec::new(
                format!("u{i}"),
                x,
                rng.random_range(5.0..120.0),
                rng.random_range(5.0..120.0),
                n_on as f64 * decision,
                n_off as f64 * decision,
            );
            spec.p_off = p_off;
            let load = discretize(&spec, dt).unwrap();
            let on = rng.random_bool(0.5);
            let state = LoadState {
                power: rng.random_range(p_off..x),
                on,
                dwell: if rng.random_bool(0.3) { usize::MAX } else { rng.random_range(1..=6) },
            };
            refs.push(RefLoad {
                a_on: load.a_on,
                b_on: load.b_on,
                a_off: load.a_off,
                p_off,
                n_on,
                n_off,
                init_on: state.on,
                init_dwell: state.dwell,
                init_power: state.power,
            });
            constraints.push(DwellConstraint::new(n_on, n_off, horizon, end_rule));
            specs.push(load);
            states.push(state);
        }
        let level = rng.random_range(0.0..1.4);
        let window: Vec<f64> = (0..horizon * hold).map(|_| (level + rng.random_range(-0.2..0.2f64)).max(0.0)).collect();
        let cfg = CriterionConfig {
            barrier_weight: [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4)],
            mode: if rng.random_bool(0.7) { BarrierMode::HardBarrier } else { BarrierMode::SoftFallback },
            ..Default::default()
        };
        let fleet = FleetState { loads: states };
        let plan = plan_step(&fleet, &specs, &constraints, &window, &cfg, hold).expect("plan");
        let got: Vec<u64> = plan.chosen.rows().iter().map(Row::value).collect();
        let (expected, feasible) = brute_plan(&refs, horizon, hold, end_rule, &window, &cfg);
        if !feasible {
            infeasible += 1;
        }
        if got != expected {
            mismatches.push(format!("case {case}: got {got:?}, expected {expected:?}"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "100 windows ({infeasible} all-infeasible), {} mismatches{}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn artifact_hashes(cfg: &ScenarioConfig) -> BTreeMap<String, String> {
    let out = run_scenario(cfg).expect("scenario runs");
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(dir.path(), &out, None).unwrap();
    let mut hashes = BTreeMap::new();
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        let digest = Sha256::digest(fs::read(&path).unwrap());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hashes.insert(path.file_name().unwrap().to_string_lossy().into_owned(), hex);
    }
    hashes
}

fn determinism_and_performance() -> Outcome {
    let day = ScenarioConfig { end: Some(T_SET), ..clear_day(60, 60, 360) };
    let (out, elapsed) = timed_run(&day);
    let reference = artifact_hashes(&day);
    let mut identical = true;
    for threads in [1, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        for _ in 0..2 {
            identical &= pool.install(|| artifact_hashes(&day)) == reference;
        }
    }
    outcome(
        identical && out.summary.decision_steps == 720 && elapsed < Duration::from_secs(10),
        format!(
            "hashes identical across 1/2/4/8 threads: {identical}; {} decisions in {elapsed:.2?}",
            out.summary.decision_steps
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ZOH fidelity", zoh_fidelity),
        ("enumeration oracle", enumeration_oracle),
        ("combinatorial reduction", combinatorial_reduction),
        ("perfect-forecast zero exceedance", perfect_zero_exceedance),
        ("horizon plateau", horizon_plateau),
        ("persistence degradation", persistence_degradation),
        ("equal-units monotonicity", equal_units_monotonicity),
        ("metric identities", metric_identities),
        ("optimizer oracle", optimizer_oracle),
        ("determinism and performance", determinism_and_performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    // ACCEPTANCE_STRICT=1 turns any FAIL line into a nonzero exit
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

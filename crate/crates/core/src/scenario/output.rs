//! Artifact writers and table renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Comparison, RunOutput, ScenarioError, SweepTable};
use crate::mpc::ScenarioTrajectory;

const EMPTY_CELL: &str = "\u{2298}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    #[default]
    Csv,
    Text,
}

/// One row per simulation sample. The command columns hold the command applied
/// from that sample to the next and are empty on the last row.
pub fn trajectory_csv(traj: &ScenarioTrajectory) -> String {
    let n = traj.load_power.len();
    let mut out = String::from("time,actual,forecast_at_decision,demand");
    for i in 1..=n {
        write!(out, ",p_load_{i}").unwrap();
    }
    for i in 1..=n {
        write!(out, ",w_{i}").unwrap();
    }
    out.push('\n');
    for s in 0..traj.len() {
        write!(out, "{},{},", traj.time(s), traj.actual[s]).unwrap();
        if let Some(f) = traj.forecast[s] {
            write!(out, "{f}").unwrap();
        }
        write!(out, ",{}", traj.demand[s]).unwrap();
        for p in &traj.load_power {
            write!(out, ",{}", p[s]).unwrap();
        }
        for w in &traj.commands {
            match w.get(s) {
                Some(&on) => write!(out, ",{}", u8::from(on)).unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

fn events_csv(run: &RunOutput) -> String {
    let mut out = String::from("event_start,event_end,peak_pe,ee\n");
    for ev in &run.report.events {
        writeln!(out, "{},{},{},{}", ev.start, ev.end, ev.peak_pe, ev.ee).unwrap();
    }
    out
}

/// Writes `trajectory.csv`, `events.csv`, `summary.txt`, `summary.json` and,
/// when a wall time is given, `timing.json`.
pub fn write_artifacts(dir: &Path, run: &RunOutput, wall_time: Option<Duration>) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(&run.trajectory))?;
    fs::write(dir.join("events.csv"), events_csv(run))?;
    fs::write(dir.join("summary.txt"), run.summary.to_key_values())?;
    let json = serde_json::to_string_pretty(&run.summary).map_err(|e| ScenarioError::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    if let Some(t) = wall_time {
        let timing = serde_json::json!({
            "wall_time_seconds": t.as_secs_f64(),
            "decision_steps": run.summary.decision_steps,
        });
        fs::write(dir.join("timing.json"), timing.to_string() + "\n")?;
    }
    Ok(())
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{:>w$}", s, w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Efficiency and total exceedance energy per (decision interval, horizon).
pub fn render_sweep(table: &SweepTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = String::from("decision_interval,horizon,efficiency,total_ee,violation_events\n");
            for (i, tk) in table.decision_intervals.iter().enumerate() {
                for (j, h) in table.horizons.iter().enumerate() {
                    match &table.cells[i][j] {
                        Some(c) => writeln!(out, "{tk},{h},{},{},{}", c.efficiency, c.total_ee, c.violation_events),
                        None => writeln!(out, "{tk},{h},{EMPTY_CELL},{EMPTY_CELL},{EMPTY_CELL}"),
                    }
                    .unwrap();
                }
            }
            out
        }
        TableFormat::Text => {
            let mut rows = vec![std::iter::once("t_k \\ H".to_string())
                .chain(table.horizons.iter().map(|h| format!("{h} s")))
                .collect::<Vec<_>>()];
            for (i, tk) in table.decision_intervals.iter().enumerate() {
                let mut row = vec![format!("{tk} s")];
                for cell in &table.cells[i] {
                    row.push(match cell {
                        Some(c) => format!("{:.4} / {:.2}", c.efficiency, c.total_ee),
                        None => EMPTY_CELL.to_string(),
                    });
                }
                rows.push(row);
            }
            let mut out = String::from("efficiency / total exceedance energy\n");
            out.push_str(&aligned(&rows));
            out
        }
    }
}

pub fn render_comparison(cmp: &Comparison, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out =
                String::from("name,scenario,efficiency,total_ee,max_event_ee,violation_events,violation_steps\n");
            for r in &cmp.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.name, r.scenario, r.efficiency, r.total_ee, r.max_event_ee, r.violation_events, r.violation_steps
                )
                .unwrap();
            }
            out
        }
        TableFormat::Text => {
            let mut rows = vec![["name", "scenario", "efficiency", "total_ee", "max_event_ee", "events", "steps"]
                .map(String::from)
                .to_vec()];
            for r in &cmp.rows {
                rows.push(vec![
                    r.name.clone(),
                    r.scenario.clone(),
                    format!("{:.4}", r.efficiency),
                    format!("{:.3}", r.total_ee),
                    format!("{:.3}", r.max_event_ee),
                    r.violation_events.to_string(),
                    r.violation_steps.to_string(),
                ]);
            }
            aligned(&rows)
        }
    }
}

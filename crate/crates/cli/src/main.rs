use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use loadsched::forecast::write_power_series;
use loadsched::scenario::{
    compare, load_named, render_comparison, render_sweep, resolve_inputs, run_scenario, sweep, synthesize_day,
    write_artifacts, ScenarioConfig, TableFormat,
};

/// Moving-horizon on/off load scheduling against forecast power availability.
#[derive(Debug, Parser)]
#[command(name = "loadsched", version)]
struct Cli {
    /// Worker threads for candidate scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Text => TableFormat::Text,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Efficiency table over horizons and decision intervals.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Horizons in seconds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<i64>,
        /// Decision intervals in seconds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        intervals: Vec<i64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Side-by-side summaries of scenarios sharing loads, grid and actual power.
    Compare {
        /// Repeat once per scenario.
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the config's synthetic day (clear sky times attenuation) as a power CSV.
    GenClearsky {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let started = Instant::now();
            let result = run_scenario(&cfg)?;
            let elapsed = started.elapsed();
            write_artifacts(&out, &result, Some(elapsed))?;
            print!("{}", result.summary.to_key_values());
            println!("wall_time_seconds = {:.3}", elapsed.as_secs_f64());
        }
        Command::Sweep {
            config,
            horizons,
            intervals,
            format,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let table = sweep(&cfg, &horizons, &intervals)?;
            emit(&render_sweep(&table, format.into()), out.as_deref())?;
        }
        Command::Compare { configs, format, out } => {
            let named = configs.iter().map(|p| load_named(p)).collect::<Result<Vec<_>, _>>()?;
            let cmp = compare(&named)?;
            emit(&render_comparison(&cmp, format.into()), out.as_deref())?;
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let inputs = resolve_inputs(&cfg)?;
            println!(
                "ok: {} loads, {} decisions, horizon {} s = {} decision intervals = {} samples",
                cfg.loads.len(),
                inputs.loop_config.decision_times().count(),
                cfg.horizon,
                inputs.loop_config.horizon_columns(),
                inputs.loop_config.horizon_samples()
            );
        }
        Command::GenClearsky { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let series = synthesize_day(&cfg)?;
            write_power_series(&out, &series)?;
            println!("wrote {} samples to {}", series.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Moving-horizon on/off scheduling of dynamic loads against forecast power
//! availability.
//!
//! * [`loads`]: first-order load models and their exact discretization.
//! * [`schedule_space`]: admissible on/off schedules under minimum dwell times.
//! * [`forecast`]: power series, clear-sky profiles and forecast scenarios.
//! * [`mpc`]: the per-step optimizer and the closed-loop simulation.
//! * [`metrics`]: exceedance, efficiency and battery sizing.
//! * [`scenario`]: config files, end-to-end runs, sweeps and artifacts.

pub mod forecast;
pub mod loads;
pub mod metrics;
pub mod mpc;
pub mod scenario;
pub mod schedule_space;
pub mod time;

pub use forecast::{ClearSkyProfile, ForecastError, ForecastProvider, ForecastSet, PowerSeries};
pub use loads::{discretize, discretize_with, DiscretizedLoad, DwellRounding, FleetState, LoadError, LoadSpec, LoadState};
pub use metrics::{efficiency, exceedance, ExceedanceReport, MetricsError};
pub use mpc::{plan_step, run_closed_loop, BarrierMode, CriterionConfig, LoopConfig, MpcError, PlanResult, ScenarioTrajectory};
pub use scenario::{run_scenario, RunOutput, ScenarioConfig, ScenarioError, Summary};
pub use schedule_space::{count_admissible, enumerate_rows, DwellConstraint, EndRule, Row, ScheduleCandidate};
pub use time::Timestamp;

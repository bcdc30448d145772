//! Experiment protocol: condition grid, sessions, the trial engine, metrics,
//! statistics, JSON-lines logs and reports.

pub mod conditions;
pub mod engine;
pub mod log;
pub mod metrics;
pub mod report;
pub mod stats;

pub use conditions::{full_grid, generate_session, BreakSchedule, GoalOrder, Scenario, Session, SessionError, TrialCondition};
pub use engine::{
    run_session, run_trial, Autopilot, EngineError, FollowerPilot, ManualPilot, Pilot, PilotContext, ScriptedObstacle, TickReport,
    TrialEngine, TrialSetup,
};
pub use log::{parse_log, LogRecord, LogWriter, ParsedLog};
pub use metrics::{compute_metrics, Metrics, Outcome, TraceSample, TrialEvent, TrialRecord};
pub use report::{format_table, summarize, write_report, MetricsSummary};
pub use stats::{paired_t_test, stars, TTest};

//! Global A* planning, inflated costmaps, DWA local control and replanning.

pub mod astar;
pub mod costmap;
pub mod dwa;
pub mod grid;
pub mod replan;

pub use astar::{plan_global, PathPlan};
pub use costmap::{is_lethal, Costmap, CostmapParams, INSCRIBED, LETHAL};
pub use dwa::{dwa_step, dwa_toward, freest_heading, AgentState, DwaDiagnostics, DwaOutput, DwaParams};
pub use grid::{Cell, OccupancyGrid};
pub use replan::{maybe_replan, ReplanOutcome, ReplanPolicy, ReplanReason};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid planning input: {0}")]
    InvalidInput(String),
    #[error("start cell is occupied")]
    StartBlocked,
    #[error("goal unreachable: {0}")]
    Unreachable(String),
}

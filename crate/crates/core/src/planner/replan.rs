use serde::{Deserialize, Serialize};

use super::astar::{plan_global, PathPlan};
use super::costmap::{Costmap, INSCRIBED};
use super::dwa::{point_at_arc_length, project_onto_path};
use super::PlanError;
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplanPolicy {
    /// Arc length ahead of the agent checked for blocking cost.
    pub lookahead: f64,
    /// Replan unconditionally once the plan is this old.
    pub period: f64,
    /// A path point at or above this cost blocks the plan.
    pub cost_threshold: u8,
}

impl Default for ReplanPolicy {
    fn default() -> Self {
        Self {
            lookahead: 3.0,
            period: 1.0,
            cost_threshold: INSCRIBED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanReason {
    Blocked,
    Timer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplanOutcome {
    Unchanged,
    Replanned { plan: PathPlan, reason: ReplanReason },
}

/// True if the plan crosses blocking cost within `lookahead` of the agent.
pub fn blocked_ahead(plan: &PathPlan, costmap: &Costmap, agent: &Pose, policy: &ReplanPolicy) -> bool {
    if plan.waypoints.is_empty() {
        return false;
    }
    let (_, s0) = project_onto_path(&plan.waypoints, &agent.position());
    let step = costmap.resolution() / 2.0;
    let n = (policy.lookahead / step).ceil() as usize;
    let end = plan.total_length;
    (0..=n).any(|k| {
        let s = s0 + k as f64 * step;
        if s > end + 1e-9 {
            return false;
        }
        costmap.cost_at(&point_at_arc_length(&plan.waypoints, s)) >= policy.cost_threshold
    })
}

/// Replans from the agent pose when the path ahead is blocked or the plan has
/// aged past the replan period; otherwise leaves the plan alone.
pub fn maybe_replan(plan: &PathPlan, costmap: &Costmap, agent: &Pose, now: f64, policy: &ReplanPolicy) -> Result<ReplanOutcome, PlanError> {
    let reason = if blocked_ahead(plan, costmap, agent, policy) {
        ReplanReason::Blocked
    } else if now - plan.created_at >= policy.period - 1e-9 {
        ReplanReason::Timer
    } else {
        return Ok(ReplanOutcome::Unchanged);
    };
    let fresh = plan_global(costmap, agent, &plan.goal, now)?;
    Ok(ReplanOutcome::Replanned { plan: fresh, reason })
}

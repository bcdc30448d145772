use serde::{Deserialize, Serialize};

use super::conditions::TrialCondition;
use crate::geometry::{Point2, Pose};
use crate::planner::ReplanReason;
use crate::worldsim::{GoalKind, Obstacle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub tick: u64,
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialEvent {
    Bump {
        tick: u64,
        t: f64,
        obstacle_id: String,
        distance: f64,
    },
    GoalReached {
        tick: u64,
        t: f64,
        goal: GoalKind,
    },
    Aid {
        tick: u64,
        t: f64,
        note: String,
    },
    /// First plan toward a goal.
    LegPlanned {
        tick: u64,
        t: f64,
        goal: GoalKind,
        length: f64,
    },
    Replan {
        tick: u64,
        t: f64,
        reason: ReplanReason,
        length: f64,
    },
    PlanFailed {
        tick: u64,
        t: f64,
        message: String,
    },
    ObstacleAdded {
        tick: u64,
        t: f64,
        obstacle: Obstacle,
    },
    /// Ended by the experimenter.
    Aborted {
        tick: u64,
        t: f64,
    },
}

impl TrialEvent {
    pub fn tick(&self) -> u64 {
        match self {
            TrialEvent::Bump { tick, .. }
            | TrialEvent::GoalReached { tick, .. }
            | TrialEvent::Aid { tick, .. }
            | TrialEvent::LegPlanned { tick, .. }
            | TrialEvent::Replan { tick, .. }
            | TrialEvent::PlanFailed { tick, .. }
            | TrialEvent::ObstacleAdded { tick, .. }
            | TrialEvent::Aborted { tick, .. } => *tick,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// From the first step to the second goal; present iff completed.
    pub time_to_goal2: Option<f64>,
    pub distance: f64,
    pub bump_count: usize,
    pub aid_count: usize,
    pub replan_count: usize,
    pub goals_reached: usize,
    /// Sum of the first plan length of each leg.
    pub plan_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub subject: String,
    pub seed: u64,
    pub condition: TrialCondition,
    pub start_pose: Pose,
    /// Obstacles present at trial start.
    pub obstacles: Vec<Obstacle>,
    pub trace: Vec<TraceSample>,
    pub events: Vec<TrialEvent>,
    pub outcome: Outcome,
    pub metrics: Metrics,
}

/// Polyline length of the pose trace.
pub fn trace_distance(trace: &[TraceSample]) -> f64 {
    trace.windows(2).map(|w| w[0].pose.position().distance(&w[1].pose.position())).sum()
}

/// Time of the sample from which the first nonzero displacement starts.
pub fn first_step_time(trace: &[TraceSample]) -> Option<f64> {
    trace
        .windows(2)
        .find(|w| w[0].pose.position() != w[1].pose.position())
        .map(|w| w[0].t)
}

/// Derives metrics from the trace and event list alone.
pub fn compute_metrics(trace: &[TraceSample], events: &[TrialEvent], outcome: Outcome) -> Metrics {
    let goal_times: Vec<f64> = events
        .iter()
        .filter_map(|e| match e {
            TrialEvent::GoalReached { t, .. } => Some(*t),
            _ => None,
        })
        .collect();
    let time_to_goal2 = match (outcome, goal_times.get(1)) {
        (Outcome::Completed, Some(&t2)) => Some(t2 - first_step_time(trace).unwrap_or(0.0)),
        _ => None,
    };
    let count = |f: fn(&TrialEvent) -> bool| events.iter().filter(|e| f(e)).count();
    Metrics {
        time_to_goal2,
        distance: trace_distance(trace),
        bump_count: count(|e| matches!(e, TrialEvent::Bump { .. })),
        aid_count: count(|e| matches!(e, TrialEvent::Aid { .. })),
        replan_count: count(|e| matches!(e, TrialEvent::Replan { .. })),
        goals_reached: goal_times.len(),
        plan_length: events
            .iter()
            .map(|e| match e {
                TrialEvent::LegPlanned { length, .. } => *length,
                _ => 0.0,
            })
            .sum(),
    }
}

impl TrialRecord {
    pub fn recompute(&self) -> Metrics {
        compute_metrics(&self.trace, &self.events, self.outcome)
    }

    /// Offline bump count from the pose trace. Obstacles added mid-trial are
    /// scanned from the sample at which they appeared.
    pub fn recount_bumps(&self, bump: f64, rearm: f64) -> usize {
        let points: Vec<Point2> = self.trace.iter().map(|s| s.pose.position()).collect();
        let mut centers: Vec<(usize, Point2)> = self.obstacles.iter().map(|o| (0, o.center())).collect();
        for e in &self.events {
            if let TrialEvent::ObstacleAdded { tick, obstacle, .. } = e {
                let from = self.trace.iter().position(|s| s.tick >= *tick).unwrap_or(points.len());
                centers.push((from, obstacle.center()));
            }
        }
        centers
            .iter()
            .map(|(from, c)| crate::worldsim::recount_bumps(&points[(*from).min(points.len())..], &[*c], bump, rearm))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(points: &[(f64, f64)]) -> Vec<TraceSample> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TraceSample {
                tick: i as u64,
                t: i as f64 * 0.1,
                pose: Pose::new(x, y, 0.0),
            })
            .collect()
    }

    #[test]
    fn stationary_abort() {
        let m = compute_metrics(&trace(&[(0.0, 0.0), (0.0, 0.0)]), &[], Outcome::Aborted);
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.time_to_goal2, None);
    }

    #[test]
    fn square_distance() {
        let t = trace(&[(0.0, 0.0), (5.0, 0.0), (5.0, 5.0), (0.0, 5.0), (0.0, 0.0)]);
        assert_eq!(compute_metrics(&t, &[], Outcome::Aborted).distance, 20.0);
    }

    #[test]
    fn time_from_first_step() {
        let t = trace(&[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let ev = vec![
            TrialEvent::GoalReached {
                tick: 3,
                t: 0.3,
                goal: GoalKind::Bin,
            },
            TrialEvent::GoalReached {
                tick: 4,
                t: 0.4,
                goal: GoalKind::Door,
            },
        ];
        let m = compute_metrics(&t, &ev, Outcome::Completed);
        assert!((m.time_to_goal2.unwrap() - 0.2).abs() < 1e-12);
    }
}

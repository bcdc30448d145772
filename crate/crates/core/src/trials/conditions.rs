use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::guidance::GuidanceMode;
use crate::worldsim::GoalKind;

pub const ENVIRONMENTS: [&str; 3] = ["env1", "env2", "env3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalOrder {
    DoorThenBin,
    BinThenDoor,
}

impl GoalOrder {
    pub const ALL: [GoalOrder; 2] = [GoalOrder::DoorThenBin, GoalOrder::BinThenDoor];

    pub fn goals(self) -> [GoalKind; 2] {
        match self {
            GoalOrder::DoorThenBin => [GoalKind::Door, GoalKind::Bin],
            GoalOrder::BinThenDoor => [GoalKind::Bin, GoalKind::Door],
        }
    }
}

impl std::fmt::Display for GoalOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GoalOrder::DoorThenBin => "door-then-bin",
            GoalOrder::BinThenDoor => "bin-then-door",
        })
    }
}

impl std::str::FromStr for GoalOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "door-then-bin" => Ok(GoalOrder::DoorThenBin),
            "bin-then-door" => Ok(GoalOrder::BinThenDoor),
            _ => Err(format!("unknown goal order {s:?} (expected door-then-bin or bin-then-door)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialCondition {
    pub environment: String,
    pub goal_order: GoalOrder,
    pub mode: GuidanceMode,
}

/// Full factorial: environments x goal orders x modes.
pub fn full_grid() -> Vec<TrialCondition> {
    let mut out = Vec::new();
    for env in ENVIRONMENTS {
        for order in GoalOrder::ALL {
            for mode in GuidanceMode::ALL {
                out.push(TrialCondition {
                    environment: env.to_string(),
                    goal_order: order,
                    mode,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub condition: TrialCondition,
    /// Index into the environment's start poses (taken modulo their count).
    pub start_index: usize,
    /// Break after this scenario, seconds; zero after the last one.
    pub break_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("cannot draw {requested} scenarios from {available} conditions")]
    TooMany { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakSchedule {
    pub short: f64,
    pub long: f64,
    /// 1-based scenario after which the long break happens.
    pub long_after: usize,
}

impl Default for BreakSchedule {
    fn default() -> Self {
        Self {
            short: 60.0,
            long: 120.0,
            long_after: 3,
        }
    }
}

/// Seeded draw without replacement, with per-scenario start poses and breaks.
pub fn generate_session(seed: u64, grid: &[TrialCondition], n_scenarios: usize, breaks: BreakSchedule) -> Result<Session, SessionError> {
    if n_scenarios > grid.len() {
        return Err(SessionError::TooMany {
            requested: n_scenarios,
            available: grid.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = grid.to_vec();
    pool.shuffle(&mut rng);
    let scenarios = pool
        .into_iter()
        .take(n_scenarios)
        .enumerate()
        .map(|(index, condition)| {
            let start_index = rng.random_range(0..1024);
            let break_after = if index + 1 == n_scenarios {
                0.0
            } else if index + 1 == breaks.long_after {
                breaks.long
            } else {
                breaks.short
            };
            Scenario {
                index,
                condition,
                start_index,
                break_after,
            }
        })
        .collect();
    Ok(Session { seed, scenarios })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_full_factorial() {
        let g = full_grid();
        assert_eq!(g.len(), 18);
        let set: std::collections::BTreeSet<_> = g.iter().collect();
        assert_eq!(set.len(), 18);
    }

    #[test]
    fn session_properties() {
        let g = full_grid();
        let a = generate_session(7, &g, 6, BreakSchedule::default()).unwrap();
        assert_eq!(a, generate_session(7, &g, 6, BreakSchedule::default()).unwrap());
        let distinct: std::collections::BTreeSet<_> = a.scenarios.iter().map(|s| &s.condition).collect();
        assert_eq!(distinct.len(), 6);
        let breaks: Vec<f64> = a.scenarios.iter().map(|s| s.break_after).collect();
        assert_eq!(breaks, vec![60.0, 60.0, 120.0, 60.0, 60.0, 0.0]);
        assert_eq!(
            generate_session(7, &g, 19, BreakSchedule::default()),
            Err(SessionError::TooMany {
                requested: 19,
                available: 18
            })
        );
    }

    #[test]
    fn goal_order_round_trips() {
        for o in GoalOrder::ALL {
            assert_eq!(o.to_string().parse::<GoalOrder>().unwrap(), o);
        }
    }
}

//! Websocket message schemas.
//!
//! Client messages and all server messages except phosphene frames are JSON
//! text objects tagged by `kind`. Phosphene frames travel as binary messages
//! in the core frame wire encoding; the header tick is the frame's sequence
//! number.

use serde::{Deserialize, Serialize};
use spv_core::geometry::{Point2, Pose, Twist};
use spv_core::planner::DwaDiagnostics;
use spv_core::trials::{Metrics, Outcome, TrialCondition, TrialEvent};
use spv_core::worldsim::{GoalKind, Obstacle};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subject,
    Experimenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyState {
    #[serde(default)]
    pub forward: bool,
    #[serde(default)]
    pub back: bool,
    #[serde(default)]
    pub left: bool,
    #[serde(default)]
    pub right: bool,
}

impl KeyState {
    /// Forward/back drive `v`, left/right drive `w` (left is positive).
    pub fn to_twist(self, v_max: f64, w_max: f64) -> Twist {
        let axis = |pos: bool, neg: bool| (pos as i8 - neg as i8) as f64;
        Twist::new(axis(self.forward, self.back) * v_max, axis(self.left, self.right) * w_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Exactly one of `twist` and `keys`.
    Control {
        timestamp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        twist: Option<Twist>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        keys: Option<KeyState>,
    },
    /// Starts the next scheduled scenario, or `condition` when given.
    StartTrial {
        timestamp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<TrialCondition>,
    },
    AbortTrial {
        timestamp: f64,
    },
    AnnotateAid {
        timestamp: f64,
        #[serde(default)]
        note: String,
    },
    Heartbeat {
        timestamp: f64,
    },
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Control { .. } => "control",
            ClientMessage::StartTrial { .. } => "start_trial",
            ClientMessage::AbortTrial { .. } => "abort_trial",
            ClientMessage::AnnotateAid { .. } => "annotate_aid",
            ClientMessage::Heartbeat { .. } => "heartbeat",
        }
    }

    pub fn permitted(&self, role: Role) -> bool {
        match self {
            ClientMessage::Heartbeat { .. } => true,
            ClientMessage::Control { .. } => role == Role::Subject,
            _ => role == Role::Experimenter,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let ClientMessage::Control { twist, keys, .. } = &msg {
            if twist.is_some() == keys.is_some() {
                return Err("control needs exactly one of `twist` and `keys`".into());
            }
            if twist.is_some_and(|t| !t.is_finite()) {
                return Err("control twist must be finite".into());
            }
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial: usize,
    pub condition: TrialCondition,
    pub active_goal: Option<GoalKind>,
    pub trial_tick: u64,
    pub t: f64,
    pub pose: Pose,
    pub twist: Twist,
    pub plan: Option<Vec<Point2>>,
    pub obstacles: Vec<Obstacle>,
    /// Centers of live sensed costmap cells.
    pub sensed: Vec<Point2>,
    pub metrics: Metrics,
    /// What the autopilot would do on the current plan.
    pub dwa: Option<DwaDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    /// Waiting for `start_trial`.
    Ready {
        next_trial: Option<usize>,
    },
    Running {
        trial: usize,
    },
    Break {
        after_trial: usize,
        remaining: f64,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        seq: u64,
        protocol: u32,
        role: Role,
        has_control: bool,
        config_hash: String,
    },
    ControlToken {
        seq: u64,
        granted: bool,
    },
    ExperimenterState {
        seq: u64,
        /// Session tick of the frame this state accompanies.
        tick: u64,
        phase: Phase,
        trial: Option<Box<TrialView>>,
        dropped_controls: u64,
        subjects: usize,
    },
    TrialEvent {
        seq: u64,
        trial: usize,
        event: TrialEvent,
    },
    TrialStarted {
        seq: u64,
        trial: usize,
        condition: TrialCondition,
        start_pose: Pose,
    },
    TrialEnded {
        seq: u64,
        trial: usize,
        outcome: Outcome,
        metrics: Metrics,
    },
    BreakTimer {
        seq: u64,
        after_trial: usize,
        remaining: f64,
        next_trial: Option<usize>,
    },
    Error {
        seq: u64,
        message: String,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ServerMessage::Hello { seq, .. }
            | ServerMessage::ControlToken { seq, .. }
            | ServerMessage::ExperimenterState { seq, .. }
            | ServerMessage::TrialEvent { seq, .. }
            | ServerMessage::TrialStarted { seq, .. }
            | ServerMessage::TrialEnded { seq, .. }
            | ServerMessage::BreakTimer { seq, .. }
            | ServerMessage::Error { seq, .. } => *seq,
        }
    }

    pub fn set_seq(&mut self, value: u64) {
        match self {
            ServerMessage::Hello { seq, .. }
            | ServerMessage::ControlToken { seq, .. }
            | ServerMessage::ExperimenterState { seq, .. }
            | ServerMessage::TrialEvent { seq, .. }
            | ServerMessage::TrialStarted { seq, .. }
            | ServerMessage::TrialEnded { seq, .. }
            | ServerMessage::BreakTimer { seq, .. }
            | ServerMessage::Error { seq, .. } => *seq = value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_map_to_twist() {
        let k = |f, b, l, r| KeyState {
            forward: f,
            back: b,
            left: l,
            right: r,
        };
        assert_eq!(k(false, false, false, false).to_twist(1.0, 1.5), Twist::ZERO);
        assert_eq!(k(true, false, false, false).to_twist(1.0, 1.5), Twist::new(1.0, 0.0));
        assert_eq!(k(true, false, true, false).to_twist(1.0, 1.5), Twist::new(1.0, 1.5));
        assert_eq!(k(true, true, false, true).to_twist(1.0, 1.5), Twist::new(0.0, -1.5));
    }

    #[test]
    fn control_needs_one_input() {
        assert!(ClientMessage::parse(r#"{"kind":"control","timestamp":0}"#).is_err());
        assert!(ClientMessage::parse(r#"{"kind":"control","timestamp":0,"keys":{"forward":true}}"#).is_ok());
        assert!(ClientMessage::parse(r#"{"kind":"control","timestamp":0,"keys":{},"twist":{"v":0,"w":0}}"#).is_err());
    }

    #[test]
    fn unknown_kind_and_fields_rejected() {
        assert!(ClientMessage::parse(r#"{"kind":"teleport","timestamp":0}"#).is_err());
        assert!(ClientMessage::parse(r#"{"kind":"heartbeat","timestamp":0,"x":1}"#).is_err());
        assert!(ClientMessage::parse(r#"{"kind":"heartbeat"}"#).is_err());
    }

    #[test]
    fn roles() {
        let ctl = ClientMessage::Control {
            timestamp: 0.0,
            twist: Some(Twist::ZERO),
            keys: None,
        };
        assert!(ctl.permitted(Role::Subject));
        assert!(!ctl.permitted(Role::Experimenter));
        let abort = ClientMessage::AbortTrial { timestamp: 0.0 };
        assert!(!abort.permitted(Role::Subject));
        assert!(abort.permitted(Role::Experimenter));
    }
}

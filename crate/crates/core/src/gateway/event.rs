use serde::{Deserialize, Serialize};

use crate::bridge::{GranularityLabel, ToolCall};
use crate::model::{ArmPose, BasePose2D, JointVector};
use crate::sim::Robot;

/// Robot state as reported back after a motion or a reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RobotState {
    Arm { joints: JointVector, pose: ArmPose },
    Base(BaseOdom),
}

/// Base pose with the heading also given in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseOdom {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub theta_deg: f64,
}

impl From<BasePose2D> for BaseOdom {
    fn from(p: BasePose2D) -> Self {
        BaseOdom {
            x: p.x,
            y: p.y,
            theta: p.theta,
            theta_deg: p.theta_deg(),
        }
    }
}

impl BaseOdom {
    pub fn pose(&self) -> BasePose2D {
        BasePose2D {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
    }
}

impl RobotState {
    pub fn robot(&self) -> Robot {
        match self {
            RobotState::Arm { .. } => Robot::Arm,
            RobotState::Base(_) => Robot::Base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    InvalidAction,
    EStopEngaged,
    OutOfWorkspace,
    RobotUnavailable,
    InvalidCommand,
    TransportError,
    BackendProtocolError,
    Cancelled,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Prompt {
        prompt_id: String,
        text: String,
    },
    Granularity {
        prompt_id: String,
        #[serde(flatten)]
        label: GranularityLabel,
    },
    ToolCall {
        prompt_id: String,
        /// The call as dispatched, after the safety clamp.
        call: ToolCall,
        /// The backend's original call when the clamp changed it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        requested: Option<ToolCall>,
    },
    ToolResult {
        prompt_id: String,
        call_id: String,
        achieved: RobotState,
        ticks: u64,
        halted: bool,
    },
    Assistant {
        prompt_id: String,
        text: String,
    },
    Clarification {
        prompt_id: String,
        text: String,
    },
    State {
        reason: String,
        state: RobotState,
    },
    Estop {
        engaged: bool,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prompt_id: Option<String>,
        error: ErrorCode,
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Prompt { .. } => "prompt",
            EventBody::Granularity { .. } => "granularity",
            EventBody::ToolCall { .. } => "tool_call",
            EventBody::ToolResult { .. } => "tool_result",
            EventBody::Assistant { .. } => "assistant",
            EventBody::Clarification { .. } => "clarification",
            EventBody::State { .. } => "state",
            EventBody::Estop { .. } => "estop",
            EventBody::Error { .. } => "error",
        }
    }

    pub fn prompt_id(&self) -> Option<&str> {
        match self {
            EventBody::Prompt { prompt_id, .. }
            | EventBody::Granularity { prompt_id, .. }
            | EventBody::ToolCall { prompt_id, .. }
            | EventBody::ToolResult { prompt_id, .. }
            | EventBody::Assistant { prompt_id, .. }
            | EventBody::Clarification { prompt_id, .. } => Some(prompt_id),
            EventBody::Error { prompt_id, .. } => prompt_id.as_deref(),
            EventBody::State { .. } | EventBody::Estop { .. } => None,
        }
    }
}

/// One line of the session trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Simulation time in milliseconds.
    pub ts_ms: u64,
    pub session: String,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::classify_granularity;

    #[test]
    fn wire_shape_round_trips() {
        let ev = SessionEvent {
            ts_ms: 12,
            session: "default".into(),
            body: EventBody::Granularity {
                prompt_id: "p1".into(),
                label: classify_granularity("move right_j3 by 90 degrees"),
            },
        };
        let v = serde_json::to_value(&ev).unwrap();
        assert_eq!(v["kind"], "granularity");
        assert_eq!(v["payload"]["label"], "quantitative");
        assert_eq!(v["payload"]["quantities"][0]["unit"], "deg");
        let back: SessionEvent = serde_json::from_value(v).unwrap();
        assert_eq!(back, ev);
    }

    #[test]
    fn kind_payload_mismatch_rejected() {
        let line = r#"{"ts_ms":0,"session":"s","kind":"estop","payload":{"text":"hi"}}"#;
        assert!(serde_json::from_str::<SessionEvent>(line).is_err());
    }

    #[test]
    fn states_round_trip_exactly() {
        let odom = BaseOdom::from(BasePose2D::new(-0.15, 1e-17, 0.1).unwrap());
        let ev = SessionEvent {
            ts_ms: 0,
            session: "s".into(),
            body: EventBody::State {
                reason: "reset".into(),
                state: RobotState::Base(odom),
            },
        };
        let text = serde_json::to_string(&ev).unwrap();
        assert_eq!(serde_json::from_str::<SessionEvent>(&text).unwrap(), ev);
    }
}

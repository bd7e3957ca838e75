//! Language bridge: turns prompts into validated tool calls and runs the
//! prompt → tool call → motion → function response loop.

mod clamp;
mod granularity;
mod mock;
mod remote;
pub mod stub;
mod tools;
mod turn;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{ArmPose, BasePose2D, JointVector};

pub use clamp::{clamp_qualitative, SafetyBounds};
pub use granularity::{
    classify_granularity, Granularity, GranularityLabel, Quantity, QuantityKind,
};
pub use mock::{
    parse_intent, resolve_intent, DriveDirection, Intent, MockBackend, MockConfig, CLARIFICATION,
};
pub use remote::{parse_completion, RemoteBackend, RemoteConfig, API_KEY_ENV, SYSTEM_PROMPT};
pub use tools::{
    InvalidAction, ParamSpec, ParamType, RobotCommand, Source, ToolCall, ToolSchema, APPROACH_POSE,
    DRIVE, MOVE_ARM_TO_JOINT_POSITIONS,
};
pub(crate) use turn::sim_error_code;
pub use turn::{Conversation, MotionOutcome, RobotInterface};

/// Robot state a backend may consult when resolving relative prompts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RobotContext {
    pub joints: Option<JointVector>,
    pub pose: Option<ArmPose>,
    pub base: Option<BasePose2D>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefusalReason {
    InvalidAction,
    EStopEngaged,
}

/// Exactly one of: a tool call, a clarification, a refusal.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendReply {
    ToolCall {
        call: ToolCall,
        assistant_text: Option<String>,
    },
    Clarification(String),
    Refusal {
        reason: RefusalReason,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend call cancelled by e-stop")]
    Cancelled,
}

/// A tool call as the backend phrased it, kept verbatim for the history.
#[derive(Debug, Clone, PartialEq)]
pub struct RawToolCall {
    pub id: String,
    pub name: String,
    pub arguments: String,
}

/// One entry of the conversation history, in chat-completions roles.
#[derive(Debug, Clone, PartialEq)]
pub enum ChatMessage {
    User {
        content: String,
    },
    Assistant {
        content: Option<String>,
        tool_calls: Vec<RawToolCall>,
    },
    Tool {
        tool_call_id: String,
        name: String,
        content: String,
    },
}

impl ChatMessage {
    pub fn to_wire(&self) -> Value {
        match self {
            ChatMessage::User { content } => json!({"role": "user", "content": content}),
            ChatMessage::Assistant {
                content,
                tool_calls,
            } => {
                let mut m = json!({"role": "assistant", "content": content});
                if !tool_calls.is_empty() {
                    m["tool_calls"] = tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.id,
                                "type": "function",
                                "function": {"name": c.name, "arguments": c.arguments},
                            })
                        })
                        .collect();
                }
                m
            }
            ChatMessage::Tool {
                tool_call_id,
                name,
                content,
            } => json!({
                "role": "tool",
                "tool_call_id": tool_call_id,
                "name": name,
                "content": content,
            }),
        }
    }
}

/// A language backend. Calls may come from any thread.
pub trait Backend: Send + Sync {
    fn source(&self) -> Source;

    /// Answers the latest user message in `history`.
    fn complete(
        &self,
        history: &[ChatMessage],
        prompt_id: &str,
        context: &RobotContext,
    ) -> Result<BackendReply, BackendError>;

    /// Final assistant text once the tool result ends `history`.
    fn summarize(
        &self,
        history: &[ChatMessage],
        context: &RobotContext,
    ) -> Result<String, BackendError>;
}

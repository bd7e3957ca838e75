//! Client for chat-completions compatible endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tools::{Source, ToolCall, ToolSchema};
use super::{Backend, BackendError, BackendReply, ChatMessage, RefusalReason, RobotContext};

pub const API_KEY_ENV: &str = "LINGUOMOTOR_API_KEY";

pub const SYSTEM_PROMPT: &str = "You control a 7-joint robot arm (joints right_j0 to right_j6) \
and a differential-drive mobile base through the provided tools. Joint angles are in radians, \
positions in meters, speeds in m/s and rad/s, durations in seconds. Call exactly one tool per \
request. After a tool runs you receive the state the robot actually reached.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        RemoteBackend { config }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Request body for the given history.
    pub fn request_body(&self, history: &[ChatMessage]) -> Value {
        let mut messages = vec![json!({"role": "system", "content": SYSTEM_PROMPT})];
        messages.extend(history.iter().map(ChatMessage::to_wire));
        json!({
            "model": self.config.model,
            "messages": messages,
            "tools": ToolSchema::registry()
                .iter()
                .map(ToolSchema::to_function_json)
                .collect::<Vec<_>>(),
            "tool_choice": "auto",
        })
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(self.config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let mut request = client.post(&url).json(body);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            request = request.bearer_auth(key);
        }
        log::debug!("POST {url}");
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.without_url().to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Protocol(format!("reply is not JSON: {e}")))
    }
}

fn message_of(reply: &Value) -> Result<&Value, BackendError> {
    reply
        .pointer("/choices/0/message")
        .filter(|m| m.is_object())
        .ok_or_else(|| BackendError::Protocol("reply has no choices[0].message".into()))
}

/// Parses a chat-completions reply into a [`BackendReply`].
pub fn parse_completion(reply: &Value, prompt_id: &str) -> Result<BackendReply, BackendError> {
    let message = message_of(reply)?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .map(str::to_string);
    let calls = match message.get("tool_calls") {
        None | Some(Value::Null) => &[][..],
        Some(Value::Array(calls)) => calls.as_slice(),
        Some(_) => return Err(BackendError::Protocol("tool_calls is not an array".into())),
    };
    let Some(first) = calls.first() else {
        return match content {
            Some(text) => Ok(BackendReply::Clarification(text)),
            None => Err(BackendError::Protocol(
                "reply has neither content nor tool calls".into(),
            )),
        };
    };
    if calls.len() > 1 {
        log::warn!(
            "backend proposed {} tool calls; only the first is used",
            calls.len()
        );
    }
    let id = first.get("id").and_then(Value::as_str).unwrap_or("call_0");
    let function = first
        .get("function")
        .ok_or_else(|| BackendError::Protocol("tool call without function".into()))?;
    let name = function
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("tool call without name".into()))?;
    let refusal = |detail: String| BackendReply::Refusal {
        reason: RefusalReason::InvalidAction,
        detail,
    };
    let arguments = match function.get("arguments") {
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(v) => v,
            Err(e) => return Ok(refusal(format!("arguments are not valid JSON: {e}"))),
        },
        Some(v @ Value::Object(_)) => v.clone(),
        _ => return Ok(refusal("tool call has no arguments".into())),
    };
    Ok(
        match ToolCall::from_raw(name, &arguments, id, Source::Remote, prompt_id) {
            Ok(call) => BackendReply::ToolCall {
                call,
                assistant_text: content,
            },
            Err(e) => refusal(e.0),
        },
    )
}

impl Backend for RemoteBackend {
    fn source(&self) -> Source {
        Source::Remote
    }

    fn complete(
        &self,
        history: &[ChatMessage],
        prompt_id: &str,
        _context: &RobotContext,
    ) -> Result<BackendReply, BackendError> {
        let reply = self.post(&self.request_body(history))?;
        parse_completion(&reply, prompt_id)
    }

    fn summarize(
        &self,
        history: &[ChatMessage],
        _context: &RobotContext,
    ) -> Result<String, BackendError> {
        let reply = self.post(&self.request_body(history))?;
        let message = message_of(&reply)?;
        Ok(message
            .get("content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::stub::{text_completion, tool_call_completion};
    use crate::bridge::RobotCommand;
    use crate::model::JointVector;

    #[test]
    fn parses_tool_call_and_text() {
        let reply = tool_call_completion(
            "call_x",
            "move_arm_to_joint_positions",
            r#"{"joint_positions":{"right_j0":0,"right_j1":0,"right_j2":0,"right_j3":0,"right_j4":0,"right_j5":0,"right_j6":0}}"#,
        );
        let BackendReply::ToolCall { call, .. } = parse_completion(&reply, "p1").unwrap() else {
            panic!()
        };
        assert_eq!(call.command, RobotCommand::Joints(JointVector::ZERO));
        assert_eq!(call.call_id, "call_x");
        assert_eq!(call.source, Source::Remote);

        let reply = text_completion("How far?");
        assert_eq!(
            parse_completion(&reply, "p1").unwrap(),
            BackendReply::Clarification("How far?".into())
        );
    }

    #[test]
    fn bad_arguments_are_refusals_bad_shape_is_protocol_error() {
        let reply = tool_call_completion("c", "drive", "{not json");
        assert!(matches!(
            parse_completion(&reply, "p1").unwrap(),
            BackendReply::Refusal {
                reason: RefusalReason::InvalidAction,
                ..
            }
        ));
        assert!(matches!(
            parse_completion(&json!({"choices": []}), "p1"),
            Err(BackendError::Protocol(_))
        ));
    }

    #[test]
    fn request_carries_tools_and_auto_choice() {
        let backend = RemoteBackend::new(RemoteConfig {
            base_url: "http://localhost:1".into(),
            model: "m".into(),
            timeout_secs: 1.0,
        });
        let body = backend.request_body(&[ChatMessage::User {
            content: "hi".into(),
        }]);
        assert_eq!(body["tool_choice"], "auto");
        assert_eq!(body["tools"].as_array().unwrap().len(), 3);
        assert_eq!(body["messages"][1]["content"], "hi");
    }
}

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use super::clamp::{clamp_qualitative, SafetyBounds};
use super::granularity::classify_granularity;
use super::tools::RobotCommand;
use super::{
    Backend, BackendError, BackendReply, ChatMessage, RawToolCall, RefusalReason, RobotContext,
};
use crate::gateway::{ErrorCode, EventBody, RobotState, SessionEvent};
use crate::sim::{Robot, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionOutcome {
    pub ticks: u64,
    /// True when an e-stop cut the motion short.
    pub halted: bool,
}

/// What a conversation needs from the robots it drives.
pub trait RobotInterface {
    fn context(&self) -> RobotContext;
    /// Simulation clock in milliseconds.
    fn now_ms(&self) -> u64;
    fn estop_engaged(&self) -> bool;
    /// Validates and publishes a command without running it.
    fn submit(&mut self, command: &RobotCommand) -> Result<(), SimError>;
    /// Ticks until all submitted motion finished or an e-stop halted it.
    fn run_to_completion(&mut self) -> MotionOutcome;
    fn state_of(&self, robot: Robot) -> Option<RobotState>;
}

pub(crate) fn sim_error_code(e: &SimError) -> ErrorCode {
    match e {
        SimError::EStopEngaged => ErrorCode::EStopEngaged,
        SimError::OutOfWorkspace { .. } => ErrorCode::OutOfWorkspace,
        SimError::RobotUnavailable(_) => ErrorCode::RobotUnavailable,
        SimError::InvalidCommand(_) | SimError::Model(_) => ErrorCode::InvalidCommand,
        SimError::Bus(_) => ErrorCode::Internal,
    }
}

fn backend_error_code(e: &BackendError) -> ErrorCode {
    match e {
        BackendError::Transport(_) => ErrorCode::TransportError,
        BackendError::Protocol(_) => ErrorCode::BackendProtocolError,
        BackendError::Cancelled => ErrorCode::Cancelled,
    }
}

/// Runs `f` on a worker thread, giving up as soon as the e-stop engages.
fn cancellable<T, F>(robot: &dyn RobotInterface, f: F) -> Result<T, BackendError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, BackendError> + Send + 'static,
{
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    loop {
        match rx.recv_timeout(Duration::from_millis(5)) {
            Ok(result) => return result,
            Err(RecvTimeoutError::Timeout) => {
                if robot.estop_engaged() {
                    return Err(BackendError::Cancelled);
                }
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(BackendError::Protocol("backend worker panicked".into()))
            }
        }
    }
}

/// One session's conversation: history plus prompt numbering.
#[derive(Debug, Clone)]
pub struct Conversation {
    session: String,
    history: Vec<ChatMessage>,
    prompts: u64,
    bounds: SafetyBounds,
}

impl Conversation {
    pub fn new(session: impl Into<String>, bounds: SafetyBounds) -> Self {
        Conversation {
            session: session.into(),
            history: Vec::new(),
            prompts: 0,
            bounds,
        }
    }

    pub fn session(&self) -> &str {
        &self.session
    }

    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn run_turn(
        &mut self,
        prompt: &str,
        backend: &Arc<dyn Backend>,
        robot: &mut dyn RobotInterface,
    ) -> Vec<SessionEvent> {
        self.run_turn_with(prompt, backend, robot, &mut |_| {})
    }

    /// Like [`Conversation::run_turn`], also handing each event to `sink` as
    /// soon as it happens.
    pub fn run_turn_with(
        &mut self,
        prompt: &str,
        backend: &Arc<dyn Backend>,
        robot: &mut dyn RobotInterface,
        sink: &mut dyn FnMut(&SessionEvent),
    ) -> Vec<SessionEvent> {
        let mut events = Vec::new();
        let session = self.session.clone();
        let mut emit = |robot: &dyn RobotInterface, body: EventBody| {
            let ev = SessionEvent {
                ts_ms: robot.now_ms(),
                session: session.clone(),
                body,
            };
            sink(&ev);
            events.push(ev);
        };

        self.prompts += 1;
        let prompt_id = format!("p{}", self.prompts);
        emit(
            robot,
            EventBody::Prompt {
                prompt_id: prompt_id.clone(),
                text: prompt.to_string(),
            },
        );
        let label = classify_granularity(prompt);
        emit(
            robot,
            EventBody::Granularity {
                prompt_id: prompt_id.clone(),
                label: label.clone(),
            },
        );
        let error = |code: ErrorCode, message: String| EventBody::Error {
            prompt_id: Some(prompt_id.clone()),
            error: code,
            message,
        };
        if robot.estop_engaged() {
            emit(
                robot,
                error(
                    ErrorCode::EStopEngaged,
                    "e-stop engaged; reset before sending prompts".into(),
                ),
            );
            return events;
        }

        self.history.push(ChatMessage::User {
            content: prompt.to_string(),
        });
        let context = robot.context();
        let reply = {
            let backend = Arc::clone(backend);
            let history = self.history.clone();
            let id = prompt_id.clone();
            cancellable(robot, move || backend.complete(&history, &id, &context))
        };
        let (call, assistant_text) = match reply {
            Err(e) => {
                emit(robot, error(backend_error_code(&e), e.to_string()));
                return events;
            }
            Ok(BackendReply::Clarification(text)) => {
                self.history.push(ChatMessage::Assistant {
                    content: Some(text.clone()),
                    tool_calls: Vec::new(),
                });
                emit(
                    robot,
                    EventBody::Clarification {
                        prompt_id: prompt_id.clone(),
                        text,
                    },
                );
                return events;
            }
            Ok(BackendReply::Refusal { reason, detail }) => {
                let code = match reason {
                    RefusalReason::InvalidAction => ErrorCode::InvalidAction,
                    RefusalReason::EStopEngaged => ErrorCode::EStopEngaged,
                };
                emit(robot, error(code, detail));
                return events;
            }
            Ok(BackendReply::ToolCall {
                call,
                assistant_text,
            }) => (call, assistant_text),
        };

        let dispatched = clamp_qualitative(&call, &label, &context, &self.bounds);
        self.history.push(ChatMessage::Assistant {
            content: assistant_text,
            tool_calls: vec![RawToolCall {
                id: call.call_id.clone(),
                name: call.tool().to_string(),
                arguments: call.command.arguments().to_string(),
            }],
        });
        let tool_message = |content: String| ChatMessage::Tool {
            tool_call_id: call.call_id.clone(),
            name: call.tool().to_string(),
            content,
        };
        if let Err(e) = robot.submit(&dispatched.command) {
            self.history
                .push(tool_message(json!({"error": e.to_string()}).to_string()));
            emit(robot, error(sim_error_code(&e), e.to_string()));
            return events;
        }
        let requested = (dispatched != call).then(|| call.clone());
        emit(
            robot,
            EventBody::ToolCall {
                prompt_id: prompt_id.clone(),
                call: dispatched.clone(),
                requested,
            },
        );
        let outcome = robot.run_to_completion();
        let achieved = robot
            .state_of(dispatched.command.robot())
            .expect("a robot that accepted a command reports state");
        emit(
            robot,
            EventBody::ToolResult {
                prompt_id: prompt_id.clone(),
                call_id: dispatched.call_id.clone(),
                achieved,
                ticks: outcome.ticks,
                halted: outcome.halted,
            },
        );
        self.history.push(tool_message(
            serde_json::to_string(&achieved).expect("state serializes"),
        ));
        if outcome.halted {
            emit(
                robot,
                error(ErrorCode::EStopEngaged, "motion halted by e-stop".into()),
            );
            return events;
        }

        let summary = {
            let backend = Arc::clone(backend);
            let history = self.history.clone();
            let context = robot.context();
            cancellable(robot, move || backend.summarize(&history, &context))
        };
        match summary {
            Ok(text) => {
                self.history.push(ChatMessage::Assistant {
                    content: Some(text.clone()),
                    tool_calls: Vec::new(),
                });
                emit(
                    robot,
                    EventBody::Assistant {
                        prompt_id: prompt_id.clone(),
                        text,
                    },
                );
            }
            Err(e) => emit(robot, error(backend_error_code(&e), e.to_string())),
        }
        events
    }
}

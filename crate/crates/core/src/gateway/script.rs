//! Prompt scripts and trace replay.
//!
//! A script holds one prompt per line. `#` starts a comment line and
//! `!reset <arm|base> <json>` puts a robot into an explicit state first:
//!
//! ```text
//! # Table row 4
//! !reset arm {"joints": {"right_j0": 0, ...}}
//! move right_j3 by 90 degrees
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::{new_world, Clock, FinalStates, Gateway, GatewayConfig, GatewayError, RobotState};
use super::{EventBody, SessionEvent};
use crate::bridge::{Backend, RobotInterface};
use crate::model::{ArmPose, BasePose2D, JointVector};
use crate::sim::Robot;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptLine {
    Prompt(String),
    /// Joints are required; the pose stays as is when absent.
    ResetArm {
        joints: JointVector,
        pose: Option<ArmPose>,
    },
    ResetBase(BasePose2D),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmReset {
    joints: JointVector,
    #[serde(default)]
    pose: Option<ArmPose>,
}

/// Parses a script into numbered lines, rejecting it whole on any
/// malformed directive.
pub fn parse_script(text: &str) -> Result<Vec<(usize, ScriptLine)>, GatewayError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: String| GatewayError::ScriptSyntax {
            line: line_no,
            message,
        };
        let Some(directive) = line.strip_prefix('!') else {
            out.push((line_no, ScriptLine::Prompt(line.to_string())));
            continue;
        };
        let mut parts = directive.splitn(3, char::is_whitespace);
        match parts.next() {
            Some("reset") => {}
            other => {
                return Err(syntax(format!(
                    "unknown directive `!{}`",
                    other.unwrap_or_default()
                )))
            }
        }
        let robot = parts.next().unwrap_or_default();
        let json = parts.next().unwrap_or_default().trim();
        if json.is_empty() {
            return Err(syntax("`!reset` needs a robot and a state object".into()));
        }
        let parsed = match robot {
            "arm" => serde_json::from_str::<ArmReset>(json).map(|r| ScriptLine::ResetArm {
                joints: r.joints,
                pose: r.pose,
            }),
            "base" => serde_json::from_str::<BasePose2D>(json).map(ScriptLine::ResetBase),
            other => return Err(syntax(format!("unknown robot `{other}`"))),
        };
        out.push((
            line_no,
            parsed.map_err(|e| syntax(format!("bad {robot} state: {e}")))?,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScriptOutcome {
    pub session: String,
    pub events: Vec<SessionEvent>,
    pub final_states: FinalStates,
}

impl ScriptOutcome {
    pub fn has_errors(&self) -> bool {
        self.events.iter().any(|e| e.kind() == "error")
    }

    /// 0 iff the run produced no error events.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.has_errors())
    }
}

/// Runs script text in virtual time under session name `session`.
pub fn run_script_text(
    text: &str,
    session: &str,
    config: GatewayConfig,
    backend: Option<Arc<dyn Backend>>,
) -> Result<ScriptOutcome, GatewayError> {
    let lines = parse_script(text)?;
    let mut gateway = match backend {
        Some(b) => Gateway::with_backend(config, Clock::Virtual, b)?,
        None => Gateway::new(config, Clock::Virtual)?,
    };
    for (_, line) in &lines {
        match line {
            ScriptLine::Prompt(p) => {
                gateway.prompt(session, p);
            }
            reset => {
                gateway.reset_robot(session, reset);
            }
        }
    }
    Ok(ScriptOutcome {
        session: session.to_string(),
        events: gateway.events().to_vec(),
        final_states: gateway.final_states(),
    })
}

/// Runs a script file; the session is named after the file stem.
pub fn run_script(path: &Path, config: GatewayConfig) -> Result<ScriptOutcome, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GatewayError::FileNotFound(path.to_path_buf()),
        _ => GatewayError::Io(e),
    })?;
    let session = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "script".into());
    run_script_text(&text, &session, config, None)
}

/// State after one replayed tool call.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub prompt_id: String,
    pub call_id: String,
    pub state: RobotState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub final_states: FinalStates,
    pub steps: Vec<ReplayStep>,
}

/// Re-dispatches recorded tool calls against fresh simulators, bypassing
/// any backend. A recorded `tool_result` fixes how many ticks the motion
/// ran; without one the motion runs to completion.
pub fn replay_events(
    events: &[SessionEvent],
    config: &GatewayConfig,
) -> Result<ReplayOutcome, GatewayError> {
    let world = new_world(config)?;
    let mut rig = super::Rig::new(world, Clock::Virtual, config.max_drive_seconds);
    let mut steps = Vec::new();
    // Call awaiting its motion: (prompt id, call id, robot).
    let mut pending: Option<(String, String, Robot)> = None;

    fn settle(
        rig: &mut super::Rig,
        pending: &mut Option<(String, String, Robot)>,
        steps: &mut Vec<ReplayStep>,
        ticks: Option<u64>,
    ) {
        if let Some((prompt_id, call_id, robot)) = pending.take() {
            match ticks {
                Some(n) => rig.run_ticks(n),
                None => {
                    rig.run_until_idle();
                }
            }
            steps.push(ReplayStep {
                prompt_id,
                call_id,
                state: rig.state_of(robot).expect("robot accepted the call"),
            });
        }
    }

    for (i, ev) in events.iter().enumerate() {
        let malformed = |message: String| GatewayError::TraceMalformed {
            line: i + 1,
            message,
        };
        match &ev.body {
            EventBody::ToolCall {
                prompt_id, call, ..
            } => {
                settle(&mut rig, &mut pending, &mut steps, None);
                rig.submit(&call.command).map_err(|e| {
                    malformed(format!("recorded call {} rejected: {e}", call.call_id))
                })?;
                pending = Some((
                    prompt_id.clone(),
                    call.call_id.clone(),
                    call.command.robot(),
                ));
            }
            EventBody::ToolResult {
                call_id,
                ticks,
                halted,
                ..
            } => {
                match &pending {
                    Some((_, pending_id, _)) if pending_id == call_id => {}
                    _ => return Err(malformed(format!("tool_result for unknown call {call_id}"))),
                }
                settle(&mut rig, &mut pending, &mut steps, Some(*ticks));
                if *halted {
                    rig.world_mut().engage_estop();
                }
            }
            EventBody::State { reason, state } if reason == "reset" => {
                settle(&mut rig, &mut pending, &mut steps, None);
                let world = rig.world_mut();
                let result = match state {
                    RobotState::Arm { joints, pose } => world.reset_arm(*joints, *pose),
                    RobotState::Base(odom) => world.reset_base(odom.pose()),
                };
                result.map_err(|e| malformed(format!("recorded reset rejected: {e}")))?;
            }
            EventBody::Estop { engaged } => {
                settle(&mut rig, &mut pending, &mut steps, None);
                if *engaged {
                    rig.world_mut().engage_estop();
                } else {
                    rig.world_mut().reset_estop();
                }
            }
            _ => {}
        }
    }
    settle(&mut rig, &mut pending, &mut steps, None);
    Ok(ReplayOutcome {
        final_states: rig.world().snapshot().into(),
        steps,
    })
}

pub fn replay_trace(path: &Path, config: &GatewayConfig) -> Result<ReplayOutcome, GatewayError> {
    let events = super::read_trace(path)?;
    replay_events(&events, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_prompts_and_resets() {
        let text =
            "# header\n\nmove the arm up\n!reset base {\"x\": 1.0, \"y\": 0.0, \"theta\": 0.5}\n";
        let lines = parse_script(text).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], (3, ScriptLine::Prompt("move the arm up".into())));
        assert!(matches!(lines[1].1, ScriptLine::ResetBase(p) if p.x == 1.0 && p.theta == 0.5));
    }

    #[test]
    fn malformed_directives() {
        for bad in [
            "!reset arm {\"joints\": {\"right_j0\": 0}}",
            "!reset arm",
            "!reset gripper {}",
            "!teleport base {}",
            "!reset base {not json}",
        ] {
            assert!(
                matches!(
                    parse_script(bad),
                    Err(GatewayError::ScriptSyntax { line: 1, .. })
                ),
                "{bad}"
            );
        }
    }
}

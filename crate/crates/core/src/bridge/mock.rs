//! Deterministic grammar backend. Rules are tried in order and the first
//! match wins; anything else gets a clarification asking for a magnitude.

use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use super::granularity::{normalize, NUM};
use super::tools::{RobotCommand, Source, ToolCall};
use super::{Backend, BackendError, BackendReply, ChatMessage, RobotContext};
use crate::model::{deg_to_rad, ArmPose, Joint, JointVector, Quaternion, VelocityCommand};

/// Defaults used when a prompt leaves a magnitude open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Joint step for "move the arm up/down" (rad).
    pub arm_step: f64,
    /// Joint step for "rotate the arm" (rad).
    pub rotate_step: f64,
    /// Speed for drive prompts with neither speed nor duration (m/s).
    pub qualitative_speed: f64,
    /// Speed for drive prompts that give a duration but no speed (m/s).
    pub implied_speed: f64,
    /// Duration when none is given (s).
    pub default_duration: f64,
    /// Accept "turning at N degrees per second" in drive prompts.
    pub allow_turn_rate: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            arm_step: 0.1,
            rotate_step: 0.2,
            qualitative_speed: 0.1,
            implied_speed: 1.0,
            default_duration: 1.0,
            allow_turn_rate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveDirection {
    Forward,
    Backward,
    AlongX,
}

/// What a prompt asks for, before it is resolved against robot state.
/// Angles stay in the prompt's degrees.
#[derive(Debug, Clone, PartialEq)]
pub enum Intent {
    JointDelta {
        joint: Joint,
        degrees: f64,
    },
    JointAbsolute {
        joint: Joint,
        degrees: f64,
    },
    BaseRotate {
        degrees: f64,
    },
    AllJoints {
        radians: f64,
    },
    ApproachPose {
        x: f64,
        y: f64,
        z: f64,
        keep_orientation: bool,
    },
    Drive {
        direction: DriveDirection,
        speed: Option<f64>,
        duration: Option<f64>,
        turn_rate_deg: Option<f64>,
    },
    ArmVertical {
        up: bool,
    },
    RotateArm,
}

struct Rules {
    joint_delta: Regex,
    joint_side: Regex,
    base_rotate: Regex,
    all_joints: Regex,
    approach: Regex,
    drive: Regex,
    along_x: Regex,
    arm_vertical: Regex,
    rotate_arm: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| {
        let re = |p: String| Regex::new(&p).expect("mock grammar compiles");
        let joint = r"(?:right_)?j(?P<j>[0-6])";
        let sep = r"\s*,?\s*(?:and\s+)?";
        Rules {
            joint_delta: re(format!(r"^move {joint} by (?P<n>{NUM}) degrees?$")),
            joint_side: re(format!(
                r"^move {joint} to the (?P<side>left|right) by (?P<n>{NUM}) degrees?$"
            )),
            base_rotate: re(format!(r"^rotate the base (?:by )?(?P<n>{NUM}) degrees?$")),
            all_joints: re(format!(r"^move all joints to (?P<v>{NUM})$")),
            approach: re(format!(
                r"^move the arm to pos(?:i)?tion_x\s*=\s*(?P<x>{NUM}){sep}pos(?:i)?tion_y\s*=\s*(?P<y>{NUM}){sep}pos(?:i)?tion_z\s*=\s*(?P<z>{NUM})(?P<keep> while keeping the current orientation)?$"
            )),
            drive: re(format!(
                r"^move (?P<dir>forward|backward|back)(?: at a speed of (?P<v>{NUM})(?: ?m/s)?)?(?: turning at (?P<w>{NUM}) degrees per second)?(?: for (?P<t>{NUM}) seconds?)?$"
            )),
            along_x: re(format!(
                r"^move along (?:the )?x-axis with a speed of (?P<v>{NUM}) ?m/s(?: turning at (?P<w>{NUM}) degrees per second)? for (?P<t>{NUM}) seconds?$"
            )),
            arm_vertical: re(r"^move the arm (?P<dir>up|down)$".to_string()),
            rotate_arm: re(r"^rotate the arm$".to_string()),
        }
    })
}

fn num(caps: &Captures<'_>, name: &str) -> Option<f64> {
    caps.name(name).and_then(|m| m.as_str().parse().ok())
}

fn joint(caps: &Captures<'_>) -> Joint {
    let idx: usize = caps["j"].parse().expect("regex admits 0-6");
    Joint::ALL[idx]
}

/// Parses a prompt against the grammar. `None` means no rule matched.
pub fn parse_intent(prompt: &str, config: &MockConfig) -> Option<Intent> {
    let text = normalize(prompt);
    let text = text.trim_end_matches(['.', '!', '?']).trim();
    let r = rules();
    if let Some(c) = r.joint_delta.captures(text) {
        return Some(Intent::JointDelta {
            joint: joint(&c),
            degrees: num(&c, "n")?,
        });
    }
    if let Some(c) = r.joint_side.captures(text) {
        let n = num(&c, "n")?;
        let degrees = if &c["side"] == "left" { -n } else { n };
        return Some(Intent::JointAbsolute {
            joint: joint(&c),
            degrees,
        });
    }
    if let Some(c) = r.base_rotate.captures(text) {
        return Some(Intent::BaseRotate {
            degrees: num(&c, "n")?,
        });
    }
    if let Some(c) = r.all_joints.captures(text) {
        return Some(Intent::AllJoints {
            radians: num(&c, "v")?,
        });
    }
    if let Some(c) = r.approach.captures(text) {
        return Some(Intent::ApproachPose {
            x: num(&c, "x")?,
            y: num(&c, "y")?,
            z: num(&c, "z")?,
            keep_orientation: c.name("keep").is_some(),
        });
    }
    let drive = r
        .drive
        .captures(text)
        .map(|c| {
            let direction = if &c["dir"] == "forward" {
                DriveDirection::Forward
            } else {
                DriveDirection::Backward
            };
            (direction, c)
        })
        .or_else(|| {
            r.along_x
                .captures(text)
                .map(|c| (DriveDirection::AlongX, c))
        });
    if let Some((direction, c)) = drive {
        let turn_rate_deg = num(&c, "w");
        if turn_rate_deg.is_none() || config.allow_turn_rate {
            return Some(Intent::Drive {
                direction,
                speed: num(&c, "v"),
                duration: num(&c, "t"),
                turn_rate_deg,
            });
        }
    }
    if let Some(c) = r.arm_vertical.captures(text) {
        return Some(Intent::ArmVertical {
            up: &c["dir"] == "up",
        });
    }
    if r.rotate_arm.is_match(text) {
        return Some(Intent::RotateArm);
    }
    None
}

/// Resolves an intent against the current robot state.
pub fn resolve_intent(
    intent: &Intent,
    context: &RobotContext,
    config: &MockConfig,
) -> Result<RobotCommand, crate::model::ModelError> {
    let joints = context.joints.unwrap_or(JointVector::ZERO);
    let delta =
        |joint: Joint, d: f64| RobotCommand::Joints(joints.with(joint, joints.get(joint) + d));
    Ok(match *intent {
        Intent::JointDelta { joint, degrees } => delta(joint, deg_to_rad(degrees)),
        Intent::BaseRotate { degrees } => delta(Joint::J0, deg_to_rad(degrees)),
        Intent::JointAbsolute { joint, degrees } => {
            RobotCommand::Joints(joints.with(joint, deg_to_rad(degrees)))
        }
        Intent::AllJoints { radians } => RobotCommand::Joints(JointVector::new([radians; 7])?),
        Intent::ApproachPose {
            x,
            y,
            z,
            keep_orientation,
        } => {
            let orientation = match (keep_orientation, context.pose) {
                (true, Some(p)) => p.orientation,
                _ => Quaternion::IDENTITY,
            };
            RobotCommand::Pose(ArmPose::new([x, y, z], orientation)?)
        }
        Intent::Drive {
            direction,
            speed,
            duration,
            turn_rate_deg,
        } => {
            let sign = match direction {
                DriveDirection::Backward => -1.0,
                DriveDirection::Forward | DriveDirection::AlongX => 1.0,
            };
            let magnitude = match (speed, duration) {
                (Some(v), _) => v.abs(),
                (None, Some(_)) => config.implied_speed,
                (None, None) => config.qualitative_speed,
            };
            let v = match direction {
                DriveDirection::AlongX => speed.unwrap_or(config.qualitative_speed),
                _ => sign * magnitude,
            };
            RobotCommand::Drive(VelocityCommand::new(
                v,
                turn_rate_deg.map(deg_to_rad).unwrap_or(0.0),
                duration.unwrap_or(config.default_duration),
            )?)
        }
        Intent::ArmVertical { up } => delta(
            Joint::J1,
            if up {
                -config.arm_step
            } else {
                config.arm_step
            },
        ),
        Intent::RotateArm => delta(Joint::J6, config.rotate_step),
    })
}

pub const CLARIFICATION: &str = "I can't map that to a motion yet. How far should the robot move? \
     Give a magnitude, for example \"move right_j3 by 10 degrees\" or \
     \"move forward at a speed of 0.1 for 2 seconds\".";

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub config: MockConfig,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        MockBackend { config }
    }

    /// One-shot completion of a single prompt.
    pub fn complete_prompt(
        &self,
        prompt: &str,
        prompt_id: &str,
        context: &RobotContext,
    ) -> BackendReply {
        let Some(intent) = parse_intent(prompt, &self.config) else {
            return BackendReply::Clarification(CLARIFICATION.to_string());
        };
        match resolve_intent(&intent, context, &self.config) {
            Ok(command) => BackendReply::ToolCall {
                call: ToolCall {
                    call_id: format!("mock_{prompt_id}"),
                    source: Source::Mock,
                    prompt_id: prompt_id.to_string(),
                    command,
                },
                assistant_text: None,
            },
            Err(e) => BackendReply::Refusal {
                reason: super::RefusalReason::InvalidAction,
                detail: e.to_string(),
            },
        }
    }
}

impl Backend for MockBackend {
    fn source(&self) -> Source {
        Source::Mock
    }

    fn complete(
        &self,
        history: &[ChatMessage],
        prompt_id: &str,
        context: &RobotContext,
    ) -> Result<BackendReply, BackendError> {
        let prompt = history
            .iter()
            .rev()
            .find_map(|m| match m {
                ChatMessage::User { content } => Some(content.as_str()),
                _ => None,
            })
            .ok_or_else(|| BackendError::Protocol("no user message in history".into()))?;
        Ok(self.complete_prompt(prompt, prompt_id, context))
    }

    fn summarize(
        &self,
        history: &[ChatMessage],
        _context: &RobotContext,
    ) -> Result<String, BackendError> {
        let Some(ChatMessage::Tool { name, content, .. }) = history.last() else {
            return Err(BackendError::Protocol("no tool result to summarize".into()));
        };
        Ok(format!("{name} finished. Achieved state: {content}"))
    }
}

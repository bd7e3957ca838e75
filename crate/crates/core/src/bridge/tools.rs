//! Tool schemas exposed to language backends and the validated [`ToolCall`]
//! they produce.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{ArmPose, Joint, JointVector, Quaternion, VelocityCommand};
use crate::sim::Robot;

pub const MOVE_ARM_TO_JOINT_POSITIONS: &str = "move_arm_to_joint_positions";
pub const APPROACH_POSE: &str = "approach_pose";
pub const DRIVE: &str = "drive";

/// Raised when a backend produces a call that does not fit its schema.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid action: {0}")]
pub struct InvalidAction(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Number,
    /// Object mapping each of the seven joint names to a number.
    JointMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub unit: &'static str,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSchema {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Vec<ParamSpec>,
}

const fn num(name: &'static str, unit: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        ty: ParamType::Number,
        unit,
        required: true,
    }
}

impl ToolSchema {
    /// The three tools every backend sees.
    pub fn registry() -> Vec<ToolSchema> {
        vec![
            ToolSchema {
                name: MOVE_ARM_TO_JOINT_POSITIONS,
                description: "Move the 7-joint arm to absolute joint angles. \
                              Returns the joint angles actually reached.",
                parameters: vec![ParamSpec {
                    name: "joint_positions",
                    ty: ParamType::JointMap,
                    unit: "rad",
                    required: true,
                }],
            },
            ToolSchema {
                name: APPROACH_POSE,
                description: "Move the arm's end effector to a Cartesian position with the \
                              given orientation quaternion. Returns the pose actually reached.",
                parameters: vec![
                    num("position_x", "m"),
                    num("position_y", "m"),
                    num("position_z", "m"),
                    num("orientation_x", "1"),
                    num("orientation_y", "1"),
                    num("orientation_z", "1"),
                    num("orientation_w", "1"),
                ],
            },
            ToolSchema {
                name: DRIVE,
                description: "Drive the mobile base with forward speed v_x and yaw rate omega \
                              for a duration. Returns the odometry pose afterwards.",
                parameters: vec![
                    num("v_x", "m/s"),
                    num("omega", "rad/s"),
                    num("duration", "s"),
                ],
            },
        ]
    }

    pub fn find(name: &str) -> Option<ToolSchema> {
        ToolSchema::registry().into_iter().find(|t| t.name == name)
    }

    /// Chat-completions `tools` entry for this schema.
    pub fn to_function_json(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in &self.parameters {
            let prop = match p.ty {
                ParamType::Number => json!({
                    "type": "number",
                    "description": format!("unit: {}", p.unit),
                }),
                ParamType::JointMap => json!({
                    "type": "object",
                    "description": format!("joint name -> angle ({})", p.unit),
                    "properties": Joint::ALL
                        .iter()
                        .map(|j| (j.name().to_string(), json!({"type": "number"})))
                        .collect::<Map<_, _>>(),
                    "required": Joint::ALL.iter().map(|j| j.name()).collect::<Vec<_>>(),
                    "additionalProperties": false,
                }),
            };
            properties.insert(p.name.to_string(), prop);
            if p.required {
                required.push(p.name);
            }
        }
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                    "additionalProperties": false,
                },
            },
        })
    }
}

/// A typed robot command, the validated content of a tool call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobotCommand {
    Joints(JointVector),
    Pose(ArmPose),
    Drive(VelocityCommand),
}

impl RobotCommand {
    pub fn tool_name(&self) -> &'static str {
        match self {
            RobotCommand::Joints(_) => MOVE_ARM_TO_JOINT_POSITIONS,
            RobotCommand::Pose(_) => APPROACH_POSE,
            RobotCommand::Drive(_) => DRIVE,
        }
    }

    pub fn robot(&self) -> Robot {
        match self {
            RobotCommand::Joints(_) | RobotCommand::Pose(_) => Robot::Arm,
            RobotCommand::Drive(_) => Robot::Base,
        }
    }

    /// Arguments object in the tool's wire shape.
    pub fn arguments(&self) -> Value {
        match self {
            RobotCommand::Joints(j) => json!({ "joint_positions": j }),
            RobotCommand::Pose(p) => json!({
                "position_x": p.position_x,
                "position_y": p.position_y,
                "position_z": p.position_z,
                "orientation_x": p.orientation.x,
                "orientation_y": p.orientation.y,
                "orientation_z": p.orientation.z,
                "orientation_w": p.orientation.w,
            }),
            RobotCommand::Drive(v) => json!({
                "v_x": v.v_x,
                "omega": v.omega,
                "duration": v.duration,
            }),
        }
    }

    /// Validates raw arguments against the named tool's schema.
    pub fn from_arguments(tool: &str, arguments: &Value) -> Result<RobotCommand, InvalidAction> {
        let schema = ToolSchema::find(tool)
            .ok_or_else(|| InvalidAction(format!("unknown tool `{tool}`")))?;
        let args = arguments
            .as_object()
            .ok_or_else(|| InvalidAction("arguments must be a JSON object".into()))?;
        for key in args.keys() {
            if !schema.parameters.iter().any(|p| p.name == key) {
                return Err(InvalidAction(format!(
                    "unexpected argument `{key}` for {tool}"
                )));
            }
        }
        let number = |name: &str| -> Result<f64, InvalidAction> {
            let v = args
                .get(name)
                .ok_or_else(|| InvalidAction(format!("missing argument `{name}` for {tool}")))?;
            let f = v
                .as_f64()
                .ok_or_else(|| InvalidAction(format!("argument `{name}` must be a number")))?;
            if f.is_finite() {
                Ok(f)
            } else {
                Err(InvalidAction(format!("argument `{name}` is not finite")))
            }
        };
        let invalid = |e: crate::model::ModelError| InvalidAction(e.to_string());
        match schema.name {
            MOVE_ARM_TO_JOINT_POSITIONS => {
                let map = args
                    .get("joint_positions")
                    .ok_or_else(|| InvalidAction("missing argument `joint_positions`".into()))?
                    .as_object()
                    .ok_or_else(|| InvalidAction("`joint_positions` must be an object".into()))?;
                let mut pairs = Vec::with_capacity(map.len());
                for (name, v) in map {
                    let f = v
                        .as_f64()
                        .ok_or_else(|| InvalidAction(format!("joint `{name}` must be a number")))?;
                    pairs.push((name.as_str(), f));
                }
                Ok(RobotCommand::Joints(
                    JointVector::from_named(pairs).map_err(invalid)?,
                ))
            }
            APPROACH_POSE => {
                let q = Quaternion::new(
                    number("orientation_x")?,
                    number("orientation_y")?,
                    number("orientation_z")?,
                    number("orientation_w")?,
                );
                let pose = ArmPose::new(
                    [
                        number("position_x")?,
                        number("position_y")?,
                        number("position_z")?,
                    ],
                    q,
                )
                .map_err(invalid)?;
                Ok(RobotCommand::Pose(pose))
            }
            DRIVE => Ok(RobotCommand::Drive(
                VelocityCommand::new(number("v_x")?, number("omega")?, number("duration")?)
                    .map_err(invalid)?,
            )),
            other => unreachable!("registry tool `{other}` without validator"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Mock,
    Remote,
}

/// A validated tool call with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub call_id: String,
    pub source: Source,
    pub prompt_id: String,
    pub command: RobotCommand,
}

impl ToolCall {
    /// Builds a call from a raw tool name and arguments, validating them.
    pub fn from_raw(
        tool: &str,
        arguments: &Value,
        call_id: impl Into<String>,
        source: Source,
        prompt_id: impl Into<String>,
    ) -> Result<ToolCall, InvalidAction> {
        Ok(ToolCall {
            call_id: call_id.into(),
            source,
            prompt_id: prompt_id.into(),
            command: RobotCommand::from_arguments(tool, arguments)?,
        })
    }

    pub fn tool(&self) -> &'static str {
        self.command.tool_name()
    }

    pub fn with_command(&self, command: RobotCommand) -> ToolCall {
        ToolCall {
            command,
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawToolCall {
    tool: String,
    arguments: Value,
    call_id: String,
    source: Source,
    prompt_id: String,
}

impl Serialize for ToolCall {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawToolCall {
            tool: self.tool().to_string(),
            arguments: self.command.arguments(),
            call_id: self.call_id.clone(),
            source: self.source,
            prompt_id: self.prompt_id.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ToolCall {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawToolCall::deserialize(deserializer)?;
        ToolCall::from_raw(
            &raw.tool,
            &raw.arguments,
            raw.call_id,
            raw.source,
            raw.prompt_id,
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_exactly_three_tools() {
        let names: Vec<_> = ToolSchema::registry().iter().map(|t| t.name).collect();
        assert_eq!(names, [MOVE_ARM_TO_JOINT_POSITIONS, APPROACH_POSE, DRIVE]);
        let f = ToolSchema::find(DRIVE).unwrap().to_function_json();
        assert_eq!(
            f["function"]["parameters"]["required"],
            json!(["v_x", "omega", "duration"])
        );
    }

    #[test]
    fn integer_arguments_accepted() {
        let args: Value = serde_json::from_str(
            r#"{"joint_positions":{"right_j0":0,"right_j1":0,"right_j2":0,"right_j3":0,"right_j4":0,"right_j5":0,"right_j6":0}}"#,
        )
        .unwrap();
        let cmd = RobotCommand::from_arguments(MOVE_ARM_TO_JOINT_POSITIONS, &args).unwrap();
        assert_eq!(cmd, RobotCommand::Joints(JointVector::ZERO));
    }

    #[test]
    fn schema_violations() {
        let cases = [
            (DRIVE, json!({"v_x": 1.0, "omega": 0.0})),
            (DRIVE, json!({"v_x": 1.0, "omega": 0.0, "duration": -1.0})),
            (DRIVE, json!({"v_x": "1", "omega": 0.0, "duration": 1.0})),
            (
                DRIVE,
                json!({"v_x": 1.0, "omega": 0.0, "duration": 1.0, "extra": 2}),
            ),
            (
                APPROACH_POSE,
                json!({"position_x": 0, "position_y": 0, "position_z": 0,
                "orientation_x": 0, "orientation_y": 0, "orientation_z": 0, "orientation_w": 2}),
            ),
            (
                MOVE_ARM_TO_JOINT_POSITIONS,
                json!({"joint_positions": {"right_j0": 0}}),
            ),
            ("fly", json!({})),
            (DRIVE, json!([1, 2, 3])),
        ];
        for (tool, args) in cases {
            assert!(
                RobotCommand::from_arguments(tool, &args).is_err(),
                "{tool} {args}"
            );
        }
    }

    #[test]
    fn tool_call_json_shape() {
        let call = ToolCall::from_raw(
            DRIVE,
            &json!({"v_x": 0.05, "omega": 0.0, "duration": 5.0}),
            "call_1",
            Source::Mock,
            "p3",
        )
        .unwrap();
        let v = serde_json::to_value(&call).unwrap();
        assert_eq!(v["tool"], "drive");
        assert_eq!(v["source"], "mock");
        assert_eq!(v["arguments"]["v_x"], json!(0.05));
        let back: ToolCall = serde_json::from_value(v).unwrap();
        assert_eq!(back, call);
    }
}

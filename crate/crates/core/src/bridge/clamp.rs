use serde::{Deserialize, Serialize};

use super::granularity::GranularityLabel;
use super::tools::{RobotCommand, ToolCall};
use super::RobotContext;
use crate::model::{ArmPose, VelocityCommand};

/// Per-command limits applied to calls answering qualitative prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyBounds {
    /// rad, per joint, relative to the current angle
    pub max_joint_delta: f64,
    /// m, straight-line end-effector travel
    pub max_translation: f64,
    /// m/s
    pub max_speed: f64,
    /// s
    pub max_duration: f64,
}

impl Default for SafetyBounds {
    fn default() -> Self {
        SafetyBounds {
            max_joint_delta: 0.2,
            max_translation: 0.1,
            max_speed: 0.1,
            max_duration: 2.0,
        }
    }
}

/// Returns `target` moved toward `from` until `|target − from| ≤ bound`
/// holds in floating point, not just in exact arithmetic.
fn within(from: f64, target: f64, bound: f64) -> f64 {
    let mut t = from + (target - from).clamp(-bound, bound);
    while (t - from).abs() > bound {
        t = if t > from { t.next_down() } else { t.next_up() };
    }
    t
}

/// Shrinks calls answering qualitative prompts to the bounds; quantitative
/// calls pass through untouched.
pub fn clamp_qualitative(
    call: &ToolCall,
    label: &GranularityLabel,
    context: &RobotContext,
    bounds: &SafetyBounds,
) -> ToolCall {
    if !label.is_qualitative() {
        return call.clone();
    }
    let command = match call.command {
        RobotCommand::Joints(target) => match context.joints {
            Some(current) => {
                let mut out = target;
                for (joint, goal) in target.iter() {
                    out = out.with(
                        joint,
                        within(current.get(joint), goal, bounds.max_joint_delta),
                    );
                }
                RobotCommand::Joints(out)
            }
            None => call.command,
        },
        RobotCommand::Pose(target) => match context.pose {
            Some(current) => RobotCommand::Pose(limit_translation(&current, &target, bounds)),
            None => call.command,
        },
        RobotCommand::Drive(v) => RobotCommand::Drive(VelocityCommand {
            v_x: v.v_x.clamp(-bounds.max_speed, bounds.max_speed),
            omega: v.omega,
            duration: v.duration.min(bounds.max_duration),
        }),
    };
    call.with_command(command)
}

fn limit_translation(current: &ArmPose, target: &ArmPose, bounds: &SafetyBounds) -> ArmPose {
    let distance = current.distance_to(target);
    if distance <= bounds.max_translation {
        return *target;
    }
    let [x, y, z] = current.position();
    let [tx, ty, tz] = target.position();
    let mut k = bounds.max_translation / distance;
    loop {
        let p = ArmPose {
            position_x: x + (tx - x) * k,
            position_y: y + (ty - y) * k,
            position_z: z + (tz - z) * k,
            orientation: target.orientation,
        };
        if current.distance_to(&p) <= bounds.max_translation {
            return p;
        }
        k = k.next_down();
    }
}

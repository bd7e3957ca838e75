//! Seven-joint arm with rate-limited joint motion and direct end-effector
//! pose tracking. There is no kinematic coupling between the two modes:
//! joint commands leave the pose as is and pose commands leave joints as is.

use std::collections::VecDeque;

use serde::Serialize;

use crate::model::{ArmPose, JointLimits, JointVector};

/// Clamps every joint into its `[min, max]` range.
pub fn clamp_joints(target: &JointVector, limits: &JointLimits) -> JointVector {
    let mut out = *target;
    for (joint, angle) in target.iter() {
        let (min, max) = limits.get(joint);
        out = out.with(joint, angle.clamp(min, max));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmState {
    pub joints: JointVector,
    pub pose: ArmPose,
    pub moving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ArmCommand {
    Joints(JointVector),
    Pose(ArmPose),
}

/// What finished during a step, so the caller knows which topic to publish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ArmCompletion {
    Joints,
    Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ArmSim {
    joints: JointVector,
    pose: ArmPose,
    active: Option<ArmCommand>,
    queue: VecDeque<ArmCommand>,
}

impl ArmSim {
    pub fn new(joints: JointVector, pose: ArmPose) -> Self {
        ArmSim {
            joints,
            pose,
            active: None,
            queue: VecDeque::new(),
        }
    }

    pub fn state(&self) -> ArmState {
        ArmState {
            joints: self.joints,
            pose: self.pose,
            moving: !self.is_idle(),
        }
    }

    pub fn enqueue(&mut self, cmd: ArmCommand) {
        self.queue.push_back(cmd);
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.queue.is_empty()
    }

    pub fn halt(&mut self) {
        self.active = None;
        self.queue.clear();
    }

    pub fn reset(&mut self, joints: JointVector, pose: ArmPose) {
        self.halt();
        self.joints = joints;
        self.pose = pose;
    }

    /// Advances one tick with the given per-tick joint step (rad) and pose
    /// step (m).
    pub fn step(
        &mut self,
        limits: &JointLimits,
        joint_step: f64,
        pose_step: f64,
    ) -> Option<ArmCompletion> {
        if self.active.is_none() {
            self.active = Some(match self.queue.pop_front()? {
                ArmCommand::Joints(target) => ArmCommand::Joints(clamp_joints(&target, limits)),
                pose => pose,
            });
        }
        match self.active.expect("active arm command") {
            ArmCommand::Joints(target) => {
                let mut next = self.joints;
                for (joint, current) in self.joints.iter() {
                    let goal = target.get(joint);
                    let delta = goal - current;
                    let moved = if delta.abs() <= joint_step {
                        goal
                    } else {
                        current + joint_step.copysign(delta)
                    };
                    next = next.with(joint, moved);
                }
                self.joints = next;
                if self.joints == target {
                    self.active = None;
                    return Some(ArmCompletion::Joints);
                }
                None
            }
            ArmCommand::Pose(target) => {
                let remaining = self.pose.distance_to(&target);
                if remaining <= pose_step {
                    self.pose = target;
                    self.active = None;
                    return Some(ArmCompletion::Pose);
                }
                let k = pose_step / remaining;
                let [x, y, z] = self.pose.position();
                let [tx, ty, tz] = target.position();
                self.pose.position_x = x + (tx - x) * k;
                self.pose.position_y = y + (ty - y) * k;
                self.pose.position_z = z + (tz - z) * k;
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Quaternion};
    use std::f64::consts::PI;

    fn home_pose() -> ArmPose {
        ArmPose::new([0.4, 0.1, 0.3], Quaternion::IDENTITY).unwrap()
    }

    #[test]
    fn clamp_examples() {
        let limits = JointLimits::default();
        let t = JointVector::ZERO.with(Joint::J0, -PI);
        assert_eq!(clamp_joints(&t, &limits).get(Joint::J0), -3.0503);
        let t = JointVector::ZERO.with(Joint::J0, 1.5708);
        assert_eq!(clamp_joints(&t, &limits).get(Joint::J0), 1.5708);
    }

    #[test]
    fn joint_motion_is_rate_limited_and_exact() {
        let limits = JointLimits::default();
        let mut arm = ArmSim::new(JointVector::ZERO, home_pose());
        let target = JointVector::ZERO.with(Joint::J0, 1.5708);
        arm.enqueue(ArmCommand::Joints(target));
        let step = 0.5 / 100.0;
        let mut ticks = 0u32;
        let mut last = 0.0;
        loop {
            ticks += 1;
            let done = arm.step(&limits, step, 0.002);
            let j0 = arm.joints.get(Joint::J0);
            assert!(j0 - last <= step + 1e-15);
            last = j0;
            if done.is_some() {
                break;
            }
        }
        assert_eq!(arm.joints, target);
        // 1.5708 / 0.005 = 314.16 → 315 ticks ≈ 3.15 s at 100 Hz.
        assert_eq!(ticks, 315);
    }

    #[test]
    fn same_target_completes_in_one_step() {
        let limits = JointLimits::default();
        let start = JointVector::ZERO.with(Joint::J2, 0.3);
        let mut arm = ArmSim::new(start, home_pose());
        arm.enqueue(ArmCommand::Joints(start));
        assert_eq!(arm.step(&limits, 0.005, 0.002), Some(ArmCompletion::Joints));
        assert_eq!(arm.joints, start);
    }

    #[test]
    fn pose_motion_lands_exactly() {
        let limits = JointLimits::default();
        let mut arm = ArmSim::new(JointVector::ZERO, home_pose());
        let target = ArmPose::new([0.46, 0.15, 0.5], Quaternion::IDENTITY).unwrap();
        arm.enqueue(ArmCommand::Pose(target));
        let mut n = 0;
        while arm.step(&limits, 0.005, 0.002).is_none() {
            n += 1;
            assert!(n < 10_000);
        }
        assert_eq!(arm.pose, target);
        assert_eq!(arm.joints, JointVector::ZERO);
    }
}

//! Deterministic tick-driven simulators for the arm and the mobile base.
//!
//! [`SimWorld`] owns both robots, consumes the command topics and publishes
//! the state topics. Nothing moves and nothing is published outside
//! [`SimWorld::tick`]. The e-stop is the one input that may come from any
//! thread, through a cloned [`EStop`] handle.

mod arm;
mod base;

pub use arm::{clamp_joints, ArmState};
pub use base::{integrate_unicycle, BaseState};

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bus::{advertise_gateway_topics, topics, Bus, BusError, Subscription, TopicName};
use crate::model::{
    ArmPose, BasePose2D, JointLimits, JointVector, ModelError, Quaternion, VelocityCommand,
};
use arm::{ArmCommand, ArmCompletion, ArmSim};
use base::BaseSim;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("e-stop engaged; command rejected")]
    EStopEngaged,
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("target position is {distance:.4} m from the base, outside the {radius} m workspace")]
    OutOfWorkspace { distance: f64, radius: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("robot `{0}` is not enabled")]
    RobotUnavailable(Robot),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Robot {
    Arm,
    Base,
}

impl std::fmt::Display for Robot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Robot::Arm => "arm",
            Robot::Base => "base",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tick_hz: u32,
    /// Per-joint speed limit in rad/s.
    pub joint_speed_max: f64,
    /// End-effector translation speed in pose mode, m/s.
    pub pose_speed_max: f64,
    pub workspace_radius: f64,
    pub joint_limits: JointLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_hz: 100,
            joint_speed_max: 0.5,
            pose_speed_max: 0.2,
            workspace_radius: 1.26,
            joint_limits: JointLimits::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("joint_speed_max", self.joint_speed_max),
            ("pose_speed_max", self.pose_speed_max),
            ("workspace_radius", self.workspace_radius),
        ];
        if self.tick_hz == 0 {
            return Err(SimError::InvalidCommand("tick_hz must be positive".into()));
        }
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidCommand(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn tick_seconds(&self) -> f64 {
        1.0 / f64::from(self.tick_hz)
    }
}

/// Joint angles at the start of the recorded teleoperation session.
pub fn default_arm_joints() -> JointVector {
    JointVector::new([
        -0.06116481951213526,
        1.1595648969929577,
        0.15735909936869152,
        0.42209712180004466,
        -0.10154154167068796,
        -0.4352330389389847,
        -0.05516563308485978,
    ])
    .expect("finite")
}

/// End-effector pose at the start of the recorded pick-and-place session.
pub fn default_arm_pose() -> ArmPose {
    ArmPose::new(
        [0.4578401920064491, 0.14787791310299833, 0.01984605114117996],
        Quaternion::new(
            -0.01205243584035103,
            0.9998321327330238,
            -0.005691827679074961,
            0.012571723927897335,
        ),
    )
    .expect("near-unit quaternion")
}

/// Shared, thread-safe emergency stop.
#[derive(Clone)]
pub struct EStop {
    flag: Arc<AtomicBool>,
    // Serializes flag transitions with their announcements.
    lock: Arc<Mutex<()>>,
    bus: Bus,
    topic: TopicName,
}

impl std::fmt::Debug for EStop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EStop")
            .field("engaged", &self.is_engaged())
            .finish()
    }
}

impl EStop {
    fn new(bus: Bus) -> Self {
        EStop {
            flag: Arc::new(AtomicBool::new(false)),
            lock: Arc::new(Mutex::new(())),
            bus,
            topic: TopicName::new(topics::SAFETY_ESTOP).expect("valid topic"),
        }
    }

    pub fn is_engaged(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }

    /// Engages the stop. Returns true if it was not already engaged.
    pub fn engage(&self) -> bool {
        let _guard = self.lock.lock().unwrap();
        let changed = !self.flag.swap(true, Ordering::SeqCst);
        if changed {
            self.announce(true);
        }
        changed
    }

    /// Releases the stop. Returns true if it was engaged.
    pub fn reset(&self) -> bool {
        let _guard = self.lock.lock().unwrap();
        let changed = self.flag.swap(false, Ordering::SeqCst);
        if changed {
            self.announce(false);
        }
        changed
    }

    fn announce(&self, engaged: bool) {
        if let Err(e) = self.bus.publish(&self.topic, json!({ "engaged": engaged })) {
            log::error!("could not publish e-stop state: {e}");
        }
    }
}

/// Point-in-time copy of every simulated robot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSnapshot {
    pub arm: Option<ArmState>,
    pub base: Option<BaseState>,
    pub estop: bool,
    pub ticks: u64,
}

/// A command pulled off the bus that the simulator refused.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub topic: TopicName,
    pub reason: String,
}

struct Inputs {
    joint_cmd: Option<Subscription>,
    pose_cmd: Option<Subscription>,
    cmd_vel: Option<Subscription>,
    estop: Subscription,
}

struct Outputs {
    joint_states: TopicName,
    pose: TopicName,
    odom: TopicName,
}

pub struct SimWorld {
    config: SimConfig,
    bus: Bus,
    estop: EStop,
    arm: Option<ArmSim>,
    base: Option<BaseSim>,
    inputs: Inputs,
    outputs: Outputs,
    ticks: u64,
    arm_dirty: bool,
    base_dirty: bool,
    rejections: Vec<Rejection>,
}

impl std::fmt::Debug for SimWorld {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimWorld")
            .field("snapshot", &self.snapshot())
            .finish()
    }
}

fn topic(name: &str) -> TopicName {
    TopicName::new(name).expect("gateway topic names are valid")
}

impl SimWorld {
    /// Creates a world with the default arm and base start states.
    pub fn new(config: SimConfig, bus: Bus, arm: bool, base: bool) -> Result<Self, SimError> {
        config.validate()?;
        advertise_gateway_topics(&bus)?;
        let sub = |enabled: bool, name: &str| -> Result<Option<Subscription>, SimError> {
            Ok(if enabled {
                Some(bus.subscribe(&topic(name))?)
            } else {
                None
            })
        };
        let inputs = Inputs {
            joint_cmd: sub(arm, topics::ARM_JOINT_COMMAND)?,
            pose_cmd: sub(arm, topics::ARM_POSE_COMMAND)?,
            cmd_vel: sub(base, topics::BASE_CMD_VEL)?,
            estop: bus.subscribe(&topic(topics::SAFETY_ESTOP))?,
        };
        let world = SimWorld {
            estop: EStop::new(bus.clone()),
            arm: arm.then(|| ArmSim::new(default_arm_joints(), default_arm_pose())),
            base: base.then(|| BaseSim::new(BasePose2D::ORIGIN)),
            inputs,
            outputs: Outputs {
                joint_states: topic(topics::ARM_JOINT_STATES),
                pose: topic(topics::ARM_POSE),
                odom: topic(topics::BASE_ODOM),
            },
            config,
            bus,
            ticks: 0,
            arm_dirty: arm,
            base_dirty: base,
            rejections: Vec::new(),
        };
        Ok(world)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn estop(&self) -> EStop {
        self.estop.clone()
    }

    pub fn engage_estop(&mut self) -> bool {
        let changed = self.estop.engage();
        self.halt_all();
        changed
    }

    pub fn reset_estop(&mut self) -> bool {
        // Drop the stale engage notification so it cannot re-engage us.
        let _ = self.inputs.estop.drain();
        self.estop.reset()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Simulated time in milliseconds.
    pub fn sim_time_ms(&self) -> u64 {
        self.ticks * 1000 / u64::from(self.config.tick_hz)
    }

    pub fn has_arm(&self) -> bool {
        self.arm.is_some()
    }

    pub fn has_base(&self) -> bool {
        self.base.is_some()
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            arm: self.arm.as_ref().map(ArmSim::state),
            base: self.base.as_ref().map(|b| b.state(self.config.tick_hz)),
            estop: self.estop.is_engaged(),
            ticks: self.ticks,
        }
    }

    pub fn arm_state(&self) -> Option<ArmState> {
        self.arm.as_ref().map(ArmSim::state)
    }

    pub fn base_state(&self) -> Option<BaseState> {
        self.base.as_ref().map(|b| b.state(self.config.tick_hz))
    }

    fn ensure_running(&self) -> Result<(), SimError> {
        if self.estop.is_engaged() {
            Err(SimError::EStopEngaged)
        } else {
            Ok(())
        }
    }

    /// Validates a joint target and publishes it on `/arm/joint_command`.
    pub fn command_joints(&mut self, target: &JointVector) -> Result<(), SimError> {
        self.ensure_running()?;
        if self.arm.is_none() {
            return Err(SimError::RobotUnavailable(Robot::Arm));
        }
        JointVector::new(*target.as_array())?;
        self.bus.publish(
            &topic(topics::ARM_JOINT_COMMAND),
            serde_json::to_value(target).expect("serialize"),
        )?;
        Ok(())
    }

    /// Validates a pose target against the workspace and publishes it on
    /// `/arm/pose_command`.
    pub fn command_pose(&mut self, target: &ArmPose) -> Result<(), SimError> {
        self.ensure_running()?;
        if self.arm.is_none() {
            return Err(SimError::RobotUnavailable(Robot::Arm));
        }
        self.check_workspace(target)?;
        self.bus.publish(
            &topic(topics::ARM_POSE_COMMAND),
            serde_json::to_value(target).expect("serialize"),
        )?;
        Ok(())
    }

    pub fn check_workspace(&self, target: &ArmPose) -> Result<(), SimError> {
        let [x, y, z] = target.position();
        let distance = (x * x + y * y + z * z).sqrt();
        if distance > self.config.workspace_radius {
            return Err(SimError::OutOfWorkspace {
                distance,
                radius: self.config.workspace_radius,
            });
        }
        Ok(())
    }

    /// Publishes a drive command on `/base/cmd_vel`.
    pub fn command_velocity(&mut self, cmd: &VelocityCommand) -> Result<(), SimError> {
        self.ensure_running()?;
        if self.base.is_none() {
            return Err(SimError::RobotUnavailable(Robot::Base));
        }
        VelocityCommand::new(cmd.v_x, cmd.omega, cmd.duration)?;
        self.bus.publish(
            &topic(topics::BASE_CMD_VEL),
            serde_json::to_value(cmd).expect("serialize"),
        )?;
        Ok(())
    }

    /// Sets the arm state directly, dropping any motion in progress.
    pub fn reset_arm(&mut self, joints: JointVector, pose: ArmPose) -> Result<(), SimError> {
        self.check_workspace(&pose)?;
        let arm = self
            .arm
            .as_mut()
            .ok_or(SimError::RobotUnavailable(Robot::Arm))?;
        let joints = clamp_joints(&joints, &self.config.joint_limits);
        arm.reset(joints, pose);
        self.arm_dirty = true;
        Ok(())
    }

    pub fn reset_base(&mut self, pose: BasePose2D) -> Result<(), SimError> {
        let base = self
            .base
            .as_mut()
            .ok_or(SimError::RobotUnavailable(Robot::Base))?;
        base.reset(pose);
        self.base_dirty = true;
        Ok(())
    }

    /// Commands rejected while draining the bus since the last call.
    pub fn take_rejections(&mut self) -> Vec<Rejection> {
        std::mem::take(&mut self.rejections)
    }

    fn halt_all(&mut self) {
        if let Some(arm) = self.arm.as_mut() {
            arm.halt();
        }
        if let Some(base) = self.base.as_mut() {
            base.halt();
        }
    }

    fn sync_estop(&mut self) {
        let _guard = self.estop.lock.clone();
        let _guard = _guard.lock().unwrap();
        let msgs = match self.inputs.estop.drain() {
            Ok(msgs) => msgs,
            Err(e) => {
                log::error!("e-stop subscription lost: {e}");
                Vec::new()
            }
        };
        if let Some(last) = msgs.last() {
            let engaged = last.payload["engaged"].as_bool().unwrap_or(true);
            self.estop.flag.store(engaged, Ordering::SeqCst);
        }
        if self.estop.is_engaged() {
            self.halt_all();
        }
    }

    /// Moves queued bus commands into the robots' FIFO queues.
    fn pump(&mut self) {
        let estopped = self.estop.is_engaged();
        let mut rejected = Vec::new();
        if let (Some(arm), Some(joint_cmd), Some(pose_cmd)) = (
            self.arm.as_mut(),
            self.inputs.joint_cmd.as_ref(),
            self.inputs.pose_cmd.as_ref(),
        ) {
            for msg in joint_cmd.drain().unwrap_or_default() {
                match parse::<JointVector>(&msg.payload, estopped) {
                    Ok(target) => arm.enqueue(ArmCommand::Joints(target)),
                    Err(reason) => rejected.push(Rejection {
                        topic: msg.topic,
                        reason,
                    }),
                }
            }
            for msg in pose_cmd.drain().unwrap_or_default() {
                let parsed = parse::<ArmPose>(&msg.payload, estopped).and_then(|pose| {
                    let [x, y, z] = pose.position();
                    if (x * x + y * y + z * z).sqrt() > self.config.workspace_radius {
                        Err("target outside workspace".to_string())
                    } else {
                        Ok(pose)
                    }
                });
                match parsed {
                    Ok(pose) => arm.enqueue(ArmCommand::Pose(pose)),
                    Err(reason) => rejected.push(Rejection {
                        topic: msg.topic,
                        reason,
                    }),
                }
            }
        }
        if let (Some(base), Some(cmd_vel)) = (self.base.as_mut(), self.inputs.cmd_vel.as_ref()) {
            for msg in cmd_vel.drain().unwrap_or_default() {
                match parse::<VelocityCommand>(&msg.payload, estopped) {
                    Ok(cmd) => base.enqueue(cmd),
                    Err(reason) => rejected.push(Rejection {
                        topic: msg.topic,
                        reason,
                    }),
                }
            }
        }
        for r in &rejected {
            log::warn!("sim rejected command on {}: {}", r.topic, r.reason);
        }
        self.rejections.extend(rejected);
    }

    /// True when no robot is moving and no command is waiting.
    pub fn is_idle(&mut self) -> bool {
        self.sync_estop();
        self.pump();
        self.arm.as_ref().is_none_or(ArmSim::is_idle)
            && self.base.as_ref().is_none_or(BaseSim::is_idle)
    }

    /// Advances the simulation by `n` ticks.
    pub fn tick(&mut self, n: u64) {
        for _ in 0..n {
            self.step();
        }
    }

    /// Advances one tick. Returns false when the e-stop held the robots
    /// still during this tick.
    pub fn step(&mut self) -> bool {
        self.ticks += 1;
        self.sync_estop();
        self.pump();
        let moving = !self.estop.is_engaged();
        if moving {
            let hz = f64::from(self.config.tick_hz);
            let joint_step = self.config.joint_speed_max / hz;
            let pose_step = self.config.pose_speed_max / hz;
            if let Some(arm) = self.arm.as_mut() {
                match arm.step(&self.config.joint_limits, joint_step, pose_step) {
                    Some(ArmCompletion::Joints) | Some(ArmCompletion::Pose) => {
                        self.arm_dirty = true
                    }
                    None => {}
                }
            }
            if let Some(base) = self.base.as_mut() {
                if base.step(self.config.tick_hz) {
                    self.base_dirty = true;
                }
            }
        }
        self.publish_dirty();
        moving
    }

    fn publish_dirty(&mut self) {
        if self.arm_dirty {
            if let Some(state) = self.arm_state() {
                self.publish(
                    &self.outputs.joint_states,
                    serde_json::to_value(state.joints),
                );
                self.publish(&self.outputs.pose, serde_json::to_value(state.pose));
            }
            self.arm_dirty = false;
        }
        if self.base_dirty {
            if let Some(state) = self.base_state() {
                self.publish(&self.outputs.odom, Ok(odom_payload(&state.pose)));
            }
            self.base_dirty = false;
        }
    }

    fn publish(&self, topic: &TopicName, payload: serde_json::Result<Value>) {
        let result = payload
            .map_err(|e| e.to_string())
            .and_then(|p| self.bus.publish(topic, p).map_err(|e| e.to_string()));
        if let Err(e) = result {
            log::error!("state publish on {topic} failed: {e}");
        }
    }

    /// Ticks until idle or until `max_ticks` have elapsed. Stops early if
    /// the e-stop engages. Returns the number of ticks in which the robots
    /// actually moved, which is what a replay has to re-run.
    pub fn run_until_idle(&mut self, max_ticks: u64) -> u64 {
        let mut n = 0;
        while n < max_ticks && !self.estop.is_engaged() && !self.is_idle() {
            if self.step() {
                n += 1;
            } else {
                break;
            }
        }
        n
    }
}

/// Odometry payload: planar pose plus heading in degrees for display.
pub fn odom_payload(pose: &BasePose2D) -> Value {
    json!({
        "x": pose.x,
        "y": pose.y,
        "theta": pose.theta,
        "theta_deg": pose.theta_deg(),
    })
}

fn parse<T: serde::de::DeserializeOwned>(payload: &Value, estopped: bool) -> Result<T, String> {
    if estopped {
        return Err(SimError::EStopEngaged.to_string());
    }
    serde_json::from_value(payload.clone()).map_err(|e| e.to_string())
}

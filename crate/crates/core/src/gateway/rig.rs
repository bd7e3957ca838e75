use std::time::{Duration, Instant};

use crate::bridge::{MotionOutcome, RobotCommand, RobotContext, RobotInterface};
use crate::gateway::{BaseOdom, RobotState};
use crate::sim::{Robot, SimError, SimWorld};

/// How ticks map to real time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Ticks run back to back.
    Virtual,
    /// One tick per `1/tick_hz` seconds of wall time.
    Wall,
}

/// The simulators behind a gateway, driven as a [`RobotInterface`].
#[derive(Debug)]
pub struct Rig {
    world: SimWorld,
    clock: Clock,
    max_drive_seconds: f64,
}

impl Rig {
    pub fn new(world: SimWorld, clock: Clock, max_drive_seconds: f64) -> Self {
        Rig {
            world,
            clock,
            max_drive_seconds,
        }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut SimWorld {
        &mut self.world
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    fn period(&self) -> Duration {
        Duration::from_secs_f64(self.world.config().tick_seconds())
    }

    /// Runs exactly `n` motion ticks, as recorded in a trace.
    pub fn run_ticks(&mut self, n: u64) {
        let mut done = 0;
        while done < n {
            if self.world.step() {
                done += 1;
            } else {
                break;
            }
        }
    }

    pub fn run_until_idle(&mut self) -> u64 {
        self.world.run_until_idle(u64::MAX)
    }
}

impl RobotInterface for Rig {
    fn context(&self) -> RobotContext {
        let arm = self.world.arm_state();
        RobotContext {
            joints: arm.map(|a| a.joints),
            pose: arm.map(|a| a.pose),
            base: self.world.base_state().map(|b| b.pose),
        }
    }

    fn now_ms(&self) -> u64 {
        self.world.sim_time_ms()
    }

    fn estop_engaged(&self) -> bool {
        self.world.estop().is_engaged()
    }

    fn submit(&mut self, command: &RobotCommand) -> Result<(), SimError> {
        match command {
            RobotCommand::Joints(j) => self.world.command_joints(j),
            RobotCommand::Pose(p) => self.world.command_pose(p),
            RobotCommand::Drive(v) => {
                if v.duration > self.max_drive_seconds {
                    return Err(SimError::InvalidCommand(format!(
                        "drive of {} s exceeds the {} s limit",
                        v.duration, self.max_drive_seconds
                    )));
                }
                self.world.command_velocity(v)
            }
        }
    }

    fn run_to_completion(&mut self) -> MotionOutcome {
        let ticks = match self.clock {
            Clock::Virtual => self.world.run_until_idle(u64::MAX),
            Clock::Wall => {
                let period = self.period();
                let start = Instant::now();
                let mut n = 0u64;
                while !self.world.estop().is_engaged() && !self.world.is_idle() {
                    let due = start + period.mul_f64((n + 1) as f64);
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        std::thread::sleep(wait);
                    }
                    if !self.world.step() {
                        break;
                    }
                    n += 1;
                }
                n
            }
        };
        MotionOutcome {
            ticks,
            halted: self.world.estop().is_engaged(),
        }
    }

    fn state_of(&self, robot: Robot) -> Option<RobotState> {
        match robot {
            Robot::Arm => self.world.arm_state().map(|a| RobotState::Arm {
                joints: a.joints,
                pose: a.pose,
            }),
            Robot::Base => self
                .world
                .base_state()
                .map(|b| RobotState::Base(BaseOdom::from(b.pose))),
        }
    }
}

//! Differential-drive base modeled as a unicycle.

use std::collections::VecDeque;

use serde::Serialize;

use crate::model::{wrap_angle, BasePose2D, VelocityCommand};

/// Closed-form unicycle integration of a constant `(v, ω)` command held for
/// `cmd.duration` seconds.
///
/// The curved case uses the chord form `v·t·sinc(ωt/2)` along the mean
/// heading, which equals `(v/ω)(sin θ' − sin θ)` etc. without the
/// cancellation at small ω.
pub fn integrate_unicycle(start: BasePose2D, cmd: &VelocityCommand) -> BasePose2D {
    let t = cmd.duration;
    let (v, w) = (cmd.v_x, cmd.omega);
    if v == 0.0 && w == 0.0 {
        return start;
    }
    if w == 0.0 {
        return BasePose2D {
            x: start.x + v * t * start.theta.cos(),
            y: start.y + v * t * start.theta.sin(),
            theta: start.theta,
        };
    }
    let half = 0.5 * w * t;
    let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
    let chord = v * t * sinc;
    let mid = start.theta + half;
    BasePose2D {
        x: start.x + chord * mid.cos(),
        y: start.y + chord * mid.sin(),
        theta: wrap_angle(start.theta + w * t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaseState {
    pub pose: BasePose2D,
    pub active_command: Option<VelocityCommand>,
    pub command_elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveDrive {
    cmd: VelocityCommand,
    start: BasePose2D,
    ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BaseSim {
    pose: BasePose2D,
    active: Option<ActiveDrive>,
    queue: VecDeque<VelocityCommand>,
}

impl BaseSim {
    pub fn new(pose: BasePose2D) -> Self {
        BaseSim {
            pose,
            active: None,
            queue: VecDeque::new(),
        }
    }

    pub fn state(&self, tick_hz: u32) -> BaseState {
        BaseState {
            pose: self.pose,
            active_command: self.active.as_ref().map(|a| a.cmd),
            command_elapsed: self
                .active
                .as_ref()
                .map(|a| elapsed(a, tick_hz))
                .unwrap_or(0.0),
        }
    }

    pub fn enqueue(&mut self, cmd: VelocityCommand) {
        self.queue.push_back(cmd);
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.queue.is_empty()
    }

    pub fn halt(&mut self) {
        self.active = None;
        self.queue.clear();
    }

    pub fn reset(&mut self, pose: BasePose2D) {
        self.halt();
        self.pose = pose;
    }

    /// Advances one tick. Returns true when a command completed this tick.
    pub fn step(&mut self, tick_hz: u32) -> bool {
        if self.active.is_none() {
            match self.queue.pop_front() {
                Some(cmd) => {
                    self.active = Some(ActiveDrive {
                        cmd,
                        start: self.pose,
                        ticks: 0,
                    })
                }
                None => return false,
            }
        }
        let active = self.active.as_mut().expect("active drive");
        if active.cmd.duration > 0.0 {
            active.ticks += 1;
        }
        let t = elapsed(active, tick_hz);
        let partial = VelocityCommand {
            duration: t,
            ..active.cmd
        };
        self.pose = integrate_unicycle(active.start, &partial);
        if t >= active.cmd.duration {
            self.active = None;
            true
        } else {
            false
        }
    }
}

fn elapsed(active: &ActiveDrive, tick_hz: u32) -> f64 {
    (active.ticks as f64 / f64::from(tick_hz)).min(active.cmd.duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::deg_to_rad;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn cmd(v: f64, w: f64, t: f64) -> VelocityCommand {
        VelocityCommand::new(v, w, t).unwrap()
    }

    /// Independent fixed-step forward Euler integration.
    fn euler(start: BasePose2D, c: &VelocityCommand, dt: f64) -> BasePose2D {
        let (mut x, mut y, mut th) = (start.x, start.y, start.theta);
        let steps = (c.duration / dt).floor() as u64;
        let rest = c.duration - steps as f64 * dt;
        for _ in 0..steps {
            x += c.v_x * th.cos() * dt;
            y += c.v_x * th.sin() * dt;
            th += c.omega * dt;
        }
        if rest > 0.0 {
            x += c.v_x * th.cos() * rest;
            y += c.v_x * th.sin() * rest;
            th += c.omega * rest;
        }
        BasePose2D {
            x,
            y,
            theta: wrap_angle(th),
        }
    }

    #[test]
    fn straight_line() {
        let p = integrate_unicycle(BasePose2D::ORIGIN, &cmd(0.05, 0.0, 5.0));
        assert!((p.x - 0.25).abs() < 1e-12);
        assert_eq!(p.y, 0.0);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn pure_rotation() {
        let p = integrate_unicycle(BasePose2D::ORIGIN, &cmd(0.0, deg_to_rad(30.0), 3.0));
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert!((p.theta - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn quarter_arc_matches_euler_oracle() {
        let c = cmd(0.5, deg_to_rad(90.0), 1.0);
        let p = integrate_unicycle(BasePose2D::ORIGIN, &c);
        // r = v/ω = 1/π; a quarter turn ends at (r, r).
        assert!((p.x - 0.3183).abs() < 1e-4);
        assert!((p.y - 0.3183).abs() < 1e-4);
        assert!((p.theta - FRAC_PI_2).abs() < 1e-12);
        let e = euler(BasePose2D::ORIGIN, &c, 1e-4);
        assert!((p.x - e.x).abs() < 1e-4 && (p.y - e.y).abs() < 1e-4);
    }

    #[test]
    fn sim_executes_full_duration() {
        let mut sim = BaseSim::new(BasePose2D::ORIGIN);
        sim.enqueue(cmd(0.5, 0.0, 1.0));
        let mut ticks = 0;
        while !sim.is_idle() {
            sim.step(100);
            ticks += 1;
        }
        assert_eq!(ticks, 100);
        assert_eq!(sim.pose.x, 0.5);

        sim.reset(BasePose2D::ORIGIN);
        sim.enqueue(cmd(-1.0, 0.0, 2.0));
        while !sim.is_idle() {
            sim.step(100);
        }
        assert_eq!(sim.pose.x, -2.0);
    }

    #[test]
    fn zero_duration_is_noop() {
        let start = BasePose2D::new(0.3, -0.2, 1.0).unwrap();
        let mut sim = BaseSim::new(start);
        sim.enqueue(cmd(0.8, 0.5, 0.0));
        assert!(sim.step(100));
        assert_eq!(sim.pose, start);
    }

    #[test]
    fn partial_last_tick() {
        let mut sim = BaseSim::new(BasePose2D::ORIGIN);
        sim.enqueue(cmd(0.1, 0.0, 0.015));
        assert!(!sim.step(100));
        assert!(sim.step(100));
        assert!((sim.pose.x - 0.0015).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn zero_velocity_leaves_pose_bit_identical(
            x in -10.0f64..10.0, y in -10.0f64..10.0, th in -3.14f64..3.14, t in 0.0f64..10.0
        ) {
            let start = BasePose2D::new(x, y, th).unwrap();
            prop_assert_eq!(integrate_unicycle(start, &cmd(0.0, 0.0, t)), start);
        }

        #[test]
        fn forward_then_back_returns(
            x in -10.0f64..10.0, y in -10.0f64..10.0, th in -3.14f64..3.14,
            v in -1.0f64..1.0, t in 0.0f64..10.0,
        ) {
            let start = BasePose2D::new(x, y, th).unwrap();
            let mid = integrate_unicycle(start, &cmd(v, 0.0, t));
            let end = integrate_unicycle(mid, &cmd(-v, 0.0, t));
            prop_assert!((end.x - start.x).abs() < 1e-9);
            prop_assert!((end.y - start.y).abs() < 1e-9);
        }
    }
}

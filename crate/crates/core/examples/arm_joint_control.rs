//! Command the simulated arm and watch the rate-limited motion settle.

use linguomotor::bus::Bus;
use linguomotor::model::{deg_to_rad, Joint};
use linguomotor::sim::{default_arm_joints, SimConfig, SimWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut world = SimWorld::new(SimConfig::default(), Bus::new(), true, false)?;
    let start = default_arm_joints();

    let target = start.with(Joint::J3, start.get(Joint::J3) + deg_to_rad(90.0));
    world.command_joints(&target)?;
    let ticks = world.run_until_idle(10_000);
    let arm = world.arm_state().expect("arm enabled");
    println!(
        "right_j3 +90 deg: {ticks} ticks, now {:.4} rad",
        arm.joints.get(Joint::J3)
    );

    // Targets past the joint range stop at the limit.
    world.command_joints(&arm.joints.with(Joint::J0, -std::f64::consts::PI))?;
    world.run_until_idle(10_000);
    let arm = world.arm_state().expect("arm enabled");
    println!(
        "right_j0 to -pi ends at {:.4} rad",
        arm.joints.get(Joint::J0)
    );
    Ok(())
}

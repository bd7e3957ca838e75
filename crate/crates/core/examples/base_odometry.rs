//! Drive the base through a few velocity commands and compare the
//! simulator's odometry with the closed-form unicycle solution.

use linguomotor::bus::Bus;
use linguomotor::model::{BasePose2D, VelocityCommand};
use linguomotor::sim::{integrate_unicycle, SimConfig, SimWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut world = SimWorld::new(SimConfig::default(), Bus::new(), false, true)?;
    let mut expected = BasePose2D::ORIGIN;
    for (v, w, t) in [(0.05, 0.0, 5.0), (0.1, 0.5, 3.0), (-0.2, -0.3, 2.0)] {
        let cmd = VelocityCommand::new(v, w, t)?;
        expected = integrate_unicycle(expected, &cmd);
        world.command_velocity(&cmd)?;
        world.run_until_idle(100_000);
        let pose = world.base_state().expect("base enabled").pose;
        println!(
            "v={v:<5} w={w:<5} t={t}: x={:+.4} y={:+.4} theta={:+.2} deg (closed form {:+.4}, {:+.4})",
            pose.x,
            pose.y,
            pose.theta_deg(),
            expected.x,
            expected.y
        );
    }
    Ok(())
}

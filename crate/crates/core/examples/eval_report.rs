//! Run the bundled base script and score it against its fixture.

use std::path::Path;

use linguomotor::eval::{evaluate, load_fixture, render_report, ReportFormat, Thresholds};
use linguomotor::gateway::{run_script, GatewayConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let run = run_script(
        &root.join("scripts/turtlebot_table2.txt"),
        GatewayConfig::default(),
    )?;
    let fixture = load_fixture(&root.join("fixtures/turtlebot_table2.json"))?;
    let report = evaluate(&run.events, &fixture, &Thresholds::default())?;
    print!(
        "{}",
        String::from_utf8(render_report(&report, ReportFormat::Md))?
    );
    Ok(())
}

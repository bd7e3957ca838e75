//! Replay the hand-transcribed arm trace and print the state after each
//! recorded call.

use std::path::Path;

use linguomotor::gateway::{replay_trace, GatewayConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = Path::new(env!("CARGO_MANIFEST_DIR")).join("traces/sawyer_table1.jsonl");
    let out = replay_trace(&trace, &GatewayConfig::default())?;
    for step in &out.steps {
        println!(
            "{} {}: {}",
            step.prompt_id,
            step.call_id,
            serde_json::to_string(&step.state)?
        );
    }
    Ok(())
}

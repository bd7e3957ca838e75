//! Talk to a chat-completions endpoint with tool calls. A local stub stands
//! in for the real service and answers with a canned tool call.
//!
//! Point `base_url` at a real endpoint (and set `LINGUOMOTOR_API_KEY`) to
//! try it for real.

use std::sync::Arc;

use linguomotor::bridge::stub::{text_completion, tool_call_completion, StubChatServer, StubReply};
use linguomotor::bridge::{Backend, RemoteBackend, RemoteConfig};
use linguomotor::gateway::{format_event, run_script_text, GatewayConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stub = StubChatServer::spawn(vec![
        StubReply::Json(tool_call_completion(
            "call_z1ax",
            "approach_pose",
            r#"{"position_x":0.46,"position_y":0.15,"position_z":0.5,"orientation_w":1,"orientation_x":0,"orientation_y":0,"orientation_z":0}"#,
        )),
        StubReply::Json(text_completion("The arm is at the requested position.")),
    ])?;
    let backend: Arc<dyn Backend> = Arc::new(RemoteBackend::new(RemoteConfig {
        base_url: stub.base_url(),
        model: "any".into(),
        timeout_secs: 5.0,
    }));
    let out = run_script_text(
        "move the arm to position_x = 0.46, position_y = 0.15, and position_z=0.5\n",
        "remote",
        GatewayConfig::default(),
        Some(backend),
    )?;
    for ev in &out.events {
        if let Some(line) = format_event(ev) {
            println!("{line}");
        }
    }
    println!("\nrequests sent: {}", stub.requests().len());
    Ok(())
}

//! Start the HTTP gateway on a free port, send a prompt, read the state.

use linguomotor::gateway::{Clock, GatewayConfig, ServerHandle};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GatewayConfig {
        http_port: 0,
        ..GatewayConfig::default()
    };
    let server = ServerHandle::spawn(config, Clock::Virtual)?;
    let url = server.base_url();
    println!("gateway at {url}");

    let http = reqwest::blocking::Client::new();
    let events: Vec<Value> = http
        .post(format!("{url}/api/v1/prompt"))
        .json(
            &json!({"session": "example", "text": "move forward at a speed of 0.05 for 4 seconds"}),
        )
        .send()?
        .json()?;
    for ev in &events {
        println!("{} {}", ev["kind"], ev["payload"]);
    }
    let state: Value = http.get(format!("{url}/api/v1/state")).send()?.json()?;
    println!("state: {state}");
    server.shutdown();
    Ok(())
}

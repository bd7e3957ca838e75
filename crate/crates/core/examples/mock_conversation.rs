//! A few conversation turns against the offline mock backend, printed the
//! way the REPL prints them.

use linguomotor::gateway::{format_event, Clock, Gateway, GatewayConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut gateway = Gateway::new(GatewayConfig::default(), Clock::Virtual)?;
    for prompt in [
        "move the arm up",
        "rotate the base 90 degrees",
        "move forward at a speed of 0.8 for 2 seconds",
        "do something useful",
    ] {
        println!("> {prompt}");
        for ev in gateway.prompt("demo", prompt) {
            if let Some(line) = format_event(&ev) {
                println!("{line}");
            }
        }
        println!();
    }
    println!("{}", serde_json::to_string_pretty(&gateway.state_json())?);
    Ok(())
}

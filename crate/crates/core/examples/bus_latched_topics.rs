//! Publish on a latched topic, then show that a late subscriber still sees
//! the last value.

use linguomotor::bus::{advertise_gateway_topics, topics, Bus, TopicName};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bus = Bus::new();
    advertise_gateway_topics(&bus)?;
    let cmd_vel = TopicName::new(topics::BASE_CMD_VEL)?;

    let early = bus.subscribe(&cmd_vel)?;
    for v in [0.05, 0.08] {
        let seq = bus.publish(&cmd_vel, json!({"v_x": v, "omega": 0.0, "duration": 2.0}))?;
        println!("published seq {seq}");
    }
    for msg in early.drain()? {
        println!("early subscriber: seq {} {}", msg.seq, msg.payload);
    }

    let late = bus.subscribe(&cmd_vel)?;
    let msg = late.recv()?;
    println!(
        "late subscriber gets the latched value: seq {} {}",
        msg.seq, msg.payload
    );

    match bus.publish(&cmd_vel, json!({"v_x": "fast"})) {
        Err(e) => println!("schema check: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

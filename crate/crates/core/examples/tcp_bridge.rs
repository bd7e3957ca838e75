//! Expose the bus over TCP and exchange messages with an external client.

use std::time::Duration;

use linguomotor::bus::{advertise_gateway_topics, topics, BridgeClient, Bus, TcpBridge, TopicName};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bus = Bus::new();
    advertise_gateway_topics(&bus)?;
    let bridge = TcpBridge::spawn(bus.clone(), "127.0.0.1:0")?;

    let mut client = BridgeClient::connect(bridge.local_addr())?;
    client.set_read_timeout(Some(Duration::from_secs(5)))?;
    println!("{} topics announced", client.schemas().len());

    let estop = TopicName::new(topics::SAFETY_ESTOP)?;
    let local = bus.subscribe(&estop)?;
    client.publish(&estop, json!({"engaged": true}))?;
    let msg = local
        .recv_timeout(Duration::from_secs(5))?
        .expect("bridged message");
    println!(
        "bus received from the client: {} {}",
        msg.topic, msg.payload
    );

    let odom = TopicName::new(topics::BASE_ODOM)?;
    bus.publish(
        &odom,
        json!({"x": 0.25, "y": 0.0, "theta": 0.0, "theta_deg": 0.0}),
    )?;
    while let Some(m) = client.recv()? {
        if m.topic == odom {
            println!("client received from the bus: {} {}", m.topic, m.payload);
            break;
        }
    }
    bridge.shutdown();
    Ok(())
}

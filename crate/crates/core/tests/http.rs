use std::io::{BufRead, BufReader};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use linguomotor::eval::parse_csv;
use linguomotor::gateway::{Clock, GatewayConfig, GatewayError, ServerHandle, SessionEvent};

fn start() -> ServerHandle {
    let config = GatewayConfig {
        http_port: 0,
        ..GatewayConfig::default()
    };
    ServerHandle::spawn(config, Clock::Virtual).unwrap()
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .unwrap()
}

#[test]
fn prompt_returns_the_turn_and_updates_state() {
    let server = start();
    let http = client();
    let url = server.base_url();
    let events: Vec<SessionEvent> = http
        .post(format!("{url}/api/v1/prompt"))
        .json(&json!({"session": "web", "text": "move forward at a speed of 0.05 for 2 seconds"}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let kinds: Vec<&str> = events.iter().map(|e| e.kind()).collect();
    assert_eq!(
        kinds,
        [
            "prompt",
            "granularity",
            "tool_call",
            "tool_result",
            "assistant"
        ]
    );
    assert!(events.iter().all(|e| e.session == "web"));

    let state: Value = http
        .get(format!("{url}/api/v1/state"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!((state["base"]["x"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(state["estop"], false);
    assert!(state["arm"]["joints"]["right_j0"].is_number());
}

#[test]
fn empty_prompt_is_a_bad_request() {
    let server = start();
    let res = client()
        .post(format!("{}/api/v1/prompt", server.base_url()))
        .json(&json!({"text": "  "}))
        .send()
        .unwrap();
    assert_eq!(res.status(), 400);
}

#[test]
fn estop_refuses_prompts_until_reset() {
    let server = start();
    let http = client();
    let url = server.base_url();
    assert_eq!(
        http.post(format!("{url}/api/v1/estop"))
            .send()
            .unwrap()
            .status(),
        200
    );
    let state: Value = http
        .get(format!("{url}/api/v1/state"))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(state["estop"], true);

    let events: Vec<Value> = http
        .post(format!("{url}/api/v1/prompt"))
        .json(&json!({"text": "move all joints to 0"}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(events
        .iter()
        .any(|e| e["payload"]["error"] == "EStopEngaged"));

    assert_eq!(
        http.post(format!("{url}/api/v1/reset"))
            .send()
            .unwrap()
            .status(),
        200
    );
    let events: Vec<Value> = http
        .post(format!("{url}/api/v1/prompt"))
        .json(&json!({"text": "move all joints to 0"}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(events.iter().any(|e| e["kind"] == "tool_result"));
}

#[test]
fn event_stream_pushes_session_events() {
    let server = start();
    let url = server.base_url();
    let (tx, rx) = mpsc::channel();
    let stream_url = format!("{url}/api/v1/events");
    thread::spawn(move || {
        let res = client().get(stream_url).send().unwrap();
        tx.send(None).unwrap();
        for line in BufReader::new(res).lines() {
            let Ok(line) = line else { break };
            if let Some(data) = line.strip_prefix("data:") {
                let ev: SessionEvent = serde_json::from_str(data.trim()).unwrap();
                if tx.send(Some(ev)).is_err() {
                    break;
                }
            }
        }
    });
    // Wait until the stream is open before prompting.
    assert!(rx.recv_timeout(Duration::from_secs(10)).unwrap().is_none());
    thread::sleep(Duration::from_millis(50));
    client()
        .post(format!("{url}/api/v1/prompt"))
        .json(&json!({"text": "rotate the base 90 degrees"}))
        .send()
        .unwrap();
    let mut kinds = Vec::new();
    while kinds.len() < 5 {
        let ev = rx.recv_timeout(Duration::from_secs(10)).unwrap().unwrap();
        kinds.push(ev.kind().to_string());
    }
    assert_eq!(
        kinds,
        [
            "prompt",
            "granularity",
            "tool_call",
            "tool_result",
            "assistant"
        ]
    );
}

#[test]
fn report_formats() {
    let server = start();
    let http = client();
    let url = server.base_url();
    http.post(format!("{url}/api/v1/prompt"))
        .json(&json!({"text": "move forward"}))
        .send()
        .unwrap();
    let res = http.get(format!("{url}/api/v1/report")).send().unwrap();
    assert_eq!(res.status(), 200);
    assert!(res.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/csv"));
    let rows = parse_csv(&res.bytes().unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].label, "qualitative");

    let md = http
        .get(format!("{url}/api/v1/report?format=md"))
        .send()
        .unwrap()
        .text()
        .unwrap();
    assert!(md.contains("| move forward |"));
    let bad = http
        .get(format!("{url}/api/v1/report?format=xml"))
        .send()
        .unwrap();
    assert_eq!(bad.status(), 400);
}

#[test]
fn console_is_served_at_root() {
    let server = start();
    let res = client().get(server.base_url()).send().unwrap();
    assert_eq!(res.status(), 200);
    assert!(res.text().unwrap().contains("/api/v1/events"));
}

#[test]
fn busy_port_is_a_bind_error() {
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let config = GatewayConfig {
        http_port: holder.local_addr().unwrap().port(),
        ..GatewayConfig::default()
    };
    assert!(matches!(
        ServerHandle::spawn(config, Clock::Virtual),
        Err(GatewayError::Bind { .. })
    ));
}

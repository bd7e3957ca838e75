use std::sync::Arc;

use serde_json::json;

use linguomotor::bridge::stub::{text_completion, tool_call_completion, StubChatServer, StubReply};
use linguomotor::bridge::{Backend, RemoteBackend, RemoteConfig};
use linguomotor::gateway::{run_script_text, ErrorCode, EventBody, GatewayConfig, SessionEvent};

fn backend(stub: &StubChatServer) -> Arc<dyn Backend> {
    Arc::new(RemoteBackend::new(RemoteConfig {
        base_url: stub.base_url(),
        model: "stub-model".into(),
        timeout_secs: 5.0,
    }))
}

fn run(stub: &StubChatServer, script: &str) -> Vec<SessionEvent> {
    run_script_text(script, "s", GatewayConfig::default(), Some(backend(stub)))
        .unwrap()
        .events
}

fn error_codes(events: &[SessionEvent]) -> Vec<ErrorCode> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Error { error, .. } => Some(*error),
            _ => None,
        })
        .collect()
}

#[test]
fn request_carries_tools_and_history() {
    let stub = StubChatServer::spawn(vec![
        StubReply::Json(tool_call_completion(
            "call_1",
            "drive",
            r#"{"v_x": 0.05, "omega": 0, "duration": 5}"#,
        )),
        StubReply::Json(text_completion("Done.")),
    ])
    .unwrap();
    let events = run(
        &stub,
        "move along x-axis with a speed of 0.05 m/s for 5 seconds\n",
    );
    assert!(error_codes(&events).is_empty());
    let requests = stub.requests();
    assert_eq!(requests.len(), 2);
    let first = &requests[0];
    assert_eq!(first["model"], "stub-model");
    assert_eq!(first["messages"][0]["role"], "system");
    let tools: Vec<&str> = first["tools"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["function"]["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        tools,
        ["move_arm_to_joint_positions", "approach_pose", "drive"]
    );
    // The summary request sees the call and its function response.
    let roles: Vec<&str> = requests[1]["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap())
        .collect();
    assert_eq!(roles, ["system", "user", "assistant", "tool"]);
    assert!(matches!(
        &events.last().unwrap().body,
        EventBody::Assistant { text, .. } if text == "Done."
    ));
}

#[test]
fn text_reply_is_a_clarification() {
    let stub = StubChatServer::spawn(vec![StubReply::Json(text_completion(
        "Can you specify how far up you want to move the arm?",
    ))])
    .unwrap();
    let events = run(&stub, "move the arm up\n");
    let kinds: Vec<&str> = events.iter().map(|e| e.kind()).collect();
    assert_eq!(kinds, ["prompt", "granularity", "clarification"]);
}

#[test]
fn server_error_is_a_transport_error() {
    let stub = StubChatServer::spawn(vec![StubReply::Status(500, "boom".into())]).unwrap();
    let events = run(&stub, "move forward\n");
    assert_eq!(error_codes(&events), [ErrorCode::TransportError]);
}

#[test]
fn shapeless_reply_is_a_protocol_error() {
    let stub = StubChatServer::spawn(vec![StubReply::Json(json!({"choices": []}))]).unwrap();
    let events = run(&stub, "move forward\n");
    assert_eq!(error_codes(&events), [ErrorCode::BackendProtocolError]);
}

#[test]
fn unknown_tool_is_an_invalid_action() {
    let stub = StubChatServer::spawn(vec![StubReply::Json(tool_call_completion(
        "call_x",
        "self_destruct",
        "{}",
    ))])
    .unwrap();
    let events = run(&stub, "move forward\n");
    assert_eq!(error_codes(&events), [ErrorCode::InvalidAction]);
    assert!(!events.iter().any(|e| e.kind() == "tool_call"));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend: Arc<dyn Backend> = Arc::new(RemoteBackend::new(RemoteConfig {
        base_url: format!("http://127.0.0.1:{port}"),
        model: "m".into(),
        timeout_secs: 2.0,
    }));
    let events = run_script_text(
        "move forward\n",
        "s",
        GatewayConfig::default(),
        Some(backend),
    )
    .unwrap()
    .events;
    assert_eq!(error_codes(&events), [ErrorCode::TransportError]);
}

//! A minimal local chat-completions server that replays canned replies.
//! Used by tests and the offline remote-backend demo.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub enum StubReply {
    Json(Value),
    Status(u16, String),
}

/// Chat-completions reply carrying one tool call with verbatim arguments.
pub fn tool_call_completion(id: &str, name: &str, arguments: &str) -> Value {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "finish_reason": "tool_calls",
            "message": {
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": id,
                    "type": "function",
                    "function": {"name": name, "arguments": arguments},
                }],
            },
        }],
    })
}

/// Chat-completions reply carrying plain assistant text.
pub fn text_completion(content: &str) -> Value {
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "finish_reason": "stop",
            "message": {"role": "assistant", "content": content},
        }],
    })
}

struct Shared {
    replies: Mutex<std::collections::VecDeque<StubReply>>,
    requests: Mutex<Vec<Value>>,
    stop: AtomicBool,
}

pub struct StubChatServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    handle: Option<JoinHandle<()>>,
}

impl StubChatServer {
    /// Binds an ephemeral local port and serves `replies` in order. Once
    /// they run out every request gets HTTP 500.
    pub fn spawn(replies: Vec<StubReply>) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            replies: Mutex::new(replies.into()),
            requests: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = Arc::clone(&shared);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    if let Err(e) = handle_connection(stream, &worker) {
                        log::warn!("stub connection failed: {e}");
                    }
                }
            }
        });
        Ok(StubChatServer {
            addr,
            shared,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Request bodies received so far.
    pub fn requests(&self) -> Vec<Value> {
        self.shared.requests.lock().expect("stub lock").clone()
    }
}

impl Drop for StubChatServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    if request_line.is_empty() {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = if !request_line.contains("/chat/completions") {
        (404, json!({"error": "not found"}).to_string())
    } else {
        let parsed = serde_json::from_slice(&body).unwrap_or(Value::Null);
        shared.requests.lock().expect("stub lock").push(parsed);
        match shared.replies.lock().expect("stub lock").pop_front() {
            Some(StubReply::Json(v)) => (200, v.to_string()),
            Some(StubReply::Status(code, text)) => (code, text),
            None => (500, json!({"error": "stub replies exhausted"}).to_string()),
        }
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}

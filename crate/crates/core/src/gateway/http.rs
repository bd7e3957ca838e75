//! HTTP API and event stream.
//!
//! One control thread owns the [`Gateway`]; handlers talk to it through a
//! command queue. The e-stop handler flips the shared flag directly before
//! queueing anything, so it never waits behind a running turn.

use std::convert::Infallible;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use super::{Clock, Gateway, GatewayConfig, GatewayError, SessionEvent};
use crate::eval::{load_fixture, Expectation, ReportFormat};
use crate::sim::EStop;

const DEFAULT_SESSION: &str = "default";

enum Command {
    Prompt {
        session: String,
        text: String,
        reply: oneshot::Sender<Vec<SessionEvent>>,
    },
    State {
        reply: oneshot::Sender<Value>,
    },
    LogEstop {
        session: String,
        reply: oneshot::Sender<SessionEvent>,
    },
    Release {
        session: String,
        reply: oneshot::Sender<SessionEvent>,
    },
    Report {
        format: ReportFormat,
        reply: oneshot::Sender<Result<Vec<u8>, String>>,
    },
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<SessionEvent>,
    estop: EStop,
}

/// A running service. Dropping it stops the server.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    server: Option<JoinHandle<()>>,
    control: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `127.0.0.1:<http_port>` (port 0 picks a free one) and starts
    /// the control loop and HTTP server on background threads.
    pub fn spawn(config: GatewayConfig, clock: Clock) -> Result<ServerHandle, GatewayError> {
        config.validate()?;
        let addr = format!("127.0.0.1:{}", config.http_port);
        let listener = TcpListener::bind(&addr).map_err(|source| GatewayError::Bind {
            addr: addr.clone(),
            source,
        })?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;

        let fixture = match &config.report_fixture {
            Some(path) => load_fixture(path)?,
            None => Vec::new(),
        };
        let console_dir = config.console_dir.clone();
        let mut gateway = Gateway::new(config, clock)?;
        let (events_tx, _) = broadcast::channel(1024);
        let fan_out = events_tx.clone();
        gateway.add_listener(move |ev| {
            let _ = fan_out.send(ev.clone());
        });
        let estop = gateway.estop_handle();
        let (commands, rx) = mpsc::channel();
        let control = std::thread::Builder::new()
            .name("gateway-control".into())
            .spawn(move || control_loop(gateway, rx, fixture))?;

        let app = router(
            AppState {
                commands,
                events: events_tx,
                estop,
            },
            console_dir,
        );
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
        let server = std::thread::Builder::new()
            .name("gateway-http".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            log::error!("listener setup failed: {e}");
                            return;
                        }
                    };
                    tokio::select! {
                        result = axum::serve(listener, app) => {
                            if let Err(e) = result {
                                log::error!("http server stopped: {e}");
                            }
                        }
                        _ = shutdown_rx => {}
                    }
                });
                runtime.shutdown_background();
            })?;
        log::info!("gateway listening on http://{local}");
        Ok(ServerHandle {
            addr: local,
            shutdown: Some(shutdown_tx),
            server: Some(server),
            control: Some(control),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops the server and waits for its threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.server.take() {
            let _ = h.join();
        }
        // The router held the last command sender, so the control loop
        // sees a disconnect and returns.
        if let Some(h) = self.control.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Runs the service until Ctrl-C, with ticks on the wall clock.
pub fn serve(config: GatewayConfig) -> Result<(), GatewayError> {
    let handle = ServerHandle::spawn(config, Clock::Wall)?;
    println!("linguomotor gateway on {}", handle.base_url());
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?
        .block_on(tokio::signal::ctrl_c())?;
    handle.shutdown();
    Ok(())
}

fn control_loop(mut gateway: Gateway, rx: mpsc::Receiver<Command>, fixture: Vec<Expectation>) {
    let wall = gateway.rig().clock() == Clock::Wall;
    let period = Duration::from_secs_f64(gateway.config().sim_config().tick_seconds());
    let mut next_tick = Instant::now() + period;
    loop {
        let received = if wall {
            rx.recv_timeout(next_tick.saturating_duration_since(Instant::now()))
        } else {
            rx.recv().map_err(|_| mpsc::RecvTimeoutError::Disconnected)
        };
        match received {
            Ok(cmd) => handle(&mut gateway, cmd, &fixture),
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
        if wall {
            let now = Instant::now();
            if now >= next_tick {
                gateway.idle_tick();
                next_tick += period;
                if next_tick < now {
                    next_tick = now + period;
                }
            }
        }
    }
}

fn handle(gateway: &mut Gateway, cmd: Command, fixture: &[Expectation]) {
    match cmd {
        Command::Prompt {
            session,
            text,
            reply,
        } => {
            let _ = reply.send(gateway.prompt(&session, &text));
        }
        Command::State { reply } => {
            let _ = reply.send(gateway.state_json());
        }
        Command::LogEstop { session, reply } => {
            let _ = reply.send(gateway.estop_all(&session));
        }
        Command::Release { session, reply } => {
            let _ = reply.send(gateway.release_estop(&session));
        }
        Command::Report { format, reply } => {
            let _ = reply.send(gateway.report(fixture, format).map_err(|e| e.to_string()));
        }
    }
}

fn router(state: AppState, console_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/prompt", post(prompt))
        .route("/api/v1/state", get(state_handler))
        .route("/api/v1/events", get(events))
        .route("/api/v1/estop", post(estop))
        .route("/api/v1/reset", post(reset))
        .route("/api/v1/report", get(report))
        .with_state(state);
    match console_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(BUILTIN_CONSOLE) })),
    }
}

async fn ask<T>(
    state: &AppState,
    make: impl FnOnce(oneshot::Sender<T>) -> Command,
) -> Result<T, Response> {
    let (tx, rx) = oneshot::channel();
    let unavailable = || {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"error": "control loop stopped"})),
        )
            .into_response()
    };
    state.commands.send(make(tx)).map_err(|_| unavailable())?;
    rx.await.map_err(|_| unavailable())
}

#[derive(Deserialize)]
struct PromptBody {
    #[serde(default)]
    session: Option<String>,
    text: String,
}

async fn prompt(State(state): State<AppState>, Json(body): Json<PromptBody>) -> Response {
    if body.text.trim().is_empty() {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({"error": "text must not be empty"})),
        )
            .into_response();
    }
    let session = body.session.unwrap_or_else(|| DEFAULT_SESSION.into());
    match ask(&state, |reply| Command::Prompt {
        session,
        text: body.text,
        reply,
    })
    .await
    {
        Ok(events) => Json(events).into_response(),
        Err(r) => r,
    }
}

async fn state_handler(State(state): State<AppState>) -> Response {
    match ask(&state, |reply| Command::State { reply }).await {
        Ok(v) => Json(v).into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize, Default)]
struct SessionBody {
    #[serde(default)]
    session: Option<String>,
}

fn session_of(body: Option<Json<SessionBody>>) -> String {
    body.and_then(|Json(b)| b.session)
        .unwrap_or_else(|| DEFAULT_SESSION.into())
}

async fn estop(State(state): State<AppState>, body: Option<Json<SessionBody>>) -> Response {
    // Priority path: the flag flips before the queue sees anything.
    state.estop.engage();
    let session = session_of(body);
    match ask(&state, |reply| Command::LogEstop { session, reply }).await {
        Ok(ev) => Json(ev).into_response(),
        Err(r) => r,
    }
}

async fn reset(State(state): State<AppState>, body: Option<Json<SessionBody>>) -> Response {
    let session = session_of(body);
    match ask(&state, |reply| Command::Release { session, reply }).await {
        Ok(ev) => Json(ev).into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn report(State(state): State<AppState>, Query(q): Query<ReportQuery>) -> Response {
    let format = match q.format.as_deref().unwrap_or("csv").parse::<ReportFormat>() {
        Ok(f) => f,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({"error": e.to_string()})),
            )
                .into_response()
        }
    };
    match ask(&state, |reply| Command::Report { format, reply }).await {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, format.content_type())], bytes).into_response(),
        Ok(Err(message)) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": message})),
        )
            .into_response(),
        Err(r) => r,
    }
}

async fn events(
    State(state): State<AppState>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = state.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let frame = Event::default()
                        .event(ev.kind())
                        .json_data(&ev)
                        .expect("events serialize");
                    return Some((Ok(frame), rx));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("event stream consumer lagged; {n} events skipped");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

const BUILTIN_CONSOLE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>linguomotor</title>
<style>body{font:14px monospace;margin:1em}#log{white-space:pre-wrap;border:1px solid #ccc;padding:.5em;height:60vh;overflow:auto}</style>
</head><body>
<form id="f"><input id="t" size="70" placeholder="move right_j3 by 90 degrees" autofocus> <button>send</button></form>
<p><button id="stop">E-STOP</button> <button id="reset">reset</button> <span id="state"></span></p>
<div id="log"></div>
<script>
const log = document.getElementById('log');
const add = s => { log.textContent += s + '\n'; log.scrollTop = log.scrollHeight; };
const refresh = () => fetch('/api/v1/state').then(r => r.json()).then(s => document.getElementById('state').textContent = JSON.stringify(s));
const es = new EventSource('/api/v1/events');
for (const k of ['prompt','granularity','tool_call','tool_result','assistant','clarification','state','estop','error'])
  es.addEventListener(k, e => { const ev = JSON.parse(e.data); add(`[${ev.ts_ms}] ${ev.kind} ${JSON.stringify(ev.payload)}`); refresh(); });
document.getElementById('f').onsubmit = e => { e.preventDefault(); const t = document.getElementById('t');
  fetch('/api/v1/prompt', {method:'POST', headers:{'content-type':'application/json'}, body: JSON.stringify({text: t.value})}); t.value = ''; };
document.getElementById('stop').onclick = () => fetch('/api/v1/estop', {method:'POST'});
document.getElementById('reset').onclick = () => fetch('/api/v1/reset', {method:'POST'});
refresh();
</script></body></html>
"#;

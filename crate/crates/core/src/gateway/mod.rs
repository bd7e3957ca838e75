//! Composition root: wires a backend, the simulators and the trace together
//! and exposes them as a REPL, a script runner, a replayer and an HTTP
//! service.

mod config;
mod event;
mod http;
mod repl;
mod rig;
mod script;
mod trace;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bridge::{Backend, Conversation, MockBackend, RemoteBackend, RobotInterface};
use crate::bus::Bus;
use crate::eval::{self, EvalError, Expectation, ReportFormat};
use crate::sim::{ArmState, BaseState, EStop, Robot, SimError, SimWorld, WorldSnapshot};

pub use config::{BackendKind, ConfigError, GatewayConfig};
pub use event::{BaseOdom, ErrorCode, EventBody, RobotState, SessionEvent};
pub use http::{serve, ServerHandle};
pub use repl::{format_event, repl};
pub use rig::{Clock, Rig};
pub use script::{
    parse_script, replay_events, replay_trace, run_script, run_script_text, ReplayOutcome,
    ReplayStep, ScriptLine, ScriptOutcome,
};
pub use trace::{parse_trace, read_trace, TraceWriter};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("script syntax error on line {line}: {message}")]
    ScriptSyntax { line: usize, message: String },
    #[error("malformed trace at line {line}: {message}")]
    TraceMalformed { line: usize, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Robot states at the end of a run, without the tick counter, so a
/// wall-clock session and its virtual-time replay compare equal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalStates {
    pub arm: Option<ArmState>,
    pub base: Option<BaseState>,
    pub estop: bool,
}

impl From<WorldSnapshot> for FinalStates {
    fn from(s: WorldSnapshot) -> Self {
        FinalStates {
            arm: s.arm,
            base: s.base,
            estop: s.estop,
        }
    }
}

/// The backend named by the config.
pub fn build_backend(config: &GatewayConfig) -> Result<Arc<dyn Backend>, ConfigError> {
    config.validate()?;
    Ok(match (&config.backend, &config.remote) {
        (BackendKind::Remote, Some(remote)) => Arc::new(RemoteBackend::new(remote.clone())),
        _ => Arc::new(MockBackend::new(config.mock.clone())),
    })
}

pub(crate) fn new_world(config: &GatewayConfig) -> Result<SimWorld, GatewayError> {
    Ok(SimWorld::new(
        config.sim_config(),
        Bus::new(),
        config.has_robot(Robot::Arm),
        config.has_robot(Robot::Base),
    )?)
}

type Listener = Box<dyn FnMut(&SessionEvent) + Send>;

/// One control loop's worth of state: simulators, backend, sessions and
/// the event log.
pub struct Gateway {
    config: GatewayConfig,
    rig: Rig,
    backend: Arc<dyn Backend>,
    sessions: BTreeMap<String, Conversation>,
    events: Vec<SessionEvent>,
    trace: Option<TraceWriter>,
    listeners: Vec<Listener>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("rig", &self.rig)
            .field("events", &self.events.len())
            .finish()
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig, clock: Clock) -> Result<Self, GatewayError> {
        let backend = build_backend(&config)?;
        Self::with_backend(config, clock, backend)
    }

    /// Uses `backend` regardless of what the config names.
    pub fn with_backend(
        config: GatewayConfig,
        clock: Clock,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let world = new_world(&config)?;
        let trace = match &config.trace_path {
            Some(path) => Some(TraceWriter::create(path)?),
            None => None,
        };
        let max_drive = config.max_drive_seconds;
        Ok(Gateway {
            rig: Rig::new(world, clock, max_drive),
            config,
            backend,
            sessions: BTreeMap::new(),
            events: Vec::new(),
            trace,
            listeners: Vec::new(),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn rig_mut(&mut self) -> &mut Rig {
        &mut self.rig
    }

    pub fn estop_handle(&self) -> EStop {
        self.rig.world().estop()
    }

    /// Every event recorded so far, across sessions.
    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Calls `f` for every event from now on.
    pub fn add_listener(&mut self, f: impl FnMut(&SessionEvent) + Send + 'static) {
        self.listeners.push(Box::new(f));
    }

    pub fn final_states(&self) -> FinalStates {
        self.rig.world().snapshot().into()
    }

    fn record(
        events: &mut Vec<SessionEvent>,
        trace: &mut Option<TraceWriter>,
        listeners: &mut [Listener],
        ev: &SessionEvent,
    ) {
        if let Some(t) = trace.as_mut() {
            if let Err(e) = t.append(ev) {
                log::error!("trace write to {} failed: {e}", t.path().display());
            }
        }
        for l in listeners.iter_mut() {
            l(ev);
        }
        events.push(ev.clone());
    }

    fn emit(&mut self, session: &str, body: EventBody) -> SessionEvent {
        let ev = SessionEvent {
            ts_ms: self.rig.now_ms(),
            session: session.to_string(),
            body,
        };
        Self::record(&mut self.events, &mut self.trace, &mut self.listeners, &ev);
        ev
    }

    /// Runs one conversation turn in `session`.
    pub fn prompt(&mut self, session: &str, text: &str) -> Vec<SessionEvent> {
        let Gateway {
            config,
            rig,
            backend,
            sessions,
            events,
            trace,
            listeners,
        } = self;
        let conversation = sessions
            .entry(session.to_string())
            .or_insert_with(|| Conversation::new(session, config.safety.clone()));
        conversation.run_turn_with(text, backend, rig, &mut |ev| {
            Self::record(events, trace, listeners, ev)
        })
    }

    /// Engages the e-stop, halting all motion, and logs it. Any backend call
    /// in flight notices the flag and gives up.
    pub fn estop_all(&mut self, session: &str) -> SessionEvent {
        self.rig.world_mut().engage_estop();
        self.emit(session, EventBody::Estop { engaged: true })
    }

    /// Releases the e-stop and logs it.
    pub fn release_estop(&mut self, session: &str) -> SessionEvent {
        self.rig.world_mut().reset_estop();
        self.emit(session, EventBody::Estop { engaged: false })
    }

    /// Puts a robot into an explicit state and logs the state it ended up
    /// in (joint targets are clamped to limits).
    pub fn reset_robot(&mut self, session: &str, line: &ScriptLine) -> SessionEvent {
        let world = self.rig.world_mut();
        let result = match line {
            ScriptLine::ResetArm { joints, pose } => match world.arm_state() {
                Some(current) => world
                    .reset_arm(*joints, pose.unwrap_or(current.pose))
                    .map(|_| Robot::Arm),
                None => Err(SimError::RobotUnavailable(Robot::Arm)),
            },
            ScriptLine::ResetBase(pose) => world.reset_base(*pose).map(|_| Robot::Base),
            ScriptLine::Prompt(_) => Err(SimError::InvalidCommand("not a reset".into())),
        };
        let body = match result {
            Ok(robot) => EventBody::State {
                reason: "reset".into(),
                state: self.rig.state_of(robot).expect("robot exists after reset"),
            },
            Err(e) => EventBody::Error {
                prompt_id: None,
                error: crate::bridge::sim_error_code(&e),
                message: e.to_string(),
            },
        };
        self.emit(session, body)
    }

    /// One idle tick, for loops that keep the simulators running between
    /// prompts.
    pub fn idle_tick(&mut self) {
        self.rig.world_mut().step();
    }

    /// Current state in the HTTP API shape.
    pub fn state_json(&self) -> Value {
        let world = self.rig.world();
        json!({
            "arm": world.arm_state().map(|a| json!({"joints": a.joints, "pose": a.pose})),
            "base": world.base_state().map(|b| json!({
                "x": b.pose.x,
                "y": b.pose.y,
                "theta_deg": b.pose.theta_deg(),
            })),
            "estop": world.estop().is_engaged(),
        })
    }

    /// Evaluation report over everything recorded so far.
    pub fn report(
        &self,
        fixture: &[Expectation],
        format: ReportFormat,
    ) -> Result<Vec<u8>, GatewayError> {
        let report = eval::evaluate(&self.events, fixture, &eval::Thresholds::default())?;
        Ok(eval::render_report(&report, format))
    }
}

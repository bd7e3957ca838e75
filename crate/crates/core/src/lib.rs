//! Language-to-robot control gateway.
//!
//! Natural-language prompts are classified by granularity (qualitative or
//! quantitative), turned into typed tool calls by a language backend,
//! safety-clamped, and published on a latched topic bus where deterministic
//! arm and mobile-base simulators pick them up. Every step of a turn is
//! recorded as a [`gateway::SessionEvent`] so sessions can be replayed and
//! scored.
//!
//! Module map:
//!
//! - [`model`]: joint vectors, poses, velocity commands, angle helpers
//! - [`bus`]: latched pub/sub with an optional framed TCP bridge
//! - [`sim`]: tick-driven arm and base simulators with e-stop
//! - [`bridge`]: tool schemas, granularity classifier, mock and remote
//!   backends, safety clamp, conversation turn
//! - [`gateway`]: sessions, traces, scripts, replay, REPL and HTTP service
//! - [`eval`]: error metrics and granularity reports
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod bridge;
pub mod bus;
pub mod eval;
pub mod gateway;
pub mod model;
pub mod sim;

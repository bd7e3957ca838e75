use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use linguomotor::bridge::RemoteConfig;
use linguomotor::eval::{self, ReportFormat};
use linguomotor::gateway::{
    self, format_event, BackendKind, Clock, Gateway, GatewayConfig, GatewayError,
};

#[derive(Parser)]
#[command(
    name = "linguomotor",
    version,
    about = "Natural-language robot control gateway"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Opts {
    /// TOML file with GatewayConfig fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Chat-completions endpoint for the remote backend.
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    port: Option<u16>,
    #[arg(long, global = true)]
    tick_hz: Option<u32>,
    /// Append every session event to this JSON-lines file.
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Read prompts from stdin.
    Repl {
        #[arg(long, default_value = "default")]
        session: String,
    },
    /// HTTP API, event stream and console.
    Serve,
    /// Run a prompt script in virtual time.
    Run {
        #[arg(long)]
        script: PathBuf,
    },
    /// Re-dispatch the tool calls of a recorded trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Score a trace against a fixture.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Defaults to `report_fixture` from the config.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

fn build_config(o: &Opts) -> Result<GatewayConfig, GatewayError> {
    let mut c = match &o.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    if let Some(b) = o.backend {
        c.backend = b;
    }
    if o.base_url.is_some() || o.model.is_some() || c.backend == BackendKind::Remote {
        let mut r = c.remote.take().unwrap_or(RemoteConfig {
            base_url: String::new(),
            model: String::new(),
            timeout_secs: 30.0,
        });
        if let Some(u) = &o.base_url {
            r.base_url = u.clone();
        }
        if let Some(m) = &o.model {
            r.model = m.clone();
        }
        // Remote settings only matter, and are only allowed, for the remote backend.
        if c.backend == BackendKind::Remote {
            c.remote = Some(r);
        }
    }
    if let Some(p) = o.port {
        c.http_port = p;
    }
    if let Some(hz) = o.tick_hz {
        c.tick_hz = hz;
    }
    if let Some(t) = &o.trace_out {
        c.trace_path = Some(t.clone());
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<ExitCode, GatewayError> {
    let config = build_config(&cli.opts)?;
    match cli.command {
        Command::Repl { session } => {
            let mut gw = Gateway::new(config, Clock::Virtual)?;
            let stdin = io::stdin();
            gateway::repl(&mut gw, &session, stdin.lock(), &mut io::stdout())?;
        }
        Command::Serve => gateway::serve(config)?,
        Command::Run { script } => {
            let outcome = gateway::run_script(&script, config)?;
            for ev in &outcome.events {
                if let Some(line) = format_event(ev) {
                    println!("{line}");
                }
            }
            let finals =
                serde_json::to_string_pretty(&outcome.final_states).expect("states serialize");
            println!("{finals}");
            return Ok(ExitCode::from(outcome.exit_code() as u8));
        }
        Command::Replay { trace } => {
            let outcome = gateway::replay_trace(&trace, &config)?;
            for s in &outcome.steps {
                println!(
                    "{}",
                    json!({"prompt_id": s.prompt_id, "call_id": s.call_id, "state": s.state})
                );
            }
            let finals =
                serde_json::to_string_pretty(&outcome.final_states).expect("states serialize");
            println!("{finals}");
        }
        Command::Report {
            trace,
            fixture,
            format,
        } => {
            let format: ReportFormat = format.parse().map_err(GatewayError::Eval)?;
            let fixture = match fixture.or(config.report_fixture.clone()) {
                Some(p) => eval::load_fixture(&p)?,
                None => Vec::new(),
            };
            let events = gateway::read_trace(&trace)?;
            let report = eval::evaluate(&events, &fixture, &eval::Thresholds::default())?;
            use io::Write;
            io::stdout().write_all(&eval::render_report(&report, format))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

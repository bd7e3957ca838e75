use std::io::{self, BufRead, Write};

use super::{EventBody, Gateway, SessionEvent};

pub const PROMPT_MARKER: &str = "> Enter prompt: ";

/// Transcript line for an event, or `None` for events the user typed.
pub fn format_event(ev: &SessionEvent) -> Option<String> {
    Some(match &ev.body {
        EventBody::Prompt { .. } => return None,
        EventBody::Granularity { label, .. } => {
            let quantities: Vec<String> = label
                .quantities
                .iter()
                .map(|q| {
                    let kind = serde_json::to_value(q.kind).expect("kind serializes");
                    format!(
                        "{} {} {}",
                        kind.as_str().unwrap_or_default(),
                        q.value,
                        q.unit
                    )
                })
                .collect();
            if quantities.is_empty() {
                format!("[{}]", label.label)
            } else {
                format!("[{}] {}", label.label, quantities.join(", "))
            }
        }
        EventBody::ToolCall {
            call, requested, ..
        } => {
            let mut s = format!(
                "Calling function {} with arguments {}",
                call.tool(),
                call.command.arguments()
            );
            if let Some(orig) = requested {
                s.push_str(&format!(
                    "\n(clamped for a qualitative prompt; backend asked for {})",
                    orig.command.arguments()
                ));
            }
            s
        }
        EventBody::ToolResult {
            achieved, halted, ..
        } => {
            let state = serde_json::to_string(achieved).expect("state serializes");
            if *halted {
                format!("Function response (halted by e-stop): {state}")
            } else {
                format!("Function response: {state}")
            }
        }
        EventBody::Assistant { text, .. } | EventBody::Clarification { text, .. } => {
            format!("LLM message: {text}")
        }
        EventBody::State { reason, state } => format!(
            "[state] {} {reason}: {}",
            state.robot(),
            serde_json::to_string(state).expect("state serializes")
        ),
        EventBody::Estop { engaged } => {
            format!("[estop] {}", if *engaged { "engaged" } else { "released" })
        }
        EventBody::Error { error, message, .. } => format!("[error] {error:?}: {message}"),
    })
}

/// Interactive loop. Besides prompts it understands `!estop`, `!release`
/// and `!state`; `quit` or end of input leaves.
pub fn repl<R: BufRead, W: Write>(
    gateway: &mut Gateway,
    session: &str,
    input: R,
    output: &mut W,
) -> io::Result<()> {
    let mut lines = input.lines();
    loop {
        write!(output, "{PROMPT_MARKER}")?;
        output.flush()?;
        let Some(line) = lines.next() else {
            writeln!(output)?;
            break;
        };
        let line = line?;
        let text = line.trim();
        let events = match text {
            "" => continue,
            "quit" | "exit" => break,
            "!estop" => vec![gateway.estop_all(session)],
            "!release" => vec![gateway.release_estop(session)],
            "!state" => {
                writeln!(output, "{}", gateway.state_json())?;
                continue;
            }
            prompt => gateway.prompt(session, prompt),
        };
        for ev in &events {
            if let Some(s) = format_event(ev) {
                writeln!(output, "{s}")?;
            }
        }
    }
    output.flush()
}

//! JSON Lines session traces.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{GatewayError, SessionEvent};

/// Appends events to a trace file, flushing after each one.
#[derive(Debug)]
pub struct TraceWriter {
    path: PathBuf,
    file: File,
}

impl TraceWriter {
    /// Creates or truncates `path`.
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &SessionEvent) -> io::Result<()> {
        let mut line = serde_json::to_string(event).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}

/// Parses trace text. A malformed last line is taken to be a write cut
/// short by a crash and skipped with a warning; anywhere else it is an
/// error.
pub fn parse_trace(text: &str) -> Result<Vec<SessionEvent>, GatewayError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, &(n, line)) in lines.iter().enumerate() {
        match serde_json::from_str::<SessionEvent>(line) {
            Ok(ev) => events.push(ev),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("skipping truncated final trace line {}: {e}", n + 1);
            }
            Err(e) => {
                return Err(GatewayError::TraceMalformed {
                    line: n + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(events)
}

pub fn read_trace(path: &Path) -> Result<Vec<SessionEvent>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => GatewayError::FileNotFound(path.to_path_buf()),
        _ => GatewayError::Io(e),
    })?;
    parse_trace(&text)
}

//! Append-only JSON-lines event log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::env::{Action, EventId, State};
use crate::error::{LabError, Result};
use crate::gcrl::Goal;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    RunStart {
        run_id: String,
        version: String,
        config: Box<RunConfig>,
    },
    EpisodeStart {
        episode: u64,
        /// Global steps completed before this episode.
        step: u64,
        start: State,
        goal: Goal,
    },
    Transition {
        episode: u64,
        /// Global step index of this transition, starting at 1.
        step: u64,
        state: State,
        action: Action,
        next_state: State,
        events: Vec<EventId>,
        reward: f64,
    },
    SkillSpawned {
        step: u64,
        event: EventId,
    },
    EpisodeEnd {
        episode: u64,
        step: u64,
        final_state: State,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success: Option<bool>,
        episode_return: f64,
    },
    RunEnd {
        steps: u64,
        episodes: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub v: u32,
    #[serde(flatten)]
    pub event: LogEvent,
}

impl LogLine {
    pub fn new(event: LogEvent) -> Self {
        LogLine {
            v: SCHEMA_VERSION,
            event,
        }
    }
}

pub struct EventLogWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl EventLogWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| LabError::io(&path, e))?;
        Ok(EventLogWriter {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn append(&mut self, line: &LogLine) -> Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out
            .write_all(b"\n")
            .map_err(|e| LabError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Reads every line of an event log, checking the schema version.
pub fn read_event_log(path: impl AsRef<Path>) -> Result<Vec<LogLine>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LabError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line)?;
        if parsed.v != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "{}:{}: unsupported schema version {}",
                path.display(),
                n + 1,
                parsed.v
            )));
        }
        lines.push(parsed);
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    #[test]
    fn lines_round_trip_exactly() {
        let s = State {
            agent: Cell(1, 2),
            objects: vec![true, false],
            blocks: vec![Cell(3, 3)],
        };
        let line = LogLine::new(LogEvent::Transition {
            episode: 4,
            step: 17,
            state: s.clone(),
            action: Action::Interact,
            next_state: s,
            events: vec![EventId::new("bell_rung")],
            reward: -0.1234567890123456789,
        });
        let text = serde_json::to_string(&line).unwrap();
        assert!(text.starts_with(r#"{"v":1,"kind":"transition""#), "{text}");
        let back: LogLine = serde_json::from_str(&text).unwrap();
        assert_eq!(back, line);
    }
}
